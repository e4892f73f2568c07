//! Gauss and Gauss-Lobatto rules on [-1/2, 1/2], the tensor-product nodal
//! Lagrange basis on Gauss-Lobatto points and the quadrature point families
//! used by the hyperbolic and parabolic solvers.

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// One-dimensional rule on [-1/2, 1/2] with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule1D {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule1D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Legendre polynomial P_n and its derivative at x in [-1, 1].
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        0.5 * nf * (nf + 1.0) * x.powi(n as i32 + 1)
    } else {
        nf * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, dp)
}

/// n-point Gauss rule, exact for degree 2n - 1.
pub fn gauss_rule(n: usize) -> Result<QuadRule1D> {
    if n == 0 || n > 8 {
        return Err(Error::UnsupportedOrder(n));
    }
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        points.push(0.5 * x);
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    symmetrize(&mut points, &mut weights);
    Ok(QuadRule1D { points, weights })
}

/// n-point Gauss-Lobatto rule, exact for degree 2n - 3, endpoints included.
pub fn gauss_lobatto_rule(n: usize) -> Result<QuadRule1D> {
    if !(2..=6).contains(&n) {
        return Err(Error::UnsupportedOrder(n));
    }
    let m = n - 1;
    let mf = m as f64;
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = -(std::f64::consts::PI * i as f64 / mf).cos();
        if i != 0 && i != m {
            for _ in 0..100 {
                // Newton on (1 - x^2) P'_m(x), written with P_m and P_{m-1}.
                let (pm, _) = legendre(m, x);
                let (pm1, _) = legendre(m - 1, x);
                let dx = (x * pm - pm1) / ((mf + 1.0) * pm);
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
        }
        let (pm, _) = legendre(m, x);
        points.push(0.5 * x);
        weights.push(1.0 / (mf * (mf + 1.0) * pm * pm));
    }
    symmetrize(&mut points, &mut weights);
    Ok(QuadRule1D { points, weights })
}

/// Enforce exact mirror symmetry so that integrals of odd monomials vanish.
fn symmetrize(points: &mut [f64], weights: &mut [f64]) {
    let n = points.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (points[j] - points[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        points[i] = -x;
        points[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
}

/// Tensor-product Q^k Lagrange basis on Gauss-Lobatto nodes of [-1/2,1/2]^d.
/// Node j has multi-index (a, b) with j = a + (k+1) b (x fastest).
#[derive(Debug, Clone)]
pub struct NodalBasis {
    pub k: usize,
    pub dim: usize,
    pub n1: usize,
    pub nloc: usize,
    pub gl: QuadRule1D,
    pub nodes: Vec<[f64; 2]>,
    /// Tensor Gauss-Lobatto weights of the nodes.
    pub weights: Vec<f64>,
}

impl NodalBasis {
    pub fn new(k: usize, dim: usize) -> Result<Self> {
        if !(1..=3).contains(&k) {
            return Err(Error::UnsupportedDegree(k));
        }
        assert!(dim == 1 || dim == 2, "dim must be 1 or 2");
        let n1 = k + 1;
        let gl = gauss_lobatto_rule(n1)?;
        let nloc = n1.pow(dim as u32);
        let mut nodes = Vec::with_capacity(nloc);
        let mut weights = Vec::with_capacity(nloc);
        for j in 0..nloc {
            let (a, b) = (j % n1, j / n1);
            if dim == 1 {
                nodes.push([gl.points[a], 0.0]);
                weights.push(gl.weights[a]);
            } else {
                nodes.push([gl.points[a], gl.points[b]]);
                weights.push(gl.weights[a] * gl.weights[b]);
            }
        }
        Ok(NodalBasis { k, dim, n1, nloc, gl, nodes, weights })
    }

    pub fn multi_index(&self, j: usize) -> (usize, usize) {
        (j % self.n1, j / self.n1)
    }

    /// One-dimensional Lagrange polynomial through the Gauss-Lobatto nodes.
    pub fn lagrange(&self, a: usize, x: f64) -> f64 {
        let p = &self.gl.points;
        let mut v = 1.0;
        for (b, &xb) in p.iter().enumerate() {
            if b != a {
                v *= (x - xb) / (p[a] - xb);
            }
        }
        v
    }

    pub fn lagrange_deriv(&self, a: usize, x: f64) -> f64 {
        let p = &self.gl.points;
        let mut s = 0.0;
        for (m, &xm) in p.iter().enumerate() {
            if m == a {
                continue;
            }
            let mut term = 1.0 / (p[a] - xm);
            for (b, &xb) in p.iter().enumerate() {
                if b != a && b != m {
                    term *= (x - xb) / (p[a] - xb);
                }
            }
            s += term;
        }
        s
    }

    pub fn eval(&self, j: usize, x: [f64; 2]) -> f64 {
        let (a, b) = self.multi_index(j);
        if self.dim == 1 {
            self.lagrange(a, x[0])
        } else {
            self.lagrange(a, x[0]) * self.lagrange(b, x[1])
        }
    }

    /// Reference gradient; the second component is zero in 1D.
    pub fn grad(&self, j: usize, x: [f64; 2]) -> [f64; 2] {
        let (a, b) = self.multi_index(j);
        if self.dim == 1 {
            [self.lagrange_deriv(a, x[0]), 0.0]
        } else {
            [
                self.lagrange_deriv(a, x[0]) * self.lagrange(b, x[1]),
                self.lagrange(a, x[0]) * self.lagrange_deriv(b, x[1]),
            ]
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PointSet {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// The quadrature point families of one reference cell.
#[derive(Debug, Clone)]
pub struct PointSets {
    /// Gauss points on each local face, indexed 2*axis + side (side 1 is the
    /// +1/2 face). Weights are face-relative and sum to one.
    pub face: Vec<PointSet>,
    /// Gauss x Lobatto interior points (no weights).
    pub aux: Vec<[f64; 2]>,
    pub vol: PointSet,
    pub sp: PointSet,
    /// Number N of Lobatto points used for the auxiliary set.
    pub n_aux: usize,
    pub omega_hat: f64,
}

impl PointSets {
    /// All hyperbolic check points: faces, then auxiliary, then volume.
    pub fn sh_points(&self) -> Vec<[f64; 2]> {
        let mut pts: Vec<[f64; 2]> = self.face.iter().flat_map(|f| f.points.iter().copied()).collect();
        pts.extend(self.aux.iter().copied());
        pts.extend(self.vol.points.iter().copied());
        pts
    }
}

pub fn build_point_sets(k: usize, dim: usize) -> Result<PointSets> {
    if !(1..=3).contains(&k) {
        return Err(Error::UnsupportedDegree(k));
    }
    let g = gauss_rule(k + 1)?;
    let gl = gauss_lobatto_rule(k + 1)?;
    let n_aux = (2..).find(|&n| 2 * n >= k + 3).unwrap();
    let lob = gauss_lobatto_rule(n_aux)?;
    let interior: Vec<f64> = lob.points[1..n_aux - 1].to_vec();

    let mut face = Vec::new();
    for axis in 0..dim {
        for side in 0..2 {
            let c = if side == 0 { -0.5 } else { 0.5 };
            let mut set = PointSet::default();
            if dim == 1 {
                set.points.push([c, 0.0]);
                set.weights.push(1.0);
            } else {
                for (&t, &w) in g.points.iter().zip(&g.weights) {
                    set.points.push(if axis == 0 { [c, t] } else { [t, c] });
                    set.weights.push(w);
                }
            }
            face.push(set);
        }
    }

    let mut aux = Vec::new();
    if dim == 1 {
        aux.extend(interior.iter().map(|&x| [x, 0.0]));
    } else {
        for &y in &interior {
            for &x in &g.points {
                aux.push([x, y]);
            }
        }
        for &y in &g.points {
            for &x in &interior {
                aux.push([x, y]);
            }
        }
    }

    let tensor = |r: &QuadRule1D| {
        let mut set = PointSet::default();
        if dim == 1 {
            for (&x, &w) in r.points.iter().zip(&r.weights) {
                set.points.push([x, 0.0]);
                set.weights.push(w);
            }
        } else {
            for (&y, &wy) in r.points.iter().zip(&r.weights) {
                for (&x, &wx) in r.points.iter().zip(&r.weights) {
                    set.points.push([x, y]);
                    set.weights.push(wx * wy);
                }
            }
        }
        set
    };

    Ok(PointSets {
        face,
        aux,
        vol: tensor(&g),
        sp: tensor(&gl),
        n_aux,
        omega_hat: 1.0 / (n_aux * (n_aux - 1)) as f64,
    })
}

/// out[v][c] += sum_r coef[v][r] table[r][c] for the four variables v,
/// with `table` row-major (m x ncols) and coef / out variable-major with
/// the given strides.
#[inline]
pub fn contract4(table: &[f64], m: usize, ncols: usize, coef: &[f64], cs: usize, out: &mut [f64], os: usize) {
    let (o0, rest) = out[..3 * os + ncols].split_at_mut(os);
    let (o1, rest) = rest.split_at_mut(os);
    let (o2, o3) = rest.split_at_mut(os);
    let (o0, o1, o2, o3) = (&mut o0[..ncols], &mut o1[..ncols], &mut o2[..ncols], &mut o3[..ncols]);
    for r in 0..m {
        let row = &table[r * ncols..(r + 1) * ncols];
        let (c0, c1, c2, c3) = (coef[r], coef[cs + r], coef[2 * cs + r], coef[3 * cs + r]);
        for p in 0..ncols {
            let e = row[p];
            o0[p] += c0 * e;
            o1[p] += c1 * e;
            o2[p] += c2 * e;
            o3[p] += c3 * e;
        }
    }
}

/// Basis, point sets and the evaluation tables shared by all cells.
#[derive(Debug, Clone)]
pub struct Element {
    pub basis: NodalBasis,
    pub sets: PointSets,
    /// Values at volume Gauss points (n_vol x nloc).
    pub eval_vol: Mat,
    /// Reference gradients at volume Gauss points, one table per axis.
    pub grad_vol: Vec<Mat>,
    /// Values at the Gauss points of each local face (nfp x nloc).
    pub eval_face: Vec<Mat>,
    /// Values at all hyperbolic check points (faces, aux, volume).
    pub eval_sh: Mat,
    /// Reference gradient of basis j at node nu: node_grad[axis][(nu, j)].
    pub node_grad: Vec<Mat>,
    /// Node indices lying on each local face, ordered along the face.
    pub face_nodes: Vec<Vec<usize>>,
    /// Gauss-Lobatto weights of the face nodes (face-relative).
    pub face_node_weights: Vec<f64>,
    /// Inverse of the one-dimensional reference mass matrix.
    pub mass1d_inv: Mat,
    /// Transposes of `eval_vol` and `eval_sh` (nloc x points), for
    /// evaluating all points of a cell in one pass.
    pub eval_vol_t: Vec<f64>,
    pub eval_sh_t: Vec<f64>,
    /// Inverse of the full reference mass matrix, row-major.
    pub mass_inv: Vec<f64>,
    /// Volume test-function table: the rows of `grad_vol` for each axis,
    /// then the rows of `eval_vol` ((dim + 1) n_vol x nloc).
    pub vol_test: Vec<f64>,
}

impl Element {
    pub fn new(k: usize, dim: usize) -> Result<Self> {
        let basis = NodalBasis::new(k, dim)?;
        let sets = build_point_sets(k, dim)?;
        let nloc = basis.nloc;
        let table = |pts: &[[f64; 2]], f: &dyn Fn(usize, [f64; 2]) -> f64| {
            let mut m = Mat::zeros(pts.len(), nloc);
            for (p, &x) in pts.iter().enumerate() {
                for j in 0..nloc {
                    m[(p, j)] = f(j, x);
                }
            }
            m
        };
        let eval_vol = table(&sets.vol.points, &|j, x| basis.eval(j, x));
        let grad_vol: Vec<Mat> = (0..dim)
            .map(|l| table(&sets.vol.points, &|j, x| basis.grad(j, x)[l]))
            .collect();
        let eval_face = sets.face.iter().map(|f| table(&f.points, &|j, x| basis.eval(j, x))).collect();
        let eval_sh = table(&sets.sh_points(), &|j, x| basis.eval(j, x));
        let node_grad = (0..dim)
            .map(|l| table(&basis.nodes, &|j, x| basis.grad(j, x)[l]))
            .collect();

        let n1 = basis.n1;
        let mut face_nodes = Vec::new();
        for axis in 0..dim {
            for side in 0..2 {
                let fixed = if side == 0 { 0 } else { n1 - 1 };
                let nodes: Vec<usize> = (0..nloc)
                    .filter(|&j| {
                        let (a, b) = basis.multi_index(j);
                        if axis == 0 {
                            a == fixed
                        } else {
                            b == fixed
                        }
                    })
                    .collect();
                face_nodes.push(nodes);
            }
        }
        let face_node_weights = if dim == 1 { vec![1.0] } else { basis.gl.weights.clone() };

        let g = gauss_rule(n1)?;
        let mut m1 = Mat::zeros(n1, n1);
        for a in 0..n1 {
            for b in 0..n1 {
                m1[(a, b)] = g.integrate(|x| basis.lagrange(a, x) * basis.lagrange(b, x));
            }
        }
        let mass1d_inv = m1.inverse().expect("reference mass matrix is invertible");
        let mut mass_inv = vec![0.0; nloc * nloc];
        for i in 0..nloc {
            for j in 0..nloc {
                let (ia, ib) = basis.multi_index(i);
                let (ja, jb) = basis.multi_index(j);
                let y = if dim == 1 { 1.0 } else { mass1d_inv[(ib, jb)] };
                mass_inv[i * nloc + j] = mass1d_inv[(ia, ja)] * y;
            }
        }
        let transpose = |m: &Mat| {
            let mut t = vec![0.0; m.rows * m.cols];
            for p in 0..m.rows {
                for j in 0..m.cols {
                    t[j * m.rows + p] = m[(p, j)];
                }
            }
            t
        };
        let eval_vol_t = transpose(&eval_vol);
        let mut vol_test = Vec::new();
        for g in &grad_vol {
            vol_test.extend_from_slice(&g.data);
        }
        vol_test.extend_from_slice(&eval_vol.data);
        let eval_sh_t = transpose(&eval_sh);

        Ok(Element {
            basis,
            sets,
            eval_vol,
            grad_vol,
            eval_face,
            eval_sh,
            node_grad,
            face_nodes,
            face_node_weights,
            mass1d_inv,
            eval_vol_t,
            eval_sh_t,
            mass_inv,
            vol_test,
        })
    }

    pub fn k(&self) -> usize {
        self.basis.k
    }

    pub fn dim(&self) -> usize {
        self.basis.dim
    }

    pub fn nloc(&self) -> usize {
        self.basis.nloc
    }

    pub fn n_sh(&self) -> usize {
        self.eval_sh.rows
    }

    /// Apply the inverse of the reference mass matrix to nodal data.
    pub fn apply_mass_inverse(&self, v: &mut [f64], scratch: &mut [f64]) {
        let n = self.nloc();
        let (v, scratch) = (&mut v[..n], &mut scratch[..n]);
        scratch.copy_from_slice(v);
        for (a, x) in v.iter_mut().enumerate() {
            let row = &self.mass_inv[a * n..(a + 1) * n];
            *x = row.iter().zip(&*scratch).map(|(m, y)| m * y).sum();
        }
    }

    /// Values of the four variables of one cell block (variable-major,
    /// nloc each) at the points of a transposed table; `out` is
    /// variable-major with `npts` entries per variable.
    #[inline]
    pub fn eval_points(&self, table_t: &[f64], npts: usize, b: &[f64], out: &mut [f64]) {
        let n = self.nloc();
        out[..4 * npts].fill(0.0);
        contract4(table_t, n, npts, b, n, out, npts);
    }
}
