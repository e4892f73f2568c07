use super::{LinearOperator, SparseMatrix};
use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Banded LU factorization with partial pivoting.
struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    /// Row r stores columns r - kl .. r - kl + width.
    band: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.n;
        let (mut kl, mut ku) = (0usize, 0usize);
        for i in 0..n {
            for (j, _) in a.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        let width = 2 * kl + ku + 1;
        let mut band = vec![0.0; n * width];
        for i in 0..n {
            for (j, v) in a.row(i) {
                band[i * width + (j + kl - i)] = v;
            }
        }
        let mut lu = BandLu { n, kl, width, band, piv: vec![0; n] };
        let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for c in 0..n {
            let last = (c + kl).min(n - 1);
            let mut p = c;
            let mut best = lu.get(c, c).abs();
            for r in c + 1..=last {
                let v = lu.get(r, c).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || best <= 1e-15 * scale {
                return Err(Error::SingularMatrix(c));
            }
            lu.piv[c] = p;
            let cmax = (c + lu.upper()).min(n - 1);
            if p != c {
                for j in c..=cmax {
                    let (x, y) = (lu.get(c, j), lu.get(p, j));
                    lu.set(c, j, y);
                    lu.set(p, j, x);
                }
            }
            let d = lu.get(c, c);
            for r in c + 1..=last {
                let f = lu.get(r, c) / d;
                lu.set(r, c, f);
                if f != 0.0 {
                    for j in c + 1..=cmax {
                        let v = lu.get(r, j) - f * lu.get(c, j);
                        lu.set(r, j, v);
                    }
                }
            }
        }
        Ok(lu)
    }

    fn upper(&self) -> usize {
        self.width - 1 - self.kl
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> Option<usize> {
        let off = c as isize - r as isize + self.kl as isize;
        if off < 0 || off as usize >= self.width {
            None
        } else {
            Some(r * self.width + off as usize)
        }
    }

    #[inline]
    fn get(&self, r: usize, c: usize) -> f64 {
        self.idx(r, c).map_or(0.0, |i| self.band[i])
    }

    #[inline]
    fn set(&mut self, r: usize, c: usize, v: f64) {
        match self.idx(r, c) {
            Some(i) => self.band[i] = v,
            None => debug_assert!(v == 0.0, "fill outside band"),
        }
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for c in 0..n {
            x.swap(c, self.piv[c]);
            let last = (c + self.kl).min(n - 1);
            for r in c + 1..=last {
                x[r] -= self.get(r, c) * x[c];
            }
        }
        for r in (0..n).rev() {
            let cmax = (r + self.upper()).min(n - 1);
            let mut s = x[r];
            for c in r + 1..=cmax {
                s -= self.get(r, c) * x[c];
            }
            x[r] = s / self.get(r, r);
        }
        x
    }
}

/// Direct solve by banded Gaussian elimination with partial pivoting.
pub fn direct_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(a.n, b.len());
    if a.n == 0 {
        return Ok(Vec::new());
    }
    let lu = BandLu::factor(a)?;
    Ok(lu.solve(b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions { tol: 1e-12, restart: 40, max_iter: 2000 }
    }
}

/// Jacobi-preconditioned Krylov solve: conjugate gradients when `symmetric`,
/// restarted GMRES otherwise. Convergence means ||b - Ax|| <= tol ||b||.
pub fn krylov_solve(
    a: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: KrylovOptions,
    symmetric: bool,
) -> Result<(Vec<f64>, KrylovStats)> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], KrylovStats { iterations: 0, residual: 0.0 }));
    }
    let dinv: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let x = match x0 {
        Some(x0) => x0.to_vec(),
        None => b.iter().zip(&dinv).map(|(b, d)| b * d).collect(),
    };
    if symmetric {
        pcg(a, b, x, &dinv, bnorm, opts)
    } else {
        gmres(a, b, x, &dinv, bnorm, opts)
    }
}

fn residual(a: &dyn LinearOperator, b: &[f64], x: &[f64], r: &mut [f64]) {
    a.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

fn pcg(
    a: &dyn LinearOperator,
    b: &[f64],
    mut x: Vec<f64>,
    dinv: &[f64],
    bnorm: f64,
    opts: KrylovOptions,
) -> Result<(Vec<f64>, KrylovStats)> {
    let n = b.len();
    let mut r = vec![0.0; n];
    residual(a, b, &x, &mut r);
    let mut rn = norm(&r);
    if rn <= opts.tol * bnorm {
        return Ok((x, KrylovStats { iterations: 0, residual: rn / bnorm }));
    }
    let mut z: Vec<f64> = r.iter().zip(dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        a.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rn = norm(&r);
        if rn <= opts.tol * bnorm {
            // confirm with the true residual
            residual(a, b, &x, &mut r);
            rn = norm(&r);
            if rn <= opts.tol * bnorm {
                return Ok((x, KrylovStats { iterations: it, residual: rn / bnorm }));
            }
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: rn / bnorm })
}

fn gmres(
    a: &dyn LinearOperator,
    b: &[f64],
    mut x: Vec<f64>,
    dinv: &[f64],
    bnorm: f64,
    opts: KrylovOptions,
) -> Result<(Vec<f64>, KrylovStats)> {
    let n = b.len();
    let m = opts.restart.max(1);
    let mut r = vec![0.0; n];
    let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut total = 0;
    let mut rn;
    loop {
        residual(a, b, &x, &mut r);
        rn = norm(&r);
        if rn <= opts.tol * bnorm {
            return Ok((x, KrylovStats { iterations: total, residual: rn / bnorm }));
        }
        if total >= opts.max_iter {
            return Err(Error::NoConvergence { iterations: total, residual: rn / bnorm });
        }
        v.clear();
        v.push(r.iter().map(|ri| ri / rn).collect());
        g.iter_mut().for_each(|gi| *gi = 0.0);
        g[0] = rn;
        let mut k_used = 0;
        for j in 0..m {
            for i in 0..n {
                z[i] = v[j][i] * dinv[i];
            }
            a.apply(&z, &mut w);
            for i in 0..=j {
                let hij = dot(&w, &v[i]);
                h[i][j] = hij;
                for (wl, vl) in w.iter_mut().zip(&v[i]) {
                    *wl -= hij * vl;
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if d == 0.0 {
                k_used = j;
                break;
            }
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            total += 1;
            k_used = j + 1;
            if g[j + 1].abs() <= 0.5 * opts.tol * bnorm || total >= opts.max_iter || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        // back substitution for the Krylov coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in i + 1..k_used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        z.iter_mut().for_each(|zi| *zi = 0.0);
        for (l, yl) in y.iter().enumerate() {
            for (zi, vi) in z.iter_mut().zip(&v[l]) {
                *zi += yl * vi;
            }
        }
        for i in 0..n {
            x[i] += z[i] * dinv[i];
        }
        if k_used == 0 {
            residual(a, b, &x, &mut r);
            rn = norm(&r);
            if rn <= opts.tol * bnorm {
                return Ok((x, KrylovStats { iterations: total, residual: rn / bnorm }));
            }
            return Err(Error::NoConvergence { iterations: total, residual: rn / bnorm });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, lo: f64, d: f64, up: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, d));
            if i > 0 {
                t.push((i, i - 1, lo));
            }
            if i + 1 < n {
                t.push((i, i + 1, up));
            }
        }
        SparseMatrix::from_triplets(n, &t)
    }

    fn resid(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
        let mut r = vec![0.0; b.len()];
        residual(a, b, x, &mut r);
        norm(&r) / norm(b)
    }

    #[test]
    fn identity_direct() {
        let b = vec![1.0, -2.0, 3.5];
        assert_eq!(direct_solve(&SparseMatrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn zero_row_is_singular() {
        let a = SparseMatrix::from_triplets(3, &[(0, 0, 1.0), (2, 2, 1.0), (0, 1, 2.0)]);
        assert!(matches!(direct_solve(&a, &[1.0, 1.0, 1.0]), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn pivoting_needed() {
        let a = SparseMatrix::from_triplets(3, &[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 2.0), (2, 1, 3.0), (2, 2, 1.0)]);
        let b = vec![1.0, 2.0, 3.0];
        let x = direct_solve(&a, &b).unwrap();
        assert!(resid(&a, &x, &b) < 1e-14);
    }

    #[test]
    fn krylov_paths_agree_with_direct() {
        let n = 50;
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let spd = tridiag(n, -1.0, 2.5, -1.0);
        let ns = tridiag(n, -1.3, 3.0, -0.4);
        for (a, sym) in [(&spd, true), (&ns, false)] {
            let xd = direct_solve(a, &b).unwrap();
            let (xk, st) = krylov_solve(a, &b, None, KrylovOptions::default(), sym).unwrap();
            assert!(st.residual <= 1e-12);
            for i in 0..n {
                assert!((xd[i] - xk[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = tridiag(5, -1.0, 2.0, -1.0);
        let (x, st) = krylov_solve(&a, &[0.0; 5], None, KrylovOptions::default(), false).unwrap();
        assert_eq!(x, vec![0.0; 5]);
        assert_eq!(st.iterations, 0);
    }

    #[test]
    fn gmres_restarts() {
        let n = 200;
        let a = tridiag(n, -1.0, 2.05, -0.9);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
        let opts = KrylovOptions { restart: 5, ..Default::default() };
        let (x, _) = krylov_solve(&a, &b, None, opts, false).unwrap();
        assert!(resid(&a, &x, &b) <= 1e-12);
    }
}
