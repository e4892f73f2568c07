//! The viscous subproblem: nodal projections between conserved and
//! primitive variables, the NIPG momentum system, the IIPG / spectral
//! element internal-energy system and their right-hand sides.
//!
//! Every integral uses the tensor Gauss-Lobatto rule on the basis nodes, so
//! mass matrices are diagonal. All cells are congruent squares, which lets
//! each operator be stored as a handful of reference blocks placed on cells
//! and faces.

use std::sync::Arc;

use crate::dg::{DgField, SourceCache, SourceTerm, Space, NVAR};
use crate::error::{Error, Result};
use crate::euler::{in_g_eps, ConsState, GasParams, ParabolicBc, PrimSource};
use crate::linalg::{
    direct_solve, krylov_solve, shifted_sparse, BlockOperator, KrylovOptions, LinearOperator, LocalBlock, Mat, ShiftedOperator,
    SparseMatrix,
};
use crate::mesh::FaceKind;

/// Discretization of the internal-energy diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyVariant {
    /// Interior penalty DG (incomplete variant); meant for Q^1.
    Iipg,
    /// Continuous spectral elements; required for Q^2 and Q^3.
    Sem,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpdgParams {
    pub sigma_int: f64,
    pub sigma_bdy: f64,
    pub sigma_tilde: f64,
    pub energy: EnergyVariant,
}

impl IpdgParams {
    /// Q^1: sigma = 2 inside, 4 on the boundary, sigma~ = 2, IIPG energy.
    /// Q^2, Q^3: NIPG0 with spectral-element energy.
    pub fn defaults(k: usize) -> Self {
        if k == 1 {
            IpdgParams { sigma_int: 2.0, sigma_bdy: 4.0, sigma_tilde: 2.0, energy: EnergyVariant::Iipg }
        } else {
            IpdgParams { sigma_int: 0.0, sigma_bdy: 0.0, sigma_tilde: 0.0, energy: EnergyVariant::Sem }
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.sigma_int < 0.0 || self.sigma_bdy < 0.0 || self.sigma_tilde < 0.0 {
            return Err(Error::Config("penalties must be nonnegative".into()));
        }
        if k > 1 && self.energy == EnergyVariant::Iipg {
            return Err(Error::Config(format!("Q^{k} requires the spectral-element energy discretization")));
        }
        Ok(())
    }
}

/// Nodal primitive variables. Velocities are interleaved per node:
/// u[(cell * nloc + j) * d + c].
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub dim: usize,
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    pub e: Vec<f64>,
}

/// Nodal projection U -> (rho, u, e). Exact because the Gauss-Lobatto
/// mass matrix is diagonal.
pub fn project_forward(space: &Space, f: &DgField) -> Result<Primitive> {
    let d = space.dim();
    let nloc = f.nloc;
    let n = f.n_cells * nloc;
    let mut p = Primitive { dim: d, rho: vec![0.0; n], u: vec![0.0; n * d], e: vec![0.0; n] };
    for c in 0..f.n_cells {
        for j in 0..nloc {
            let s = f.node(c, j);
            if !(s.rho > 0.0) {
                return Err(Error::NonPositiveDensity { cell: c, node: j, value: s.rho });
            }
            let i = c * nloc + j;
            p.rho[i] = s.rho;
            let mut ke = 0.0;
            for k in 0..d {
                let v = s.m[k] / s.rho;
                p.u[i * d + k] = v;
                ke += v * v;
            }
            p.e[i] = s.energy / s.rho - 0.5 * ke;
        }
    }
    Ok(p)
}

/// Nodal projection (rho, u, e) -> U.
pub fn project_backward(space: &Space, p: &Primitive) -> DgField {
    let d = p.dim;
    let nloc = space.nloc();
    let mut f = DgField::like(space);
    for c in 0..f.n_cells {
        for j in 0..nloc {
            let i = c * nloc + j;
            let rho = p.rho[i];
            let mut m = [0.0; 2];
            let mut ke = 0.0;
            for k in 0..d {
                let v = p.u[i * d + k];
                m[k] = rho * v;
                ke += v * v;
            }
            f.set_node(c, j, &ConsState { rho, m, energy: rho * p.e[i] + 0.5 * rho * ke });
        }
    }
    f
}

/// Whether each cell average of the field lies in G^eps.
pub fn cell_average_admissible(space: &Space, f: &DgField, eps: f64) -> Vec<bool> {
    (0..f.n_cells).map(|c| in_g_eps(&f.average(space, c), eps)).collect()
}

/// A materialized linear system, for verification and dumps.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsCheck {
    pub min_entry: f64,
    pub index: usize,
    pub passes: bool,
}

/// Every entry of the energy right-hand side must be positive.
pub fn energy_rhs_nonneg_check(rhs: &[f64]) -> RhsCheck {
    let (index, min_entry) = rhs
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) });
    RhsCheck { min_entry, index, passes: min_entry > 0.0 }
}

/// Shared continuous numbering of the Gauss-Lobatto nodes.
#[derive(Debug, Clone)]
pub struct SemDofMap {
    pub n_dofs: usize,
    /// Global dof of DG node (cell * nloc + j).
    pub map: Vec<usize>,
}

impl SemDofMap {
    pub fn new(space: &Space) -> Self {
        let mesh = &space.mesh;
        let k = space.elem.k();
        let nloc = space.nloc();
        let d = space.dim();
        let mut lat = [mesh.shape[0] * k + 1, if d == 2 { mesh.shape[1] * k + 1 } else { 1 }];
        for a in 0..d {
            if mesh.periodic[a] {
                lat[a] -= 1;
            }
        }
        let mut ids = vec![usize::MAX; lat[0] * lat[1]];
        let mut map = Vec::with_capacity(mesh.n_cells() * nloc);
        let mut n = 0;
        for (c, lc) in mesh.cells.iter().enumerate() {
            let _ = c;
            for j in 0..nloc {
                let (a, b) = space.elem.basis.multi_index(j);
                let mut g = [lc[0] * k + a, if d == 2 { lc[1] * k + b } else { 0 }];
                for ax in 0..d {
                    g[ax] %= lat[ax];
                }
                let slot = &mut ids[g[0] + lat[0] * g[1]];
                if *slot == usize::MAX {
                    *slot = n;
                    n += 1;
                }
                map.push(*slot);
            }
        }
        SemDofMap { n_dofs: n, map }
    }
}

#[derive(Debug, Clone)]
struct DirichletFace {
    cell: usize,
    local: usize,
    source: PrimSource,
    /// Physical positions of the face nodes.
    x: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
enum EnergyOperator {
    Iipg(SparseMatrix),
    Sem { map: SemDofMap, stiff: SparseMatrix, dirichlet: Vec<bool> },
}

/// Matrix-free apply of diag(d) + s K with Dirichlet rows and columns
/// replaced by the identity.
struct MaskedShift<'a> {
    k: &'a SparseMatrix,
    diag: &'a [f64],
    scale: f64,
    mask: &'a [bool],
}

impl LinearOperator for MaskedShift<'_> {
    fn dim(&self) -> usize {
        self.k.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.k.n {
            if self.mask[i] {
                y[i] = x[i];
                continue;
            }
            let mut s = 0.0;
            for (j, v) in self.k.row(i) {
                if !self.mask[j] {
                    s += v * x[j];
                }
            }
            y[i] = self.diag[i] * x[i] + self.scale * s;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.k.n)
            .map(|i| if self.mask[i] { 1.0 } else { self.diag[i] + self.scale * self.k.get(i, i) })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParabolicReport {
    pub momentum_iterations: usize,
    pub energy_iterations: usize,
    pub min_e: f64,
    pub min_rhs: f64,
}

/// Point evaluation of all basis functions.
fn side_eval(space: &Space, p: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let b = &space.elem.basis;
    ((0..b.nloc).map(|j| b.eval(j, p)).collect(), (0..b.nloc).map(|j| b.grad(j, p)).collect())
}

#[inline]
fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Reference volume block of ce * A_eps + cl * A_lambda.
fn momentum_volume(space: &Space, ce: f64, cl: f64) -> Mat {
    let d = space.dim();
    let nloc = space.nloc();
    let b = &space.elem.basis;
    let mut m = Mat::zeros(nloc * d, nloc * d);
    for (nu, &xn) in b.nodes.iter().enumerate() {
        let w = b.weights[nu];
        let (_, g) = side_eval(space, xn);
        for i in 0..nloc {
            for cp in 0..d {
                for j in 0..nloc {
                    for c in 0..d {
                        let delta = if c == cp { dot2(g[j], g[i]) } else { 0.0 };
                        let v = ce * (delta + g[j][cp] * g[i][c]) - cl * g[j][c] * g[i][cp];
                        m[(i * d + cp, j * d + c)] += w * v;
                    }
                }
            }
        }
    }
    m
}

/// Reference face block of ce * A_eps + cl * A_lambda. `sides` lists the
/// local face index of each participating cell with its jump sign.
fn momentum_face(space: &Space, sides: &[(usize, f64)], n: [f64; 2], avg: f64, pen: f64, ce: f64, cl: f64) -> Mat {
    let d = space.dim();
    let nloc = space.nloc();
    let seg = nloc * d;
    let el = &space.elem;
    let mut m = Mat::zeros(seg * sides.len(), seg * sides.len());
    let nfp = el.face_nodes[sides[0].0].len();
    for g in 0..nfp {
        let w = el.face_node_weights[g];
        let ev: Vec<_> = sides.iter().map(|&(lf, _)| side_eval(space, el.basis.nodes[el.face_nodes[lf][g]])).collect();
        for (r, &(_, sr)) in sides.iter().enumerate() {
            let (psi, gpsi) = &ev[r];
            for (s, &(_, ss)) in sides.iter().enumerate() {
                let (phi, gphi) = &ev[s];
                for i in 0..nloc {
                    for cp in 0..d {
                        for j in 0..nloc {
                            for c in 0..d {
                                let dl = if c == cp { 1.0 } else { 0.0 };
                                let a_eps = -avg * sr * psi[i] * (dl * dot2(gphi[j], n) + gphi[j][cp] * n[c])
                                    + avg * ss * phi[j] * (dl * dot2(gpsi[i], n) + gpsi[i][c] * n[cp])
                                    + pen * ss * sr * phi[j] * psi[i] * dl;
                                let a_lam = avg * gphi[j][c] * sr * psi[i] * n[cp] - avg * gpsi[i][cp] * ss * phi[j] * n[c];
                                let v = ce * a_eps + cl * a_lam;
                                if v != 0.0 {
                                    m[(r * seg + i * d + cp, s * seg + j * d + c)] += w * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    m
}

/// Reference volume block of the Laplacian (also the SEM element matrix).
fn laplace_volume(space: &Space) -> Mat {
    let nloc = space.nloc();
    let b = &space.elem.basis;
    let mut m = Mat::zeros(nloc, nloc);
    for (nu, &xn) in b.nodes.iter().enumerate() {
        let (_, g) = side_eval(space, xn);
        for i in 0..nloc {
            for j in 0..nloc {
                m[(i, j)] += b.weights[nu] * dot2(g[j], g[i]);
            }
        }
    }
    m
}

/// Reference IIPG face block.
fn iipg_face(space: &Space, sides: &[(usize, f64)], n: [f64; 2], avg: f64, pen: f64) -> Mat {
    let nloc = space.nloc();
    let el = &space.elem;
    let mut m = Mat::zeros(nloc * sides.len(), nloc * sides.len());
    let nfp = el.face_nodes[sides[0].0].len();
    for g in 0..nfp {
        let w = el.face_node_weights[g];
        let ev: Vec<_> = sides.iter().map(|&(lf, _)| side_eval(space, el.basis.nodes[el.face_nodes[lf][g]])).collect();
        for (r, &(_, sr)) in sides.iter().enumerate() {
            for (s, &(_, ss)) in sides.iter().enumerate() {
                for i in 0..nloc {
                    for j in 0..nloc {
                        let v = -avg * dot2(ev[s].1[j], n) * sr * ev[r].0[i] + pen * ss * sr * ev[s].0[j] * ev[r].0[i];
                        if v != 0.0 {
                            m[(r * nloc + i, s * nloc + j)] += w * v;
                        }
                    }
                }
            }
        }
    }
    m
}

fn scaled(mut m: Mat, s: f64) -> Mat {
    m.data.iter_mut().for_each(|v| *v *= s);
    m
}

fn outward(lf: usize) -> [f64; 2] {
    let mut n = [0.0; 2];
    n[lf / 2] = if lf % 2 == 0 { -1.0 } else { 1.0 };
    n
}

/// Which faces carry Dirichlet data for the viscous step.
fn dirichlet_faces(space: &Space) -> Result<Vec<(usize, usize, usize, PrimSource)>> {
    let mesh = &space.mesh;
    let mut out = Vec::new();
    for (f, face) in mesh.faces.iter().enumerate() {
        if let FaceKind::Boundary { segment } = face.kind {
            match &mesh.segments[segment].tag.parabolic {
                ParabolicBc::DirichletVelEnergy(src) => out.push((f, face.left, face.left_local, src.clone())),
                ParabolicBc::Neumann => {}
                other => {
                    return Err(Error::Config(format!("boundary face {f} carries parabolic tag {other:?}")));
                }
            }
        }
    }
    Ok(out)
}

/// Assemble ce * A_eps + cl * A_lambda (physical scaling) as a block operator.
pub fn momentum_operator(space: &Space, params: &IpdgParams, ce: f64, cl: f64) -> Result<BlockOperator> {
    let d = space.dim();
    let nloc = space.nloc();
    let seg = nloc * d;
    let mesh = &space.mesh;
    let sc = mesh.dx.powi(d as i32 - 2);
    let rt = (d as f64).sqrt();
    let mut op = BlockOperator::new(mesh.n_cells() * seg, seg);
    let vol = op.add_block(LocalBlock::from_dense(&scaled(momentum_volume(space, ce, cl), sc)));
    for c in 0..mesh.n_cells() {
        op.add_instance(vol, [c * seg, 0]);
    }
    let mut interior = Vec::new();
    for a in 0..d {
        let m = momentum_face(space, &[(2 * a + 1, 1.0), (2 * a, -1.0)], outward(2 * a + 1), 0.5, params.sigma_int / rt, ce, cl);
        interior.push(op.add_block(LocalBlock::from_dense(&scaled(m, sc))));
    }
    let mut bdy = Vec::new();
    for lf in 0..2 * d {
        let m = momentum_face(space, &[(lf, 1.0)], outward(lf), 1.0, params.sigma_bdy / rt, ce, cl);
        bdy.push(op.add_block(LocalBlock::from_dense(&scaled(m, sc))));
    }
    for face in &mesh.faces {
        if let FaceKind::Interior { right } = face.kind {
            op.add_instance(interior[face.axis], [face.left * seg, right * seg]);
        }
    }
    for (_, c, lf, _) in dirichlet_faces(space)? {
        op.add_instance(bdy[lf], [c * seg, 0]);
    }
    Ok(op)
}

/// Assemble the IIPG Laplacian A_D (physical scaling).
pub fn iipg_operator(space: &Space, sigma_tilde: f64) -> Result<BlockOperator> {
    let d = space.dim();
    let nloc = space.nloc();
    let mesh = &space.mesh;
    let sc = mesh.dx.powi(d as i32 - 2);
    let pen = sigma_tilde / (d as f64).sqrt();
    let mut op = BlockOperator::new(mesh.n_cells() * nloc, nloc);
    let vol = op.add_block(LocalBlock::from_dense(&scaled(laplace_volume(space), sc)));
    for c in 0..mesh.n_cells() {
        op.add_instance(vol, [c * nloc, 0]);
    }
    let mut interior = Vec::new();
    for a in 0..d {
        let m = iipg_face(space, &[(2 * a + 1, 1.0), (2 * a, -1.0)], outward(2 * a + 1), 0.5, pen);
        interior.push(op.add_block(LocalBlock::from_dense(&scaled(m, sc))));
    }
    let mut bdy = Vec::new();
    for lf in 0..2 * d {
        bdy.push(op.add_block(LocalBlock::from_dense(&scaled(iipg_face(space, &[(lf, 1.0)], outward(lf), 1.0, pen), sc))));
    }
    for face in &mesh.faces {
        if let FaceKind::Interior { right } = face.kind {
            op.add_instance(interior[face.axis], [face.left * nloc, right * nloc]);
        }
    }
    for (_, c, lf, _) in dirichlet_faces(space)? {
        op.add_instance(bdy[lf], [c * nloc, 0]);
    }
    Ok(op)
}

/// Continuous stiffness matrix of the spectral element space.
pub fn sem_stiffness(space: &Space, map: &SemDofMap) -> SparseMatrix {
    let nloc = space.nloc();
    let sc = space.mesh.dx.powi(space.dim() as i32 - 2);
    let k = laplace_volume(space);
    let mut t = Vec::with_capacity(space.n_cells() * nloc * nloc);
    for c in 0..space.n_cells() {
        for i in 0..nloc {
            for j in 0..nloc {
                let v = k[(i, j)];
                if v != 0.0 {
                    t.push((map.map[c * nloc + i], map.map[c * nloc + j], sc * v));
                }
            }
        }
    }
    SparseMatrix::from_triplets(map.n_dofs, &t)
}

/// The viscous step operator for a fixed mesh, degree and boundary layout.
pub struct ParabolicSolver {
    pub space: Arc<Space>,
    pub params: IpdgParams,
    pub gas: GasParams,
    pub krylov: KrylovOptions,
    /// Use sparse LU instead of Krylov iterations.
    pub direct: bool,
    /// dx^d times the Gauss-Lobatto weight of each DG node.
    pub mass_w: Vec<f64>,
    momentum: BlockOperator,
    /// CSR copy of `momentum` for the Krylov iterations.
    momentum_csr: SparseMatrix,
    energy: EnergyOperator,
    dirichlet: Vec<DirichletFace>,
    /// Reference Dirichlet functional of the momentum equation, per local
    /// face: rows are (node, component), columns (face node, component).
    btau: Vec<Mat>,
    forcing: Option<SourceCache>,
}

impl std::fmt::Debug for ParabolicSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParabolicSolver").field("params", &self.params).field("gas", &self.gas).finish()
    }
}

impl ParabolicSolver {
    pub fn new(space: Arc<Space>, params: IpdgParams, gas: GasParams) -> Result<Self> {
        params.validate(space.elem.k())?;
        let d = space.dim();
        let nloc = space.nloc();
        let mesh = &space.mesh;
        let vol = mesh.cell_volume();
        let mut mass_w = Vec::with_capacity(mesh.n_cells() * nloc);
        for _ in 0..mesh.n_cells() {
            mass_w.extend(space.elem.basis.weights.iter().map(|w| vol * w));
        }
        let momentum = momentum_operator(&space, &params, 0.5, 1.0 / 3.0)?;
        let dfaces = dirichlet_faces(&space)?;
        let energy = match params.energy {
            EnergyVariant::Iipg => EnergyOperator::Iipg(iipg_operator(&space, params.sigma_tilde)?.to_sparse()),
            EnergyVariant::Sem => {
                let map = SemDofMap::new(&space);
                let stiff = sem_stiffness(&space, &map);
                let mut dirichlet = vec![false; map.n_dofs];
                for (_, c, lf, _) in &dfaces {
                    for &j in &space.elem.face_nodes[*lf] {
                        dirichlet[map.map[c * nloc + j]] = true;
                    }
                }
                EnergyOperator::Sem { map, stiff, dirichlet }
            }
        };
        let dirichlet = dfaces
            .into_iter()
            .map(|(_, c, lf, source)| DirichletFace {
                cell: c,
                local: lf,
                source,
                x: space.elem.face_nodes[lf].iter().map(|&j| mesh.map_point(c, space.elem.basis.nodes[j])).collect(),
            })
            .collect();
        let rt = (d as f64).sqrt();
        let mut btau = Vec::new();
        for lf in 0..2 * d {
            let el = &space.elem;
            let nfp = el.face_nodes[lf].len();
            let n = outward(lf);
            let pen = params.sigma_bdy / rt;
            let mut m = Mat::zeros(nloc * d, nfp * d);
            for g in 0..nfp {
                let w = el.face_node_weights[g];
                let (psi, gpsi) = side_eval(&space, el.basis.nodes[el.face_nodes[lf][g]]);
                for i in 0..nloc {
                    for cp in 0..d {
                        for c in 0..d {
                            let dl = if c == cp { 1.0 } else { 0.0 };
                            let v = dl * dot2(gpsi[i], n) + gpsi[i][c] * n[cp] + pen * dl * psi[i]
                                - 2.0 / 3.0 * gpsi[i][cp] * n[c];
                            m[(i * d + cp, g * d + c)] = w * v * mesh.dx.powi(d as i32 - 2);
                        }
                    }
                }
            }
            btau.push(m);
        }
        Ok(ParabolicSolver {
            space,
            params,
            gas,
            krylov: KrylovOptions::default(),
            direct: false,
            mass_w,
            momentum_csr: momentum.to_sparse(),
            momentum,
            energy,
            dirichlet,
            btau,
            forcing: None,
        })
    }

    pub fn with_forcing(mut self, src: Arc<dyn SourceTerm>) -> Self {
        let sp = self.space.clone();
        let pts = (0..sp.n_cells()).flat_map(|c| sp.elem.basis.nodes.iter().map(move |&xh| (c, xh)));
        self.forcing = Some(SourceCache::new(src, pts.map(|(c, xh)| sp.mesh.map_point(c, xh))));
        self
    }

    /// The operator S = A_eps / 2 + A_lambda / 3.
    pub fn momentum_stiffness(&self) -> &BlockOperator {
        &self.momentum
    }

    fn mom_diag(&self, rho: &[f64]) -> Vec<f64> {
        let d = self.space.dim();
        let mut diag = Vec::with_capacity(rho.len() * d);
        for (w, r) in self.mass_w.iter().zip(rho) {
            for _ in 0..d {
                diag.push(w * r);
            }
        }
        diag
    }

    fn momentum_rhs(&self, p: &Primitive, t_bc: f64, t_src: f64, dt: f64) -> Vec<f64> {
        let d = p.dim;
        let nloc = self.space.nloc();
        let re = self.gas.reynolds;
        let mut rhs: Vec<f64> = (0..p.u.len()).map(|i| self.mass_w[i / d] * p.rho[i / d] * p.u[i]).collect();
        let mut ud = Vec::new();
        for df in &self.dirichlet {
            ud.clear();
            for &x in &df.x {
                let (u, _) = df.source.at(x, t_bc);
                ud.extend_from_slice(&u[..d]);
            }
            let m = &self.btau[df.local];
            let off = df.cell * nloc * d;
            for r in 0..m.rows {
                let s: f64 = m.row(r).iter().zip(&ud).map(|(a, b)| a * b).sum();
                rhs[off + r] += 0.5 * dt / re * s;
            }
        }
        if let Some(fc) = &self.forcing {
            for i in 0..fc.n_points() {
                let (fu, _) = fc.src.parabolic(fc.point(i), t_src);
                for k in 0..d {
                    rhs[i * d + k] += 0.5 * dt * self.mass_w[i] * fu[k];
                }
            }
        }
        rhs
    }

    /// B_eps and B_lambda of a nodal velocity field (Dirichlet data at t_bc).
    pub fn strain_terms(&self, u: &[f64], t_bc: f64) -> (Vec<f64>, Vec<f64>) {
        let sp = &*self.space;
        let d = sp.dim();
        let nloc = sp.nloc();
        let el = &sp.elem;
        let mesh = &sp.mesh;
        let sc = mesh.dx.powi(d as i32 - 2);
        let rt = (d as f64).sqrt();
        let n = mesh.n_cells() * nloc;
        let mut be = vec![0.0; n];
        let mut bl = vec![0.0; n];
        for c in 0..mesh.n_cells() {
            for nu in 0..nloc {
                let mut g = [[0.0f64; 2]; 2];
                for a in 0..d {
                    let row = el.node_grad[a].row(nu);
                    for j in 0..nloc {
                        for k in 0..d {
                            g[k][a] += row[j] * u[(c * nloc + j) * d + k];
                        }
                    }
                }
                let mut ee = 0.0;
                let mut div = 0.0;
                for a in 0..d {
                    div += g[a][a];
                    for b in 0..d {
                        let e = 0.5 * (g[a][b] + g[b][a]);
                        ee += e * e;
                    }
                }
                let w = sc * el.basis.weights[nu];
                be[c * nloc + nu] = w * 2.0 * ee;
                bl[c * nloc + nu] = -w * div * div;
            }
        }
        let fw = &el.face_node_weights;
        if self.params.sigma_int > 0.0 {
            let pen = 0.5 * sc * self.params.sigma_int / rt;
            for face in &mesh.faces {
                if let FaceKind::Interior { right } = face.kind {
                    let ln = &el.face_nodes[face.left_local];
                    let rn = &el.face_nodes[face.right_local];
                    for g in 0..ln.len() {
                        let il = face.left * nloc + ln[g];
                        let ir = right * nloc + rn[g];
                        let jj: f64 = (0..d).map(|k| (u[il * d + k] - u[ir * d + k]).powi(2)).sum();
                        be[il] += pen * fw[g] * jj;
                        be[ir] += pen * fw[g] * jj;
                    }
                }
            }
        }
        if self.params.sigma_bdy > 0.0 {
            let pen = sc * self.params.sigma_bdy / rt;
            for df in &self.dirichlet {
                for (g, &j) in el.face_nodes[df.local].iter().enumerate() {
                    let (ud, _) = df.source.at(df.x[g], t_bc);
                    let i = df.cell * nloc + j;
                    let jj: f64 = (0..d).map(|k| (u[i * d + k] - ud[k]).powi(2)).sum();
                    be[i] += pen * fw[g] * jj;
                }
            }
        }
        (be, bl)
    }

    /// Right-hand side of the energy system on DG nodes (before any
    /// gathering to continuous dofs).
    fn energy_rhs_dg(&self, p: &Primitive, ustar: &[f64], t_bc: f64, t_src: f64, dt: f64) -> Vec<f64> {
        let re = self.gas.reynolds;
        let lam = self.gas.lambda;
        let (be, bl) = self.strain_terms(ustar, t_bc);
        let mut rhs: Vec<f64> = (0..p.e.len())
            .map(|i| self.mass_w[i] * p.rho[i] * p.e[i] + dt / re * be[i] + 2.0 * dt / (3.0 * re) * bl[i])
            .collect();
        if self.params.energy == EnergyVariant::Iipg {
            let sp = &*self.space;
            let d = sp.dim();
            let pen = sp.mesh.dx.powi(d as i32 - 2) * self.params.sigma_tilde / (d as f64).sqrt();
            let nloc = sp.nloc();
            for df in &self.dirichlet {
                for (g, &j) in sp.elem.face_nodes[df.local].iter().enumerate() {
                    let (_, ed) = df.source.at(df.x[g], t_bc);
                    rhs[df.cell * nloc + j] += dt * lam / re * pen * sp.elem.face_node_weights[g] * ed;
                }
            }
        }
        if let Some(fc) = &self.forcing {
            for i in 0..fc.n_points() {
                let (_, fe) = fc.src.parabolic(fc.point(i), t_src);
                rhs[i] += dt * self.mass_w[i] * fe;
            }
        }
        rhs
    }

    /// Materialized momentum system diag(rho w) + dt/Re S and its RHS.
    pub fn momentum_system(&self, p: &Primitive, t: f64, dt: f64) -> LinearSystem {
        let diag = self.mom_diag(&p.rho);
        let matrix = shifted_sparse(&self.momentum_csr, dt / self.gas.reynolds, &diag);
        LinearSystem { matrix, rhs: self.momentum_rhs(p, t + dt, t + 0.5 * dt, dt) }
    }

    /// Materialized energy system. For the spectral element variant the
    /// unknowns are the continuous dofs and Dirichlet rows are replaced by
    /// identity rows.
    pub fn energy_system(&self, p: &Primitive, ustar: &[f64], t: f64, dt: f64) -> LinearSystem {
        let s = dt * self.gas.lambda / self.gas.reynolds;
        let rhs_dg = self.energy_rhs_dg(p, ustar, t + dt, t + 0.5 * dt, dt);
        match &self.energy {
            EnergyOperator::Iipg(a) => {
                let diag: Vec<f64> = self.mass_w.iter().zip(&p.rho).map(|(w, r)| w * r).collect();
                LinearSystem { matrix: shifted_sparse(a, s, &diag), rhs: rhs_dg }
            }
            EnergyOperator::Sem { map, stiff, dirichlet } => {
                let (diag, rhs) = self.sem_gather(map, dirichlet, stiff, s, &p.rho, &rhs_dg, t + dt);
                let mut t3 = Vec::new();
                for i in 0..map.n_dofs {
                    if dirichlet[i] {
                        t3.push((i, i, 1.0));
                        continue;
                    }
                    t3.push((i, i, diag[i]));
                    for (j, v) in stiff.row(i) {
                        if !dirichlet[j] {
                            t3.push((i, j, s * v));
                        }
                    }
                }
                LinearSystem { matrix: SparseMatrix::from_triplets(map.n_dofs, &t3), rhs }
            }
        }
    }

    /// Lumped SEM mass, gathered RHS and Dirichlet elimination.
    #[allow(clippy::too_many_arguments)]
    fn sem_gather(
        &self,
        map: &SemDofMap,
        dirichlet: &[bool],
        stiff: &SparseMatrix,
        s: f64,
        rho: &[f64],
        rhs_dg: &[f64],
        t_bc: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut diag = vec![0.0; map.n_dofs];
        let mut rhs = vec![0.0; map.n_dofs];
        for (i, &g) in map.map.iter().enumerate() {
            diag[g] += self.mass_w[i] * rho[i];
            rhs[g] += rhs_dg[i];
        }
        if dirichlet.iter().any(|&b| b) {
            let nloc = self.space.nloc();
            let mut ed = vec![0.0; map.n_dofs];
            for df in &self.dirichlet {
                for (g, &j) in self.space.elem.face_nodes[df.local].iter().enumerate() {
                    ed[map.map[df.cell * nloc + j]] = df.source.at(df.x[g], t_bc).1;
                }
            }
            for i in 0..map.n_dofs {
                if dirichlet[i] {
                    continue;
                }
                for (j, v) in stiff.row(i) {
                    if dirichlet[j] {
                        rhs[i] -= s * v * ed[j];
                    }
                }
            }
            for i in 0..map.n_dofs {
                if dirichlet[i] {
                    rhs[i] = ed[i];
                }
            }
        }
        (diag, rhs)
    }

    /// Solve the viscous step over [t, t + dt] starting from the limited
    /// hyperbolic state. Fails with `NegativeEnergy` if some nodal internal
    /// energy comes out non-positive.
    pub fn solve(&self, uh: &DgField, t: f64, dt: f64) -> Result<(DgField, ParabolicReport)> {
        let sp = &*self.space;
        let p = project_forward(sp, uh)?;
        let (ustar, e_new, mut rep) = self.solve_primitive(&p, t, dt)?;
        let d = p.dim;
        let up: Vec<f64> = ustar.iter().zip(&p.u).map(|(s, h)| 2.0 * s - h).collect();
        let nloc = sp.nloc();
        for (i, &e) in e_new.iter().enumerate() {
            if !(e > 0.0) {
                return Err(Error::NegativeEnergy { cell: i / nloc, node: i % nloc, value: e });
            }
        }
        rep.min_e = e_new.iter().copied().fold(f64::INFINITY, f64::min);
        let out = Primitive { dim: d, rho: p.rho, u: up, e: e_new };
        Ok((project_backward(sp, &out), rep))
    }

    /// Returns (u*, e^P, report) on DG nodes.
    pub fn solve_primitive(&self, p: &Primitive, t: f64, dt: f64) -> Result<(Vec<f64>, Vec<f64>, ParabolicReport)> {
        if self.direct {
            return self.solve_primitive_direct(p, t, dt);
        }
        let mut rep = ParabolicReport::default();
        let re = self.gas.reynolds;
        let diag = self.mom_diag(&p.rho);
        let rhs = self.momentum_rhs(p, t + dt, t + 0.5 * dt, dt);
        let sys = ShiftedOperator { base: &self.momentum_csr, scale: dt / re, diag: &diag };
        let (ustar, st) = krylov_solve(&sys, &rhs, Some(&p.u), self.krylov, false)
            .map_err(|e| Error::LinearSolveFailure(format!("momentum: {e}")))?;
        rep.momentum_iterations = st.iterations;

        let s = dt * self.gas.lambda / re;
        let rhs_dg = self.energy_rhs_dg(p, &ustar, t + dt, t + 0.5 * dt, dt);
        rep.min_rhs = rhs_dg.iter().copied().fold(f64::INFINITY, f64::min);
        let e_new = match &self.energy {
            EnergyOperator::Iipg(a) => {
                let diag: Vec<f64> = self.mass_w.iter().zip(&p.rho).map(|(w, r)| w * r).collect();
                let sys = ShiftedOperator { base: a, scale: s, diag: &diag };
                let (e, st) = krylov_solve(&sys, &rhs_dg, Some(&p.e), self.krylov, false)
                    .map_err(|e| Error::LinearSolveFailure(format!("energy: {e}")))?;
                rep.energy_iterations = st.iterations;
                e
            }
            EnergyOperator::Sem { map, stiff, dirichlet } => {
                let (diag, rhs) = self.sem_gather(map, dirichlet, stiff, s, &p.rho, &rhs_dg, t + dt);
                // initial guess: weighted average of the DG values per dof
                let mut x0 = vec![0.0; map.n_dofs];
                let mut wsum = vec![0.0; map.n_dofs];
                for (i, &g) in map.map.iter().enumerate() {
                    x0[g] += self.mass_w[i] * p.e[i];
                    wsum[g] += self.mass_w[i];
                }
                for (x, w) in x0.iter_mut().zip(&wsum) {
                    *x /= w;
                }
                for i in 0..map.n_dofs {
                    if dirichlet[i] {
                        x0[i] = rhs[i];
                    }
                }
                let sys = MaskedShift { k: stiff, diag: &diag, scale: s, mask: dirichlet };
                let (e, st) = krylov_solve(&sys, &rhs, Some(&x0), self.krylov, true)
                    .map_err(|e| Error::LinearSolveFailure(format!("energy: {e}")))?;
                rep.energy_iterations = st.iterations;
                map.map.iter().map(|&g| e[g]).collect()
            }
        };
        Ok((ustar, e_new, rep))
    }
}

impl ParabolicSolver {
    fn solve_primitive_direct(&self, p: &Primitive, t: f64, dt: f64) -> Result<(Vec<f64>, Vec<f64>, ParabolicReport)> {
        let ms = self.momentum_system(p, t, dt);
        let ustar = direct_solve(&ms.matrix, &ms.rhs)?;
        let es = self.energy_system(p, &ustar, t, dt);
        let x = direct_solve(&es.matrix, &es.rhs)?;
        let e = match &self.energy {
            EnergyOperator::Iipg(_) => x,
            EnergyOperator::Sem { map, .. } => map.map.iter().map(|&g| x[g]).collect(),
        };
        let rhs = self.energy_rhs_dg(p, &ustar, t + dt, t + 0.5 * dt, dt);
        let min_rhs = rhs.iter().copied().fold(f64::INFINITY, f64::min);
        Ok((ustar, e, ParabolicReport { min_rhs, ..Default::default() }))
    }
}

/// Conserved totals implied by nodal primitive data (Gauss-Lobatto rule).
pub fn primitive_totals(solver: &ParabolicSolver, p: &Primitive) -> [f64; NVAR] {
    let d = p.dim;
    let mut t = [0.0; NVAR];
    for i in 0..p.rho.len() {
        let w = solver.mass_w[i];
        let mut ke = 0.0;
        t[0] += w * p.rho[i];
        for k in 0..d {
            t[1 + k] += w * p.rho[i] * p.u[i * d + k];
            ke += p.u[i * d + k].powi(2);
        }
        t[3] += w * (p.rho[i] * p.e[i] + 0.5 * p.rho[i] * ke);
    }
    t
}
