//! Discontinuous Galerkin discretization of the Euler part: nodal fields,
//! the semi-discrete residual with Lax-Friedrichs fluxes, the positivity
//! limiter pass and the adaptive SSP-RK3 integrator.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::euler::{ghost_state, in_g_eps, lax_friedrichs_flux, flux_along, limiter_thetas, max_wave_speed, scale_state, ConsState};
use crate::linalg::Mat;
use crate::mesh::{FaceKind, Mesh};
use crate::quadrature::{contract4, Element};

/// Number of stored conserved variables. One-dimensional runs keep m_y = 0.
pub const NVAR: usize = 4;

/// Body force added to the equations, split between the two subproblems.
///
/// `prepare` is called once per quadrature point and may cache anything
/// that does not depend on time, in `cache_len` values.
pub trait SourceTerm: Send + Sync {
    fn cache_len(&self) -> usize;
    fn prepare(&self, x: [f64; 2], cache: &mut [f64]);
    /// Source of [rho, m_x, m_y, E] for the hyperbolic step.
    fn hyperbolic(&self, cache: &[f64], t: f64) -> [f64; 4];
    /// Momentum and internal-energy sources (f_u, f_e) for the viscous step.
    fn parabolic(&self, cache: &[f64], t: f64) -> ([f64; 2], f64);
}

/// Per-point caches of a source term, stored flat.
#[derive(Clone)]
pub struct SourceCache {
    pub src: Arc<dyn SourceTerm>,
    len: usize,
    data: Vec<f64>,
}

impl SourceCache {
    pub fn new(src: Arc<dyn SourceTerm>, points: impl Iterator<Item = [f64; 2]>) -> Self {
        let len = src.cache_len();
        let mut data = Vec::new();
        for x in points {
            let o = data.len();
            data.resize(o + len, 0.0);
            src.prepare(x, &mut data[o..]);
        }
        SourceCache { src, len, data }
    }

    pub fn n_points(&self) -> usize {
        if self.len == 0 {
            0
        } else {
            self.data.len() / self.len
        }
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.len..(i + 1) * self.len]
    }
}

/// Mesh plus reference element; everything both subproblems share.
#[derive(Debug, Clone)]
pub struct Space {
    pub mesh: Mesh,
    pub elem: Element,
    /// Lagrange values at the face Gauss points: (point, node along face).
    pub face_interp: Mat,
}

impl Space {
    pub fn new(mesh: Mesh, k: usize) -> Result<Self> {
        let elem = Element::new(k, mesh.dim)?;
        let n1 = elem.basis.n1;
        let face_interp = if mesh.dim == 1 {
            let mut m = Mat::zeros(1, 1);
            m[(0, 0)] = 1.0;
            m
        } else {
            let pts: Vec<f64> = elem.sets.face[0].points.iter().map(|p| p[1]).collect();
            let mut m = Mat::zeros(pts.len(), n1);
            for (g, &s) in pts.iter().enumerate() {
                for a in 0..n1 {
                    m[(g, a)] = elem.basis.lagrange(a, s);
                }
            }
            m
        };
        Ok(Space { mesh, elem, face_interp })
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim
    }

    pub fn nloc(&self) -> usize {
        self.elem.nloc()
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    /// Tangential reference coordinate of face Gauss point g.
    pub fn face_coord(&self, g: usize) -> f64 {
        if self.dim() == 1 {
            0.0
        } else {
            self.elem.sets.face[0].points[g][1]
        }
    }

    pub fn n_face_points(&self) -> usize {
        self.face_interp.rows
    }
}

/// Nodal coefficients of [rho, m_x, m_y, E] on every cell, laid out as
/// data[(cell * NVAR + var) * nloc + node].
#[derive(Debug, Clone, PartialEq)]
pub struct DgField {
    pub n_cells: usize,
    pub nloc: usize,
    pub data: Vec<f64>,
}

impl DgField {
    pub fn zeros(n_cells: usize, nloc: usize) -> Self {
        DgField { n_cells, nloc, data: vec![0.0; n_cells * NVAR * nloc] }
    }

    pub fn like(space: &Space) -> Self {
        Self::zeros(space.n_cells(), space.nloc())
    }

    #[inline]
    pub fn block(&self, c: usize) -> &[f64] {
        let s = NVAR * self.nloc;
        &self.data[c * s..(c + 1) * s]
    }

    #[inline]
    pub fn block_mut(&mut self, c: usize) -> &mut [f64] {
        let s = NVAR * self.nloc;
        &mut self.data[c * s..(c + 1) * s]
    }

    #[inline]
    pub fn var(&self, c: usize, v: usize) -> &[f64] {
        let o = (c * NVAR + v) * self.nloc;
        &self.data[o..o + self.nloc]
    }

    #[inline]
    pub fn node(&self, c: usize, j: usize) -> ConsState {
        let b = self.block(c);
        let n = self.nloc;
        ConsState { rho: b[j], m: [b[n + j], b[2 * n + j]], energy: b[3 * n + j] }
    }

    #[inline]
    pub fn set_node(&mut self, c: usize, j: usize, u: &ConsState) {
        let n = self.nloc;
        let b = self.block_mut(c);
        b[j] = u.rho;
        b[n + j] = u.m[0];
        b[2 * n + j] = u.m[1];
        b[3 * n + j] = u.energy;
    }

    /// Nodal interpolation of a pointwise state.
    pub fn interpolate(space: &Space, f: impl Fn([f64; 2]) -> ConsState) -> Self {
        let mut u = Self::like(space);
        for c in 0..space.n_cells() {
            for (j, &xh) in space.elem.basis.nodes.iter().enumerate() {
                u.set_node(c, j, &f(space.mesh.map_point(c, xh)));
            }
        }
        u
    }

    /// L2 projection of a pointwise state with the volume Gauss rule.
    pub fn project(space: &Space, mass: MassMatrix, f: impl Fn([f64; 2]) -> ConsState) -> Self {
        let el = &space.elem;
        let nloc = el.nloc();
        let mut u = Self::like(space);
        let mut scratch = vec![0.0; nloc];
        for c in 0..space.n_cells() {
            let b = u.block_mut(c);
            for (q, (&xh, &w)) in el.sets.vol.points.iter().zip(&el.sets.vol.weights).enumerate() {
                let s = f(space.mesh.map_point(c, xh)).to_array();
                let row = el.eval_vol.row(q);
                for v in 0..NVAR {
                    for j in 0..nloc {
                        b[v * nloc + j] += w * s[v] * row[j];
                    }
                }
            }
            for v in 0..NVAR {
                mass.apply_inverse(el, &mut b[v * nloc..(v + 1) * nloc], &mut scratch);
            }
        }
        u
    }

    /// Cell average; exact under the Gauss-Lobatto nodal weights.
    pub fn average(&self, space: &Space, c: usize) -> ConsState {
        let w = &space.elem.basis.weights;
        let b = self.block(c);
        let n = self.nloc;
        let mut a = [0.0; NVAR];
        for v in 0..NVAR {
            a[v] = (0..n).map(|j| w[j] * b[v * n + j]).sum();
        }
        ConsState::from_array(a)
    }

    /// Value of the polynomial in cell c at reference point xh.
    pub fn eval(&self, space: &Space, c: usize, xh: [f64; 2]) -> ConsState {
        let mut a = [0.0; NVAR];
        for j in 0..self.nloc {
            let phi = space.elem.basis.eval(j, xh);
            for v in 0..NVAR {
                a[v] += phi * self.var(c, v)[j];
            }
        }
        ConsState::from_array(a)
    }

    /// Domain integrals of the conserved variables (volume Gauss rule).
    pub fn totals(&self, space: &Space) -> [f64; NVAR] {
        let el = &space.elem;
        let vol = space.mesh.cell_volume();
        let mut t = [0.0; NVAR];
        for c in 0..self.n_cells {
            for (q, &w) in el.sets.vol.weights.iter().enumerate() {
                let row = el.eval_vol.row(q);
                for v in 0..NVAR {
                    let x: f64 = row.iter().zip(self.var(c, v)).map(|(a, b)| a * b).sum();
                    t[v] += vol * w * x;
                }
            }
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// self = a * x + b * y.
    fn assign_combination(&mut self, a: f64, x: &DgField, b: f64, y: &DgField) {
        for ((s, xv), yv) in self.data.iter_mut().zip(&x.data).zip(&y.data) {
            *s = a * xv + b * yv;
        }
    }
}

/// Which mass matrix divides the DG residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MassMatrix {
    /// Exact (tensor Gauss) mass matrix.
    #[default]
    Consistent,
    /// Gauss-Lobatto diagonal mass matrix.
    Lumped,
}

impl MassMatrix {
    fn apply_inverse(self, el: &Element, v: &mut [f64], scratch: &mut [f64]) {
        match self {
            MassMatrix::Consistent => el.apply_mass_inverse(v, scratch),
            MassMatrix::Lumped => {
                for (x, w) in v.iter_mut().zip(&el.basis.weights) {
                    *x /= w;
                }
            }
        }
    }
}

/// Point sets examined by the limiter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitSet {
    /// Face Gauss, auxiliary and volume Gauss points.
    Hyperbolic,
    /// The hyperbolic points plus the Gauss-Lobatto nodes.
    HyperbolicAndNodes,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitStats {
    pub limited_cells: usize,
    pub min_rho: f64,
    pub min_rho_e: f64,
}

/// Global floor min(1e-13, min cell average of rho, min of rho e).
pub fn floor_eps(space: &Space, u: &DgField) -> f64 {
    let mut eps = 1e-13f64;
    for c in 0..u.n_cells {
        let a = u.average(space, c);
        eps = eps.min(a.rho).min(a.rho_e());
    }
    eps
}

/// Apply the positivity limiter cell by cell. Fails with
/// `AverageNotAdmissible` if some cell average is outside G^eps.
pub fn limit_field(space: &Space, u: &mut DgField, eps: f64, set: LimitSet) -> Result<LimitStats> {
    let el = &space.elem;
    let nloc = el.nloc();
    let n_sh = el.n_sh();
    let mut pts = Vec::with_capacity(n_sh + nloc);
    let mut vals = vec![0.0; NVAR * n_sh];
    let mut stats = LimitStats { limited_cells: 0, min_rho: f64::INFINITY, min_rho_e: f64::INFINITY };
    for c in 0..u.n_cells {
        let avg = u.average(space, c);
        if !in_g_eps(&avg, eps) {
            return Err(Error::AverageNotAdmissible { cell: c });
        }
        el.eval_points(&el.eval_sh_t, n_sh, u.block(c), &mut vals);
        // fast path: every point already in G^eps leaves both thetas at 1
        let (mut mr, mut me) = (f64::INFINITY, f64::INFINITY);
        for p in 0..n_sh {
            let (r, m0, m1, en) = (vals[p], vals[n_sh + p], vals[2 * n_sh + p], vals[3 * n_sh + p]);
            mr = mr.min(r);
            me = me.min(en - (m0 * m0 + m1 * m1) / (2.0 * r));
        }
        if set == LimitSet::HyperbolicAndNodes {
            for j in 0..nloc {
                let s = u.node(c, j);
                mr = mr.min(s.rho);
                me = me.min(s.rho_e());
            }
        }
        if mr >= eps && me >= eps {
            stats.min_rho = stats.min_rho.min(mr);
            stats.min_rho_e = stats.min_rho_e.min(me);
            continue;
        }
        pts.clear();
        for p in 0..n_sh {
            pts.push(ConsState { rho: vals[p], m: [vals[n_sh + p], vals[2 * n_sh + p]], energy: vals[3 * n_sh + p] });
        }
        if set == LimitSet::HyperbolicAndNodes {
            for j in 0..nloc {
                pts.push(u.node(c, j));
            }
        }
        let (tr, te) = limiter_thetas(&pts, &avg, eps)?;
        if tr < 1.0 || te < 1.0 {
            stats.limited_cells += 1;
            for j in 0..nloc {
                let s = scale_state(&u.node(c, j), &avg, tr, te);
                u.set_node(c, j, &s);
            }
        }
        for p in &pts {
            let s = scale_state(p, &avg, tr, te);
            stats.min_rho = stats.min_rho.min(s.rho);
            stats.min_rho_e = stats.min_rho_e.min(s.rho_e());
        }
    }
    Ok(stats)
}

/// Semi-discrete operator dU/dt = L(U, t).
#[derive(Clone)]
pub struct DgOperator {
    pub space: Arc<Space>,
    pub gamma: f64,
    pub mass: MassMatrix,
    forcing: Option<SourceCache>,
    /// Physical face Gauss points of every face.
    face_x: Vec<[f64; 2]>,
}

impl std::fmt::Debug for DgOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DgOperator")
            .field("gamma", &self.gamma)
            .field("mass", &self.mass)
            .field("forced", &self.forcing.is_some())
            .finish()
    }
}

impl DgOperator {
    pub fn new(space: Arc<Space>, gamma: f64, mass: MassMatrix) -> Self {
        let nfp = space.n_face_points();
        let mut face_x = Vec::with_capacity(space.mesh.faces.len() * nfp);
        for f in 0..space.mesh.faces.len() {
            for g in 0..nfp {
                face_x.push(space.mesh.face_point(f, space.face_coord(g)));
            }
        }
        DgOperator { space, gamma, mass, forcing: None, face_x }
    }

    pub fn with_forcing(mut self, src: Arc<dyn SourceTerm>) -> Self {
        let sp = self.space.clone();
        let pts = (0..sp.n_cells()).flat_map(|c| sp.elem.sets.vol.points.iter().map(move |&xh| (c, xh)));
        self.forcing = Some(SourceCache::new(src, pts.map(|(c, xh)| sp.mesh.map_point(c, xh))));
        self
    }

    /// Traces of cell c on local face lf at the face Gauss points.
    #[inline]
    fn traces(&self, u: &DgField, c: usize, lf: usize, out: &mut [ConsState]) {
        let sp = &self.space;
        let nodes = &sp.elem.face_nodes[lf];
        let b = u.block(c);
        let nloc = u.nloc;
        for (g, o) in out.iter_mut().enumerate() {
            let row = sp.face_interp.row(g);
            let mut a = [0.0; NVAR];
            for (&wa, &j) in row.iter().zip(nodes) {
                for v in 0..NVAR {
                    a[v] += wa * b[v * nloc + j];
                }
            }
            *o = ConsState::from_array(a);
        }
    }

    #[inline]
    fn exterior(&self, u: &DgField, f: usize, um: &[ConsState], t: f64, up: &mut [ConsState]) {
        let face = &self.space.mesh.faces[f];
        match face.kind {
            FaceKind::Interior { right } => self.traces(u, right, face.right_local, up),
            FaceKind::Boundary { segment } => {
                let tag = &self.space.mesh.segments[segment].tag.hyperbolic;
                let nfp = um.len();
                for g in 0..nfp {
                    up[g] = ghost_state(tag, &um[g], face.normal, self.face_x[f * nfp + g], t);
                }
            }
        }
    }

    /// Largest wave speed over all faces and face points.
    pub fn max_alpha(&self, u: &DgField, t: f64) -> Result<f64> {
        let nfp = self.space.n_face_points();
        let mut um = vec![ConsState::default(); nfp];
        let mut up = vec![ConsState::default(); nfp];
        let mut amax = 0.0f64;
        for (f, face) in self.space.mesh.faces.iter().enumerate() {
            self.traces(u, face.left, face.left_local, &mut um);
            self.exterior(u, f, &um, t, &mut up);
            for g in 0..nfp {
                amax = amax.max(max_wave_speed(&um[g], &up[g], face.normal, self.gamma)?);
            }
        }
        Ok(amax)
    }

    /// Trial step a * omega_hat * dx / max alpha.
    pub fn trial_timestep(&self, u: &DgField, t: f64, a: f64) -> Result<f64> {
        let amax = self.max_alpha(u, t)?;
        Ok(a * self.space.elem.sets.omega_hat * self.space.mesh.dx / amax)
    }

    /// Evaluate dU/dt into `out`.
    pub fn residual(&self, u: &DgField, t: f64, out: &mut DgField) -> Result<()> {
        let sp = &*self.space;
        let el = &sp.elem;
        let nloc = el.nloc();
        let dim = sp.dim();
        let nvol = el.sets.vol.points.len();
        let gamma = self.gamma;
        let inv_dx = 1.0 / sp.mesh.dx;
        out.data.iter_mut().for_each(|x| *x = 0.0);

        // volume terms: per variable the coefficients of the rows of
        // el.vol_test, i.e. weighted fluxes along each axis, then the source
        let stride = (dim + 1) * nvol;
        let mut uq = vec![0.0; NVAR * nvol];
        let mut phi = vec![0.0; NVAR * stride];
        let vw = &el.sets.vol.weights;
        let m = if self.forcing.is_some() { stride } else { dim * nvol };
        for c in 0..u.n_cells {
            el.eval_points(&el.eval_vol_t, nvol, u.block(c), &mut uq);
            for q in 0..nvol {
                let s = ConsState { rho: uq[q], m: [uq[nvol + q], uq[2 * nvol + q]], energy: uq[3 * nvol + q] };
                if !(s.rho > 0.0) {
                    return Err(Error::NonAdmissible(format!("density {} at a volume point of cell {c}", s.rho)));
                }
                let w = vw[q] * inv_dx;
                let f0 = flux_along(&s, [1.0, 0.0], gamma);
                for v in 0..NVAR {
                    phi[v * stride + q] = w * f0[v];
                }
                if dim == 2 {
                    let f1 = flux_along(&s, [0.0, 1.0], gamma);
                    for v in 0..NVAR {
                        phi[v * stride + nvol + q] = w * f1[v];
                    }
                }
            }
            if let Some(fc) = &self.forcing {
                for q in 0..nvol {
                    let sv = fc.src.hyperbolic(fc.point(c * nvol + q), t);
                    for v in 0..NVAR {
                        phi[v * stride + dim * nvol + q] = vw[q] * sv[v];
                    }
                }
            }
            contract4(&el.vol_test, m, nloc, &phi, stride, out.block_mut(c), nloc);
        }

        // face terms
        let nfp = sp.n_face_points();
        let fw = &el.sets.face[0].weights;
        let mut um = vec![ConsState::default(); nfp];
        let mut up = vec![ConsState::default(); nfp];
        let mut flux = vec![[0.0; NVAR]; nfp];
        for (f, face) in sp.mesh.faces.iter().enumerate() {
            self.traces(u, face.left, face.left_local, &mut um);
            self.exterior(u, f, &um, t, &mut up);
            let mut alpha = 0.0f64;
            for g in 0..nfp {
                alpha = alpha.max(max_wave_speed(&um[g], &up[g], face.normal, gamma)?);
            }
            for g in 0..nfp {
                let fl = lax_friedrichs_flux(&um[g], &up[g], face.normal, alpha, gamma);
                for v in 0..NVAR {
                    flux[g][v] = fw[g] * inv_dx * fl[v];
                }
            }
            scatter_face(sp, out, face.left, face.left_local, &flux, -1.0);
            if let FaceKind::Interior { right } = face.kind {
                scatter_face(sp, out, right, face.right_local, &flux, 1.0);
            }
        }

        match self.mass {
            MassMatrix::Consistent => {
                let mut tmp = vec![0.0; NVAR * nloc];
                for c in 0..out.n_cells {
                    let r = out.block_mut(c);
                    tmp.copy_from_slice(r);
                    r.fill(0.0);
                    // the inverse mass matrix is symmetric
                    contract4(&el.mass_inv, nloc, nloc, &tmp, nloc, r, nloc);
                }
            }
            MassMatrix::Lumped => {
                let mut scratch = vec![0.0; nloc];
                for c in 0..out.n_cells {
                    let r = out.block_mut(c);
                    for v in 0..NVAR {
                        self.mass.apply_inverse(el, &mut r[v * nloc..(v + 1) * nloc], &mut scratch);
                    }
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn scatter_face(sp: &Space, out: &mut DgField, c: usize, lf: usize, flux: &[[f64; NVAR]], sign: f64) {
    let nodes = &sp.elem.face_nodes[lf];
    let nloc = out.nloc;
    let r = out.block_mut(c);
    for (g, fl) in flux.iter().enumerate() {
        let row = sp.face_interp.row(g);
        for (&wa, &j) in row.iter().zip(nodes) {
            for v in 0..NVAR {
                r[v * nloc + j] += sign * wa * fl[v];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageReport {
    pub accepted: bool,
    pub halvings: usize,
    pub dt_used: f64,
    pub min_rho: f64,
    pub min_rho_e: f64,
}

enum Attempt {
    Done(DgField, LimitStats),
    Rejected,
}

fn is_rejection(e: &Error) -> bool {
    matches!(e, Error::NonAdmissible(_) | Error::AverageNotAdmissible { .. })
}

fn rk3_attempt(op: &DgOperator, un: &DgField, dt: f64, t: f64, eps: f64, last: LimitSet) -> Result<Attempt> {
    let sp = &*op.space;
    let mut r = DgField::like(sp);
    let mut stage = DgField::like(sp);
    let mut next = DgField::like(sp);
    macro_rules! check {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(e) if is_rejection(&e) => return Ok(Attempt::Rejected),
                Err(e) => return Err(e),
            }
        };
    }
    check!(op.residual(un, t, &mut r));
    stage.assign_combination(1.0, un, dt, &r);
    check!(limit_field(sp, &mut stage, eps, LimitSet::Hyperbolic));

    check!(op.residual(&stage, t + dt, &mut r));
    for ((n, (s, rv)), u0) in next.data.iter_mut().zip(stage.data.iter().zip(&r.data)).zip(&un.data) {
        *n = 0.75 * u0 + 0.25 * (s + dt * rv);
    }
    check!(limit_field(sp, &mut next, eps, LimitSet::Hyperbolic));

    check!(op.residual(&next, t + 0.5 * dt, &mut r));
    for ((s, (n, rv)), u0) in stage.data.iter_mut().zip(next.data.iter().zip(&r.data)).zip(&un.data) {
        *s = u0 / 3.0 + 2.0 / 3.0 * (n + dt * rv);
    }
    let stats = check!(limit_field(sp, &mut stage, eps, last));
    Ok(Attempt::Done(stage, stats))
}

/// One SSP-RK3 step from U^n, halving dt and restarting from U^n whenever a
/// stage produces a cell average outside G^eps.
pub fn ssp_rk3_adaptive(
    op: &DgOperator,
    un: &DgField,
    dt: f64,
    t: f64,
    eps: f64,
    last: LimitSet,
    max_halvings: usize,
) -> Result<(DgField, StageReport)> {
    let mut dt = dt;
    let mut halvings = 0;
    loop {
        match rk3_attempt(op, un, dt, t, eps, last)? {
            Attempt::Done(u, s) => {
                return Ok((
                    u,
                    StageReport { accepted: true, halvings, dt_used: dt, min_rho: s.min_rho, min_rho_e: s.min_rho_e },
                ))
            }
            Attempt::Rejected => {
                if halvings == max_halvings {
                    return Err(Error::MaxHalvings { t, dt });
                }
                halvings += 1;
                dt *= 0.5;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdvanceReport {
    pub substeps: usize,
    pub halvings: usize,
    pub min_rho: f64,
    pub min_rho_e: f64,
}

/// March the hyperbolic subproblem from t_from to exactly t_to, each
/// substep starting from min(dt_trial, remaining time). When `final_nodes`
/// is set the result is additionally limited on the Gauss-Lobatto nodes.
#[allow(clippy::too_many_arguments)]
pub fn advance_hyperbolic(
    op: &DgOperator,
    u: &DgField,
    t_from: f64,
    t_to: f64,
    dt_trial: f64,
    eps: f64,
    final_nodes: bool,
    max_halvings: usize,
) -> Result<(DgField, AdvanceReport)> {
    if !(t_to > t_from) {
        return Err(Error::Config(format!("empty hyperbolic interval [{t_from}, {t_to}]")));
    }
    if !(dt_trial > 0.0) || !dt_trial.is_finite() {
        return Err(Error::NonAdmissible(format!("trial step {dt_trial}")));
    }
    let mut rep = AdvanceReport { min_rho: f64::INFINITY, min_rho_e: f64::INFINITY, ..Default::default() };
    let mut cur = u.clone();
    let mut t = t_from;
    loop {
        let rem = t_to - t;
        // absorb round-off so the last substep lands on t_to
        let dt = if dt_trial >= rem * (1.0 - 1e-12) { rem } else { dt_trial };
        let (next, sr) = ssp_rk3_adaptive(op, &cur, dt, t, eps, LimitSet::Hyperbolic, max_halvings)?;
        rep.substeps += 1;
        rep.halvings += sr.halvings;
        rep.min_rho = rep.min_rho.min(sr.min_rho);
        rep.min_rho_e = rep.min_rho_e.min(sr.min_rho_e);
        cur = next;
        if sr.halvings == 0 && dt == rem {
            break;
        }
        t += sr.dt_used;
    }
    if final_nodes {
        let s = limit_field(&op.space, &mut cur, eps, LimitSet::HyperbolicAndNodes)?;
        rep.min_rho = rep.min_rho.min(s.min_rho);
        rep.min_rho_e = rep.min_rho_e.min(s.min_rho_e);
    }
    Ok((cur, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler::{HyperbolicBc, ParabolicBc, StateSource};
    use crate::mesh::{build_mesh, DomainSpec, Rect};

    fn periodic_square(dx: f64, k: usize) -> Arc<Space> {
        let spec = DomainSpec::new(2, vec![Rect::new([0.0, 0.0], [1.0, 1.0])]).periodic(0).periodic(1);
        Arc::new(Space::new(build_mesh(&spec, dx).unwrap(), k).unwrap())
    }

    fn smooth(x: [f64; 2]) -> ConsState {
        let s = (2.0 * std::f64::consts::PI * (x[0] + x[1])).sin();
        ConsState::from_primitive(1.0 + 0.3 * s, [0.5 + 0.2 * s, -0.3], 1.0 + 0.1 * s, 1.4)
    }

    #[test]
    fn free_stream_is_preserved() {
        for k in 1..=3 {
            let sp = periodic_square(0.25, k);
            let op = DgOperator::new(sp.clone(), 1.4, MassMatrix::Consistent);
            let c = ConsState::from_primitive(1.2, [0.7, -0.4], 0.9, 1.4);
            let u = DgField::interpolate(&sp, |_| c);
            let mut r = DgField::like(&sp);
            op.residual(&u, 0.0, &mut r).unwrap();
            let m = r.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // compare in flux units (times dx)
            assert!(m * 0.25 < 1e-13, "k = {k}: {m}");
        }
    }

    #[test]
    fn periodic_residual_integrates_to_zero() {
        for k in 1..=3 {
            for mass in [MassMatrix::Consistent, MassMatrix::Lumped] {
                let sp = periodic_square(0.25, k);
                let op = DgOperator::new(sp.clone(), 1.4, mass);
                let u = DgField::project(&sp, mass, smooth);
                let mut r = DgField::like(&sp);
                op.residual(&u, 0.0, &mut r).unwrap();
                let scale = r.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let tot = r.totals(&sp);
                let tot_nodal: Vec<f64> =
                    (0..NVAR).map(|v| (0..r.n_cells).map(|c| r.average(&sp, c).to_array()[v]).sum()).collect();
                for v in 0..NVAR {
                    assert!(tot_nodal[v].abs() < 1e-12 * scale * r.n_cells as f64, "k={k} {mass:?} var {v}");
                    if mass == MassMatrix::Consistent {
                        assert!(tot[v].abs() < 1e-12 * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn single_cell_hand_assembly() {
        let gamma = 1.4;
        let u0 = ConsState::from_primitive(1.0, [0.5, 0.0], 1.0, gamma);
        let ul = ConsState::from_primitive(1.3, [0.8, 0.0], 1.5, gamma);
        let spec = DomainSpec::new(1, vec![Rect::interval(0.0, 0.5)])
            .segment(0, 0.0, [0.0, 0.0], HyperbolicBc::Inflow(StateSource::Constant(ul)), ParabolicBc::Neumann)
            .segment(0, 0.5, [0.0, 0.0], HyperbolicBc::Outflow, ParabolicBc::Neumann);
        let sp = Arc::new(Space::new(build_mesh(&spec, 0.5).unwrap(), 1).unwrap());
        let op = DgOperator::new(sp.clone(), gamma, MassMatrix::Consistent);
        let u = DgField::interpolate(&sp, |_| u0);
        let mut r = DgField::like(&sp);
        op.residual(&u, 0.0, &mut r).unwrap();
        // constant data: r_0 = -F(U0) - Fhat_left, r_1 = 0; M^-1 = [[4,-2],[-2,4]]
        let n = [-1.0, 0.0];
        let alpha = max_wave_speed(&u0, &ul, n, gamma).unwrap();
        let fhat = lax_friedrichs_flux(&u0, &ul, n, alpha, gamma);
        let f = flux_along(&u0, [1.0, 0.0], gamma);
        for v in 0..NVAR {
            let r0 = (-f[v] - fhat[v]) / 0.5;
            assert!((r.var(0, v)[0] - 4.0 * r0).abs() < 1e-13);
            assert!((r.var(0, v)[1] + 2.0 * r0).abs() < 1e-13);
        }
    }

    #[test]
    fn reflective_wall_blocks_mass() {
        let gamma = 1.4;
        let spec = DomainSpec::new(1, vec![Rect::interval(-1.0, 1.0)])
            .segment(0, -1.0, [0.0, 0.0], HyperbolicBc::Reflective, ParabolicBc::Neumann)
            .segment(0, 1.0, [0.0, 0.0], HyperbolicBc::Reflective, ParabolicBc::Neumann);
        let sp = Arc::new(Space::new(build_mesh(&spec, 0.25).unwrap(), 2).unwrap());
        let op = DgOperator::new(sp.clone(), gamma, MassMatrix::Consistent);
        // odd velocity, even density and pressure
        let u = DgField::project(&sp, MassMatrix::Consistent, |x| {
            ConsState::from_primitive(1.0 + 0.2 * x[0] * x[0], [0.3 * x[0], 0.0], 1.0 + 0.1 * x[0] * x[0], gamma)
        });
        let mut r = DgField::like(&sp);
        op.residual(&u, 0.0, &mut r).unwrap();
        let tot = r.totals(&sp);
        assert!(tot[0].abs() < 1e-13);
        assert!(tot[3].abs() < 1e-13);
    }

    #[test]
    fn constant_state_step_is_identity() {
        let sp = periodic_square(0.25, 2);
        let op = DgOperator::new(sp.clone(), 1.4, MassMatrix::Consistent);
        let c = ConsState::from_primitive(1.4, [0.0, 0.0], 1.0, 1.4);
        let u = DgField::interpolate(&sp, |_| c);
        let (v, rep) = ssp_rk3_adaptive(&op, &u, 1e-2, 0.0, 1e-13, LimitSet::Hyperbolic, 40).unwrap();
        assert_eq!(rep.halvings, 0);
        assert!(u.data.iter().zip(&v.data).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn trial_step_example() {
        let spec = DomainSpec::new(2, vec![Rect::new([0.0, 0.0], [0.1, 0.1])]).periodic(0).periodic(1);
        let sp = Arc::new(Space::new(build_mesh(&spec, 0.01).unwrap(), 1).unwrap());
        let op = DgOperator::new(sp.clone(), 1.4, MassMatrix::Consistent);
        let u = DgField::interpolate(&sp, |_| ConsState::from_primitive(1.4, [0.0, 0.0], 1.0, 1.4));
        let dt = op.trial_timestep(&u, 0.0, 0.5).unwrap();
        assert!((dt - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn substep_counts() {
        let sp = periodic_square(0.25, 1);
        let op = DgOperator::new(sp.clone(), 1.4, MassMatrix::Consistent);
        let u = DgField::project(&sp, MassMatrix::Consistent, smooth);
        let (_, rep) = advance_hyperbolic(&op, &u, 0.0, 0.025, 0.01, 1e-13, false, 40).unwrap();
        assert_eq!(rep.substeps, 3);
        let (_, rep) = advance_hyperbolic(&op, &u, 0.0, 0.004, 0.01, 1e-13, false, 40).unwrap();
        assert_eq!(rep.substeps, 1);
    }

    #[test]
    fn conservation_over_advance() {
        let sp = periodic_square(0.125, 2);
        let op = DgOperator::new(sp.clone(), 1.4, MassMatrix::Consistent);
        let u = DgField::project(&sp, MassMatrix::Consistent, smooth);
        let before = u.totals(&sp);
        let dt = op.trial_timestep(&u, 0.0, 0.5).unwrap();
        let (v, _) = advance_hyperbolic(&op, &u, 0.0, 10.0 * dt, dt, 1e-13, true, 40).unwrap();
        let after = v.totals(&sp);
        for i in 0..NVAR {
            assert!((after[i] - before[i]).abs() <= 1e-11 * before[i].abs().max(1.0), "var {i}");
        }
    }

    #[test]
    fn halving_triggered_by_near_vacuum() {
        // 1D strong rarefaction into a nearly empty region
        let gamma = 1.4;
        let spec = DomainSpec::new(1, vec![Rect::interval(-1.0, 1.0)])
            .segment(0, -1.0, [0.0, 0.0], HyperbolicBc::Outflow, ParabolicBc::Neumann)
            .segment(0, 1.0, [0.0, 0.0], HyperbolicBc::Outflow, ParabolicBc::Neumann);
        let sp = Arc::new(Space::new(build_mesh(&spec, 0.25).unwrap(), 1).unwrap());
        let op = DgOperator::new(sp.clone(), gamma, MassMatrix::Consistent);
        let u = DgField::interpolate(&sp, |x| {
            if x[0] < 0.0 {
                ConsState::from_primitive(1.0, [-2.0, 0.0], 0.4, gamma)
            } else {
                ConsState::from_primitive(1e-6, [0.0, 0.0], 1e-7, gamma)
            }
        });
        let eps = floor_eps(&sp, &u);
        // find the largest rejected dt by bisection on a single attempt
        let accepted = |dt: f64| matches!(rk3_attempt(&op, &u, dt, 0.0, eps, LimitSet::Hyperbolic), Ok(Attempt::Done(..)));
        let (mut lo, mut hi) = (1e-6, 10.0);
        assert!(accepted(lo) && !accepted(hi));
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if accepted(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let dt = 1.5 * lo;
        if !accepted(dt) && accepted(0.5 * dt) {
            let (_, rep) = ssp_rk3_adaptive(&op, &u, dt, 0.0, eps, LimitSet::Hyperbolic, 40).unwrap();
            assert_eq!(rep.halvings, 1);
            assert!(rep.accepted);
        } else {
            panic!("acceptance is not monotone near dt = {dt}");
        }
    }

    #[test]
    fn limiting_preserves_averages() {
        let sp = periodic_square(0.25, 3);
        let mut u = DgField::project(&sp, MassMatrix::Consistent, |x| {
            if x[0] + 0.3 * x[1] < 0.55 {
                ConsState::from_primitive(1.0, [0.0, 0.0], 1.0, 1.4)
            } else {
                ConsState::from_primitive(1e-3, [2.0, 0.0], 1e-4, 1.4)
            }
        });
        let before: Vec<ConsState> = (0..u.n_cells).map(|c| u.average(&sp, c)).collect();
        let s = limit_field(&sp, &mut u, 1e-13, LimitSet::HyperbolicAndNodes).unwrap();
        assert!(s.limited_cells > 0);
        assert!(s.min_rho >= 0.9e-13 && s.min_rho_e >= 0.9e-13);
        for c in 0..u.n_cells {
            let a = u.average(&sp, c).to_array();
            let b = before[c].to_array();
            for v in 0..NVAR {
                assert!((a[v] - b[v]).abs() <= 1e-14 * b[v].abs().max(1.0));
            }
        }
    }
}
