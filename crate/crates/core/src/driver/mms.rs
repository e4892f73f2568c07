//! Manufactured smooth solution on the unit square and its forcing, split
//! between the two subproblems.
//!
//! The hyperbolic forcing is the residual of the exact solution in the Euler
//! equations, S_H = dU/dt + div F^a(U). The viscous forcing is what remains
//! of the full residual, S_P = -div F^d(U), written for the primitive
//! equations of the viscous step. Each substep therefore has the exact
//! solution as its own solution, up to splitting error.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use crate::dg::{DgField, SourceTerm, Space};
use crate::euler::ConsState;

/// Value with derivatives in (t, x, y).
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: [f64; 3],
}

impl Dual {
    fn new(v: f64, d: [f64; 3]) -> Self {
        Dual { v, d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, [self.d[0] + o.d[0], self.d[1] + o.d[1], self.d[2] + o.d[2]])
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, [self.d[0] - o.d[0], self.d[1] - o.d[1], self.d[2] - o.d[2]])
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        let d = [0, 1, 2].map(|i| self.d[i] * o.v + self.v * o.d[i]);
        Dual::new(self.v * o.v, d)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, s: f64) -> Dual {
        Dual::new(self.v * s, self.d.map(|x| x * s))
    }
}

/// rho = exp(-t) sin(2 pi (x+y)) + 2,
/// u = exp(-t) (cos 2pi x sin 2pi y, sin 2pi x cos 2pi y) + 2,
/// e = exp(-t) cos 2pi x cos 2pi y / 2 + 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsSolution {
    pub gamma: f64,
    pub reynolds: f64,
    pub lambda: f64,
}

const A: f64 = 2.0 * PI;

/// sin and cos of 2 pi x and 2 pi y.
#[inline]
fn trig(x: [f64; 2]) -> [f64; 4] {
    let (sx, cx) = (A * x[0]).sin_cos();
    let (sy, cy) = (A * x[1]).sin_cos();
    [sx, cx, sy, cy]
}

impl MmsSolution {
    pub fn new(gamma: f64, reynolds: f64, lambda: f64) -> Self {
        MmsSolution { gamma, reynolds, lambda }
    }

    fn fields(&self, tr: &[f64; 4], t: f64) -> (Dual, [Dual; 2], Dual) {
        self.fields_at(tr, (-t).exp())
    }

    /// Fields as functions of ex = exp(-t).
    fn fields_at(&self, tr: &[f64; 4], ex: f64) -> (Dual, [Dual; 2], Dual) {
        let [sx, cx, sy, cy] = *tr;
        let s = sx * cy + cx * sy;
        let c = cx * cy - sx * sy;
        let rho = Dual::new(ex * s + 2.0, [-ex * s, A * ex * c, A * ex * c]);
        let u1 = Dual::new(ex * cx * sy + 2.0, [-ex * cx * sy, -A * ex * sx * sy, A * ex * cx * cy]);
        let u2 = Dual::new(ex * sx * cy + 2.0, [-ex * sx * cy, A * ex * cx * cy, -A * ex * sx * sy]);
        let e = Dual::new(
            0.5 * ex * cx * cy + 1.0,
            [-0.5 * ex * cx * cy, -0.5 * A * ex * sx * cy, -0.5 * A * ex * cx * sy],
        );
        (rho, [u1, u2], e)
    }

    pub fn primitive(&self, x: [f64; 2], t: f64) -> (f64, [f64; 2], f64) {
        let (r, u, e) = self.fields(&trig(x), t);
        (r.v, [u[0].v, u[1].v], e.v)
    }

    pub fn state(&self, x: [f64; 2], t: f64) -> ConsState {
        let (r, u, e) = self.primitive(x, t);
        ConsState::new(r, [r * u[0], r * u[1]], r * e + 0.5 * r * (u[0] * u[0] + u[1] * u[1]))
    }

    /// Velocity and specific internal energy, for Dirichlet data.
    pub fn velocity_energy(&self, x: [f64; 2], t: f64) -> ([f64; 2], f64) {
        let (_, u, e) = self.primitive(x, t);
        (u, e)
    }

    fn hyperbolic_from(&self, tr: &[f64; 4], t: f64) -> [f64; 4] {
        self.hyperbolic_at(tr, (-t).exp())
    }

    fn hyperbolic_at(&self, tr: &[f64; 4], ex: f64) -> [f64; 4] {
        let (rho, [u1, u2], e) = self.fields_at(tr, ex);
        let m1 = rho * u1;
        let m2 = rho * u2;
        let p = rho * e * (self.gamma - 1.0);
        let en = rho * e + rho * (u1 * u1 + u2 * u2) * 0.5;
        let h = en + p;
        let fx = [m1, m1 * u1 + p, m2 * u1, h * u1];
        let fy = [m2, m1 * u2, m2 * u2 + p, h * u2];
        let q = [rho, m1, m2, en];
        [0, 1, 2, 3].map(|i| q[i].d[0] + fx[i].d[1] + fy[i].d[2])
    }

    fn parabolic_from(&self, tr: &[f64; 4], t: f64) -> ([f64; 2], f64) {
        let [sx, cx, sy, cy] = *tr;
        let ex = (-t).exp();
        let (_, u, _) = self.fields(tr, t);
        let a2 = A * A;
        // every component is an eigenfunction of the Laplacian
        let lap_u = [-2.0 * a2 * ex * cx * sy, -2.0 * a2 * ex * sx * cy];
        let grad_div = [-2.0 * a2 * ex * cx * sy, -2.0 * a2 * ex * sx * cy];
        let lap_e = -a2 * ex * cx * cy;
        let g = [[u[0].d[1], u[0].d[2]], [u[1].d[1], u[1].d[2]]];
        let div = g[0][0] + g[1][1];
        let mut ee = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let s = 0.5 * (g[i][j] + g[j][i]);
                ee += s * s;
            }
        }
        let tau_grad_u = 2.0 * ee - 2.0 / 3.0 * div * div;
        let re = self.reynolds;
        let fu = [0, 1].map(|i| -(lap_u[i] + grad_div[i] / 3.0) / re);
        let fe = -self.lambda / re * lap_e - tau_grad_u / re;
        (fu, fe)
    }

    /// dU/dt + div F^a of the exact solution.
    pub fn hyperbolic_source(&self, x: [f64; 2], t: f64) -> [f64; 4] {
        self.hyperbolic_from(&trig(x), t)
    }

    /// Momentum and internal-energy forcing of the viscous step.
    pub fn parabolic_source(&self, x: [f64; 2], t: f64) -> ([f64; 2], f64) {
        self.parabolic_from(&trig(x), t)
    }
}

/// Nodes in exp(-t) at which the hyperbolic source is tabulated.
const EX_NODES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Every hyperbolic source component is a polynomial of degree at most 4 in
/// exp(-t) (the energy flux is quartic), so interpolation through five
/// tabulated values reproduces it exactly up to round-off.
impl SourceTerm for MmsSolution {
    fn cache_len(&self) -> usize {
        4 + 4 * EX_NODES.len()
    }

    fn prepare(&self, x: [f64; 2], cache: &mut [f64]) {
        let tr = trig(x);
        cache[..4].copy_from_slice(&tr);
        for (i, &ex) in EX_NODES.iter().enumerate() {
            cache[4 + 4 * i..8 + 4 * i].copy_from_slice(&self.hyperbolic_at(&tr, ex));
        }
    }

    fn hyperbolic(&self, cache: &[f64], t: f64) -> [f64; 4] {
        let ex = (-t).exp();
        let mut out = [0.0; 4];
        for (i, &xi) in EX_NODES.iter().enumerate() {
            let mut l = 1.0;
            for (j, &xj) in EX_NODES.iter().enumerate() {
                if j != i {
                    l *= (ex - xj) / (xi - xj);
                }
            }
            for v in 0..4 {
                out[v] += l * cache[4 + 4 * i + v];
            }
        }
        out
    }

    fn parabolic(&self, cache: &[f64], t: f64) -> ([f64; 2], f64) {
        self.parabolic_from(&[cache[0], cache[1], cache[2], cache[3]], t)
    }
}

/// Discrete L^2_h errors of density, momentum (Euclidean norm over
/// components) and total energy, using the volume Gauss rule.
pub fn l2_errors(space: &Space, f: &DgField, exact: impl Fn([f64; 2]) -> ConsState) -> [f64; 3] {
    let el = &space.elem;
    let vol = space.mesh.cell_volume();
    let mut s = [0.0; 3];
    for c in 0..space.n_cells() {
        for (q, (&xh, &w)) in el.sets.vol.points.iter().zip(&el.sets.vol.weights).enumerate() {
            let row = el.eval_vol.row(q);
            let mut a = [0.0; 4];
            for v in 0..4 {
                a[v] = row.iter().zip(f.var(c, v)).map(|(p, b)| p * b).sum();
            }
            let ex = exact(space.mesh.map_point(c, xh));
            s[0] += vol * w * (a[0] - ex.rho).powi(2);
            s[1] += vol * w * ((a[1] - ex.m[0]).powi(2) + (a[2] - ex.m[1]).powi(2));
            s[2] += vol * w * (a[3] - ex.energy).powi(2);
        }
    }
    s.map(f64::sqrt)
}

/// ln(e1 / e2) / ln 2.
pub fn rate(e1: f64, e2: f64) -> f64 {
    (e1 / e2).ln() / 2f64.ln()
}
