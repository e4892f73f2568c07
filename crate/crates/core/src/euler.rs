//! Ideal-gas state algebra, advective fluxes, wave speeds, the admissible
//! sets, the positivity-preserving limiter and boundary ghost states.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParams {
    pub gamma: f64,
    pub prandtl: f64,
    pub reynolds: f64,
    /// gamma / prandtl.
    pub lambda: f64,
}

impl GasParams {
    pub fn new(gamma: f64, prandtl: f64, reynolds: f64) -> Result<Self> {
        if !(gamma > 1.0) || !(prandtl > 0.0) || !(reynolds > 0.0) {
            return Err(Error::Config(format!(
                "invalid gas parameters gamma={gamma}, Pr={prandtl}, Re={reynolds}"
            )));
        }
        Ok(GasParams { gamma, prandtl, reynolds, lambda: gamma / prandtl })
    }

    /// gamma = 1.4, Pr = 0.72.
    pub fn air(reynolds: f64) -> Self {
        GasParams::new(1.4, 0.72, reynolds).expect("valid constants")
    }
}

/// Conserved variables [rho, m, E]. In 1D the second momentum component is
/// identically zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConsState {
    pub rho: f64,
    pub m: [f64; 2],
    pub energy: f64,
}

impl ConsState {
    pub fn new(rho: f64, m: [f64; 2], energy: f64) -> Self {
        ConsState { rho, m, energy }
    }

    pub fn from_primitive(rho: f64, u: [f64; 2], p: f64, gamma: f64) -> Self {
        let ke = 0.5 * rho * (u[0] * u[0] + u[1] * u[1]);
        ConsState { rho, m: [rho * u[0], rho * u[1]], energy: p / (gamma - 1.0) + ke }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.rho, self.m[0], self.m[1], self.energy]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        ConsState { rho: a[0], m: [a[1], a[2]], energy: a[3] }
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.m[0] / self.rho, self.m[1] / self.rho]
    }

    /// Internal energy density E - |m|^2 / (2 rho).
    pub fn rho_e(&self) -> f64 {
        self.energy - (self.m[0] * self.m[0] + self.m[1] * self.m[1]) / (2.0 * self.rho)
    }

    pub fn pressure(&self, gamma: f64) -> f64 {
        (gamma - 1.0) * self.rho_e()
    }

    pub fn sound_speed(&self, gamma: f64) -> f64 {
        (gamma * self.pressure(gamma) / self.rho).sqrt()
    }

    pub fn lerp(a: &ConsState, b: &ConsState, t: f64) -> ConsState {
        ConsState {
            rho: t * a.rho + (1.0 - t) * b.rho,
            m: [t * a.m[0] + (1.0 - t) * b.m[0], t * a.m[1] + (1.0 - t) * b.m[1]],
            energy: t * a.energy + (1.0 - t) * b.energy,
        }
    }
}

pub fn rho_e(u: &ConsState) -> f64 {
    u.rho_e()
}

pub fn pressure(u: &ConsState, gas: &GasParams) -> f64 {
    u.pressure(gas.gamma)
}

/// Flux columns F_x, F_y of [rho, m_x, m_y, E].
pub fn advective_flux(u: &ConsState, gamma: f64) -> [[f64; 4]; 2] {
    [flux_along(u, [1.0, 0.0], gamma), flux_along(u, [0.0, 1.0], gamma)]
}

/// F(U) . n.
#[inline]
pub fn flux_along(u: &ConsState, n: [f64; 2], gamma: f64) -> [f64; 4] {
    let inv = 1.0 / u.rho;
    let vel = [u.m[0] * inv, u.m[1] * inv];
    let un = vel[0] * n[0] + vel[1] * n[1];
    let p = (gamma - 1.0) * (u.energy - 0.5 * (u.m[0] * vel[0] + u.m[1] * vel[1]));
    [
        u.rho * un,
        u.m[0] * un + p * n[0],
        u.m[1] * un + p * n[1],
        (u.energy + p) * un,
    ]
}

/// |u . n| + sqrt(gamma p / rho) for an admissible state.
pub fn wave_speed(u: &ConsState, n: [f64; 2], gamma: f64) -> Result<f64> {
    let re = u.rho_e();
    if !(u.rho > 0.0) || !(re > 0.0) {
        return Err(Error::NonAdmissible(format!("rho = {}, rho e = {}", u.rho, re)));
    }
    let un = (u.m[0] * n[0] + u.m[1] * n[1]) / u.rho;
    Ok(un.abs() + (gamma * (gamma - 1.0) * re / u.rho).sqrt())
}

pub fn max_wave_speed(um: &ConsState, up: &ConsState, n: [f64; 2], gamma: f64) -> Result<f64> {
    Ok(wave_speed(um, n, gamma)?.max(wave_speed(up, n, gamma)?))
}

/// Local Lax-Friedrichs flux 1/2 (F(U-) + F(U+)) . n - alpha/2 (U+ - U-).
#[inline]
pub fn lax_friedrichs_flux(um: &ConsState, up: &ConsState, n: [f64; 2], alpha: f64, gamma: f64) -> [f64; 4] {
    let fm = flux_along(um, n, gamma);
    let fp = flux_along(up, n, gamma);
    let a = um.to_array();
    let b = up.to_array();
    let mut f = [0.0; 4];
    for v in 0..4 {
        f[v] = 0.5 * (fm[v] + fp[v]) - 0.5 * alpha * (b[v] - a[v]);
    }
    f
}

/// Membership in G^eps: rho >= eps and rho e >= eps.
pub fn in_g_eps(u: &ConsState, eps: f64) -> bool {
    u.rho >= eps && u.rho_e() >= eps
}

/// The two limiter parameters (theta_rho, theta_e) for point values around
/// an admissible average.
pub fn limiter_thetas(points: &[ConsState], avg: &ConsState, eps: f64) -> Result<(f64, f64)> {
    let mut theta_rho = 1.0;
    let min_rho = points.iter().fold(f64::INFINITY, |m, p| m.min(p.rho));
    if !(min_rho >= eps) {
        theta_rho = ((avg.rho - eps) / (avg.rho - min_rho)).min(1.0);
        if !theta_rho.is_finite() {
            theta_rho = 0.0;
        }
    }
    let avg_re = avg.rho_e();
    let mut min_re = f64::INFINITY;
    for p in points {
        let r = if theta_rho == 1.0 { p.rho } else { theta_rho * (p.rho - avg.rho) + avg.rho };
        let re = ConsState { rho: r, ..*p }.rho_e();
        min_re = min_re.min(re);
    }
    let mut theta_e = 1.0;
    if !(min_re >= eps) {
        theta_e = ((avg_re - eps) / (avg_re - min_re)).min(1.0);
        if !theta_e.is_finite() {
            theta_e = 0.0;
        }
    }
    Ok((theta_rho, theta_e))
}

/// Apply the limiter scalings to a state.
#[inline]
pub fn scale_state(p: &ConsState, avg: &ConsState, theta_rho: f64, theta_e: f64) -> ConsState {
    if theta_rho == 1.0 && theta_e == 1.0 {
        return *p;
    }
    let rho_hat = theta_rho * (p.rho - avg.rho) + avg.rho;
    ConsState {
        rho: theta_e * (rho_hat - avg.rho) + avg.rho,
        m: [
            theta_e * (p.m[0] - avg.m[0]) + avg.m[0],
            theta_e * (p.m[1] - avg.m[1]) + avg.m[1],
        ],
        energy: theta_e * (p.energy - avg.energy) + avg.energy,
    }
}

/// Positivity limiter on one cell: scale the density toward its average,
/// then all variables, so every point lands in G^eps.
pub fn limit_cell(points: &[ConsState], avg: &ConsState, eps: f64) -> Result<Vec<ConsState>> {
    if !in_g_eps(avg, eps) {
        return Err(Error::AverageNotAdmissible { cell: 0 });
    }
    let (tr, te) = limiter_thetas(points, avg, eps)?;
    Ok(points.iter().map(|p| scale_state(p, avg, tr, te)).collect())
}

/// Planar shock moving with normal speed `speed` along the unit normal
/// (a, b). Points with a x + b y + c - speed t < 0 are behind the shock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingShock {
    pub post: ConsState,
    pub pre: ConsState,
    pub line: [f64; 3],
    pub speed: f64,
}

impl MovingShock {
    pub fn new(post: ConsState, pre: ConsState, line: [f64; 3], speed: f64) -> Self {
        let s = (line[0] * line[0] + line[1] * line[1]).sqrt();
        MovingShock { post, pre, line: [line[0] / s, line[1] / s, line[2] / s], speed }
    }

    pub fn state_at(&self, x: [f64; 2], t: f64) -> ConsState {
        let phi = self.line[0] * x[0] + self.line[1] * x[1] + self.line[2] - self.speed * t;
        if phi < 0.0 {
            self.post
        } else {
            self.pre
        }
    }
}

/// Post-shock state and shock speed for a normal shock of Mach number `mach`
/// running into gas at rest, from the Rankine-Hugoniot relations.
pub fn normal_shock(pre_rho: f64, pre_p: f64, mach: f64, gamma: f64) -> (f64, f64, f64, f64) {
    let c = (gamma * pre_p / pre_rho).sqrt();
    let m2 = mach * mach;
    let rho = pre_rho * (gamma + 1.0) * m2 / ((gamma - 1.0) * m2 + 2.0);
    let p = pre_p * (1.0 + 2.0 * gamma / (gamma + 1.0) * (m2 - 1.0));
    let s = mach * c;
    let u = s * (1.0 - pre_rho / rho);
    (rho, u, p, s)
}

type StateFn = dyn Fn([f64; 2], f64) -> ConsState + Send + Sync;
type PrimFn = dyn Fn([f64; 2], f64) -> ([f64; 2], f64) + Send + Sync;

/// Boundary state data, either constant or prescribed in space and time.
#[derive(Clone)]
pub enum StateSource {
    Constant(ConsState),
    Function(Arc<StateFn>),
}

impl StateSource {
    pub fn at(&self, x: [f64; 2], t: f64) -> ConsState {
        match self {
            StateSource::Constant(u) => *u,
            StateSource::Function(f) => f(x, t),
        }
    }
}

impl fmt::Debug for StateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateSource::Constant(u) => write!(f, "Constant({u:?})"),
            StateSource::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Dirichlet data (velocity, specific internal energy) for the viscous step.
#[derive(Clone)]
pub enum PrimSource {
    Constant { u: [f64; 2], e: f64 },
    Function(Arc<PrimFn>),
}

impl PrimSource {
    pub fn at(&self, x: [f64; 2], t: f64) -> ([f64; 2], f64) {
        match self {
            PrimSource::Constant { u, e } => (*u, *e),
            PrimSource::Function(f) => f(x, t),
        }
    }
}

impl fmt::Debug for PrimSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrimSource::Constant { u, e } => write!(f, "Constant {{ u: {u:?}, e: {e} }}"),
            PrimSource::Function(_) => write!(f, "Function(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum HyperbolicBc {
    Interior,
    Inflow(StateSource),
    Outflow,
    Reflective,
    PostShock(MovingShock),
    Periodic,
}

#[derive(Debug, Clone)]
pub enum ParabolicBc {
    Interior,
    DirichletVelEnergy(PrimSource),
    Neumann,
    Periodic,
}

/// Exterior trace used by the numerical flux on a boundary face.
pub fn ghost_state(tag: &HyperbolicBc, u_in: &ConsState, n: [f64; 2], x: [f64; 2], t: f64) -> ConsState {
    match tag {
        HyperbolicBc::Inflow(src) => src.at(x, t),
        HyperbolicBc::Outflow | HyperbolicBc::Interior | HyperbolicBc::Periodic => *u_in,
        HyperbolicBc::Reflective => {
            let mn = u_in.m[0] * n[0] + u_in.m[1] * n[1];
            ConsState {
                rho: u_in.rho,
                m: [u_in.m[0] - 2.0 * mn * n[0], u_in.m[1] - 2.0 * mn * n[1]],
                energy: u_in.energy,
            }
        }
        HyperbolicBc::PostShock(s) => s.state_at(x, t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eos_examples() {
        let u = ConsState::new(1.0, [0.0, 0.0], 1.0);
        assert_eq!(u.rho_e(), 1.0);
        assert!((u.pressure(1.4) - 0.4).abs() < 1e-15);
        assert_eq!(ConsState::new(2.0, [2.0, 0.0], 3.0).rho_e(), 2.0);
        let lax = ConsState::from_primitive(0.445, [0.698, 0.0], 3.528, 1.4);
        let expect = 3.528 / 0.4 + 0.5 * 0.445 * 0.698 * 0.698;
        assert!((lax.energy - expect).abs() < 1e-14);
        assert!((lax.energy - 8.92840289).abs() < 1e-8);
    }

    #[test]
    fn flux_examples() {
        // rho = 1, u = (1, 0), p = 0.4 gives E = 1.5
        let u = ConsState::from_primitive(1.0, [1.0, 0.0], 0.4, 1.4);
        assert!((u.energy - 1.5).abs() < 1e-15);
        let f = advective_flux(&u, 1.4);
        let expect = [1.0, 1.4, 0.0, 1.9];
        for v in 0..4 {
            assert!((f[0][v] - expect[v]).abs() < 1e-14);
        }
        let still = ConsState::from_primitive(1.3, [0.0, 0.0], 0.7, 1.4);
        let f = advective_flux(&still, 1.4);
        assert_eq!(f[0][0], 0.0);
        assert_eq!(f[0][3], 0.0);
        assert!((f[0][1] - 0.7).abs() < 1e-15 && f[0][2] == 0.0);
        assert!((f[1][2] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn wave_speed_examples() {
        let a = ConsState::from_primitive(1.4, [0.0, 0.0], 1.0, 1.4);
        assert!((wave_speed(&a, [1.0, 0.0], 1.4).unwrap() - 1.0).abs() < 1e-15);
        let b = ConsState::from_primitive(1.0, [3.0, 0.0], 0.4, 1.4);
        let s = max_wave_speed(&b, &b, [1.0, 0.0], 1.4).unwrap();
        assert!((s - (3.0 + 0.56f64.sqrt())).abs() < 1e-14);
        assert_eq!(s, max_wave_speed(&b, &b, [-1.0, 0.0], 1.4).unwrap());
        let bad = ConsState::new(1.0, [2.0, 0.0], 1.0);
        assert!(matches!(wave_speed(&bad, [1.0, 0.0], 1.4), Err(Error::NonAdmissible(_))));
    }

    #[test]
    fn lax_friedrichs_properties() {
        let a = ConsState::from_primitive(1.0, [0.3, -0.2], 1.0, 1.4);
        let b = ConsState::from_primitive(0.125, [0.0, 0.1], 0.1, 1.4);
        let n = [0.6, 0.8];
        let f = lax_friedrichs_flux(&a, &a, n, 3.0, 1.4);
        assert_eq!(f, flux_along(&a, n, 1.4));
        let f1 = lax_friedrichs_flux(&a, &b, n, 2.0, 1.4);
        let f2 = lax_friedrichs_flux(&b, &a, [-n[0], -n[1]], 2.0, 1.4);
        for v in 0..4 {
            assert!((f1[v] + f2[v]).abs() < 1e-15);
        }
        // Sod pair, hand evaluation.
        let l = ConsState::from_primitive(1.0, [0.0, 0.0], 1.0, 1.4);
        let r = ConsState::from_primitive(0.125, [0.0, 0.0], 0.1, 1.4);
        let f = lax_friedrichs_flux(&l, &r, [1.0, 0.0], 2.0, 1.4);
        let expect = [-(0.125 - 1.0), 0.5 * (1.0 + 0.1), 0.0, -(0.25 - 2.5)];
        for v in 0..4 {
            assert!((f[v] - expect[v]).abs() < 1e-14, "{v}: {} {}", f[v], expect[v]);
        }
    }

    #[test]
    fn admissible_set() {
        let eps = 1e-13;
        let u = ConsState::new(eps, [0.0, 0.0], eps);
        assert!(in_g_eps(&u, eps));
        assert!(!in_g_eps(&ConsState::new(1.0, [2.0, 0.0], 1.0), eps));
    }

    #[test]
    fn limiter_hand_example() {
        let eps = 1e-13;
        let pts = [ConsState::new(-0.1, [0.0, 0.0], 1.0), ConsState::new(2.1, [0.0, 0.0], 1.0)];
        let avg = ConsState::new(1.0, [0.0, 0.0], 1.0);
        let (tr, _) = limiter_thetas(&pts, &avg, eps).unwrap();
        assert!((tr - (1.0 - eps) / 1.1).abs() < 1e-15);
        let out = limit_cell(&pts, &avg, eps).unwrap();
        assert!((out[0].rho - eps).abs() < 1e-15);
        assert!(out.iter().all(|p| in_g_eps(p, eps * 0.999)));
    }

    #[test]
    fn limiter_identity_when_admissible() {
        let pts = [ConsState::new(1.0, [0.1, 0.0], 2.0), ConsState::new(1.5, [0.0, 0.2], 1.0)];
        let avg = ConsState::new(1.25, [0.05, 0.1], 1.5);
        assert_eq!(limit_cell(&pts, &avg, 1e-13).unwrap(), pts.to_vec());
        let bad = ConsState::new(-1.0, [0.0, 0.0], 1.0);
        assert!(matches!(limit_cell(&pts, &bad, 1e-13), Err(Error::AverageNotAdmissible { .. })));
    }

    #[test]
    fn ghost_states() {
        let u = ConsState::new(1.0, [3.0, 2.0], 10.0);
        let g = ghost_state(&HyperbolicBc::Reflective, &u, [1.0, 0.0], [0.0, 0.0], 0.0);
        assert_eq!(g.m, [-3.0, 2.0]);
        assert_eq!(ghost_state(&HyperbolicBc::Outflow, &u, [1.0, 0.0], [0.0, 0.0], 0.0), u);
    }

    #[test]
    fn normal_shock_mach_509() {
        let (rho, u, p, s) = normal_shock(1.4, 1.0, 5.09, 1.4);
        // mass and momentum fluxes agree across the shock in its frame
        let m1 = 1.4 * (0.0 - s);
        let m2 = rho * (u - s);
        assert!((m1 - m2).abs() < 1e-12);
        let p1 = 1.4 * s * s + 1.0;
        let p2 = rho * (u - s) * (u - s) + p;
        assert!((p1 - p2).abs() < 1e-10);
        assert!((rho - 7.041132).abs() < 1e-5);
    }
}
