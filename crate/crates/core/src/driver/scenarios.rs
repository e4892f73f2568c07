//! Named test problems: initial data, boundary layout and recommended
//! discretization parameters.

use std::sync::Arc;

use crate::dg::SourceTerm;
use crate::euler::{normal_shock, ConsState, HyperbolicBc, MovingShock, ParabolicBc, PrimSource, StateSource};
use crate::mesh::{DomainSpec, Rect};
use crate::{Error, Result};

use super::mms::MmsSolution;

const GAMMA: f64 = 1.4;

/// Recommended parameters for one degree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub dx: f64,
    pub cfl_a: f64,
    pub reynolds: f64,
    pub prandtl: f64,
    pub end_time: f64,
    pub fixed_dt: Option<f64>,
}

pub type InitialFn = dyn Fn([f64; 2]) -> ConsState + Send + Sync;

/// Everything needed to start a run of a scenario.
pub struct ScenarioSetup {
    pub domain: DomainSpec,
    pub initial: Arc<InitialFn>,
    pub forcing: Option<Arc<dyn SourceTerm>>,
    pub exact: Option<MmsSolution>,
}

#[derive(Debug, Clone, Copy)]
pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    pub dim: usize,
    /// Degree used when the configuration does not name one.
    pub default_degree: usize,
    preset: fn(usize) -> Preset,
    build: fn(&SetupParams) -> Result<ScenarioSetup>,
}

/// Run parameters a scenario's setup depends on.
#[derive(Debug, Clone, Copy)]
pub struct SetupParams {
    pub dx: f64,
    pub gamma: f64,
    pub reynolds: f64,
    pub lambda: f64,
}

impl Scenario {
    pub fn preset(&self, k: usize) -> Preset {
        (self.preset)(k)
    }

    pub fn setup(&self, p: &SetupParams) -> Result<ScenarioSetup> {
        (self.build)(p)
    }
}

fn prim(rho: f64, u: f64, p: f64) -> ConsState {
    ConsState::from_primitive(rho, [u, 0.0], p, GAMMA)
}

fn constant(u: ConsState) -> HyperbolicBc {
    HyperbolicBc::Inflow(StateSource::Constant(u))
}

fn dirichlet_of(u: ConsState) -> ParabolicBc {
    let v = u.velocity();
    ParabolicBc::DirichletVelEnergy(PrimSource::Constant { u: v, e: u.rho_e() / u.rho })
}

fn initial(f: impl Fn([f64; 2]) -> ConsState + Send + Sync + 'static) -> Arc<InitialFn> {
    Arc::new(f)
}

/// 1D Riemann problem on [lo, hi] with the jump at x = 0 and both end
/// states held fixed for both subproblems.
fn riemann(lo: f64, hi: f64, left: ConsState, right: ConsState) -> ScenarioSetup {
    let domain = DomainSpec::new(1, vec![Rect::interval(lo, hi)])
        .segment(0, lo, [0.0, 0.0], constant(left), dirichlet_of(left))
        .segment(0, hi, [0.0, 0.0], constant(right), dirichlet_of(right));
    ScenarioSetup {
        domain,
        initial: initial(move |x| if x[0] < 0.0 { left } else { right }),
        forcing: None,
        exact: None,
    }
}

fn lax_states() -> (ConsState, ConsState) {
    (prim(0.445, 0.698, 3.528), prim(0.5, 0.0, 0.571))
}

fn preset_lax(_k: usize) -> Preset {
    Preset { dx: 10.0 / 512.0, cfl_a: 0.125, reynolds: 1000.0, prandtl: 0.72, end_time: 1.3, fixed_dt: None }
}

fn build_lax(_: &SetupParams) -> Result<ScenarioSetup> {
    let (l, r) = lax_states();
    Ok(riemann(-5.0, 5.0, l, r))
}

fn preset_rarefaction(_k: usize) -> Preset {
    Preset { dx: 2.0 / 512.0, cfl_a: 0.125, reynolds: 1000.0, prandtl: 0.72, end_time: 0.6, fixed_dt: None }
}

fn build_rarefaction(_: &SetupParams) -> Result<ScenarioSetup> {
    Ok(riemann(-1.0, 1.0, prim(7.0, -1.0, 0.2), prim(7.0, 1.0, 0.2)))
}

fn a_2d(k: usize) -> f64 {
    if k == 1 {
        0.5
    } else {
        1.0
    }
}

fn preset_sedov(k: usize) -> Preset {
    Preset { dx: 1.1 / 320.0, cfl_a: a_2d(k), reynolds: 200.0, prandtl: 0.72, end_time: 1.0, fixed_dt: None }
}

fn preset_sedov_desk(k: usize) -> Preset {
    Preset { dx: 1.1 / 80.0, end_time: 0.2, ..preset_sedov(k) }
}

fn build_sedov(p: &SetupParams) -> Result<ScenarioSetup> {
    let l = 1.1;
    let domain = DomainSpec::new(2, vec![Rect::new([0.0, 0.0], [l, l])])
        .segment(0, 0.0, [0.0, l], HyperbolicBc::Reflective, ParabolicBc::Neumann)
        .segment(1, 0.0, [0.0, l], HyperbolicBc::Reflective, ParabolicBc::Neumann)
        .segment(0, l, [0.0, l], HyperbolicBc::Outflow, ParabolicBc::Neumann)
        .segment(1, l, [0.0, l], HyperbolicBc::Outflow, ParabolicBc::Neumann);
    let dx = p.dx;
    let e0 = 0.244816 / (dx * dx);
    Ok(ScenarioSetup {
        domain,
        initial: initial(move |x| {
            let e = if x[0] < dx && x[1] < dx { e0 } else { 1e-12 };
            ConsState::new(1.0, [0.0, 0.0], e)
        }),
        forcing: None,
        exact: None,
    })
}

fn preset_diffraction(k: usize) -> Preset {
    let dx = if k == 1 { 1.0 / 96.0 } else { 1.0 / 64.0 };
    Preset { dx, cfl_a: a_2d(k), reynolds: 200.0, prandtl: 0.72, end_time: 2.3, fixed_dt: None }
}

/// Mach 5.09 shock at x = 0.5 moving right into rho = 1.4, p = 1.
pub fn diffraction_shock() -> MovingShock {
    let (rho, u, p, s) = normal_shock(1.4, 1.0, 5.09, GAMMA);
    MovingShock::new(prim(rho, u, p), prim(1.4, 0.0, 1.0), [1.0, 0.0, -0.5], s)
}

fn build_diffraction(_: &SetupParams) -> Result<ScenarioSetup> {
    let sh = diffraction_shock();
    let n = ParabolicBc::Neumann;
    let domain = DomainSpec::new(2, vec![Rect::new([0.0, 6.0], [1.0, 12.0]), Rect::new([1.0, 0.0], [13.0, 12.0])])
        .segment(0, 0.0, [6.0, 12.0], constant(sh.post), n.clone())
        .segment(0, 13.0, [0.0, 12.0], HyperbolicBc::Outflow, n.clone())
        .segment(1, 0.0, [1.0, 13.0], HyperbolicBc::Outflow, n.clone())
        .segment(1, 6.0, [0.0, 1.0], HyperbolicBc::Reflective, n.clone())
        .segment(0, 1.0, [0.0, 6.0], HyperbolicBc::Reflective, n.clone())
        .segment(1, 12.0, [0.0, 13.0], HyperbolicBc::PostShock(sh), n);
    Ok(ScenarioSetup { domain, initial: initial(move |x| sh.state_at(x, 0.0)), forcing: None, exact: None })
}

/// Mach 10 shock through (1/6, 0) at sixty degrees to the x axis:
/// 6x - 2 sqrt(3) y - 1 = 0, post-shock rho = 8, u = (4.125 sqrt 3, -4.125),
/// p = 116.5; ahead rho = 1.4, p = 1.
pub fn mach10_shock() -> MovingShock {
    let s3 = 3f64.sqrt();
    let post = ConsState::from_primitive(8.0, [4.125 * s3, -4.125], 116.5, GAMMA);
    MovingShock::new(post, prim(1.4, 0.0, 1.0), [6.0, -2.0 * s3, -1.0], 10.0)
}

fn preset_mach(k: usize) -> Preset {
    let dx = if k == 1 { 1.0 / 480.0 } else { 1.0 / 240.0 };
    Preset { dx, cfl_a: a_2d(k), reynolds: 100.0, prandtl: 0.72, end_time: 0.2, fixed_dt: None }
}

fn preset_mach_desk(k: usize) -> Preset {
    Preset { dx: 1.0 / 60.0, ..preset_mach(k) }
}

fn build_mach(_: &SetupParams) -> Result<ScenarioSetup> {
    let sh = mach10_shock();
    let n = ParabolicBc::Neumann;
    let x0 = 1.0 / 6.0;
    let domain = DomainSpec::new(2, vec![Rect::new([0.0, 0.0], [4.0, 1.0])])
        .segment(0, 0.0, [0.0, 1.0], constant(sh.post), n.clone())
        .segment(0, 4.0, [0.0, 1.0], HyperbolicBc::Outflow, n.clone())
        .segment(1, 0.0, [0.0, x0], constant(sh.post), n.clone())
        .segment(1, 0.0, [x0, 4.0], HyperbolicBc::Reflective, n.clone())
        .segment(1, 1.0, [0.0, 4.0], HyperbolicBc::PostShock(sh), n);
    Ok(ScenarioSetup { domain, initial: initial(move |x| sh.state_at(x, 0.0)), forcing: None, exact: None })
}

fn preset_refdif(k: usize) -> Preset {
    let dx = match k {
        1 => 1.0 / 480.0,
        2 => 1.0 / 240.0,
        _ => 1.0 / 120.0,
    };
    Preset { dx, cfl_a: a_2d(k), reynolds: 1000.0, prandtl: 0.72, end_time: 0.2, fixed_dt: None }
}

fn build_refdif(_: &SetupParams) -> Result<ScenarioSetup> {
    let sh = mach10_shock();
    let n = ParabolicBc::Neumann;
    let x0 = 1.0 / 6.0;
    let domain = DomainSpec::new(2, vec![Rect::new([1.0, -1.0], [4.0, 0.0]), Rect::new([0.0, 0.0], [4.0, 1.0])])
        .segment(0, 0.0, [0.0, 1.0], constant(sh.post), n.clone())
        .segment(0, 4.0, [-1.0, 1.0], HyperbolicBc::Outflow, n.clone())
        .segment(1, -1.0, [1.0, 4.0], HyperbolicBc::Outflow, n.clone())
        .segment(1, 0.0, [0.0, x0], constant(sh.post), n.clone())
        .segment(1, 0.0, [x0, 1.0], HyperbolicBc::Reflective, n.clone())
        .segment(0, 1.0, [-1.0, 0.0], HyperbolicBc::Reflective, n.clone())
        .segment(1, 1.0, [0.0, 4.0], HyperbolicBc::PostShock(sh), n);
    Ok(ScenarioSetup { domain, initial: initial(move |x| sh.state_at(x, 0.0)), forcing: None, exact: None })
}

fn preset_mms(k: usize) -> Preset {
    let dx = match k {
        1 => 1.0 / 16.0,
        2 => 1.0 / 32.0,
        _ => 1.0 / 4.0,
    };
    // lambda = gamma / Pr = 1
    Preset { dx, cfl_a: 0.5, reynolds: 1.0, prandtl: GAMMA, end_time: 0.1024, fixed_dt: Some(6.25e-6) }
}

fn build_mms(p: &SetupParams) -> Result<ScenarioSetup> {
    let s = MmsSolution::new(p.gamma, p.reynolds, p.lambda);
    let hb = HyperbolicBc::Inflow(StateSource::Function(Arc::new(move |x, t| s.state(x, t))));
    let pb = ParabolicBc::DirichletVelEnergy(PrimSource::Function(Arc::new(move |x, t| s.velocity_energy(x, t))));
    let mut domain = DomainSpec::new(2, vec![Rect::new([0.0, 0.0], [1.0, 1.0])]);
    for axis in 0..2 {
        for c in [0.0, 1.0] {
            domain = domain.segment(axis, c, [0.0, 1.0], hb.clone(), pb.clone());
        }
    }
    Ok(ScenarioSetup {
        domain,
        initial: initial(move |x| s.state(x, 0.0)),
        forcing: Some(Arc::new(s)),
        exact: Some(s),
    })
}

fn preset_periodic(_k: usize) -> Preset {
    Preset { dx: 1.0 / 8.0, cfl_a: 0.5, reynolds: 100.0, prandtl: 0.72, end_time: 0.01, fixed_dt: None }
}

fn build_periodic(p: &SetupParams) -> Result<ScenarioSetup> {
    let s = MmsSolution::new(p.gamma, p.reynolds, p.lambda);
    let domain = DomainSpec::new(2, vec![Rect::new([0.0, 0.0], [1.0, 1.0])]).periodic(0).periodic(1);
    Ok(ScenarioSetup { domain, initial: initial(move |x| s.state(x, 0.0)), forcing: None, exact: None })
}

static CATALOG: [Scenario; 10] = [
    Scenario {
        name: "lax",
        summary: "Lax shock tube on [-5, 5], 512 cells, T = 1.3",
        dim: 1,
        default_degree: 1,
        preset: preset_lax,
        build: build_lax,
    },
    Scenario {
        name: "double-rarefaction",
        summary: "Double rarefaction on [-1, 1], 512 cells, T = 0.6",
        dim: 1,
        default_degree: 1,
        preset: preset_rarefaction,
        build: build_rarefaction,
    },
    Scenario {
        name: "sedov",
        summary: "Sedov blast wave on [0, 1.1]^2, dx = 1.1/320, T = 1",
        dim: 2,
        default_degree: 1,
        preset: preset_sedov,
        build: build_sedov,
    },
    Scenario {
        name: "shock-diffraction",
        summary: "Mach 5.09 shock diffracting around a corner, T = 2.3",
        dim: 2,
        default_degree: 1,
        preset: preset_diffraction,
        build: build_diffraction,
    },
    Scenario {
        name: "double-mach",
        summary: "Double Mach reflection of a Mach 10 shock on [0, 4] x [0, 1], T = 0.2",
        dim: 2,
        default_degree: 1,
        preset: preset_mach,
        build: build_mach,
    },
    Scenario {
        name: "reflection-diffraction",
        summary: "Mach 10 shock reflection and diffraction on a stepped domain, T = 0.2",
        dim: 2,
        default_degree: 1,
        preset: preset_refdif,
        build: build_refdif,
    },
    Scenario {
        name: "mms",
        summary: "Manufactured smooth solution on the unit square, Re = 1, lambda = 1, T = 0.1024",
        dim: 2,
        default_degree: 1,
        preset: preset_mms,
        build: build_mms,
    },
    Scenario {
        name: "periodic-smooth",
        summary: "Smooth periodic field without forcing, for conservation checks",
        dim: 2,
        default_degree: 1,
        preset: preset_periodic,
        build: build_periodic,
    },
    Scenario {
        name: "sedov-desk",
        summary: "Sedov blast wave at dx = 1.1/80, T = 0.2",
        dim: 2,
        default_degree: 1,
        preset: preset_sedov_desk,
        build: build_sedov,
    },
    Scenario {
        name: "double-mach-desk",
        summary: "Double Mach reflection at dx = 1/60, Q3, Re = 100",
        dim: 2,
        default_degree: 3,
        preset: preset_mach_desk,
        build: build_mach,
    },
];

pub fn scenario_catalog() -> &'static [Scenario] {
    &CATALOG
}

pub fn find_scenario(name: &str) -> Result<&'static Scenario> {
    CATALOG
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::Config(format!("unknown scenario '{name}'")))
}
