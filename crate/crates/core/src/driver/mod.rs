//! Orchestration: the Strang-split time step with adaptive step size, the
//! run loop with outputs, the manufactured-solution convergence study and
//! matrix verification.

pub mod config;
pub mod mms;
pub mod output;
pub mod scenarios;

use std::fmt;
use std::sync::Arc;

use crate::dg::{advance_hyperbolic, floor_eps, limit_field, DgField, DgOperator, LimitSet, Space};
use crate::euler::in_g_eps;
use crate::linalg::{inverse_nonneg_check, mmatrix_sign_check, MonotonicityReport};
use crate::mesh::build_mesh;
use crate::parabolic::{cell_average_admissible, energy_rhs_nonneg_check, project_forward, ParabolicSolver, RhsCheck};
use crate::{Error, Result};

pub use config::{FloorPolicy, RunConfig, SolverKind};
pub use mms::{l2_errors, rate, MmsSolution};
pub use output::LogRow;
pub use scenarios::{find_scenario, scenario_catalog, Scenario, ScenarioSetup, SetupParams};

/// Largest matrix for which the dense inverse is examined.
pub const DENSE_INVERSE_LIMIT: usize = 3000;

/// Per-step controls shared by every step of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub cfl_a: f64,
    pub fixed_dt: Option<f64>,
    pub floor: FloorPolicy,
    pub max_halvings: usize,
    pub max_doublings: usize,
    pub limit_nodes_after_step: bool,
}

impl StepOptions {
    pub fn from_config(c: &RunConfig) -> Self {
        StepOptions {
            cfl_a: c.cfl_a,
            fixed_dt: c.fixed_dt,
            floor: c.floor,
            max_halvings: c.max_halvings,
            max_doublings: c.max_doublings,
            limit_nodes_after_step: c.limit_nodes_after_step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    /// The step actually taken (after any doublings).
    pub dt: f64,
    pub halvings: usize,
    pub doublings: usize,
    pub substeps: usize,
    pub momentum_iterations: usize,
    pub energy_iterations: usize,
    pub min_rho: f64,
    pub min_rho_e: f64,
    pub eps: f64,
}

/// Minimum of rho and rho e over all hyperbolic quadrature points.
pub fn sh_minima(space: &Space, u: &DgField) -> (f64, f64) {
    let el = &space.elem;
    let mut mr = f64::INFINITY;
    let mut me = f64::INFINITY;
    let n = el.n_sh();
    let mut vals = vec![0.0; 4 * n];
    for c in 0..u.n_cells {
        el.eval_points(&el.eval_sh_t, n, u.block(c), &mut vals);
        for q in 0..n {
            let s = crate::euler::ConsState { rho: vals[q], m: [vals[n + q], vals[2 * n + q]], energy: vals[3 * n + q] };
            mr = mr.min(s.rho);
            me = me.min(s.rho_e());
        }
    }
    (mr, me)
}

fn floor_for(space: &Space, u: &DgField, p: FloorPolicy) -> f64 {
    match p {
        FloorPolicy::Adaptive => floor_eps(space, u),
        FloorPolicy::Fixed(v) => v,
    }
}

fn hyperbolic_trial(op: &DgOperator, u: &DgField, t: f64, o: &StepOptions) -> Result<f64> {
    match o.fixed_dt {
        Some(dt) => Ok(dt),
        None => op.trial_timestep(u, t, o.cfl_a),
    }
}

/// One step of the splitting H(dt/2) P(dt) H(dt/2) starting from an
/// admissible U^n. When the viscous step yields a non-positive nodal
/// internal energy, or a cell average leaves G^eps, the whole step restarts
/// from U^n with dt doubled. Doubling past `t_end` is a budget failure.
pub fn strang_step(
    hyp: &DgOperator,
    par: &ParabolicSolver,
    un: &DgField,
    t: f64,
    dt: f64,
    t_end: Option<f64>,
    o: &StepOptions,
) -> Result<(DgField, StepReport)> {
    let sp = &*hyp.space;
    let eps = floor_for(sp, un, o.floor);
    let mut dt = dt;
    let mut rep = StepReport { eps, ..Default::default() };
    let trial1 = hyperbolic_trial(hyp, un, t, o)?;
    loop {
        let (uh, r1) = advance_hyperbolic(hyp, un, t, t + 0.5 * dt, trial1, eps, true, o.max_halvings)?;
        rep.halvings += r1.halvings;
        rep.substeps += r1.substeps;
        let outcome = match par.solve(&uh, t, dt) {
            Ok((up, pr)) => {
                if cell_average_admissible(sp, &up, eps).iter().all(|&b| b) {
                    Some((up, pr))
                } else {
                    None
                }
            }
            Err(Error::NegativeEnergy { .. }) => None,
            Err(e) => return Err(e),
        };
        let Some((mut up, pr)) = outcome else {
            if rep.doublings == o.max_doublings {
                return Err(Error::BudgetExceeded(format!("{} doublings at t = {t}", rep.doublings)));
            }
            if let Some(te) = t_end {
                if t + 2.0 * dt > te * (1.0 + 1e-12) {
                    return Err(Error::BudgetExceeded(format!(
                        "doubling dt = {dt} at t = {t} would overshoot the end time {te}"
                    )));
                }
            }
            dt *= 2.0;
            rep.doublings += 1;
            continue;
        };
        rep.momentum_iterations += pr.momentum_iterations;
        rep.energy_iterations += pr.energy_iterations;
        limit_field(sp, &mut up, eps, LimitSet::Hyperbolic)?;
        let tm = t + 0.5 * dt;
        let trial2 = hyperbolic_trial(hyp, &up, tm, o)?;
        let (mut un1, r2) = advance_hyperbolic(hyp, &up, tm, t + dt, trial2, eps, false, o.max_halvings)?;
        rep.halvings += r2.halvings;
        rep.substeps += r2.substeps;
        if o.limit_nodes_after_step {
            limit_field(sp, &mut un1, eps, LimitSet::HyperbolicAndNodes)?;
        }
        let (mr, me) = sh_minima(sp, &un1);
        rep.min_rho = mr;
        rep.min_rho_e = me;
        rep.dt = dt;
        return Ok((un1, rep));
    }
}

/// A run in progress.
pub struct Simulation {
    pub config: RunConfig,
    pub space: Arc<Space>,
    pub hyperbolic: DgOperator,
    pub parabolic: ParabolicSolver,
    pub state: DgField,
    pub t: f64,
    pub steps: usize,
    pub exact: Option<MmsSolution>,
    pub log: Vec<LogRow>,
    options: StepOptions,
}

impl fmt::Debug for Simulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulation")
            .field("scenario", &self.config.scenario)
            .field("t", &self.t)
            .field("steps", &self.steps)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub t_final: f64,
    pub halvings: usize,
    pub doublings: usize,
    pub min_rho: f64,
    pub min_rho_e: f64,
    /// False when `max_steps` stopped the run before the end time.
    pub reached_end: bool,
}

impl Simulation {
    pub fn new(config: RunConfig) -> Result<Self> {
        let sc = config.scenario()?;
        let setup = sc.setup(&SetupParams {
            dx: config.dx,
            gamma: config.gas.gamma,
            reynolds: config.gas.reynolds,
            lambda: config.gas.lambda,
        })?;
        let mesh = build_mesh(&setup.domain, config.dx)?;
        let space = Arc::new(Space::new(mesh, config.degree)?);
        let mut hyperbolic = DgOperator::new(space.clone(), config.gas.gamma, config.mass);
        let mut parabolic = ParabolicSolver::new(space.clone(), config.penalties, config.gas)?;
        parabolic.krylov = config.krylov;
        parabolic.direct = config.solver == SolverKind::Direct;
        if let Some(src) = &setup.forcing {
            hyperbolic = hyperbolic.with_forcing(src.clone());
            parabolic = parabolic.with_forcing(src.clone());
        }
        let init = setup.initial.clone();
        let mut state = DgField::project(&space, config.mass, |x| init(x));
        let eps = floor_for(&space, &state, config.floor);
        for c in 0..state.n_cells {
            if !in_g_eps(&state.average(&space, c), eps) {
                return Err(Error::NonAdmissible(format!("initial cell average in cell {c}")));
            }
        }
        limit_field(&space, &mut state, eps, LimitSet::Hyperbolic)?;
        let options = StepOptions::from_config(&config);
        let mut sim = Simulation {
            config,
            space,
            hyperbolic,
            parabolic,
            state,
            t: 0.0,
            steps: 0,
            exact: setup.exact,
            log: Vec::new(),
            options,
        };
        sim.push_log(0.0, &StepReport::default());
        Ok(sim)
    }

    pub fn options(&self) -> &StepOptions {
        &self.options
    }

    fn push_log(&mut self, dt: f64, r: &StepReport) {
        let (mr, me) = if self.steps == 0 { sh_minima(&self.space, &self.state) } else { (r.min_rho, r.min_rho_e) };
        self.log.push(LogRow {
            step: self.steps,
            t: self.t,
            dt,
            halvings: r.halvings,
            doublings: r.doublings,
            min_rho: mr,
            min_rho_e: me,
            totals: self.state.totals(&self.space),
        });
    }

    /// The step the next call to `step` would try, clipped to the end time.
    pub fn desired_dt(&self) -> Result<f64> {
        let dt = match self.options.fixed_dt {
            Some(dt) => dt,
            None => self.hyperbolic.trial_timestep(&self.state, self.t, self.options.cfl_a)?,
        };
        let rem = self.config.end_time - self.t;
        // absorb round-off so the last step lands on the end time
        Ok(if dt >= rem * (1.0 - 1e-10) { rem } else { dt })
    }

    /// Take one step of size `dt` (it may end up doubled).
    pub fn step_with(&mut self, dt: f64) -> Result<StepReport> {
        let (u, r) = strang_step(
            &self.hyperbolic,
            &self.parabolic,
            &self.state,
            self.t,
            dt,
            Some(self.config.end_time),
            &self.options,
        )
        .map_err(|e| Error::Failed { t: self.t, step: self.steps + 1, source: Box::new(e) })?;
        if !u.is_finite() {
            return Err(Error::Failed {
                t: self.t,
                step: self.steps + 1,
                source: Box::new(Error::NonAdmissible("non-finite coefficients".into())),
            });
        }
        let rem = self.config.end_time - self.t;
        self.t = if (r.dt - rem).abs() <= 1e-12 * self.config.end_time.max(1.0) { self.config.end_time } else { self.t + r.dt };
        self.state = u;
        self.steps += 1;
        self.push_log(r.dt, &r);
        Ok(r)
    }

    pub fn step(&mut self) -> Result<StepReport> {
        if self.finished() {
            return Err(Error::Config(format!("already at the end time {}", self.config.end_time)));
        }
        let dt = self.desired_dt()?;
        self.step_with(dt)
    }

    pub fn finished(&self) -> bool {
        self.t >= self.config.end_time
    }

    /// March to the end time, writing outputs if an output directory is set.
    pub fn run(&mut self) -> Result<RunSummary> {
        let mut sum = RunSummary {
            steps: 0,
            t_final: self.t,
            halvings: 0,
            doublings: 0,
            min_rho: f64::INFINITY,
            min_rho_e: f64::INFINITY,
            reached_end: true,
        };
        let mut next_time_out = self.config.every_time;
        while !self.finished() {
            if let Some(m) = self.config.max_steps {
                if self.steps >= m {
                    sum.reached_end = false;
                    break;
                }
            }
            let r = self.step()?;
            sum.steps += 1;
            sum.halvings += r.halvings;
            sum.doublings += r.doublings;
            sum.min_rho = sum.min_rho.min(r.min_rho);
            sum.min_rho_e = sum.min_rho_e.min(r.min_rho_e);
            let mut snap = self.config.every_steps > 0 && self.steps % self.config.every_steps == 0;
            if let (Some(every), Some(next)) = (self.config.every_time, next_time_out) {
                if self.t >= next {
                    snap = true;
                    next_time_out = Some(((self.t / every).floor() + 1.0) * every);
                }
            }
            if snap {
                self.write_snapshot(&format!("snap_{:06}", self.steps))?;
            }
        }
        sum.t_final = self.t;
        self.write_final()?;
        Ok(sum)
    }

    pub fn write_snapshot(&self, stem: &str) -> Result<()> {
        if let Some(dir) = &self.config.output_dir {
            output::write_snapshot(dir, stem, &self.space, &self.state, self.config.gas.gamma)?;
        }
        Ok(())
    }

    /// Final state plus the step log.
    pub fn write_final(&self) -> Result<()> {
        if let Some(dir) = &self.config.output_dir {
            self.write_snapshot("final")?;
            std::fs::write(dir.join("log.csv"), output::log_csv(&self.log))?;
        }
        Ok(())
    }

    /// L^2_h errors against the manufactured solution at the current time.
    pub fn mms_errors(&self) -> Option<[f64; 3]> {
        let ex = self.exact?;
        let t = self.t;
        Some(l2_errors(&self.space, &self.state, |x| ex.state(x, t)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub dx: f64,
    pub steps: usize,
    /// Density, momentum, total energy.
    pub errors: [f64; 3],
    pub rates: Option<[f64; 3]>,
}

/// Errors at the end time for each mesh of the manufactured-solution
/// problem, with rates between consecutive meshes.
pub fn mms_convergence(base: &RunConfig, meshes: &[f64]) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &dx in meshes {
        let mut c = base.clone();
        c.dx = dx;
        c.output_dir = None;
        let mut sim = Simulation::new(c)?;
        let s = sim.run()?;
        let errors = sim
            .mms_errors()
            .ok_or_else(|| Error::Config(format!("scenario '{}' has no exact solution", base.scenario)))?;
        let rates = rows.last().map(|p| [0, 1, 2].map(|i| rate(p.errors[i], errors[i])));
        rows.push(ConvergenceRow { dx, steps: s.steps, errors, rates });
    }
    Ok(rows)
}

/// L^2_h error of the projected and limited initial data (no time steps).
pub fn initial_projection_errors(base: &RunConfig, dx: f64) -> Result<[f64; 3]> {
    let mut c = base.clone();
    c.dx = dx;
    c.output_dir = None;
    let sim = Simulation::new(c)?;
    sim.mms_errors().ok_or_else(|| Error::Config("scenario has no exact solution".into()))
}

/// Energy-system diagnostics at the initial state with the first step size.
#[derive(Debug, Clone)]
pub struct MatrixReport {
    pub n: usize,
    pub dt: f64,
    pub monotonicity: MonotonicityReport,
    pub rhs: RhsCheck,
}

impl fmt::Display for MatrixReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.monotonicity.sign_check;
        writeln!(f, "energy system: n = {}, dt = {:e}", self.n, self.dt)?;
        writeln!(f, "  diagonal positive:        {}", s.diag_positive)?;
        writeln!(f, "  off-diagonals <= 0:       {} (max {:e})", s.offdiag_nonpositive, self.monotonicity.max_offdiag)?;
        writeln!(f, "  row sums >= 0:            {} (min {:e})", s.rowsums_nonnegative, self.monotonicity.min_rowsum)?;
        match self.monotonicity.inverse_min {
            Some(m) => writeln!(f, "  min entry of inverse:     {m:e}")?,
            None => writeln!(f, "  min entry of inverse:     not computed (n > {DENSE_INVERSE_LIMIT})")?,
        }
        writeln!(f, "  rhs positive:             {} (min {:e})", self.rhs.passes, self.rhs.min_entry)?;
        write!(f, "  verdict: {}", self.monotonicity.verdict())
    }
}

pub fn verify_matrix(config: &RunConfig) -> Result<MatrixReport> {
    let sim = Simulation::new(config.clone())?;
    let dt = sim.desired_dt()?;
    let p = project_forward(&sim.space, &sim.state)?;
    let sys = sim.parabolic.energy_system(&p, &p.u, sim.t, dt);
    let mut monotonicity = mmatrix_sign_check(&sys.matrix);
    monotonicity.inverse_min = if sys.matrix.n <= DENSE_INVERSE_LIMIT {
        Some(inverse_nonneg_check(&sys.matrix, DENSE_INVERSE_LIMIT)?)
    } else {
        None
    };
    Ok(MatrixReport { n: sys.matrix.n, dt, monotonicity, rhs: energy_rhs_nonneg_check(&sys.rhs) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler::ConsState;

    fn periodic(k: usize) -> RunConfig {
        let mut c = RunConfig::preset_with_degree("periodic-smooth", k).unwrap();
        c.dx = 0.25;
        c.end_time = 1.0;
        c
    }

    #[test]
    fn uniform_state_is_a_fixed_point() {
        let mut sim = Simulation::new(periodic(2)).unwrap();
        let u0 = ConsState::from_primitive(1.2, [0.3, -0.1], 0.9, 1.4);
        sim.state = DgField::interpolate(&sim.space, |_| u0);
        let before = sim.state.clone();
        let r = sim.step().unwrap();
        assert_eq!((r.halvings, r.doublings), (0, 0));
        for (a, b) in before.data.iter().zip(&sim.state.data) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn totals_conserved_over_steps() {
        for k in 1..=3 {
            let mut sim = Simulation::new(periodic(k)).unwrap();
            let t0 = sim.state.totals(&sim.space);
            for _ in 0..5 {
                sim.step().unwrap();
            }
            let t1 = sim.state.totals(&sim.space);
            for v in 0..4 {
                assert!((t1[v] - t0[v]).abs() <= 1e-11 * t0[v].abs().max(1.0), "k={k} v={v}");
            }
        }
    }

    #[test]
    fn zero_end_time_round_trips() {
        let mut c = periodic(1);
        c.end_time = 0.0;
        let mut sim = Simulation::new(c).unwrap();
        let before = sim.state.clone();
        let s = sim.run().unwrap();
        assert_eq!(s.steps, 0);
        assert_eq!(before, sim.state);
    }

    #[test]
    fn last_step_lands_on_end_time() {
        let mut c = periodic(1);
        c.end_time = 0.0123;
        let mut sim = Simulation::new(c).unwrap();
        sim.run().unwrap();
        assert_eq!(sim.t, 0.0123);
        assert_eq!(sim.log.len(), sim.steps + 1);
    }

    #[test]
    fn runs_are_deterministic() {
        let mut c = RunConfig::preset("sedov-desk").unwrap();
        c.dx = 1.1 / 20.0;
        c.max_steps = Some(15);
        let mut a = Simulation::new(c.clone()).unwrap();
        let mut b = Simulation::new(c).unwrap();
        a.run().unwrap();
        b.run().unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn doubling_past_end_is_budget_error() {
        // a forced failure: an absurd floor makes every viscous step
        // non-admissible
        let mut c = periodic(1);
        c.floor = FloorPolicy::Fixed(1e6);
        let sim = Simulation::new(c);
        assert!(sim.is_err());
    }
}
