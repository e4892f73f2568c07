//! Run configuration: a sectioned TOML file whose unset keys fall back to
//! the scenario's preset.
//!
//! ```toml
//! [run]
//! scenario = "sedov-desk"
//! degree = 2
//! end_time = 0.2
//!
//! [gas]
//! reynolds = 200
//!
//! [output]
//! dir = "out/sedov"
//! every_steps = 100
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dg::MassMatrix;
use crate::euler::GasParams;
use crate::linalg::KrylovOptions;
use crate::parabolic::{EnergyVariant, IpdgParams};
use crate::{Error, Result};

use super::scenarios::{find_scenario, Scenario};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub run: RunSection,
    #[serde(default)]
    pub gas: GasSection,
    #[serde(default)]
    pub penalties: PenaltySection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub budgets: BudgetSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub convergence: ConvergenceSection,
}

impl ConfigFile {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(p: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        Self::from_toml_str(&s)
    }

    /// A file naming only the scenario.
    pub fn for_scenario(name: &str) -> Self {
        ConfigFile { run: RunSection { scenario: name.to_string(), ..Default::default() }, ..Default::default() }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub scenario: String,
    pub degree: Option<usize>,
    pub dx: Option<f64>,
    pub end_time: Option<f64>,
    pub cfl_a: Option<f64>,
    /// Use this step instead of the CFL-based trial step.
    pub fixed_dt: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSection {
    pub gamma: Option<f64>,
    pub prandtl: Option<f64>,
    pub reynolds: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySection {
    pub sigma_int: Option<f64>,
    pub sigma_bdy: Option<f64>,
    pub sigma_tilde: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Snapshot every n steps (0: final state only).
    #[serde(default)]
    pub every_steps: usize,
    /// Snapshot whenever simulated time crosses a multiple of this.
    pub every_time: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
    #[serde(default = "default_doublings")]
    pub max_doublings: usize,
}

fn default_halvings() -> usize {
    40
}

fn default_doublings() -> usize {
    16
}

impl Default for BudgetSection {
    fn default() -> Self {
        BudgetSection { max_halvings: default_halvings(), max_doublings: default_doublings() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Krylov,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MassKind {
    #[default]
    Consistent,
    Lumped,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    #[serde(default)]
    pub mass: MassKind,
    #[serde(default)]
    pub solver: SolverKind,
    pub krylov_tol: Option<f64>,
    /// Fixed positivity floor; by default it is recomputed every step.
    pub floor: Option<f64>,
    /// Also limit on the Gauss-Lobatto nodes at the end of every step.
    #[serde(default)]
    pub limit_nodes_after_step: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    #[serde(default)]
    pub meshes: Vec<f64>,
}

/// How the positivity floor epsilon is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FloorPolicy {
    /// min(1e-13, min cell average of rho and rho e), every step.
    Adaptive,
    Fixed(f64),
}

/// Fully resolved run parameters.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: String,
    pub degree: usize,
    pub dx: f64,
    pub gas: GasParams,
    pub cfl_a: f64,
    pub end_time: f64,
    pub fixed_dt: Option<f64>,
    pub max_steps: Option<usize>,
    pub penalties: IpdgParams,
    pub output_dir: Option<PathBuf>,
    pub every_steps: usize,
    pub every_time: Option<f64>,
    pub floor: FloorPolicy,
    pub max_halvings: usize,
    pub max_doublings: usize,
    pub mass: MassMatrix,
    pub solver: SolverKind,
    pub krylov: KrylovOptions,
    pub limit_nodes_after_step: bool,
    pub convergence_meshes: Vec<f64>,
}

impl RunConfig {
    /// The scenario's preset at its default degree.
    pub fn preset(name: &str) -> Result<Self> {
        let sc = find_scenario(name)?;
        Self::preset_with_degree(name, sc.default_degree)
    }

    pub fn preset_with_degree(name: &str, degree: usize) -> Result<Self> {
        let file = ConfigFile {
            run: RunSection { scenario: name.to_string(), degree: Some(degree), ..Default::default() },
            ..Default::default()
        };
        Self::resolve(&file)
    }

    pub fn scenario(&self) -> Result<&'static Scenario> {
        find_scenario(&self.scenario)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Self::resolve(&ConfigFile::from_toml_str(s)?)
    }

    pub fn from_path(p: &Path) -> Result<Self> {
        Self::resolve(&ConfigFile::from_path(p)?)
    }

    pub fn resolve(f: &ConfigFile) -> Result<Self> {
        let sc = find_scenario(&f.run.scenario)?;
        let degree = f.run.degree.unwrap_or(sc.default_degree);
        if !(1..=3).contains(&degree) {
            return Err(Error::UnsupportedDegree(degree));
        }
        let pre = sc.preset(degree);
        let gas = GasParams::new(
            f.gas.gamma.unwrap_or(1.4),
            f.gas.prandtl.unwrap_or(pre.prandtl),
            f.gas.reynolds.unwrap_or(pre.reynolds),
        )?;
        let mut penalties = IpdgParams::defaults(degree);
        if let Some(v) = f.penalties.sigma_int {
            penalties.sigma_int = v;
        }
        if let Some(v) = f.penalties.sigma_bdy {
            penalties.sigma_bdy = v;
        }
        if let Some(v) = f.penalties.sigma_tilde {
            if degree > 1 {
                return Err(Error::Config("sigma_tilde only applies to degree 1".into()));
            }
            penalties.sigma_tilde = v;
        }
        penalties.validate(degree)?;
        debug_assert!(degree == 1 || penalties.energy == EnergyVariant::Sem);
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let dx = positive("dx", f.run.dx.unwrap_or(pre.dx))?;
        let cfl_a = positive("cfl_a", f.run.cfl_a.unwrap_or(pre.cfl_a))?;
        let end_time = f.run.end_time.unwrap_or(pre.end_time);
        if !(end_time >= 0.0) {
            return Err(Error::Config(format!("end_time must be nonnegative, got {end_time}")));
        }
        let fixed_dt = match f.run.fixed_dt.or(pre.fixed_dt) {
            Some(v) => Some(positive("fixed_dt", v)?),
            None => None,
        };
        let mut krylov = KrylovOptions::default();
        if let Some(t) = f.numerics.krylov_tol {
            krylov.tol = positive("krylov_tol", t)?;
        }
        let floor = match f.numerics.floor {
            Some(v) => FloorPolicy::Fixed(positive("floor", v)?),
            None => FloorPolicy::Adaptive,
        };
        if let Some(v) = f.output.every_time {
            positive("every_time", v)?;
        }
        for &m in &f.convergence.meshes {
            positive("convergence mesh", m)?;
        }
        Ok(RunConfig {
            scenario: sc.name.to_string(),
            degree,
            dx,
            gas,
            cfl_a,
            end_time,
            fixed_dt,
            max_steps: f.run.max_steps,
            penalties,
            output_dir: f.output.dir.clone(),
            every_steps: f.output.every_steps,
            every_time: f.output.every_time,
            floor,
            max_halvings: f.budgets.max_halvings,
            max_doublings: f.budgets.max_doublings,
            mass: match f.numerics.mass {
                MassKind::Consistent => MassMatrix::Consistent,
                MassKind::Lumped => MassMatrix::Lumped,
            },
            solver: f.numerics.solver,
            krylov,
            limit_nodes_after_step: f.numerics.limit_nodes_after_step,
            convergence_meshes: f.convergence.meshes.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_preset() {
        let c = RunConfig::from_toml_str("[run]\nscenario = \"lax\"\n").unwrap();
        assert_eq!(c.degree, 1);
        assert_eq!(c.cfl_a, 0.125);
        assert_eq!(c.end_time, 1.3);
        assert_eq!(c.gas.reynolds, 1000.0);
        assert_eq!(c.penalties.sigma_bdy, 4.0);
        assert_eq!(c.floor, FloorPolicy::Adaptive);
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::from_toml_str(
            "[run]\nscenario = \"sedov-desk\"\ndegree = 2\nend_time = 0.05\n[gas]\nreynolds = 1000\n[numerics]\nsolver = \"direct\"\n",
        )
        .unwrap();
        assert_eq!(c.degree, 2);
        assert_eq!(c.cfl_a, 1.0);
        assert_eq!(c.end_time, 0.05);
        assert_eq!(c.gas.reynolds, 1000.0);
        assert_eq!(c.solver, SolverKind::Direct);
        assert_eq!(c.penalties.energy, EnergyVariant::Sem);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let e = RunConfig::from_toml_str("[run]\nscenario = \"lax\"\ncfl = 0.3\n").unwrap_err();
        assert!(e.is_config());
        let e = RunConfig::from_toml_str("[run]\nscenario = \"lax\"\n[extra]\nx = 1\n").unwrap_err();
        assert!(e.is_config());
    }

    #[test]
    fn bad_values_are_config_errors() {
        for s in [
            "[run]\nscenario = \"lax\"\ndegree = 4\n",
            "[run]\nscenario = \"lax\"\ndx = -1.0\n",
            "[run]\nscenario = \"sedov\"\ndegree = 2\n[penalties]\nsigma_tilde = 2.0\n",
            "[run]\nscenario = \"nowhere\"\n",
        ] {
            assert!(RunConfig::from_toml_str(s).unwrap_err().is_config(), "{s}");
        }
    }

    #[test]
    fn mms_preset_has_unit_lambda() {
        let c = RunConfig::preset("mms").unwrap();
        assert!((c.gas.lambda - 1.0).abs() < 1e-15);
        assert_eq!(c.fixed_dt, Some(6.25e-6));
    }
}
