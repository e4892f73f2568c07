use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ppcns::driver::config::ConfigFile;
use ppcns::driver::{mms_convergence, scenario_catalog, verify_matrix, RunConfig, Simulation};
use ppcns::Error;

/// Positivity-preserving compressible Navier-Stokes solver.
#[derive(Debug, Parser)]
#[command(name = "ppcns", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation to its end time.
    Run(Source),
    /// Manufactured-solution errors and rates over a mesh sequence.
    Convergence {
        #[command(flatten)]
        source: Source,
        /// Mesh sizes, coarsest first (overrides [convergence] meshes).
        #[arg(long, value_delimiter = ',')]
        meshes: Vec<f64>,
    },
    /// Check the M-matrix property of the first viscous energy system.
    VerifyMatrix(Source),
    /// Print the built-in scenarios.
    ListScenarios,
}

/// A configuration file, a scenario name, or both; flags win over the file.
#[derive(Debug, Args)]
struct Source {
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    end_time: Option<f64>,
    #[arg(long)]
    fixed_dt: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    reynolds: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Source {
    fn file(&self) -> Result<ConfigFile, Error> {
        let mut f = match (&self.config, &self.scenario) {
            (Some(p), _) => ConfigFile::from_path(p)?,
            (None, Some(s)) => ConfigFile::for_scenario(s),
            (None, None) => return Err(Error::Config("give a configuration file or --scenario".into())),
        };
        if let Some(s) = &self.scenario {
            f.run.scenario = s.clone();
        }
        let r = &mut f.run;
        r.degree = self.degree.or(r.degree);
        r.dx = self.dx.or(r.dx);
        r.end_time = self.end_time.or(r.end_time);
        r.fixed_dt = self.fixed_dt.or(r.fixed_dt);
        r.max_steps = self.max_steps.or(r.max_steps);
        f.gas.reynolds = self.reynolds.or(f.gas.reynolds);
        if self.output.is_some() {
            f.output.dir = self.output.clone();
        }
        Ok(f)
    }

    fn resolve(&self) -> Result<RunConfig, Error> {
        RunConfig::resolve(&self.file()?)
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::ListScenarios => {
            for s in scenario_catalog() {
                println!("{:<24} {}D  Q{}  {}", s.name, s.dim, s.default_degree, s.summary);
            }
        }
        Command::Run(src) => {
            let cfg = src.resolve()?;
            eprintln!(
                "running {} with Q{} dx = {} to t = {}",
                cfg.scenario, cfg.degree, cfg.dx, cfg.end_time
            );
            let mut sim = Simulation::new(cfg)?;
            let s = sim.run()?;
            println!(
                "steps {}  t {}  halvings {}  doublings {}  min rho {:e}  min rho e {:e}",
                s.steps, s.t_final, s.halvings, s.doublings, s.min_rho, s.min_rho_e
            );
            if !s.reached_end {
                println!("stopped by max_steps before the end time");
            }
            if let Some(e) = sim.mms_errors() {
                println!("L2 errors  rho {:e}  m {:e}  E {:e}", e[0], e[1], e[2]);
            }
        }
        Command::Convergence { source, meshes } => {
            let cfg = source.resolve()?;
            let meshes = if meshes.is_empty() { cfg.convergence_meshes.clone() } else { meshes };
            if meshes.len() < 2 {
                return Err(Error::Config("need at least two meshes".into()));
            }
            if meshes.iter().any(|&m| !(m > 0.0)) {
                return Err(Error::Config("mesh sizes must be positive".into()));
            }
            println!("dx,steps,err_rho,rate_rho,err_m,rate_m,err_E,rate_E");
            for r in mms_convergence(&cfg, &meshes)? {
                let rt = |i: usize| r.rates.map(|x| format!("{:.4}", x[i])).unwrap_or_else(|| "-".into());
                println!(
                    "{},{},{:.6e},{},{:.6e},{},{:.6e},{}",
                    r.dx, r.steps, r.errors[0], rt(0), r.errors[1], rt(1), r.errors[2], rt(2)
                );
            }
        }
        Command::VerifyMatrix(src) => {
            let rep = verify_matrix(&src.resolve()?)?;
            println!("{rep}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors count as configuration errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
