use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported quadrature order {0}")]
    UnsupportedOrder(usize),
    #[error("unsupported polynomial degree {0} (expected 1, 2 or 3)")]
    UnsupportedDegree(usize),

    #[error("geometry does not snap to the dx lattice: {0}")]
    Snap(String),
    #[error("boundary coverage error: {0}")]
    Coverage(String),

    #[error("state not admissible: {0}")]
    NonAdmissible(String),
    #[error("cell average not admissible in cell {cell}")]
    AverageNotAdmissible { cell: usize },
    #[error("halving budget exhausted at t = {t} (dt = {dt})")]
    MaxHalvings { t: f64, dt: f64 },

    #[error("non-positive density {value} at cell {cell}, node {node}")]
    NonPositiveDensity { cell: usize, node: usize, value: f64 },
    #[error("negative internal energy {value} at cell {cell}, node {node}")]
    NegativeEnergy { cell: usize, node: usize, value: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("singular matrix (pivot column {0})")]
    SingularMatrix(usize),
    #[error("krylov solver did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix of dimension {n} exceeds limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("time-step budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),

    #[error("at step {step}, t = {t}: {source}")]
    Failed { t: f64, step: usize, source: Box<Error> },
}

impl Error {
    /// Configuration problems, as opposed to numerical failures.
    pub fn is_config(&self) -> bool {
        if let Error::Failed { source, .. } = self {
            return source.is_config();
        }
        matches!(
            self,
            Error::Config(_)
                | Error::Snap(_)
                | Error::Coverage(_)
                | Error::UnsupportedDegree(_)
                | Error::UnsupportedOrder(_)
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
