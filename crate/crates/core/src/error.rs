use std::path::PathBuf;

/// Errors raised by the solvers, configuration loading and output writers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed configuration: {0}")]
    MalformedConfig(String),

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("singular elastic modulus: {0}")]
    SingularModulus(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("size mismatch: expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("linear solve failed: {0}")]
    LinearSolver(String),

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("phase step too large: {0}; reduce the slow time step")]
    StepSize(String),

    #[error("CFL violation: time step {dt:.3e} s exceeds stability limit {limit:.3e} s")]
    Cfl { dt: f64, limit: f64 },

    #[error("wave solver diverged at fast step {step}")]
    Divergence { step: usize },

    #[error("no steady state after {cycles} cycles (residual history: {history:?})")]
    NoSteadyState { cycles: usize, history: Vec<f64> },

    #[error("incomplete period: expected {expected} samples, got {got}")]
    IncompletePeriod { expected: usize, got: usize },

    #[error("configurations differ outside the wave section: {0}")]
    MismatchedConfigs(String),

    #[error("slow step {step}: {source}")]
    AtSlowStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn validation(field: &str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the user's configuration rather than by a solver.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::MalformedConfig(_)
            | Error::Validation { .. }
            | Error::SingularModulus(_)
            | Error::MismatchedConfigs(_) => true,
            Error::AtSlowStep { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
