use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The drift has an eigenvalue with real part ≥ −tol, so the Lyapunov
    /// equation has no unique solution.
    #[error("no unique steady state: drift eigenvalue {eigenvalue} is not in the open left half-plane")]
    NoUniqueSteadyState { eigenvalue: Complex64 },

    #[error("theorem hypothesis violated: {0}")]
    TheoremHypothesisViolated(String),

    #[error("invalid integration policy: {0}")]
    InvalidPolicy(String),

    #[error("integration diverged at t = {t} (|V| = {norm:e})")]
    UnstableIntegration { t: f64, norm: f64 },

    #[error("stage {stage} did not converge within {duration}: residual {residual:e}")]
    StageTimeout {
        stage: usize,
        duration: f64,
        residual: f64,
    },

    #[error("decomposition violation: {0}")]
    DecompositionViolation(String),

    #[error("no interior optimum for gamma = {0} (requires gamma > 0)")]
    NoInteriorOptimum(f64),

    #[error("out of model: {0}")]
    OutOfModel(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
