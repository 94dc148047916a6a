use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("covariance matrix of size {n} is not positive definite at working precision")]
    NotPositiveDefinite { n: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("step rejected at t = {time}: local error estimate {estimate:e} exceeds budget {budget:e}")]
    StepRejected { time: f64, estimate: f64, budget: f64 },

    #[error("no bracket found for target {target} after {expansions} expansions")]
    BracketNotFound { target: f64, expansions: usize },

    #[error("Newton iteration failed: residual {residual:e} after {iterations} iterations")]
    NewtonDiverged { residual: f64, iterations: usize },

    #[error("epsilon {epsilon} is not a usable multiple of the grid step {dt}")]
    GridAlignment { epsilon: f64, dt: f64 },

    #[error("map is not invertible at the query point: {0}")]
    NotInvertible(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
