use thiserror::Error;

/// Errors raised by the solvers and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate conditional at xi-index {index}: marginal {marginal:e} below positivity floor")]
    DegenerateConditional { index: usize, marginal: f64 },

    #[error("solver failure: {message} (residual {residual:e})")]
    SolverFailure { message: String, residual: f64 },

    #[error("fixed-point iteration did not converge after {} iterations (last residual {:e})",
        .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { history: Vec<f64> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
