use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite state on path {path} at step {step}")]
    NonFinite { path: usize, step: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("Gibbs density is not integrable: quadratic coefficient {quadratic} <= 0")]
    NonIntegrable { quadratic: f64 },

    #[error("range error: {0}")]
    Range(String),

    #[error("degenerate regressor: sum of squared states {sum_sq:e} is below {threshold:e}")]
    DegenerateRegressor { sum_sq: f64, threshold: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("policy iteration aborted at iteration {iteration}: {reason}")]
    Refit { iteration: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
