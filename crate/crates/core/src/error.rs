use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input row. `row` is the 1-based data row (header excluded).
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// Dataset invariant violated.
    #[error("{0}")]
    Validation(String),

    /// Feature or configuration settings do not match the data.
    #[error("invalid balance spec: {0}")]
    Spec(String),

    /// Strata, fits and memberships are inconsistent with each other.
    #[error("structural error: {0}")]
    Structural(String),

    /// A regression could not be fitted.
    #[error("fit error: {0}")]
    Fit(String),

    /// No weights satisfy the balance constraints.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Every tolerance candidate failed on most resamples.
    #[error("tuning failure: {0}")]
    Tuning(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
