use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: a point outside the domain, a bad zero, mismatched dimensions.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Root polishing did not reach the residual target.
    #[error("root polish failed at {root}: residual {residual:e}")]
    RootPolish { root: Complex64, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("path tracking failed on segment {segment}: {reason}")]
    Tracking { segment: usize, reason: String },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
