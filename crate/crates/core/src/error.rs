use thiserror::Error;

/// Errors produced by every module of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated its documented range or precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A 1-indexed timestep was outside `1..=steps`.
    #[error("timestep {t} out of range 1..={steps}")]
    Index { t: usize, steps: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    /// Input carried no usable signal (all-background image, zero concentration).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient data: need at least {need} rows, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Structurally well-formed data that failed a semantic check.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Malformed binary or text file.
    #[error("bad format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn shape(expected: usize, got: usize) -> Self {
        Error::Shape { expected, got }
    }
}
