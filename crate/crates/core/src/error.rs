use thiserror::Error;

/// Errors produced by the simulator core.
#[derive(Debug, Error)]
pub enum FmtlError {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    /// Two parameter layouts cannot be combined element-wise.
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("task mismatch: {0}")]
    TaskMismatch(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FmtlError>;

impl FmtlError {
    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        FmtlError::Shape {
            context,
            expected,
            actual,
        }
    }
}
