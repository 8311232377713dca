use thiserror::Error;

#[derive(Debug, Error)]
pub enum LleError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("disconnected graph: {0}")]
    Disconnected(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl LleError {
    /// True for errors caused by bad arguments rather than by the data or the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(self, LleError::InvalidArgument(_) | LleError::ShapeMismatch(_))
    }
}

pub type Result<T> = std::result::Result<T, LleError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LleError::InvalidArgument(msg.into()))
}

pub(crate) fn shape<T>(msg: impl Into<String>) -> Result<T> {
    Err(LleError::ShapeMismatch(msg.into()))
}
