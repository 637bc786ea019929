use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum HsdError {
    /// Invalid configuration values or combinations.
    #[error("configuration error: {0}")]
    Config(String),
    /// A call violated an operation precondition (bad shape, bad index, stepping a finished episode).
    #[error("usage error: {0}")]
    Usage(String),
    /// A buffer or dataset does not hold enough entries yet.
    #[error("not ready: have {have}, need {need}")]
    NotReady { have: usize, need: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HsdError>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(HsdError::Usage(msg.into()))
}
