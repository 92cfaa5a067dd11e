use thiserror::Error;

#[derive(Error, Debug)]
pub enum TrError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mode index {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid cores: {0}")]
    InvalidCores(String),

    #[error("size budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("linear solve failed: {0}")]
    SolveFailed(String),

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad file format: {0}")]
    BadFormat(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TrError>;
