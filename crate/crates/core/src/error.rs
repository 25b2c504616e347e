use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("undefined quantity: {0}")]
    UndefinedQuantity(String),

    #[error("estimation failed for key {key}: {reason}")]
    Estimation { key: u32, reason: String },

    #[error("counter spec mismatch: {0}")]
    CounterMismatch(String),

    #[error("resource budget exceeded: {0}")]
    ResourceBudget(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
