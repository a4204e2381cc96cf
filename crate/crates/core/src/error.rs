use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("unsupported capability: {0}")]
    UnsupportedCapability(String),

    #[error("divergence undefined: {0}")]
    DivergenceUndefined(String),

    #[error("sampling budget exhausted after {trials} trials (round {round})")]
    BudgetExhausted { trials: usize, round: usize },

    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Configuration(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::InternalInconsistency(msg.into())
    }
}
