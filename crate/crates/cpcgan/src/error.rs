use thiserror::Error;

#[derive(Debug, Error)]
pub enum CpcganError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite {what} at batch {counter}; training aborted")]
    NonFinite { counter: u64, what: &'static str },

    #[error("training ended before the first scoring point (interval {interval} batches, ran {ran})")]
    NoScoredCheckpoint { interval: u64, ran: u64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Tensor(#[from] chanpred_tensor::TensorError),

    #[error(transparent)]
    Core(#[from] chanpred_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CpcganError>;
