use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("{op}: output dimension would be non-positive (input {input:?})")]
    EmptyOutput { op: &'static str, input: Vec<usize> },

    #[error("conv_transpose: output size {requested:?} is not reachable from input {input:?} with stride {stride:?}, pad {pad:?}")]
    InvalidOutputSize {
        input: (usize, usize),
        requested: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
    },

    #[error("batch_norm in train mode needs a batch of at least 2, got {0}")]
    BatchTooSmall(usize),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("backward already ran on this tape")]
    BackwardTwice,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;
