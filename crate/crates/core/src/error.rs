use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("subcarrier index {k} out of range for {n_subcarriers} subcarriers")]
    SubcarrierIndex { k: usize, n_subcarriers: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("metric undefined: reference has zero energy")]
    UndefinedMetric,

    #[error("correlation matrix is singular; use a ridge delta > 0 ({0})")]
    Singular(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("dataset split: {0}")]
    Split(String),

    #[error("odd number of bits ({0}) for QPSK")]
    OddBitCount(usize),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
