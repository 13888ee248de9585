use chanpred_cpcgan::CpcganError;
use thiserror::Error;

/// Command failure, split by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid or inconsistent configuration, including artifacts that do
    /// not fit the dataset they are applied to.
    #[error("config error: {0}")]
    Config(String),

    /// I/O failure, malformed artifacts or a diverged run.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<chanpred_core::Error> for CliError {
    fn from(e: chanpred_core::Error) -> Self {
        use chanpred_core::Error as E;
        match e {
            E::Config(_) | E::Split(_) | E::Shape { .. } | E::SubcarrierIndex { .. } => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<CpcganError> for CliError {
    fn from(e: CpcganError) -> Self {
        match e {
            CpcganError::Config(_) => CliError::Config(e.to_string()),
            CpcganError::Core(inner) => inner.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
