use snowkit_core::{CorruptionError, EvalError, IoError, StopError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or settings; exit status 1.
    #[error("{0}")]
    Config(String),
    /// Unreadable, malformed or inconsistent inputs, or failed writes; exit status 2.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::InvalidTiling(_) => CliError::Config(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<CorruptionError> for CliError {
    fn from(e: CorruptionError) -> Self {
        match e {
            CorruptionError::InvalidSpec(_) => CliError::Config(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<StopError> for CliError {
    fn from(e: StopError) -> Self {
        match e {
            StopError::InvalidPolicy(_) | StopError::InvalidWindow { .. } => CliError::Config(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
