use std::path::PathBuf;

use remsim_core::Error as CoreError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot read configuration {path}: {reason}")]
    Config { path: PathBuf, reason: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Config { .. } => 2,
            CliError::Validation(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn config(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        CliError::Config {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// Failure reading an input data file: unreadable or malformed files are
    /// configuration errors, anything the core rejects after parsing is validation.
    pub fn input(path: impl Into<PathBuf>, e: CoreError) -> Self {
        match e {
            CoreError::Io(_) | CoreError::Json(_) | CoreError::Parse(_) => CliError::config(path, e),
            other => other.into(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Fit(_) | CoreError::NonConvergence { .. } => CliError::Numeric(e.to_string()),
            CoreError::Io(io) => CliError::Io(io),
            other => CliError::Validation(other.to_string()),
        }
    }
}
