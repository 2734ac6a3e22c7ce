use std::path::Path;

use funcnet_core::Error;

/// Failures of the command line tool, each mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(#[from] Error),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            // Bad values that reach the core are input errors, not numerical ones.
            CliError::Numerical(Error::InvalidParameter(_) | Error::InvalidGrid(_) | Error::GridTooSmall { .. } | Error::Shape(_)) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}
