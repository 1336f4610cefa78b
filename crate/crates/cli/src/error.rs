use std::path::PathBuf;

use nrbo_core::Error as CoreError;

use crate::external::EvalError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("black-box error: {0}")]
    Protocol(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Protocol(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io { .. } | CliError::Internal(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Domain(_) | CoreError::GridBudget { .. } => CliError::Config(e.to_string()),
            CoreError::Protocol(_) | CoreError::Value(_) => CliError::Protocol(e.to_string()),
            CoreError::Numerical(_) => CliError::Numerical(e.to_string()),
            CoreError::State(_) | CoreError::UndefinedScore => CliError::Internal(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Protocol(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
