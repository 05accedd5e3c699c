use aggdiff_core::Error;

use crate::config::ConfigError;

/// Everything a command can fail with, mapped onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(Error),
    #[error("selftest failed: {0}")]
    Selftest(String),
    #[error("observed dynamics disagree with the prediction: {0}")]
    Mismatch(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    /// 1 configuration or numerical setup, 2 parameter regime,
    /// 3 no convergence, 4 selftest, 5 dichotomy mismatch.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::Regime(_)) => 2,
            CliError::Core(Error::NoConvergence { .. } | Error::NotConverged) => 3,
            CliError::Selftest(_) => 4,
            CliError::Mismatch(_) => 5,
            _ => 1,
        }
    }
}
