use thiserror::Error;

use crate::config::ConfigError;

/// Failure of a command, carrying its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Inputs inconsistent with the configuration (e.g. shape mismatch).
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Runtime(#[from] projgan::Error),
    /// Every check ran but at least one failed.
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Runtime(_) | CliError::ChecksFailed(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Reclassifies a library error raised while building objects from the
/// configuration as a configuration error.
pub(crate) fn setup(key: &str, e: projgan::Error) -> CliError {
    match e {
        projgan::Error::Io(_) => CliError::Runtime(e),
        other => CliError::Config(crate::config::RunConfig::error(key, other.to_string())),
    }
}
