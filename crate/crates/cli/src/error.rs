use std::path::Path;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<evotraj::simdata::SimError> for CliError {
    fn from(e: evotraj::simdata::SimError) -> Self {
        match e {
            evotraj::simdata::SimError::Config(m) => CliError::Usage(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<evotraj::emo::EmoError> for CliError {
    fn from(e: evotraj::emo::EmoError) -> Self {
        match e {
            evotraj::emo::EmoError::Config(m) => CliError::Usage(m),
            evotraj::emo::EmoError::Observer(m) => CliError::Data(m),
            other => CliError::Internal(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    evotraj::fsutil::write_atomic(path, bytes.as_ref()).map_err(|e| CliError::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}
