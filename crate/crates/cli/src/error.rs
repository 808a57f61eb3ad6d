use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Core(glcert::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Core(e) if e.is_numeric() => 4,
            CliError::Core(glcert::Error::Io(_) | glcert::Error::Format(_) | glcert::Error::Serialization(_)) => 3,
            CliError::Core(_) => 2,
        }
    }

    /// Error for an input file that does not exist, with a hint on how to create it.
    pub fn missing(path: &Path, hint: &str) -> Self {
        CliError::MissingArtifact(format!("{} not found; {hint}", path.display()))
    }
}

impl From<glcert::Error> for CliError {
    fn from(e: glcert::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(glcert::Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(glcert::Error::Serialization(e))
    }
}
