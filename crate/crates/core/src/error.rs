use thiserror::Error;

/// Errors produced anywhere in the certification toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("decomposition error: {0}")]
    Decomposition(String),

    #[error("unsupported composition: {0}")]
    UnsupportedComposition(String),

    #[error("unsupported transform: {0}")]
    UnsupportedTransform(String),

    #[error("degenerate transform: {0}")]
    DegenerateTransform(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Decomposition(_) | Error::DegenerateTransform(_) | Error::Training(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
