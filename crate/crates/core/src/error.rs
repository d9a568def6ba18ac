use std::path::PathBuf;

/// Errors raised anywhere in the engine.
///
/// Each variant maps to a short category string used by the command-line
/// front end for its `error:<category>:` prefix.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("state error: {0}")]
    State(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("profile error: {0}")]
    Profile(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("compatibility error: {0}")]
    Compatibility(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("undefined rate: {0}")]
    UndefinedRate(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Range(_) => "range",
            Error::State(_) => "state",
            Error::Domain(_) => "domain",
            Error::Profile(_) => "profile",
            Error::Format(_) => "format",
            Error::Compatibility(_) => "compatibility",
            Error::Empty(_) => "empty",
            Error::UndefinedRate(_) => "undefined",
            Error::Io { .. } => "file",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
