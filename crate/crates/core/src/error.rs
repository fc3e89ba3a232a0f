use std::path::PathBuf;

/// Errors raised anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or label shapes disagree with what an operation requires.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// Values are outside their valid domain (labels, frequencies, empty sets).
    #[error("data error: {0}")]
    Data(String),
    /// Malformed file contents.
    #[error("codec error at byte {offset}: {msg}")]
    Codec { offset: usize, msg: String },
    /// Bad configuration text or values.
    #[error("config error: {0}")]
    Config(String),
    /// API misuse, e.g. running backward without a train-mode cache.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn codec(offset: usize, msg: impl Into<String>) -> Self {
        Error::Codec {
            offset,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
