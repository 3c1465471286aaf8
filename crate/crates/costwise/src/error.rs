use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file did not match its documented layout (bad header, bad field,
    /// inconsistent block sizes, version mismatch).
    #[error("format error: {0}")]
    Format(String),

    /// Tensor or sequence dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A precondition on an operation's inputs was violated.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Too many rejected rows, empty vocabulary, and similar data-quality
    /// failures that make the result meaningless.
    #[error("data error: {0}")]
    Data(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Diverged(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
