//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// All fallible operations in this crate return this error.
///
/// Solver non-convergence is deliberately *not* an error: solvers return a
/// result with a `converged` flag so callers can decide what to do with a
/// partial decomposition.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A file exists and was readable but its contents are malformed.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// An underlying I/O operation failed.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
