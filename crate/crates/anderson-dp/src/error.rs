use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent dimensions between an MDP, a policy, or a value vector.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A parameter outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A linear solve or factorization failed where it should not.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An iterate left the finite floats; carries the iteration at which it happened.
    #[error("non-finite iterate at iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
