//! Crate-wide error type.
//!
//! Every failure is assigned one of five stable categories so that callers
//! (in particular the command-line tool) can report machine-parsable errors:
//!
//! - `IO`: the filesystem failed (missing file, permissions, short read).
//! - `FORMAT`: bytes do not parse as the declared file format.
//! - `TOPOLOGY`: mesh connectivity or correspondence is violated.
//! - `SINGULAR`: a linear system has no usable solution.
//! - `CONFIG`: a parameter or configuration value is invalid.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Filesystem problem while reading or writing `path`.
    #[error("{}: {source}", path.display())]
    Io {
        /// File the operation was touching.
        path: PathBuf,
        /// Underlying OS error.
        #[source]
        source: std::io::Error,
    },

    /// Input bytes do not parse as the declared format.
    #[error("{0}")]
    Format(String),

    /// Mesh connectivity or correspondence violation.
    #[error("{0}")]
    Topology(String),

    /// A linear system could not be solved.
    #[error("{0}")]
    Singular(String),

    /// Invalid parameter or configuration value.
    #[error("{0}")]
    Config(String),
}

impl Error {
    /// Wraps an OS error with the path that triggered it.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable one-word category, suitable for machine parsing.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IO",
            Error::Format(_) => "FORMAT",
            Error::Topology(_) => "TOPOLOGY",
            Error::Singular(_) => "SINGULAR",
            Error::Config(_) => "CONFIG",
        }
    }
}
