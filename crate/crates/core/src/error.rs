//! Crate-wide error type.

use std::path::PathBuf;

/// Errors surfaced by the laboratory.
///
/// `Config` covers everything wrong with user-supplied settings (files,
/// flags, hyperparameter values) and maps to a distinct process exit code in
/// the CLI; all other variants are runtime failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration: unparseable config file, unknown key, or a
    /// hyperparameter outside its documented range.
    #[error("config error: {0}")]
    Config(String),

    /// I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed binary or text artifact (IDX, FMAT, DCKP, CSV).
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Operation precondition violated (shape mismatch, k out of range, ...).
    #[error("{0}")]
    Invalid(String),

    /// NaN or Inf where finite values are required.
    #[error("non-finite values in {0}")]
    NonFinite(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    /// True for errors the CLI should report as configuration mistakes.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
