use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A constructed or updated object violates one of its type invariants.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// A numerical routine failed (factorization, non-finite result).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A PPD source lacks an optional capability (refit, forward refit).
    #[error("capability missing: {0}")]
    Capability(String),

    /// Lookup of a stored distribution failed.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Malformed input file or configuration.
    #[error("parse error in {}: {msg}", path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<input>".into()))]
    Parse { path: Option<PathBuf>, msg: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse { path: None, msg: msg.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Attach a file path to a parse error.
    pub(crate) fn at(self, p: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { msg, .. } => Error::Parse { path: Some(p.into()), msg },
            other => other,
        }
    }
}
