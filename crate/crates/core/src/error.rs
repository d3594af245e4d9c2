use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("pose initialization failed: fitness {fitness} (threshold {threshold}), converged={converged}")]
    InitializationFailed {
        fitness: f64,
        threshold: f64,
        converged: bool,
    },

    #[error("out-of-order timestamp {got} (last accepted {last})")]
    Ordering { got: f64, last: f64 },

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("no accepted correspondences within {threshold} m")]
    EmptyReport { threshold: f64 },

    #[error("no trajectory timestamps could be associated with ground truth")]
    Alignment,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable snake_case identifier of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::UnsupportedFormat(_) => "unsupported_format",
            Error::InvalidInput(_) => "invalid_input",
            Error::Degenerate(_) => "degenerate",
            Error::InitializationFailed { .. } => "initialization_failed",
            Error::Ordering { .. } => "ordering",
            Error::Config { .. } => "config",
            Error::EmptyReport { .. } => "empty_report",
            Error::Alignment => "alignment",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
