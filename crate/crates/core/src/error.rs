use std::path::PathBuf;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    /// True for errors caused by numerics rather than by bad input or I/O.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Quadrature(_) | Error::Divergence { .. } => true,
            Error::Frame { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    /// True for filesystem and file-format failures.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Format { .. } => true,
            Error::Frame { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
