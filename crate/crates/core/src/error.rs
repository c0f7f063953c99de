use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode {mode} out of range for tensor of order {order}")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank {rank} exceeds extent {extent} on mode {mode}")]
    RankExceedsExtent { mode: usize, rank: usize, extent: usize },

    #[error("SVD failed to converge on a {rows}x{cols} matrix")]
    SvdNotConverged { rows: usize, cols: usize },

    #[error("symmetric eigendecomposition failed to converge on a {dim}x{dim} matrix")]
    EigenNotConverged { dim: usize },

    #[error("degenerate covariance: rank {rank} < {requested} requested components")]
    DegenerateCovariance { rank: usize, requested: usize },

    #[error("zero-norm vector where a direction is required")]
    ZeroNorm,

    #[error("need more than {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("at least two classes are required")]
    SingleClass,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("class {class} has {available} labeled pixels, {needed} requested")]
    TooFewLabeled {
        class: u32,
        available: usize,
        needed: usize,
    },

    #[error("non-finite value in {context} (iteration {iteration})")]
    NonFinite { context: String, iteration: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("payload size mismatch: header declares {expected} bytes, found {found}")]
    PayloadSize { expected: usize, found: usize },

    #[error("checksum mismatch: header {expected}, payload {actual}")]
    Checksum { expected: String, actual: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::MalformedHeader(_) | Error::PayloadSize { .. } | Error::Checksum { .. } => {
                ErrorKind::Io
            }
            Error::InvalidConfig(_)
            | Error::TooFewLabeled { .. }
            | Error::Json(_)
            | Error::Empty(_)
            | Error::SingleClass
            | Error::InsufficientSamples { .. }
            | Error::RankExceedsExtent { .. } => ErrorKind::Config,
            _ => ErrorKind::Numerical,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
