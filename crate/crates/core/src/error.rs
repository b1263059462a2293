use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("detector layout error: {0}")]
    Layout(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("MNIST files missing from {}: expected {}", dir.display(), missing.join(", "))]
    MissingData { dir: PathBuf, missing: Vec<String> },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}

/// Failures while parsing MNIST IDX containers.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("IDX truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("IDX dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("label {label} at index {index} is not a digit class")]
    LabelOutOfRange { index: usize, label: u8 },
}

/// Failures while reading a model checkpoint. No partial model is ever returned.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("bad checkpoint magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("checkpoint truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("checkpoint has {0} trailing bytes")]
    TrailingBytes(usize),

    #[error("checkpoint shape inconsistency: {0}")]
    Shape(String),

    #[error("checkpoint CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
}
