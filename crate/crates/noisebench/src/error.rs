//! Error types shared across the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Config file failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// Training loss left the finite range.
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error(transparent)]
    Weights(#[from] WeightsError),

    #[error(transparent)]
    DataFormat(#[from] DataFormatError),

    #[error("report error: {0}")]
    Report(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

/// Failures of the binary weight container format.
#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error("bad magic {found:?}, expected \"NRWT\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported weight file version {found}, expected 1")]
    UnsupportedVersion { found: u32 },

    #[error("file truncated: needed {needed} bytes at offset {offset}, only {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("tensor name at offset {offset} is not valid UTF-8")]
    BadName { offset: usize },

    #[error("unknown dtype byte {found} for tensor {name:?}")]
    BadDtype { name: String, found: u8 },

    #[error("dtype mismatch for {name:?}: file holds {found:?}, expected {expected:?}")]
    DtypeMismatch {
        name: String,
        found: crate::tensor::Dtype,
        expected: crate::tensor::Dtype,
    },

    #[error("shape mismatch for {name:?}: file holds {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("file holds tensor {name:?} that the network does not declare")]
    UnknownParam { name: String },

    #[error("file is missing parameter {name:?}")]
    MissingParam { name: String },

    #[error("{extra} trailing bytes after checksum")]
    TrailingBytes { extra: usize },
}

/// Failures while parsing dataset files.
#[derive(Debug, thiserror::Error)]
pub enum DataFormatError {
    #[error(
        "cifar file {path}: length {len} is not a multiple of 3073; \
         partial record starts at byte offset {offset}"
    )]
    BadRecordLength {
        path: PathBuf,
        len: usize,
        offset: usize,
    },

    #[error("cifar file {path}: label byte {value} at offset {offset} out of range [0, 10)")]
    BadLabel {
        path: PathBuf,
        value: u8,
        offset: usize,
    },

    #[error("dataset container {path}: missing tensor {name:?}")]
    MissingTensor { path: PathBuf, name: String },

    #[error("dataset container {path}: {msg}")]
    BadContainer { path: PathBuf, msg: String },
}
