//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of two tensors (or a tensor and a parameter block) disagree.
    #[error("dimension error: {0}")]
    Dim(String),

    /// A structurally invalid configuration (bad stride, rate out of range,
    /// unknown config key, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A NaN or infinity appeared where only finite values are allowed.
    /// The payload names the first offending block.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Malformed on-disk data (PGM header, manifest, checkpoint, config).
    #[error("parse error: {0}")]
    Parse(String),

    /// Checkpoint refused (magic/version/hash mismatch).
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
