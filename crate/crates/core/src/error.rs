//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by descriptor construction, classification, and the
/// evaluation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image {width}x{height} too small for support radius {radius} (needs at least {min}x{min})")]
    ImageTooSmall {
        width: usize,
        height: usize,
        radius: usize,
        min: usize,
    },

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("class '{name}' has {count} samples but k-fold needs at least {k}")]
    ClassTooSmall {
        name: String,
        count: usize,
        k: usize,
    },

    #[error("sample position ({x}, {y}) lies outside the image")]
    OutOfBounds { x: f64, y: f64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("{}: {source}", path.display())]
    WithPath {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
}

impl Error {
    /// Attach the offending file path to an error bubbling out of a
    /// per-image pipeline stage.
    pub fn with_path(self, path: impl Into<PathBuf>) -> Self {
        Error::WithPath {
            path: path.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
