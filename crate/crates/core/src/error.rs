use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read image {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot write image {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("unsupported channel layout: {0}")]
    UnsupportedLayout(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("stack needs at least 2 images, got {0}")]
    StackTooSmall(usize),
    #[error("image {index} is {found:?} (w, h), expected {expected:?}")]
    DimensionMismatch {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("image {index} has {found} channels, expected {expected}")]
    ChannelMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid weight map: {0}")]
    InvalidWeights(String),
    #[error("invalid distortion step: {0}")]
    InvalidStep(String),
    #[error("invalid calibrator parameter: {0}")]
    InvalidModel(String),
    #[error("camera {index}: {source}")]
    Camera {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("serialization: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
