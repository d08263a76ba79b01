//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("no series found in {0}")]
    NoSeriesFound(PathBuf),
    #[error("mixed series identifiers in {0}")]
    MixedSeries(PathBuf),
    #[error("inconsistent dimensions: expected {expected:?}, got {got:?} in {path}")]
    InconsistentDimensions {
        expected: (usize, usize),
        got: (usize, usize),
        path: PathBuf,
    },
    #[error("missing spatial metadata in {0}")]
    MissingSpatialMetadata(PathBuf),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("requested {requested} patients but only {available} available")]
    SplitTooLarge { requested: usize, available: usize },
    #[error("missing stage: {0}")]
    MissingStage(String),
    #[error("unknown modality tag: {0}")]
    UnknownModality(String),
    #[error("manifest parse error at {path}:{line}: {message}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("zero-area box")]
    ZeroAreaBox,
    #[error("dicom error: {0}")]
    Dicom(String),
    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
