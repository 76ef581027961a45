use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("payload size mismatch: header declares {expected} bytes, found {found}")]
    PayloadSizeMismatch { expected: usize, found: usize },

    #[error("non-finite value at element {index}")]
    NonFiniteValue { index: usize },

    #[error("dtype mismatch: expected {expected}, found {found}")]
    DtypeMismatch { expected: &'static str, found: String },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("invalid window: width must be > 0, got {0}")]
    InvalidWindow(f64),

    #[error("insufficient lesion slices: need {needed}, found {found}")]
    InsufficientLesionSlices { needed: usize, found: usize },

    #[error("invalid slice indices: {0}")]
    InvalidSliceIndices(String),

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("non-finite parameter in tensor `{0}`")]
    NonFiniteParameter(String),

    #[error("malformed tensor archive: {0}")]
    MalformedArchive(String),

    #[error("invalid clinical record: {0}")]
    InvalidRecord(String),

    #[error("empty training split")]
    EmptyTrainingSplit,

    #[error("single-class labels: both classes are required")]
    SingleClass,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty mask")]
    EmptyMask,

    #[error("precision floor {0} is unattainable")]
    PrecisionFloorUnattainable(f64),

    #[error("metric `{0}` is undefined on every bootstrap resample")]
    AllResamplesUndefined(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
