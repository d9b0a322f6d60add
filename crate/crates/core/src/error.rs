use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Caller supplied inconsistent arguments.
    Usage,
    /// Input data is missing, malformed or inconsistent.
    Data,
    /// A numerical routine failed (divergence, singular system).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error in {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("missing variable {0}")]
    MissingVariable(String),

    #[error("variable {variable}: expected {expected} values, found {found}")]
    LengthMismatch {
        variable: String,
        expected: usize,
        found: usize,
    },

    #[error("variable {variable}: non-finite value {value} at valid pixel ({lat_idx}, {lon_idx}), step {step}")]
    NonFinite {
        variable: String,
        lat_idx: usize,
        lon_idx: usize,
        step: usize,
        value: f32,
    },

    #[error("metadata: {0}")]
    Metadata(String),

    #[error("{} already exists (pass force to overwrite)", .0.display())]
    AlreadyExists(PathBuf),

    #[error("location ({lat}, {lon}) is outside the grid")]
    OutOfBounds { lat: f64, lon: f64 },

    #[error("pixel ({lat_idx}, {lon_idx}) is masked")]
    MaskedPixel { lat_idx: usize, lon_idx: usize },

    #[error("no summer observations for years {0:?}")]
    NoCoverage(Vec<i32>),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate})")]
    Diverged { epoch: usize, learning_rate: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("empty union of positive pixels")]
    EmptyUnion,

    #[error("feature lineage mismatch: model {model} was built on {found}, expected {expected}")]
    LineageMismatch {
        model: String,
        expected: String,
        found: String,
    },

    #[error("duplicate key {0}")]
    DuplicateKey(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Diverged { .. } | Error::Numerical(_) | Error::ZeroVariance(_) => {
                ErrorKind::Numerical
            }
            Error::AlreadyExists(_) | Error::InvalidInput(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}
