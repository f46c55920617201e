use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the de-fencing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported or malformed image {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("degenerate transform: |det A| = {0:e}")]
    DegenerateTransform(f64),

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("degenerate lattice: {0}")]
    DegenerateLattice(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("no model found: {0}")]
    NoModel(String),

    #[error("registration failed for frame {frame}: {reason}")]
    Registration { frame: usize, reason: String },

    #[error("patch {path} is {width}x{height}, expected {expected}x{expected}")]
    PatchSize {
        path: PathBuf,
        width: usize,
        height: usize,
        expected: usize,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("instance too large: {0}")]
    Capacity(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("malformed model file: {0}")]
    ModelFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
