use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by grid construction, operators, solvers and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("evanescent Stolt component: q_x = {q_x} rad/um exceeds 2 k_min = {limit} rad/um")]
    Evanescent { q_x: f64, limit: f64 },

    #[error("solver produced a non-finite iterate at iteration {iteration}")]
    SolverDiverged { iteration: usize },

    #[error("delay shift of {shift} px pushes content out of the image")]
    ShiftOutOfBounds { shift: isize },

    #[error("could not place {requested} scatterers with the requested separation (placed {placed})")]
    PhantomPlacement { requested: usize, placed: usize },

    #[error("image is identically zero")]
    ZeroImage,

    #[error("malformed header {path}: {reason}")]
    Header { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
