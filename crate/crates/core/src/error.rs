use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (bad shapes, bad config, malformed file).
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("overlapping UV charts between faces {pairs:?}")]
    UvOverlap { pairs: Vec<(usize, usize)> },

    #[error("mesh has no non-degenerate faces")]
    DegenerateMesh,

    #[error("texel ({row}, {col}) is not covered by the atlas")]
    InvalidTexel { row: usize, col: usize },

    #[error("every texel is a hole, nothing to inpaint")]
    AllHoles,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error at {path}: {source}")]
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
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Validation failures map to CLI exit code 2, everything else to 1.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
