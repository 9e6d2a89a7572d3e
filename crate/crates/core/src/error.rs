use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CoralError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoralError {
    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate neighborhood: {count} point(s), need at least {required}")]
    DegenerateNeighborhood { count: usize, required: usize },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),

    #[error("invalid feature vector: {0}")]
    InvalidFeature(String),

    #[error("undefined sensitivity ratio (Q aligned = {q_aligned}, Q misaligned = {q_misaligned})")]
    UndefinedRatio { q_aligned: f64, q_misaligned: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CoralError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoralError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            CoralError::Config(_) | CoralError::InvalidParameter(_) => 1,
            CoralError::Parse { .. }
            | CoralError::Format { .. }
            | CoralError::Io { .. }
            | CoralError::InvalidInput(_)
            | CoralError::InvalidTransform(_) => 2,
            CoralError::DegenerateNeighborhood { .. }
            | CoralError::NumericalDegeneracy(_)
            | CoralError::InsufficientData(_)
            | CoralError::DegenerateTraining(_)
            | CoralError::InvalidFeature(_)
            | CoralError::UndefinedRatio { .. } => 3,
        }
    }
}
