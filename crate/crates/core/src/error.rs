use std::path::PathBuf;

use thiserror::Error;

/// Every fallible operation in the crate returns this error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("sample value {value} at index {index} is not finite")]
    NonFiniteInput { index: usize, value: f64 },

    #[error("non-finite membrane potential in {compartment} at t = {time_ms} ms (dt too large for tau?)")]
    NonFinite {
        compartment: &'static str,
        time_ms: f64,
    },

    #[error("reference set is all zero; scale is undefined")]
    ZeroReference,

    #[error("cannot normalize an all-zero sample")]
    ZeroSample,

    #[error("label {0:?} is already trained; each class is trained once")]
    AlreadyTrained(String),

    #[error("the trained-pattern store is empty")]
    EmptyStore,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("network construction: {0}")]
    Build(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing data file {0}")]
    MissingData(PathBuf),

    #[error("checksum mismatch for {name}: expected {expected}, got {actual}")]
    Checksum {
        name: String,
        expected: String,
        actual: String,
    },

    #[error("download failed: {0}")]
    Download(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::AlreadyTrained(_) => 2,
            Error::Parse { .. }
            | Error::MissingData(_)
            | Error::Checksum { .. }
            | Error::Download(_)
            | Error::ZeroReference
            | Error::ZeroSample
            | Error::DimensionMismatch { .. }
            | Error::NonFiniteInput { .. }
            | Error::Checkpoint(_)
            | Error::Io(_)
            | Error::Json(_) => 3,
            Error::NonFinite { .. } | Error::EmptyStore | Error::Empty(_) | Error::Build(_) => 4,
        }
    }
}
