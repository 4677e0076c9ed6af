use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite derivative at state {state:?}")]
    Numeric { state: Vec<f64> },

    #[error("instance with {n} cities exceeds exact solver capacity of {max}; use the heuristic backend")]
    Capacity { n: usize, max: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("problem can't be solved: target {emptied} became empty while shrinking against target {by}")]
    Unsolvable { by: usize, emptied: usize },

    #[error("runtime fault at stage {stage}: cell {cell} is outside the winning domain")]
    RuntimeFault { stage: usize, cell: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("external tsp solver failed: {0}")]
    External(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Unsolvable { .. } => 2,
            Error::RuntimeFault { .. } => 3,
            Error::Config(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
