use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("entry ({row}, {col}) is {value}, expected 0 or 1")]
    NonBinary {
        row: usize,
        col: usize,
        value: String,
    },

    #[error("actor index {index} out of range for {n} actors")]
    ActorOutOfRange { index: usize, n: usize },

    #[error("covariate `{0}` is not present in the panel")]
    MissingCovariate(String),

    #[error("unknown effect `{0}`")]
    UnknownEffect(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("variance parameter is not positive semidefinite: {0}")]
    NotPositiveDefinite(String),

    #[error("non-finite evaluation function for actor {actor}; parameters have run away")]
    NonFinite { actor: usize },

    #[error("degenerate simulation: {0}")]
    Degenerate(String),

    #[error("estimation diverged at iteration {iteration}: {reason}")]
    Diverged {
        iteration: usize,
        reason: String,
        /// Parameter trace up to and including the offending iteration.
        trace: Vec<Vec<f64>>,
    },

    #[error("collinearity: {0}")]
    Collinear(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Diverged { .. } | Error::Collinear(_) | Error::Numerical(_) => 3,
            Error::Degenerate(_) | Error::NonFinite { .. } => 4,
            _ => 2,
        }
    }
}
