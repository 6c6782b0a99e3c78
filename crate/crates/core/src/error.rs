use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("missing MRF graph: gammaPrior = MRF requires an mrfG edge list")]
    MissingMrfGraph,

    #[error("hyperparameter {name} must be {requirement}, got {value}")]
    InvalidHyperparameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },

    #[error("burnin ({burnin}) must be smaller than nIter ({n_iter})")]
    Burnin { burnin: usize, n_iter: usize },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("column blocks overlap at column {0}")]
    OverlappingBlocks(usize),

    #[error("adjacency matrix is not symmetric with zero diagonal")]
    InvalidAdjacency,

    #[error("graph is not decomposable")]
    NotDecomposable,

    #[error("selection state does not match the configured gamma prior")]
    PriorMismatch,

    #[error("residual regression pattern does not match the covariance structure")]
    PatternMismatch,

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("empty post-burn-in window")]
    EmptyWindow,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit status for the command-line tool: 2 for configuration
    /// and input errors, 3 for numeric failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) | Error::EmptyWindow => 3,
            Error::Io { .. } => 4,
            _ => 2,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
