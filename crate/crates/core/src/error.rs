use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}:{line}: cannot parse `{value}` in column `{column}`")]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
    },

    #[error("{path}: no usable records after filtering ({rejected} rejected)")]
    EmptyAfterFilter { path: PathBuf, rejected: usize },

    #[error("labels contain a single class; the likelihood is unbounded in the intercept")]
    SingleClass,

    #[error("perfect separation detected after {iterations} iterations (coefficients diverge)")]
    Separation { iterations: usize },

    #[error("information matrix is singular")]
    SingularInformation,

    #[error("unknown group label `{0}` (expected A or D)")]
    UnknownGroup(String),

    #[error("absorbing chain is singular: {0}")]
    SingularChain(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
