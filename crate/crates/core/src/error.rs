use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in `{name}`: expected {expected}, got {got}")]
    Dimension {
        name: String,
        expected: String,
        got: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("standing assumption violated: {0}")]
    Assumption(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("Riccati iteration did not converge after {iterations} iterations (last change {residual:e})")]
    Divergence { iterations: usize, residual: f64 },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("transform is ill-conditioned (condition number {0:e})")]
    Conditioning(f64),

    #[error("orthogonal part is not reachable: rank {rank} < {dim}")]
    Unreachable { rank: usize, dim: usize },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("policy is not causal: innovation for offset {0} is missing")]
    Causality(usize),

    #[error("invalid QP: {0}")]
    QpInput(String),

    #[error("moment cache {path:?} is stale: digest {found} does not match {expected}")]
    StaleCache {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("moment cache is corrupted: {0}")]
    Checksum(String),

    #[error("internal contradiction: {0}")]
    Contradiction(String),

    #[error("no data: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(name: &str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            name: name.to_string(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
