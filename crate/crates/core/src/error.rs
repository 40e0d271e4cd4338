use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the optimizer or the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NonHermitianInput { asymmetry: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("target coincides with the RIS position")]
    DegenerateGeometry,

    #[error("covariance is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NonPsdCovariance { min_eig: f64 },

    #[error("sensing threshold {threshold:.3e} exceeds the achievable gain {bound:.3e}")]
    Infeasible { bound: f64, threshold: f64 },

    #[error("solver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("no rank-one candidate meets the sensing threshold")]
    NoFeasibleRankOne,

    #[error("exhaustive search over {bits} bits exceeds the limit of {limit}")]
    InstanceTooLarge { bits: usize, limit: usize },

    #[error("invalid sweep value {value} for {experiment}: {reason}")]
    InvalidSweepValue {
        experiment: String,
        value: f64,
        reason: String,
    },

    #[error("duplicate row key ({scheme}, {value}, {seed})")]
    DuplicateKey { scheme: String, value: f64, seed: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
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
