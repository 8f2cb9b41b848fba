use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("design matrix is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("quantile regression did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        best: Vec<f64>,
        objective: f64,
    },

    #[error("period {period}: {source}")]
    Period {
        period: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("first-step coefficients outside the configured bounds in period {period}")]
    OutOfBounds { period: usize },

    #[error("requested tensor grid of {requested} nodes exceeds the cap of {cap}")]
    BudgetExceeded { requested: u128, cap: usize },

    #[error("no candidate produced a finite objective")]
    NoFiniteObjective,

    #[error("{failed} of {total} bootstrap replicates failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("constant-effect null requires 0.5 in the quantile grid")]
    MissingMedian,

    #[error("group {0} is empty")]
    EmptyGroup(&'static str),

    #[error("dataset is not a two-period two-group design: {0}")]
    NotDidShape(String),

    #[error("covariance matrix is not positive semi-definite")]
    CovarianceNotPsd,
}

impl Error {
    /// Whether the error stems from invalid input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidData(_)
            | Error::InvalidConfig(_)
            | Error::BudgetExceeded { .. }
            | Error::MissingMedian
            | Error::EmptyGroup(_)
            | Error::NotDidShape(_)
            | Error::CovarianceNotPsd => true,
            Error::Period { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub(crate) fn in_period(self, period: usize) -> Error {
        Error::Period {
            period,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
