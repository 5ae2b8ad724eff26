use thiserror::Error;

/// Errors produced by range analysis and its supporting machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid polyhedron: {0}")]
    InvalidPolyhedron(String),

    #[error("input set is empty")]
    InfeasibleSet,

    #[error("input set is unbounded")]
    UnboundedSet,

    #[error("input set has no interior (Chebyshev radius {radius:e})")]
    DegenerateSet { radius: f64 },

    #[error("LP solver failed: {0}")]
    NumericFailure(String),

    #[error("branch-and-bound node limit of {0} exceeded")]
    NodeLimitExceeded(u64),

    #[error("time limit exceeded")]
    TimeLimitExceeded,

    #[error("network too large for enumeration: {hidden} hidden neurons (limit {limit})")]
    TooLarge { hidden: usize, limit: usize },

    #[error("no grid point lies inside the input set")]
    EmptyGrid,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what: what.to_string(),
            expected,
            found,
        })
    }
}
