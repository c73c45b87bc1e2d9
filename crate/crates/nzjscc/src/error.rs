//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A query point falls outside the range covered by a tabulated profile.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// A value violates a constructor invariant.
    #[error("invalid parameter: {0}")]
    Invalid(String),

    /// Root bracketing failed: no sign change on the search interval.
    #[error("no root: {0}")]
    NoRoot(String),

    /// The quantizer covariance is singular, so its rate is unbounded.
    #[error("degenerate quantizer: {0}")]
    DegenerateQuantizer(String),

    /// A maximized quantity was still growing at the edge of the search
    /// grid, so the reported supremum may be truncated.
    #[error("grid truncation: {0}")]
    GridTruncated(String),

    /// A result failed its own validation; indicates a bug, not bad input.
    #[error("internal consistency failure: {0}")]
    InternalConsistency(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
