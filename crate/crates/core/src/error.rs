use chrono::NaiveDate;
use thiserror::Error;

use crate::constants::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    /// Both the fixed-point iteration and the Newton fallback failed. The
    /// report carries the full iteration trace.
    #[error("integral constants did not converge after {} iterations ({})", .report.iterations, .reason)]
    NonConvergence {
        reason: String,
        report: Box<SolveReport>,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn numeric(msg: impl Into<String>) -> Error {
    Error::Numeric(msg.into())
}
