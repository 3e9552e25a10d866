use thiserror::Error;

use crate::solver::FitStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("invalid response at row {row}: {value} is not 0 or 1")]
    NonBinaryResponse { row: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A precondition that depends on the data (class counts, shard counts)
    /// rather than on how the caller spelled its arguments.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("local fit on shard {shard} failed with status {status}")]
    LocalFit { shard: usize, status: FitStatus },

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed csv at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
