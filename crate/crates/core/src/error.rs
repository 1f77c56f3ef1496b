use thiserror::Error;

use crate::conic::SolveStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported constellation: {scheme} with order {order}")]
    UnsupportedConstellation { scheme: String, order: usize },

    #[error("expected {expected} bits, got {got}")]
    BitWidth { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("data vector set too large: {size} exceeds cap {cap}")]
    TooManyVectors { size: u128, cap: usize },

    #[error("missing representative solution for data vector {0}")]
    MissingRepresentative(usize),

    #[error("solver finished with status {0:?}")]
    Solver(SolveStatus),

    #[error("problem is infeasible")]
    Infeasible,

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn from_status(status: SolveStatus) -> Self {
        match status {
            SolveStatus::Infeasible => Error::Infeasible,
            other => Error::Solver(other),
        }
    }
}
