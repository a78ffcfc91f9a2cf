//! Error taxonomy shared by every module.
//!
//! The CLI maps variants onto exit codes: 1 for usage/input/range/io/parse
//! problems, 2 for capability errors, 3 for solver non-convergence.

use crate::grid::EigenResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Arguments violate a documented precondition.
    #[error("invalid input: {0}")]
    Input(String),
    /// The request is well formed but outside what the implementation supports
    /// (weak decay certificate, unsupported algebra, missing quadrature bound).
    #[error("unsupported: {0}")]
    Capability(String),
    /// A table or basis does not reach far enough for the request.
    #[error("out of range: {0}")]
    Range(String),
    /// An iterative solver ran out of iterations; `best` holds what it had.
    #[error("no convergence after {iterations} iterations: {message}")]
    Convergence {
        iterations: usize,
        message: String,
        best: Option<Box<EigenResult>>,
    },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Capability(_) => 2,
            Error::Convergence { .. } => 3,
            _ => 1,
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }

    pub(crate) fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }
}
