use std::fmt;

use thiserror::Error;

use crate::instance::ProblemKind;
use crate::polyeval::MonomialBudget;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("monomial evaluator over budget: {budget} (limit {limit} subsets)")]
    Capacity { budget: MonomialBudget, limit: u64 },

    #[error("instance kind mismatch: expected {expected}, found {found}")]
    KindMismatch {
        expected: ProblemKind,
        found: ProblemKind,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl fmt::Display) -> Self {
        Error::Param(msg.to_string())
    }

    pub(crate) fn format(line: usize, msg: impl fmt::Display) -> Self {
        Error::Format {
            line,
            msg: msg.to_string(),
        }
    }
}
