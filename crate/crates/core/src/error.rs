use thiserror::Error;

use crate::model::BeliefState;

pub type Result<T> = std::result::Result<T, VspError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VspError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not Hermitian positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible block geometry: {0}")]
    Infeasible(String),

    #[error("non-finite state in {stage} at outer round {round}")]
    NonFinite {
        stage: &'static str,
        round: usize,
        snapshot: Box<BeliefState>,
    },
}

impl VspError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        VspError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(VspError::DimensionMismatch {
                context,
                expected,
                found,
            })
        }
    }
}
