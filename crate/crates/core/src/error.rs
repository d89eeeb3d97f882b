use std::fmt;

use thiserror::Error;

pub type Result<T, E = CfmeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CfmeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Numerical(#[from] NumericalError),
}

impl CfmeError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        CfmeError::InvalidInput(msg.into())
    }
}

/// A factorization that kept failing up to the configured jitter ceiling.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericalError {
    pub context: String,
    pub size: usize,
    pub last_jitter: f64,
    pub max_diagonal: f64,
    pub min_diagonal: f64,
}

impl fmt::Display for NumericalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: factorization of {}x{} system failed at jitter {:.3e} (diagonal range [{:.3e}, {:.3e}])",
            self.context, self.size, self.size, self.last_jitter, self.min_diagonal, self.max_diagonal
        )
    }
}

impl std::error::Error for NumericalError {}
