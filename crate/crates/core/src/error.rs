//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A matrix argument was not symmetric within tolerance.
    #[error("matrix not symmetric: max |A - A'| entry = {max_asymmetry:e}")]
    NotSymmetric { max_asymmetry: f64 },

    /// A matrix argument had a significantly negative eigenvalue.
    #[error("matrix not positive semidefinite: min eigenvalue = {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },

    /// A scalar or matrix entry was NaN or infinite.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// A configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A schedule failed validation; every offending entry is listed.
    #[error("invalid schedule:\n{}", issues.join("\n"))]
    InvalidSchedule { issues: Vec<String> },

    /// An internal quantity violated an invariant that valid inputs cannot
    /// violate; indicates an assembly bug rather than bad user input.
    #[error("internal consistency violation: {0}")]
    Internal(String),
}

impl Error {
    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }

    /// Whether this error stems from invalid user input (as opposed to a
    /// runtime or numerical failure). Drives the CLI exit-code contract.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::InvalidSchedule { .. }
                | Error::NotSymmetric { .. }
                | Error::NotPsd { .. }
                | Error::NonFinite { .. }
        )
    }
}
