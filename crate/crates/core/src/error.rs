use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum PsoError {
    /// A caller-supplied value violates an operation's preconditions.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The operation is not defined for this object (e.g. batch evaluation
    /// of an objective without term structure).
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A trajectory left the admissible region: some coordinate became
    /// non-finite or exceeded the blow-up bound. Carries the step index at
    /// which the check fired.
    #[error("dynamics diverged at step {step}")]
    Diverged { step: u64 },
}

impl PsoError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        PsoError::InvalidArgument(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        PsoError::Unsupported(msg.into())
    }
}
