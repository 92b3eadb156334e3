use thiserror::Error;

/// Errors raised by the force model, allocation, estimation and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Two dipoles closer than [`crate::em_model::MIN_SEPARATION`].
    #[error("singular separation: |r| = {separation:e} m is below the {min:e} m guard")]
    SingularSeparation { separation: f64, min: f64 },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An iterative or algebraic routine could not produce a finite answer.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A model object failed validation.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
