use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

/// Which weight row of an IMEX pair a zero weight was found in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightFamily {
    Explicit,
    Implicit,
}

impl core::fmt::Display for WeightFamily {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            WeightFamily::Explicit => f.write_str("explicit"),
            WeightFamily::Implicit => f.write_str("implicit"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("size mismatch: expected {expected} cells, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("unknown tableau `{name}` (known: {known})")]
    UnknownTableau { name: String, known: String },

    #[error("zero {family} weight at stage {index}; use the xi-form adjoint")]
    ZeroWeight { family: WeightFamily, index: usize },

    #[error("solution diverged at step {step}, stage {stage}")]
    Divergence { step: usize, stage: usize },

    #[error("singular stage system at step {step}, stage {stage}")]
    SingularStage { step: usize, stage: usize },

    #[error("trajectory was solved without stage storage")]
    MissingStages,
}

impl Error {
    /// Rewrites the step index of step-local errors.
    pub(crate) fn at_step(self, n: usize) -> Self {
        match self {
            Error::Divergence { stage, .. } => Error::Divergence { step: n, stage },
            Error::SingularStage { stage, .. } => Error::SingularStage { step: n, stage },
            other => other,
        }
    }
}
