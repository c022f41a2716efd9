use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("grid too coarse: {0}")]
    TooCoarse(String),

    #[error("invalid damping profile: {0}")]
    InvalidDamping(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Factorization broke down: the shifted operator is (numerically) not injective.
    #[error("singular system at shift {shift}: pivot ratio {pivot_ratio:e}")]
    Singular { shift: String, pivot_ratio: f64 },

    #[error("did not converge: {0}")]
    NotConverged(String),

    #[error("insufficient samples: need {needed}, have {have}")]
    InsufficientSamples { needed: usize, have: usize },

    #[error("problem too large for dense mode: dimension {0}")]
    TooLarge(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numerical problem rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. } | Error::NotConverged(_) | Error::InsufficientSamples { .. }
        )
    }
}
