//! Exact GP posteriors over finite arm sets.

pub mod dense;
mod posterior;
mod prior;

pub use posterior::PosteriorState;
pub use prior::{MaterializedPrior, RELATIVE_JITTER};

use thiserror::Error;

use crate::kernels::KernelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("prior needs at least one arm")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance of prior `{0}` is not positive definite even after jitter")]
    NotPositiveDefinite(String),
    #[error("arm {arm} out of range for {n} arms")]
    ArmOutOfRange { arm: usize, n: usize },
    #[error("noise variance must be positive, got {0}")]
    BadNoise(f64),
    #[error("observation factor of prior `{prior}` broke down after {observations} observations")]
    IllConditioned { prior: String, observations: usize },
}
