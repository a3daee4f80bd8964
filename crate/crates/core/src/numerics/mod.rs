//! Dense linear algebra, a small ReLU network with exact backpropagation,
//! and a finite-difference gradient checker. All arithmetic is `f64`.

mod cholesky;
mod gradcheck;
mod matrix;
mod mlp;

use thiserror::Error;

pub use cholesky::{cholesky, solve_spd, Cholesky, DEFAULT_JITTER, MAX_JITTER};
pub use gradcheck::{grad_check, numeric_gradient, FD_STEP};
pub use matrix::{dot, sq_dist, Matrix};
pub use mlp::{mlp_backward, mlp_forward, Activation, MlpGrads, MlpParams};

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix not positive definite even with jitter {max_jitter}")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}
