//! Small dense-tensor toolkit: reverse-mode differentiation over a tape,
//! the activations and pooling ops the multiset models use, Adam, and a
//! central-difference gradient oracle.
//!
//! Everything is `f64`. There is no broadcasting beyond what each op
//! documents.

mod gradcheck;
mod ops;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{
    finite_difference_at, finite_difference_gradient, relative_error, RELATIVE_FLOOR,
};
pub use ops::{
    l1_distance, linear, min_pool_sum, normalize_l1, relu, softplus, sum_pool, tanh_act,
    weighted_sum_rows, NORMALIZE_MIN_SUM,
};
pub use params::{AdamConfig, ParameterStore, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("normalize_l1: row {row} sums to {sum}, too small to normalize")]
    DegenerateNormalization { row: usize, sum: f64 },
    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("gradient count {got} does not match parameter count {expected}")]
    GradientCount { expected: usize, got: usize },
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
