//! Minimal f32 tensor library with reverse-mode differentiation and the
//! policy/value networks built on it.

mod adam;
mod checkpoint;
mod gaussian;
pub mod gradcheck;
mod graph;
mod params;
mod specs;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gaussian::{
    gaussian_entropy, gaussian_log_prob, gaussian_sample_and_logprob, LOG_STD_MAX, LOG_STD_MIN,
};
pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use graph::{sinusoidal_table, Graph, NodeId};
pub use params::{kaiming_uniform, GradStore, ParamId, ParamStore};
pub use specs::{
    oracle_rest_dim, split_oracle_obs, OraclePolicyNet, StudentNet, ValueNet, STUDENT_BLOCKS,
    STUDENT_HEADS, STUDENT_WIDTH,
};
pub use tensor::{gemm, Tensor};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("checkpoint has wrong magic bytes")]
    BadMagic,
    #[error("checkpoint architecture hash mismatch: expected {expected:#x}, got {got:#x}")]
    SpecHashMismatch { expected: u64, got: u64 },
    #[error("checkpoint truncated: needed at least {expected} bytes, file has {got}")]
    Truncated { expected: usize, got: usize },
    #[error("checkpoint tensor {index} shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("non-finite gradients; optimizer step rejected")]
    NonFiniteGradients,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Standard normal sample (Box-Muller, two uniform draws).
pub fn randn<R: Rng>(rng: &mut R) -> f32 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
}
