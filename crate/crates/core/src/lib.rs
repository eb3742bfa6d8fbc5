//! Pen-spinning manipulation pipeline.
//!
//! A self-contained stack for training a privileged oracle policy to spin a
//! pen-shaped object with a 16-DoF hand in a penalty-contact simulator,
//! distilling it into a proprioceptive student by behavior cloning, and
//! fine-tuning the student on open-loop replay demonstrations harvested
//! under shifted "target" dynamics.
//!
//! Modules:
//! - [`math`]: small f64 vector/quaternion layer
//! - [`sim`]: hand + pen rigid-body simulator (200 Hz physics, 20 Hz control)
//! - [`env`]: the rotation task: observations, action law, reward, resets
//! - [`nn`]: f32 tensors, reverse-mode autodiff, policy networks, Adam
//! - [`rl`]: PPO with GAE and adaptive-KL learning rate
//! - [`distill`]: behavior cloning and fine-tuning of the student policy
//! - [`data`]: trajectory serialization, replay harvesting, target dynamics
//! - [`eval`]: rotation metrics and the method-comparison harness

pub mod data;
pub mod distill;
pub mod env;
pub mod eval;
pub mod math;
pub mod nn;
pub mod rl;
pub mod sim;

pub use math::{Pose, Quat, Vec3};
pub use sim::{HandModel, PenShape, PhysParams, SimConfig, SimState};

/// Derive a per-environment RNG seed from the global seed, so batched
/// results are independent of worker scheduling.
pub fn env_seed(global_seed: u64, env_index: usize) -> u64 {
    global_seed
        .wrapping_mul(10007)
        .wrapping_add(env_index as u64)
}
