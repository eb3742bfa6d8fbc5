//! The pen-rotation task on top of the simulator: observation assembly,
//! action law, reward, initial-state synthesis/filtering, domain
//! randomization, and termination.

mod init;
mod penenv;
mod randomize;
mod reward;

pub use init::{
    author_grasp, default_canonical_grasps, generate_init_states, settle_state,
    stability_filter, CanonicalGrasp, GraspDesign, InitState, InitStateSet, N_CANONICAL,
};
pub use penenv::{BatchEnv, PenEnv, ResetMode, StepOutcome, Termination};
pub use randomize::{
    gaussian_noise, maybe_disturb, sample_randomized_params, DomainRandomization, NoiseScales,
};
pub use reward::compute_reward;

use crate::math::Vec3;
use crate::sim::N_JOINTS;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("canonical grasp {family}: only {accepted} of {requested} noisy states passed the stability filter after {attempts} draws")]
    InitGeneration {
        family: usize,
        accepted: usize,
        requested: usize,
        attempts: usize,
    },
    #[error("initial state set is empty")]
    EmptyInitSet,
    #[error("simulation failed: {0}")]
    Sim(#[from] crate::sim::SimError),
}

/// Task configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Action scale eta, radians per unit policy output.
    pub eta: f64,
    /// Maximum episode length in control steps.
    pub max_episode_steps: u32,
    /// Episode ends when the pen center falls below this height.
    pub fall_height_threshold: f64,
    /// Stacked history length for the oracle observation.
    pub hist_len_oracle: usize,
    /// Proprioceptive window length for the student.
    pub hist_len_student: usize,
    /// Clip for the rotation reward, rad/s.
    pub omega_max: f64,
    /// Angular-velocity penalty threshold, rad/s.
    pub omega_penalty_threshold: f64,
    /// Binary tactile force threshold, N.
    pub tactile_threshold: f64,
    /// Width of the tactile observation block (zero-padded above the
    /// physical 20 channels).
    pub tactile_dim: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            eta: 0.04,
            max_episode_steps: 400,
            fall_height_threshold: -0.05,
            hist_len_oracle: 3,
            hist_len_student: 30,
            omega_max: 0.5,
            omega_penalty_threshold: 1.0,
            tactile_threshold: 0.05,
            tactile_dim: 20,
        }
    }
}

/// Reward weights. The defaults are the training values; every raw term is
/// non-negative and the penalties carry their sign here.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub lambda_rot: f64,
    pub lambda_z: f64,
    pub lambda_vel: f64,
    pub lambda_diff: f64,
    pub lambda_ang: f64,
    pub lambda_torque: f64,
    pub lambda_work: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            lambda_rot: 1.0,
            lambda_z: -1.0,
            lambda_vel: -0.3,
            lambda_diff: -0.1,
            lambda_ang: -0.3,
            lambda_torque: -0.1,
            lambda_work: -1.0,
        }
    }
}

/// Per-term reward values (raw, unweighted) and the weighted total.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_rot: f64,
    pub r_z: f64,
    pub r_vel: f64,
    pub r_diff: f64,
    pub r_ang: f64,
    pub r_torq: f64,
    pub r_work: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn weighted_total(&self, w: &RewardWeights) -> f64 {
        w.lambda_rot * self.r_rot
            + w.lambda_z * self.r_z
            + w.lambda_vel * self.r_vel
            + w.lambda_diff * self.r_diff
            + w.lambda_ang * self.r_ang
            + w.lambda_torque * self.r_torq
            + w.lambda_work * self.r_work
    }

    pub fn terms(&self) -> [f64; 7] {
        [
            self.r_rot, self.r_z, self.r_vel, self.r_diff, self.r_ang, self.r_torq, self.r_work,
        ]
    }
}

/// Privileged observation of the oracle policy.
///
/// Flat layout (defaults): `q_hist (3x16) | a_hist (3x16) | c (20) |
/// p (4x3) | w (7) | cloud (100x3) | phys (6)` = 441 entries.
/// Histories are ordered oldest to newest. `w` is pen position (3),
/// z-axis heading of the pen's long axis (1), and angular velocity (3).
#[derive(Debug, Clone)]
pub struct OracleObs {
    pub q_hist: Vec<f64>,
    pub a_hist: Vec<f64>,
    pub tactile: Vec<u8>,
    pub fingertips: Vec<Vec3>,
    pub pen_state: [f64; 7],
    pub cloud: Vec<Vec3>,
    pub phys: [f64; 6],
}

impl OracleObs {
    pub const PHYS_DIM: usize = 6;

    /// Total flat dimension for a given configuration.
    pub fn flat_dim(cfg: &EnvConfig) -> usize {
        cfg.hist_len_oracle * N_JOINTS * 2
            + cfg.tactile_dim
            + crate::sim::N_FINGERS * 3
            + 7
            + crate::sim::CLOUD_POINTS * 3
            + Self::PHYS_DIM
    }

    /// Offset and length of the point-cloud block in the flat layout.
    pub fn cloud_block(cfg: &EnvConfig) -> (usize, usize) {
        let off =
            cfg.hist_len_oracle * N_JOINTS * 2 + cfg.tactile_dim + crate::sim::N_FINGERS * 3 + 7;
        (off, crate::sim::CLOUD_POINTS * 3)
    }

    pub fn flatten_into(&self, cfg: &EnvConfig, out: &mut Vec<f32>) {
        out.clear();
        out.reserve(Self::flat_dim(cfg));
        out.extend(self.q_hist.iter().map(|v| *v as f32));
        out.extend(self.a_hist.iter().map(|v| *v as f32));
        out.extend(self.tactile.iter().map(|b| *b as f32));
        for _ in self.tactile.len()..cfg.tactile_dim {
            out.push(0.0);
        }
        for p in &self.fingertips {
            out.extend_from_slice(&[p.x as f32, p.y as f32, p.z as f32]);
        }
        out.extend(self.pen_state.iter().map(|v| *v as f32));
        for p in &self.cloud {
            out.extend_from_slice(&[p.x as f32, p.y as f32, p.z as f32]);
        }
        out.extend(self.phys.iter().map(|v| *v as f32));
        debug_assert_eq!(out.len(), Self::flat_dim(cfg));
    }

    pub fn flatten(&self, cfg: &EnvConfig) -> Vec<f32> {
        let mut out = Vec::new();
        self.flatten_into(cfg, &mut out);
        out
    }
}

/// Proprioceptive history window for the student policy: joint positions
/// `q_{t-29..t}` and previous targets `a_{t-30..t-1}`, oldest to newest,
/// zero-padded before the episode has 30 steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentHistory {
    /// `hist_len_student x N_JOINTS`, row-major, oldest first.
    pub q_window: Vec<f32>,
    /// `hist_len_student x N_JOINTS`, row-major, oldest first.
    pub a_window: Vec<f32>,
}

impl StudentHistory {
    pub fn zeros(len: usize) -> StudentHistory {
        StudentHistory {
            q_window: vec![0.0; len * N_JOINTS],
            a_window: vec![0.0; len * N_JOINTS],
        }
    }

    /// Interleave into `len x 2*N_JOINTS` tokens: `[q_row | a_row]` per step.
    pub fn tokens(&self, len: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(len * 2 * N_JOINTS);
        for t in 0..len {
            out.extend_from_slice(&self.q_window[t * N_JOINTS..(t + 1) * N_JOINTS]);
            out.extend_from_slice(&self.a_window[t * N_JOINTS..(t + 1) * N_JOINTS]);
        }
        out
    }
}
