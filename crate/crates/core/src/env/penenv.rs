//! The per-episode environment wrapper and the parallel batch of envs.

use super::randomize::{gaussian_noise, phys_observation};
use super::{
    maybe_disturb, sample_randomized_params, DomainRandomization, EnvConfig, EnvError, InitStateSet,
    NoiseScales, OracleObs, RewardBreakdown, RewardWeights, StudentHistory,
};
use crate::math::{vec3, wrap_angle, Vec3};
use crate::sim::{
    control_step, forward_kinematics_full, tactile_read, HandModel, PenShape, PhysParams,
    PointCloud, SimState, N_JOINTS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::sync::Arc;

/// How episode initial states are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetMode {
    /// Uniform over all accepted states across the six canonical families.
    UniformCanonical,
    /// Only states of one canonical family (the single-pose ablation).
    FixedFamily(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Running,
    Fell,
    Timeout,
    /// Simulator produced a non-finite state; episode must be discarded.
    Invalid,
}

impl Termination {
    pub fn is_done(self) -> bool {
        self != Termination::Running
    }
}

/// Everything one control step produces.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub termination: Termination,
    /// The commanded absolute joint target (post action-noise, post clamp).
    pub a_t: Vec<f64>,
    /// Wrap-safe heading change of the pen's long axis this step, rad.
    pub heading_delta: f64,
}

/// One pen-rotation environment instance.
pub struct PenEnv {
    pub hand: HandModel,
    pub pen: PenShape,
    pub base_phys: PhysParams,
    pub cfg: EnvConfig,
    pub weights: RewardWeights,
    pub dr: DomainRandomization,
    init_set: Arc<InitStateSet>,
    reset_mode: ResetMode,
    rng: ChaCha8Rng,
    obs_rng: ChaCha8Rng,

    state: SimState,
    params: PhysParams,
    noise: NoiseScales,
    scaled_pen: PenShape,
    cloud: PointCloud,
    a_prev: Vec<f64>,
    q_init: Vec<f64>,
    /// Joint positions after each step, `q_log[0]` = initial.
    q_log: Vec<Vec<f64>>,
    /// Commanded targets, `a_log[t]` = target applied at step t.
    a_log: Vec<Vec<f64>>,
    heading_prev: f64,
    /// Control steps of actuation delay (0 in the source sim).
    pub action_latency: usize,
    pending_action: Option<Vec<f64>>,
    family: usize,
}

fn heading(state: &SimState) -> f64 {
    let axis = state.pen_quat.rotate(vec3(1.0, 0.0, 0.0));
    if axis.x * axis.x + axis.y * axis.y < 1e-12 {
        0.0
    } else {
        axis.y.atan2(axis.x)
    }
}

impl PenEnv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        hand: HandModel,
        pen: PenShape,
        base_phys: PhysParams,
        cfg: EnvConfig,
        weights: RewardWeights,
        dr: DomainRandomization,
        init_set: Arc<InitStateSet>,
        reset_mode: ResetMode,
        seed: u64,
    ) -> PenEnv {
        let n = hand.total_dof();
        let scaled = pen;
        let cloud = PointCloud::canonical(&scaled);
        PenEnv {
            hand,
            pen,
            base_phys,
            cfg,
            weights,
            dr,
            init_set,
            reset_mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            obs_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15),
            state: SimState::new(vec![0.0; n], vec3(0.0, 0.0, 0.2), crate::math::Quat::IDENTITY),
            params: base_phys,
            noise: NoiseScales::default(),
            scaled_pen: scaled,
            cloud,
            a_prev: vec![0.0; n],
            q_init: vec![0.0; n],
            q_log: Vec::new(),
            a_log: Vec::new(),
            heading_prev: 0.0,
            action_latency: 0,
            pending_action: None,
            family: 0,
        }
    }

    /// Override the episode parameter sampler (target-dynamics envs pass a
    /// fixed parameter set and skip randomization).
    pub fn set_fixed_params(&mut self, params: PhysParams, noise: NoiseScales) {
        self.dr = DomainRandomization {
            scale: (params.scale, params.scale),
            mass: (params.mass, params.mass),
            com_offset: (params.com_offset.x, params.com_offset.x),
            friction: (params.friction, params.friction),
            kp: (params.kp, params.kp),
            kd: (params.kd, params.kd),
            obs_noise_sigma: noise.obs_sigma,
            action_noise_sigma: noise.action_sigma,
            ..self.dr
        };
        self.base_phys = params;
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn scaled_pen(&self) -> &PenShape {
        &self.scaled_pen
    }

    pub fn a_prev(&self) -> &[f64] {
        &self.a_prev
    }

    pub fn family(&self) -> usize {
        self.family
    }

    pub fn episode_len(&self) -> usize {
        self.a_log.len()
    }

    pub fn reset_mode(&self) -> ResetMode {
        self.reset_mode
    }

    pub fn set_reset_mode(&mut self, mode: ResetMode) {
        self.reset_mode = mode;
    }

    /// Start a new episode: sample an accepted initial state and fresh
    /// physical parameters.
    pub fn reset(&mut self) -> Result<(), EnvError> {
        if self.init_set.is_empty() {
            return Err(EnvError::EmptyInitSet);
        }
        let init = match self.reset_mode {
            ResetMode::UniformCanonical => {
                let idx = self.rng.gen_range(0..self.init_set.states.len());
                &self.init_set.states[idx]
            }
            ResetMode::FixedFamily(fam) => {
                let of = self.init_set.of_family(fam);
                if of.is_empty() {
                    return Err(EnvError::EmptyInitSet);
                }
                of[self.rng.gen_range(0..of.len())]
            }
        };
        self.family = init.family;
        let (params, noise) = sample_randomized_params(&mut self.rng, &self.base_phys, &self.dr);
        self.params = params;
        self.noise = noise;
        self.scaled_pen = self.pen.scaled(params.scale);
        self.cloud = PointCloud::canonical(&self.scaled_pen);
        self.state = init.to_state();
        self.a_prev = init.q.clone();
        self.q_init = init.q.clone();
        self.q_log = vec![init.q.clone()];
        self.a_log.clear();
        self.heading_prev = heading(&self.state);
        self.pending_action = None;
        Ok(())
    }

    /// Restore a specific initial state (replay and paired evaluation).
    pub fn reset_to(&mut self, state: SimState, params: PhysParams, noise: NoiseScales) {
        self.params = params;
        self.noise = noise;
        self.scaled_pen = self.pen.scaled(params.scale);
        self.cloud = PointCloud::canonical(&self.scaled_pen);
        self.a_prev = state.q.clone();
        self.q_init = state.q.clone();
        self.q_log = vec![state.q.clone()];
        self.a_log.clear();
        self.heading_prev = heading(&state);
        self.pending_action = None;
        self.state = state;
    }

    /// The action law: `a_t = clamp(eta * f + a_prev + noise)`.
    pub fn apply_policy_action(&mut self, f_out: &[f32]) -> Vec<f64> {
        let mut a_t = Vec::with_capacity(N_JOINTS);
        for i in 0..N_JOINTS {
            let f = (f_out[i] as f64).clamp(-1.0, 1.0);
            let eps = gaussian_noise(&mut self.rng, self.noise.action_sigma);
            let (lo, hi) = self.hand.joint_limits[i];
            a_t.push((self.cfg.eta * f + self.a_prev[i] + eps).clamp(lo, hi));
        }
        a_t
    }

    /// Step with a raw policy output in [-1, 1]^16.
    pub fn step(&mut self, f_out: &[f32]) -> StepOutcome {
        let a_t = self.apply_policy_action(f_out);
        self.step_with_target(a_t)
    }

    /// Step with an absolute joint target (open-loop replay path).
    pub fn step_with_target(&mut self, a_t: Vec<f64>) -> StepOutcome {
        let applied = if self.action_latency > 0 {
            let prev = self.pending_action.replace(a_t.clone());
            prev.unwrap_or_else(|| self.a_prev.clone())
        } else {
            a_t.clone()
        };
        let disturbance = maybe_disturb(&mut self.rng, &self.params, &self.dr);
        let step = control_step(
            &self.state,
            &applied,
            disturbance,
            &self.params,
            &self.hand,
            &self.scaled_pen,
        );
        let (next, aggregates) = match step {
            Ok(v) => v,
            Err(_) => {
                return StepOutcome {
                    reward: RewardBreakdown::default(),
                    termination: Termination::Invalid,
                    a_t,
                    heading_delta: 0.0,
                };
            }
        };
        let reward = super::compute_reward(
            &next,
            &aggregates,
            &self.q_init,
            &self.scaled_pen,
            &self.weights,
            &self.cfg,
        );
        let h = heading(&next);
        let heading_delta = wrap_angle(h - self.heading_prev);
        self.heading_prev = h;
        self.state = next;
        self.q_log.push(self.state.q.clone());
        self.a_log.push(a_t.clone());
        self.a_prev = a_t.clone();

        let termination = if self.state.pen_pos.z < self.cfg.fall_height_threshold {
            Termination::Fell
        } else if self.state.t_step >= self.cfg.max_episode_steps {
            Termination::Timeout
        } else {
            Termination::Running
        };
        StepOutcome {
            reward,
            termination,
            a_t,
            heading_delta,
        }
    }

    /// Assemble the privileged observation. Joint-position entries are
    /// corrupted with the episode's observation noise.
    pub fn observe_oracle(&mut self) -> OracleObs {
        let hl = self.cfg.hist_len_oracle;
        let mut q_hist = Vec::with_capacity(hl * N_JOINTS);
        let mut a_hist = Vec::with_capacity(hl * N_JOINTS);
        let steps = self.q_log.len();
        for k in 0..hl {
            // oldest first; repeat the earliest entry before the episode is
            // hl steps old
            let qi = steps.saturating_sub(hl - k).min(steps - 1);
            for j in 0..N_JOINTS {
                q_hist.push(self.q_log[qi][j] + gaussian_noise(&mut self.obs_rng, self.noise.obs_sigma));
            }
            let na = self.a_log.len();
            if na == 0 {
                a_hist.extend_from_slice(&self.a_prev);
            } else {
                let ai = na.saturating_sub(hl - k).min(na - 1);
                a_hist.extend_from_slice(&self.a_log[ai]);
            }
        }
        let frames = forward_kinematics_full(&self.state.q, &self.hand).expect("fk");
        let tactile = tactile_read(
            &self.state.contacts,
            &frames,
            &self.hand,
            self.cfg.tactile_threshold,
        );
        let fingertips: Vec<Vec3> = frames.iter().map(|f| f.tip_pos).collect();
        let pen_state = [
            self.state.pen_pos.x,
            self.state.pen_pos.y,
            self.state.pen_pos.z,
            heading(&self.state),
            self.state.pen_angvel.x,
            self.state.pen_angvel.y,
            self.state.pen_angvel.z,
        ];
        let mut cloud = Vec::new();
        self.cloud
            .transformed_into(self.state.pen_pos, self.state.pen_quat, &mut cloud);
        OracleObs {
            q_hist,
            a_hist,
            tactile,
            fingertips,
            pen_state,
            cloud,
            phys: phys_observation(&self.params, &self.dr),
        }
    }

    /// Assemble the student's proprioceptive window: `q_{t-29..t}` and
    /// `a_{t-30..t-1}`, oldest first, zero-padded before step 30.
    pub fn observe_student(&mut self) -> StudentHistory {
        let len = self.cfg.hist_len_student;
        let mut out = StudentHistory::zeros(len);
        let steps = self.q_log.len(); // q entries available (incl. initial)
        for k in 0..len {
            // row k corresponds to time t - (len-1-k)
            let back = len - 1 - k;
            if back < steps {
                let qi = steps - 1 - back;
                for j in 0..N_JOINTS {
                    out.q_window[k * N_JOINTS + j] = (self.q_log[qi][j]
                        + gaussian_noise(&mut self.obs_rng, self.noise.obs_sigma))
                        as f32;
                }
            }
            // a window is shifted one step back: a_{t-30..t-1}
            let na = self.a_log.len();
            let back_a = len - k;
            if back_a <= na {
                let ai = na - back_a;
                for j in 0..N_JOINTS {
                    out.a_window[k * N_JOINTS + j] = self.a_log[ai][j] as f32;
                }
            }
        }
        out
    }
}

/// A batch of independent environments stepped in parallel. Results are
/// written into per-env slots, so the outcome is identical for any worker
/// count.
pub struct BatchEnv {
    pub envs: Vec<PenEnv>,
}

impl BatchEnv {
    pub fn new(envs: Vec<PenEnv>) -> BatchEnv {
        BatchEnv { envs }
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn reset_all(&mut self) -> Result<(), EnvError> {
        for env in &mut self.envs {
            env.reset()?;
        }
        Ok(())
    }

    /// Step every env with its policy output row; `actions` is `[n, 16]`
    /// row-major.
    pub fn par_step(&mut self, actions: &[f32]) -> Vec<StepOutcome> {
        let n = self.envs.len();
        assert_eq!(actions.len(), n * N_JOINTS);
        self.envs
            .par_iter_mut()
            .enumerate()
            .map(|(i, env)| env.step(&actions[i * N_JOINTS..(i + 1) * N_JOINTS]))
            .collect()
    }

    /// Flat oracle observations, `[n, obs_dim]` row-major.
    pub fn par_observe_oracle(&mut self, obs_dim: usize) -> Vec<f32> {
        let n = self.envs.len();
        let mut out = vec![0.0f32; n * obs_dim];
        let chunks: Vec<(usize, &mut PenEnv)> = self.envs.iter_mut().enumerate().collect();
        let rows: Vec<(usize, Vec<f32>)> = chunks
            .into_par_iter()
            .map(|(i, env)| {
                let obs = env.observe_oracle();
                let flat = obs.flatten(&env.cfg);
                (i, flat)
            })
            .collect();
        for (i, row) in rows {
            out[i * obs_dim..(i + 1) * obs_dim].copy_from_slice(&row);
        }
        out
    }
}
