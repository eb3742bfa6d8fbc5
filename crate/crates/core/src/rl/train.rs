//! The oracle training driver: collect/update loop, learning curves,
//! checkpoints, and policy evaluation.

use super::{collect_rollout, ppo_update, EpisodeTracker, PPOConfig};
use crate::env::{
    BatchEnv, DomainRandomization, EnvConfig, EnvError, InitStateSet, PenEnv, ResetMode,
    RewardWeights, Termination,
};
use crate::eval::accumulated_z_rotation;
use crate::math::{Quat, Vec3};
use crate::nn::{AdamState, NnError, OraclePolicyNet, ValueNet};
use crate::sim::SimConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("network: {0}")]
    Nn(#[from] NnError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything needed to instantiate training environments.
#[derive(Clone)]
pub struct TrainEnvSetup {
    pub sim: SimConfig,
    pub env: EnvConfig,
    pub weights: RewardWeights,
    pub dr: DomainRandomization,
    pub init_set: Arc<InitStateSet>,
    pub reset_mode: ResetMode,
}

impl TrainEnvSetup {
    pub fn make_env(&self, seed: u64) -> PenEnv {
        PenEnv::new(
            self.sim.hand.clone(),
            self.sim.pen,
            self.sim.phys,
            self.env.clone(),
            self.weights,
            self.dr,
            Arc::clone(&self.init_set),
            self.reset_mode,
            seed,
        )
    }

    pub fn make_batch(&self, n_envs: usize, global_seed: u64) -> Result<BatchEnv, EnvError> {
        let mut envs = Vec::with_capacity(n_envs);
        for i in 0..n_envs {
            let mut env = self.make_env(crate::env_seed(global_seed, i));
            env.reset()?;
            envs.push(env);
        }
        Ok(BatchEnv::new(envs))
    }
}

/// File outputs of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainSink {
    /// CSV learning-curve path.
    pub curves: Option<PathBuf>,
    /// Directory for periodic and final checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
    /// Write a checkpoint every this many updates (0 = final only).
    pub checkpoint_every: usize,
    /// Print a progress line every this many updates (0 = silent).
    pub log_every: usize,
}

pub const CURVE_HEADER: &str = "update,agent_steps,mean_reward,mean_rot_reward,mean_duration_s,mean_rotation_rad,kl,lr,policy_loss,value_loss,entropy,r_rot,r_z,r_vel,r_diff,r_ang,r_torq,r_work,episodes";

/// Train the oracle with PPO. Returns the trained policy and value nets;
/// curves and checkpoints go to `sink`.
pub fn train_oracle(
    cfg: &PPOConfig,
    setup: &TrainEnvSetup,
    seed: u64,
    sink: &TrainSink,
) -> Result<(OraclePolicyNet, ValueNet), RlError> {
    let mut net_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e65_7430);
    let mut policy = OraclePolicyNet::new(&setup.env, &mut net_rng);
    let mut value = super::ValueFunction::new(ValueNet::new(&setup.env, &mut net_rng));
    let mut policy_opt = AdamState::new(&policy.params, cfg.lr_init);
    policy_opt.max_grad_norm = cfg.max_grad_norm;
    let mut value_opt = AdamState::new(&value.net.params, cfg.lr_init);
    value_opt.max_grad_norm = cfg.max_grad_norm;

    let mut batch = setup.make_batch(cfg.n_envs, seed)?;
    let mut sample_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7361_6d70);
    let mut update_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7570_6474);
    let mut tracker = EpisodeTracker::new(cfg.n_envs);

    let steps_per_update = (cfg.n_envs * cfg.horizon_steps) as u64;
    let n_updates = cfg.total_agent_steps.div_ceil(steps_per_update);

    let mut curves: Option<std::io::BufWriter<std::fs::File>> = match &sink.curves {
        Some(path) => {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
            writeln!(f, "{CURVE_HEADER}")?;
            Some(f)
        }
        None => None,
    };
    if let Some(dir) = &sink.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut recent: VecDeque<super::EpisodeRecord> = VecDeque::with_capacity(256);
    let started = std::time::Instant::now();

    for update in 0..n_updates {
        let buffer = collect_rollout(
            &mut batch,
            &policy,
            &value,
            cfg.horizon_steps,
            &setup.env,
            cfg.gamma,
            &mut sample_rng,
            &mut tracker,
        );
        let stats = ppo_update(
            &buffer,
            &mut policy,
            &mut value,
            &mut policy_opt,
            &mut value_opt,
            cfg,
            &setup.env,
            &mut update_rng,
        );
        for rec in tracker.completed.drain(..) {
            if recent.len() == 256 {
                recent.pop_front();
            }
            recent.push_back(rec);
        }

        let agent_steps = (update + 1) * steps_per_update;
        let n = recent.len().max(1) as f64;
        let mean_reward: f64 = recent.iter().map(|r| r.reward).sum::<f64>() / n;
        let mean_rot: f64 = recent.iter().map(|r| r.rot_reward).sum::<f64>() / n;
        let mean_dur: f64 = recent.iter().map(|r| r.duration_s()).sum::<f64>() / n;
        let mean_rotation: f64 = recent.iter().map(|r| r.rotation).sum::<f64>() / n;
        let mut term_means = [0.0f64; 7];
        for r in &recent {
            for (acc, t) in term_means.iter_mut().zip(r.term_means) {
                *acc += t;
            }
        }
        for t in term_means.iter_mut() {
            *t /= n;
        }

        if let Some(f) = curves.as_mut() {
            writeln!(
                f,
                "{},{},{:.6},{:.6},{:.4},{:.6},{:.6},{:.6e},{:.6},{:.6},{:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                update,
                agent_steps,
                mean_reward,
                mean_rot,
                mean_dur,
                mean_rotation,
                stats.approx_kl,
                stats.lr,
                stats.policy_loss,
                stats.value_loss,
                stats.entropy,
                term_means[0],
                term_means[1],
                term_means[2],
                term_means[3],
                term_means[4],
                term_means[5],
                term_means[6],
                recent.len(),
            )?;
        }

        if sink.log_every > 0 && (update as usize).is_multiple_of(sink.log_every) {
            eprintln!(
                "update {update}/{n_updates} steps {agent_steps} reward {mean_reward:.3} rot {mean_rotation:.3} rad dur {mean_dur:.2} s kl {:.4} lr {:.2e} ({:.0} s)",
                stats.approx_kl,
                stats.lr,
                started.elapsed().as_secs_f64(),
            );
        }

        if let Some(dir) = &sink.checkpoint_dir {
            let last = update + 1 == n_updates;
            let periodic =
                sink.checkpoint_every > 0 && (update as usize + 1).is_multiple_of(sink.checkpoint_every);
            if last || periodic {
                crate::nn::write_checkpoint(&policy.params, &dir.join("oracle_policy.ckpt"))?;
                crate::nn::write_checkpoint(&value.net.params, &dir.join("oracle_value.ckpt"))?;
            }
        }
    }
    if let Some(f) = curves.as_mut() {
        f.flush()?;
    }
    Ok((policy, value.net))
}

/// One evaluation episode's outcome.
#[derive(Debug, Clone, Copy)]
pub struct EvalEpisode {
    /// Accumulated z rotation recomputed from the pose sequence, rad.
    pub rotation: f64,
    pub duration_s: f64,
    pub reward: f64,
    pub fell: bool,
}

/// Run deterministic-action evaluation episodes in the training
/// distribution. Episode `k` uses a fresh env seeded from `seed + k`.
pub fn evaluate_policy(
    policy: &OraclePolicyNet,
    setup: &TrainEnvSetup,
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<EvalEpisode>, RlError> {
    let mut out = Vec::with_capacity(n_episodes);
    let obs_dim = crate::env::OracleObs::flat_dim(&setup.env);
    for k in 0..n_episodes {
        let mut env = setup.make_env(crate::env_seed(seed, 1_000_000 + k));
        env.reset()?;
        let mut poses: Vec<(Vec3, Quat)> = vec![(env.state().pen_pos, env.state().pen_quat)];
        let mut reward = 0.0;
        let mut steps = 0u32;
        let mut fell = false;
        loop {
            let mut obs = Vec::with_capacity(obs_dim);
            env.observe_oracle().flatten_into(&setup.env, &mut obs);
            let mean = policy.mean_batch(&obs, 1, &setup.env);
            let action: Vec<f32> = mean.row(0).to_vec();
            let outcome = env.step(&action);
            reward += outcome.reward.total;
            steps += 1;
            poses.push((env.state().pen_pos, env.state().pen_quat));
            match outcome.termination {
                Termination::Running => {}
                Termination::Fell | Termination::Invalid => {
                    fell = true;
                    break;
                }
                Termination::Timeout => break,
            }
        }
        let quats: Vec<Quat> = poses.iter().map(|(_, q)| *q).collect();
        let rotation = accumulated_z_rotation(&quats);
        out.push(EvalEpisode {
            rotation,
            duration_s: steps as f64 * 0.05,
            reward,
            fell,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{default_canonical_grasps, generate_init_states};
    use crate::sim::PhysParams;

    fn smoke_setup() -> TrainEnvSetup {
        let sim = SimConfig::default();
        let grasps = default_canonical_grasps(&sim.hand, &sim.pen);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let init_set = Arc::new(
            generate_init_states(&grasps, 1, &sim.hand, &sim.pen, &PhysParams::default(), &mut rng)
                .unwrap(),
        );
        TrainEnvSetup {
            sim,
            env: EnvConfig::default(),
            weights: RewardWeights::default(),
            dr: DomainRandomization::default(),
            init_set,
            reset_mode: ResetMode::UniformCanonical,
        }
    }

    #[test]
    fn smoke_training_produces_curves_and_checkpoint() {
        let setup = smoke_setup();
        let cfg = PPOConfig::smoke();
        let dir = std::env::temp_dir().join("dexspin_train_smoke");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let sink = TrainSink {
            curves: Some(dir.join("curves.csv")),
            checkpoint_dir: Some(dir.clone()),
            checkpoint_every: 0,
            log_every: 0,
        };
        let (policy, _) = train_oracle(&cfg, &setup, 7, &sink).unwrap();
        let text = std::fs::read_to_string(dir.join("curves.csv")).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        // header + 2 updates (192 steps / (8 envs * 12))
        assert_eq!(rows.len(), 3);
        assert!(rows[0].starts_with("update,agent_steps"));
        assert!(dir.join("oracle_policy.ckpt").exists());

        // checkpoint round-trips into a fresh net
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut fresh = OraclePolicyNet::new(&setup.env, &mut rng);
        crate::nn::read_checkpoint(&mut fresh.params, &dir.join("oracle_policy.ckpt")).unwrap();
        for ((_, a), (_, b)) in fresh.params.iter().zip(policy.params.iter()) {
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn same_seed_identical_curves() {
        let setup = smoke_setup();
        let cfg = PPOConfig::smoke();
        let dir = std::env::temp_dir().join("dexspin_train_det");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        for name in ["a.csv", "b.csv"] {
            let sink = TrainSink {
                curves: Some(dir.join(name)),
                checkpoint_dir: None,
                checkpoint_every: 0,
                log_every: 0,
            };
            train_oracle(&cfg, &setup, 99, &sink).unwrap();
        }
        let a = std::fs::read_to_string(dir.join("a.csv")).unwrap();
        let b = std::fs::read_to_string(dir.join("b.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn evaluation_runs_episodes() {
        let setup = smoke_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = OraclePolicyNet::new(&setup.env, &mut rng);
        let eps = evaluate_policy(&policy, &setup, 2, 123).unwrap();
        assert_eq!(eps.len(), 2);
        for e in &eps {
            assert!(e.duration_s > 0.0);
            assert!(e.rotation.is_finite());
        }
    }
}
