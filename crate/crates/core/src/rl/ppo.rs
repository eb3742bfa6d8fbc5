//! Clipped-surrogate PPO with adaptive-KL learning rate.

use super::{normalize_advantages, RolloutBuffer};
use crate::env::{BatchEnv, EnvConfig, OracleObs, Termination};
use crate::nn::{
    gaussian_entropy, gaussian_sample_and_logprob, split_oracle_obs, AdamState, GradStore, Graph,
    NodeId, OraclePolicyNet, Tensor, ValueNet,
};
use crate::sim::N_JOINTS;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// PPO hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PPOConfig {
    pub n_envs: usize,
    pub horizon_steps: usize,
    pub minibatch_size: usize,
    pub total_agent_steps: u64,
    pub gamma: f64,
    pub lambda_gae: f64,
    pub lr_init: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub kl_threshold: f64,
    pub max_grad_norm: f64,
    pub update_epochs: usize,
}

impl PPOConfig {
    /// Published training scale (declared, not executed at desk scale).
    pub fn paper() -> PPOConfig {
        PPOConfig {
            n_envs: 8192,
            horizon_steps: 12,
            minibatch_size: 16384,
            total_agent_steps: 500_000_000,
            gamma: 0.99,
            lambda_gae: 0.95,
            lr_init: 5e-3,
            clip: 0.2,
            entropy_coef: 0.0,
            kl_threshold: 0.02,
            max_grad_norm: 1.0,
            update_epochs: 5,
        }
    }

    /// Workstation scale.
    pub fn desk() -> PPOConfig {
        PPOConfig {
            n_envs: 256,
            minibatch_size: 3072,
            total_agent_steps: 5_000_000,
            ..PPOConfig::paper()
        }
    }

    /// Seconds-scale plumbing check.
    pub fn smoke() -> PPOConfig {
        PPOConfig {
            n_envs: 8,
            minibatch_size: 96,
            total_agent_steps: 192,
            ..PPOConfig::paper()
        }
    }
}

impl Default for PPOConfig {
    fn default() -> Self {
        PPOConfig::desk()
    }
}

/// Running first/second moments for value-target normalization, merged per
/// batch (Welford).
#[derive(Debug, Clone)]
pub struct RunningMeanStd {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for RunningMeanStd {
    fn default() -> Self {
        RunningMeanStd {
            mean: 0.0,
            var: 1.0,
            count: 1e-4,
        }
    }
}

impl RunningMeanStd {
    pub fn update(&mut self, batch: &[f32]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let bmean = batch.iter().map(|v| *v as f64).sum::<f64>() / n;
        let bvar = batch
            .iter()
            .map(|v| (*v as f64 - bmean) * (*v as f64 - bmean))
            .sum::<f64>()
            / n;
        let delta = bmean - self.mean;
        let tot = self.count + n;
        self.mean += delta * n / tot;
        let m2 = self.var * self.count + bvar * n + delta * delta * self.count * n / tot;
        self.var = m2 / tot;
        self.count = tot;
    }

    pub fn std(&self) -> f64 {
        (self.var + 1e-8).sqrt()
    }

    pub fn normalize(&self, x: f32) -> f32 {
        ((x as f64 - self.mean) / self.std()) as f32
    }

    pub fn denormalize(&self, v: f32) -> f32 {
        (v as f64 * self.std() + self.mean) as f32
    }
}

/// Value net plus the running normalization of its regression targets.
pub struct ValueFunction {
    pub net: ValueNet,
    pub norm: RunningMeanStd,
}

impl ValueFunction {
    pub fn new(net: ValueNet) -> ValueFunction {
        ValueFunction {
            net,
            norm: RunningMeanStd::default(),
        }
    }

    /// Denormalized state values.
    pub fn values_batch(&self, flat: &[f32], batch: usize, cfg: &EnvConfig) -> Vec<f32> {
        self.net
            .values_batch(flat, batch, cfg)
            .into_iter()
            .map(|v| self.norm.denormalize(v))
            .collect()
    }
}

/// Per-episode summary recorded when an episode finishes during collection.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeRecord {
    pub reward: f64,
    /// Sum of the weighted rotation term over the episode.
    pub rot_reward: f64,
    /// Net signed heading rotation, rad.
    pub rotation: f64,
    pub steps: u32,
    pub termination: Termination,
    /// Mean raw reward terms over the episode.
    pub term_means: [f64; 7],
}

impl EpisodeRecord {
    pub fn duration_s(&self) -> f64 {
        self.steps as f64 * 0.05
    }
}

/// Accumulates per-env episode statistics across rollouts.
pub struct EpisodeTracker {
    reward: Vec<f64>,
    rot_reward: Vec<f64>,
    rotation: Vec<f64>,
    steps: Vec<u32>,
    term_sums: Vec<[f64; 7]>,
    pub completed: Vec<EpisodeRecord>,
}

impl EpisodeTracker {
    pub fn new(n_envs: usize) -> EpisodeTracker {
        EpisodeTracker {
            reward: vec![0.0; n_envs],
            rot_reward: vec![0.0; n_envs],
            rotation: vec![0.0; n_envs],
            steps: vec![0; n_envs],
            term_sums: vec![[0.0; 7]; n_envs],
            completed: Vec::new(),
        }
    }

    fn on_step(&mut self, env: usize, outcome: &crate::env::StepOutcome, lambda_rot: f64) {
        self.reward[env] += outcome.reward.total;
        self.rot_reward[env] += lambda_rot * outcome.reward.r_rot;
        self.rotation[env] += outcome.heading_delta;
        self.steps[env] += 1;
        for (acc, term) in self.term_sums[env].iter_mut().zip(outcome.reward.terms()) {
            *acc += term;
        }
        if outcome.termination.is_done() {
            let steps = self.steps[env].max(1);
            let mut term_means = self.term_sums[env];
            for t in term_means.iter_mut() {
                *t /= steps as f64;
            }
            self.completed.push(EpisodeRecord {
                reward: self.reward[env],
                rot_reward: self.rot_reward[env],
                rotation: self.rotation[env],
                steps: self.steps[env],
                termination: outcome.termination,
                term_means,
            });
            self.reward[env] = 0.0;
            self.rot_reward[env] = 0.0;
            self.rotation[env] = 0.0;
            self.steps[env] = 0;
            self.term_sums[env] = [0.0; 7];
        }
    }
}

/// Roll every env forward `horizon` steps with stochastic actions,
/// auto-resetting finished episodes. Timeout (not fall) transitions carry a
/// value bootstrap folded into the stored reward so GAE stays pure.
pub fn collect_rollout<R: Rng>(
    batch: &mut BatchEnv,
    policy: &OraclePolicyNet,
    value: &ValueFunction,
    horizon: usize,
    env_cfg: &EnvConfig,
    gamma: f64,
    sample_rng: &mut R,
    tracker: &mut EpisodeTracker,
) -> RolloutBuffer {
    let n = batch.len();
    let obs_dim = OracleObs::flat_dim(env_cfg);
    let mut buffer = RolloutBuffer::new(n, horizon, obs_dim, N_JOINTS);
    let log_std = policy.log_std_values();
    let lambda_rot = 1.0; // rotation term weight used in episode stats

    for _ in 0..horizon {
        let obs = batch.par_observe_oracle(obs_dim);
        let means = policy.mean_batch(&obs, n, env_cfg);
        let values = value.values_batch(&obs, n, env_cfg);

        let mut actions = vec![0.0f32; n * N_JOINTS];
        let mut logps = vec![0.0f32; n];
        for e in 0..n {
            let (a, lp) = gaussian_sample_and_logprob(means.row(e), &log_std, false, sample_rng);
            actions[e * N_JOINTS..(e + 1) * N_JOINTS].copy_from_slice(&a);
            logps[e] = lp;
        }

        let outcomes = batch.par_step(&actions);

        let mut rewards = vec![0.0f32; n];
        let mut dones = vec![false; n];
        let mut terminations = vec![Termination::Running; n];
        for (e, out) in outcomes.iter().enumerate() {
            rewards[e] = out.reward.total as f32;
            dones[e] = out.termination.is_done();
            terminations[e] = out.termination;
            tracker.on_step(e, out, lambda_rot);
        }

        // Post-step values: bootstrap source for timeouts and for the final
        // slice.
        let next_obs = batch.par_observe_oracle(obs_dim);
        let next_values = value.values_batch(&next_obs, n, env_cfg);
        for e in 0..n {
            if terminations[e] == Termination::Timeout {
                rewards[e] += (gamma * next_values[e] as f64) as f32;
            }
        }

        buffer.push_slice(&obs, &actions, &logps, &rewards, &values, &dones, &terminations);
        buffer.bootstrap_values.copy_from_slice(&next_values);

        for (e, done) in dones.iter().enumerate() {
            if *done {
                batch.envs[e].reset().expect("reset after termination");
            }
        }
    }
    buffer
}

/// Statistics from one PPO update.
#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub lr: f64,
    pub grad_norm_policy: f64,
    pub grad_norm_value: f64,
    /// Set when a non-finite loss or gradient rejected part of the update.
    pub aborted: bool,
}

/// Build the clipped-surrogate policy loss (to MINIMIZE, already negated):
/// `-mean(min(ratio * adv, clip(ratio) * adv))`.
pub(crate) fn build_ppo_loss(
    g: &mut Graph,
    logp_new: NodeId,
    old_logp: Tensor,
    advantages: Tensor,
    clip: f64,
) -> NodeId {
    let old = g.input(old_logp);
    let diff = g.sub(logp_new, old);
    // guard the exponent; ratios beyond e^20 are degenerate anyway
    let diff = g.clamp(diff, -20.0, 20.0);
    let ratio = g.exp(diff);
    let adv = g.input(advantages);
    let surr1 = g.mul_elem(ratio, adv);
    let clipped = g.clamp(ratio, (1.0 - clip) as f32, (1.0 + clip) as f32);
    let surr2 = g.mul_elem(clipped, adv);
    let min = g.min_pair(surr1, surr2);
    let mean = g.mean_all(min);
    g.scale(mean, -1.0)
}

/// Fixed gradient-accumulation chunk; independent of worker count.
const GRAD_CHUNK: usize = 512;

struct MinibatchStats {
    policy_loss: f64,
    value_loss: f64,
    kl: f64,
    clip_frac: f64,
    finite: bool,
}

#[allow(clippy::too_many_arguments)]
fn minibatch_grads(
    buffer: &RolloutBuffer,
    idx: &[usize],
    advantages: &[f32],
    returns: &[f32],
    policy: &OraclePolicyNet,
    value: &ValueNet,
    env_cfg: &EnvConfig,
    clip: f64,
    pgrads: &mut GradStore,
    vgrads: &mut GradStore,
) -> MinibatchStats {
    let mb = idx.len();
    let mut stats = MinibatchStats {
        policy_loss: 0.0,
        value_loss: 0.0,
        kl: 0.0,
        clip_frac: 0.0,
        finite: true,
    };
    let mut start = 0;
    while start < mb {
        let end = (start + GRAD_CHUNK).min(mb);
        let chunk = &idx[start..end];
        let m = chunk.len();
        let weight = m as f32 / mb as f32;

        let mut obs = Vec::with_capacity(m * buffer.obs_dim);
        let mut acts = Vec::with_capacity(m * buffer.act_dim);
        let mut old_lp = Vec::with_capacity(m);
        let mut adv = Vec::with_capacity(m);
        let mut ret = Vec::with_capacity(m);
        for &i in chunk {
            obs.extend_from_slice(buffer.obs_row(i));
            acts.extend_from_slice(buffer.action_row(i));
            old_lp.push(buffer.logp[i]);
            adv.push(advantages[i]);
            ret.push(returns[i]);
        }

        // policy side
        {
            let (rest, cloud) = split_oracle_obs(&obs, m, env_cfg);
            let mut g = Graph::new(&policy.params);
            let rest = g.input(rest);
            let cloud = g.input(cloud);
            let mean = policy.forward(&mut g, rest, cloud);
            let actions_t = Tensor::from_vec(m, N_JOINTS, acts.clone());
            let logp = g.gaussian_log_prob(mean, policy.log_std, actions_t);
            // stats before loss
            let logp_v = g.value(logp).data.clone();
            let mut kl = 0.0f64;
            let mut clip_count = 0usize;
            for (lp_new, lp_old) in logp_v.iter().zip(old_lp.iter()) {
                kl += (*lp_old as f64 - *lp_new as f64).max(-100.0).min(100.0);
                let ratio = ((lp_new - lp_old) as f64).exp();
                if (ratio - 1.0).abs() > clip {
                    clip_count += 1;
                }
            }
            stats.kl += kl / mb as f64;
            stats.clip_frac += clip_count as f64 / mb as f64;

            let loss = build_ppo_loss(
                &mut g,
                logp,
                Tensor::from_vec(m, 1, old_lp.clone()),
                Tensor::from_vec(m, 1, adv.clone()),
                clip,
            );
            let lv = g.value(loss).data[0] as f64;
            if !lv.is_finite() {
                stats.finite = false;
            }
            stats.policy_loss += lv * weight as f64;
            let scaled = g.scale(loss, weight);
            g.backward(scaled, pgrads);
        }

        // value side
        {
            let (rest, _) = split_oracle_obs(&obs, m, env_cfg);
            let mut g = Graph::new(&value.params);
            let rest = g.input(rest);
            let v = value.forward(&mut g, rest);
            let target = g.input(Tensor::from_vec(m, 1, ret.clone()));
            let d = g.sub(v, target);
            let sq = g.mul_elem(d, d);
            let mse = g.mean_all(sq);
            let loss = g.scale(mse, 0.5);
            let lv = g.value(loss).data[0] as f64;
            if !lv.is_finite() {
                stats.finite = false;
            }
            stats.value_loss += lv * weight as f64;
            let scaled = g.scale(loss, weight);
            g.backward(scaled, vgrads);
        }

        start = end;
    }
    stats
}

/// One PPO update over a full rollout buffer: `update_epochs` passes of
/// shuffled minibatches, adaptive-KL learning rate after each epoch.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<R: Rng>(
    buffer: &RolloutBuffer,
    policy: &mut OraclePolicyNet,
    value: &mut ValueFunction,
    policy_opt: &mut AdamState,
    value_opt: &mut AdamState,
    cfg: &PPOConfig,
    env_cfg: &EnvConfig,
    rng: &mut R,
) -> TrainStats {
    let (mut advantages, returns) = buffer.gae(cfg.gamma, cfg.lambda_gae);
    normalize_advantages(&mut advantages);
    // the value net regresses normalized returns
    value.norm.update(&returns);
    let norm_returns: Vec<f32> = returns.iter().map(|r| value.norm.normalize(*r)).collect();

    let total = buffer.len();
    let mut indices: Vec<usize> = (0..total).collect();
    let mut stats = TrainStats {
        lr: policy_opt.lr,
        entropy: gaussian_entropy(&policy.log_std_values()) as f64,
        ..TrainStats::default()
    };
    let mut minibatches_done = 0usize;

    for _epoch in 0..cfg.update_epochs {
        indices.shuffle(rng);
        let mut epoch_kl = 0.0;
        let mut epoch_minibatches = 0usize;
        for mb_idx in indices.chunks(cfg.minibatch_size.min(total)) {
            let mut pgrads = GradStore::zeros_like(&policy.params);
            let mut vgrads = GradStore::zeros_like(&value.net.params);
            let mb_stats = minibatch_grads(
                buffer,
                mb_idx,
                &advantages,
                &norm_returns,
                policy,
                &value.net,
                env_cfg,
                cfg.clip,
                &mut pgrads,
                &mut vgrads,
            );
            if !mb_stats.finite {
                stats.aborted = true;
                continue;
            }
            match policy_opt.update(&mut policy.params, &mut pgrads) {
                Ok(norm) => stats.grad_norm_policy = norm,
                Err(_) => {
                    stats.aborted = true;
                    continue;
                }
            }
            policy.clamp_log_std();
            match value_opt.update(&mut value.net.params, &mut vgrads) {
                Ok(norm) => stats.grad_norm_value = norm,
                Err(_) => stats.aborted = true,
            }
            stats.policy_loss += mb_stats.policy_loss;
            stats.value_loss += mb_stats.value_loss;
            stats.clip_frac += mb_stats.clip_frac;
            epoch_kl += mb_stats.kl;
            epoch_minibatches += 1;
            minibatches_done += 1;
        }
        if epoch_minibatches == 0 {
            continue;
        }
        let kl = epoch_kl / epoch_minibatches as f64;
        stats.approx_kl = kl;
        // adaptive learning rate around the KL target
        let mut lr = policy_opt.lr;
        if kl > 2.0 * cfg.kl_threshold {
            lr /= 1.5;
        } else if kl < 0.5 * cfg.kl_threshold {
            lr *= 1.5;
        }
        lr = lr.clamp(1e-6, 1e-2);
        policy_opt.lr = lr;
        value_opt.lr = lr;
    }
    if minibatches_done > 0 {
        stats.policy_loss /= minibatches_done as f64;
        stats.value_loss /= minibatches_done as f64;
        stats.clip_frac /= minibatches_done as f64;
    }
    stats.lr = policy_opt.lr;
    stats.entropy = gaussian_entropy(&policy.log_std_values()) as f64;
    stats
}
