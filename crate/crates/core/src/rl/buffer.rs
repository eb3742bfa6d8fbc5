//! On-policy rollout storage.

use crate::env::Termination;

/// Fixed-capacity rollout of `n_envs * horizon` transitions, time-major.
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub horizon: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// `[t][env]` flattened rows.
    pub obs: Vec<f32>,
    pub actions: Vec<f32>,
    pub logp: Vec<f32>,
    pub rewards: Vec<f32>,
    pub values: Vec<f32>,
    pub dones: Vec<bool>,
    pub terminations: Vec<Termination>,
    /// Value of the state after the last stored step, per env.
    pub bootstrap_values: Vec<f32>,
    len_steps: usize,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, horizon: usize, obs_dim: usize, act_dim: usize) -> RolloutBuffer {
        let cap = n_envs * horizon;
        RolloutBuffer {
            n_envs,
            horizon,
            obs_dim,
            act_dim,
            obs: vec![0.0; cap * obs_dim],
            actions: vec![0.0; cap * act_dim],
            logp: vec![0.0; cap],
            rewards: vec![0.0; cap],
            values: vec![0.0; cap],
            dones: vec![false; cap],
            terminations: vec![Termination::Running; cap],
            bootstrap_values: vec![0.0; n_envs],
            len_steps: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.n_envs * self.horizon
    }

    pub fn is_full(&self) -> bool {
        self.len_steps == self.horizon
    }

    pub fn len(&self) -> usize {
        self.len_steps * self.n_envs
    }

    pub fn is_empty(&self) -> bool {
        self.len_steps == 0
    }

    /// Append one time slice (all envs at once).
    #[allow(clippy::too_many_arguments)]
    pub fn push_slice(
        &mut self,
        obs: &[f32],
        actions: &[f32],
        logp: &[f32],
        rewards: &[f32],
        values: &[f32],
        dones: &[bool],
        terminations: &[Termination],
    ) {
        assert!(self.len_steps < self.horizon, "rollout buffer full");
        let t = self.len_steps;
        let n = self.n_envs;
        self.obs[t * n * self.obs_dim..(t + 1) * n * self.obs_dim].copy_from_slice(obs);
        self.actions[t * n * self.act_dim..(t + 1) * n * self.act_dim].copy_from_slice(actions);
        self.logp[t * n..(t + 1) * n].copy_from_slice(logp);
        self.rewards[t * n..(t + 1) * n].copy_from_slice(rewards);
        self.values[t * n..(t + 1) * n].copy_from_slice(values);
        self.dones[t * n..(t + 1) * n].copy_from_slice(dones);
        self.terminations[t * n..(t + 1) * n].copy_from_slice(terminations);
        self.len_steps += 1;
    }

    /// Per-env reward/value/done sequences -> flat advantage and return
    /// arrays in `[t][env]` order.
    pub fn gae(&self, gamma: f64, lambda: f64) -> (Vec<f32>, Vec<f32>) {
        assert!(self.is_full(), "gae on a partial buffer");
        let n = self.n_envs;
        let t = self.horizon;
        let mut advantages = vec![0.0f32; n * t];
        let mut returns = vec![0.0f32; n * t];
        for e in 0..n {
            let rewards: Vec<f32> = (0..t).map(|i| self.rewards[i * n + e]).collect();
            let values: Vec<f32> = (0..t).map(|i| self.values[i * n + e]).collect();
            let dones: Vec<bool> = (0..t).map(|i| self.dones[i * n + e]).collect();
            let (a, r) =
                super::compute_gae(&rewards, &values, self.bootstrap_values[e], &dones, gamma, lambda);
            for i in 0..t {
                advantages[i * n + e] = a[i];
                returns[i * n + e] = r[i];
            }
        }
        (advantages, returns)
    }

    pub fn obs_row(&self, idx: usize) -> &[f32] {
        &self.obs[idx * self.obs_dim..(idx + 1) * self.obs_dim]
    }

    pub fn action_row(&self, idx: usize) -> &[f32] {
        &self.actions[idx * self.act_dim..(idx + 1) * self.act_dim]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_is_envs_times_horizon() {
        let b = RolloutBuffer::new(256, 12, 8, 4);
        assert_eq!(b.capacity(), 3072);
        assert!(!b.is_full());
    }

    #[test]
    fn fills_and_reports_full() {
        let mut b = RolloutBuffer::new(2, 3, 1, 1);
        for t in 0..3 {
            b.push_slice(
                &[t as f32, t as f32],
                &[0.0, 0.0],
                &[0.0, 0.0],
                &[1.0, 2.0],
                &[0.0, 0.0],
                &[false, false],
                &[Termination::Running, Termination::Running],
            );
        }
        assert!(b.is_full());
        assert_eq!(b.len(), 6);
        assert_eq!(b.obs_row(2), &[1.0]);
    }

    #[test]
    fn per_env_gae_respects_done_boundaries() {
        let mut b = RolloutBuffer::new(2, 2, 1, 1);
        // env 0: done at t=0; env 1: never done
        b.push_slice(
            &[0.0, 0.0],
            &[0.0, 0.0],
            &[0.0, 0.0],
            &[1.0, 1.0],
            &[0.0, 0.0],
            &[true, false],
            &[Termination::Fell, Termination::Running],
        );
        b.push_slice(
            &[0.0, 0.0],
            &[0.0, 0.0],
            &[0.0, 0.0],
            &[1.0, 1.0],
            &[0.0, 0.0],
            &[false, false],
            &[Termination::Running, Termination::Running],
        );
        b.bootstrap_values = vec![10.0, 10.0];
        let (adv, _) = b.gae(1.0, 1.0);
        // env0 t0: done -> delta = 1 - 0 = 1 (no bootstrap across boundary)
        assert!((adv[0] - 1.0).abs() < 1e-6);
        // env1 t0: 1 + 1 + 10 = 12 with gamma=lambda=1
        assert!((adv[1] - 12.0).abs() < 1e-6);
    }
}
