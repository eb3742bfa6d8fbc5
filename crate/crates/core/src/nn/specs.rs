//! The network zoo: oracle policy (PointNet encoder + MLP trunk), value
//! net, and the student's temporal-transformer policy.

use super::graph::{Graph, NodeId};
use super::params::{kaiming_uniform, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::env::EnvConfig;
use crate::sim::{CLOUD_POINTS, N_FINGERS, N_JOINTS};
use rand::Rng;

const RELU_GAIN: f32 = std::f32::consts::SQRT_2;

/// Per-column scaling of the non-cloud observation blocks, bringing meters
/// into roughly unit range. Order matches the flat layout.
fn rest_scales(cfg: &EnvConfig) -> Vec<f32> {
    let mut s = Vec::new();
    s.extend(std::iter::repeat(1.0).take(cfg.hist_len_oracle * N_JOINTS)); // q_hist
    s.extend(std::iter::repeat(1.0).take(cfg.hist_len_oracle * N_JOINTS)); // a_hist
    s.extend(std::iter::repeat(1.0).take(cfg.tactile_dim));
    s.extend(std::iter::repeat(5.0).take(N_FINGERS * 3)); // fingertips (m)
    s.extend([5.0, 5.0, 5.0, 1.0, 0.5, 0.5, 0.5]); // pen pos, heading, angvel
    s.extend(std::iter::repeat(1.0).take(6)); // phys, already in [-1,1]
    s
}

/// Cloud coordinates are meters; scale into ~unit range.
const CLOUD_SCALE: f32 = 5.0;

/// Dimension of the non-cloud part of the flat oracle observation.
pub fn oracle_rest_dim(cfg: &EnvConfig) -> usize {
    crate::env::OracleObs::flat_dim(cfg) - CLOUD_POINTS * 3
}

/// Split a flat `[B, obs_dim]` oracle observation batch into the non-cloud
/// part `[B, rest]` and the cloud `[B*points, 3]`.
pub fn split_oracle_obs(flat: &[f32], batch: usize, cfg: &EnvConfig) -> (Tensor, Tensor) {
    let obs_dim = crate::env::OracleObs::flat_dim(cfg);
    assert_eq!(flat.len(), batch * obs_dim);
    let (cloud_off, cloud_len) = crate::env::OracleObs::cloud_block(cfg);
    let rest_dim = obs_dim - cloud_len;
    let mut rest = Tensor::zeros(batch, rest_dim);
    let mut cloud = Tensor::zeros(batch * CLOUD_POINTS, 3);
    for b in 0..batch {
        let row = &flat[b * obs_dim..(b + 1) * obs_dim];
        rest.data[b * rest_dim..b * rest_dim + cloud_off].copy_from_slice(&row[..cloud_off]);
        rest.data[b * rest_dim + cloud_off..(b + 1) * rest_dim]
            .copy_from_slice(&row[cloud_off + cloud_len..]);
        cloud.data[b * cloud_len..(b + 1) * cloud_len]
            .copy_from_slice(&row[cloud_off..cloud_off + cloud_len]);
    }
    (rest, cloud)
}

struct LinearIds {
    w: ParamId,
    b: ParamId,
}

fn add_linear<R: Rng>(
    p: &mut ParamStore,
    rng: &mut R,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    gain: f32,
) -> LinearIds {
    let w = p.add(&format!("{name}.w"), kaiming_uniform(rng, fan_in, fan_out, gain));
    let b = p.add(&format!("{name}.b"), Tensor::zeros(1, fan_out));
    LinearIds { w, b }
}

/// Oracle policy: PointNet cloud encoder (per-point MLP 3-64-128 +
/// max-pool) concatenated with the flat blocks, MLP trunk 512-256-128, a
/// 16-d action mean head, and a state-independent log-std.
pub struct OraclePolicyNet {
    pub params: ParamStore,
    pn1: LinearIds,
    pn2: LinearIds,
    t1: LinearIds,
    t2: LinearIds,
    t3: LinearIds,
    head: LinearIds,
    pub log_std: ParamId,
    scales: Vec<f32>,
    pub rest_dim: usize,
}

impl OraclePolicyNet {
    pub fn new<R: Rng>(cfg: &EnvConfig, rng: &mut R) -> OraclePolicyNet {
        let rest_dim = oracle_rest_dim(cfg);
        let mut p = ParamStore::new();
        let pn1 = add_linear(&mut p, rng, "pointnet.0", 3, 64, RELU_GAIN);
        let pn2 = add_linear(&mut p, rng, "pointnet.1", 64, 128, RELU_GAIN);
        let t1 = add_linear(&mut p, rng, "trunk.0", rest_dim + 128, 512, RELU_GAIN);
        let t2 = add_linear(&mut p, rng, "trunk.1", 512, 256, RELU_GAIN);
        let t3 = add_linear(&mut p, rng, "trunk.2", 256, 128, RELU_GAIN);
        let head = add_linear(&mut p, rng, "head", 128, N_JOINTS, 0.01);
        let log_std = p.add("log_std", Tensor::full(1, N_JOINTS, -1.0));
        OraclePolicyNet {
            params: p,
            pn1,
            pn2,
            t1,
            t2,
            t3,
            head,
            log_std,
            scales: rest_scales(cfg),
            rest_dim,
        }
    }

    /// Build the forward pass; returns the `[B, 16]` action-mean node.
    pub fn forward(&self, g: &mut Graph, rest: NodeId, cloud: NodeId) -> NodeId {
        let cloud = g.scale(cloud, CLOUD_SCALE);
        let x = g.linear(cloud, self.pn1.w, Some(self.pn1.b));
        let x = g.relu(x);
        let x = g.linear(x, self.pn2.w, Some(self.pn2.b));
        let x = g.relu(x);
        let feat = g.max_pool_group(x, CLOUD_POINTS);

        let rest = g.col_scale(rest, &self.scales);
        let x = g.concat(&[rest, feat]);
        let x = g.linear(x, self.t1.w, Some(self.t1.b));
        let x = g.elu(x);
        let x = g.linear(x, self.t2.w, Some(self.t2.b));
        let x = g.elu(x);
        let x = g.linear(x, self.t3.w, Some(self.t3.b));
        let x = g.elu(x);
        g.linear(x, self.head.w, Some(self.head.b))
    }

    /// Rebuild the net around an existing parameter store with the same
    /// architecture (checkpoint loading, gradient checking).
    pub fn with_params(cfg: &EnvConfig, params: ParamStore) -> OraclePolicyNet {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut net = OraclePolicyNet::new(cfg, &mut rng);
        assert_eq!(net.params.spec_hash(), params.spec_hash(), "architecture mismatch");
        net.params = params;
        net
    }

    /// Mean actions for a flat observation batch (no graph kept).
    pub fn mean_batch(&self, flat: &[f32], batch: usize, cfg: &EnvConfig) -> Tensor {
        let (rest, cloud) = split_oracle_obs(flat, batch, cfg);
        let mut g = Graph::new(&self.params);
        let rest = g.input(rest);
        let cloud = g.input(cloud);
        let mean = self.forward(&mut g, rest, cloud);
        g.value(mean).clone()
    }

    pub fn log_std_values(&self) -> Vec<f32> {
        self.params.get(self.log_std).data.clone()
    }

    /// Clamp the log-std parameter into its allowed range (applied after
    /// optimizer steps).
    pub fn clamp_log_std(&mut self) {
        for v in &mut self.params.get_mut(self.log_std).data {
            *v = v.clamp(super::gaussian::LOG_STD_MIN, super::gaussian::LOG_STD_MAX);
        }
    }
}

/// Value network: the non-cloud observation through an MLP 512-256-128 to a
/// scalar. It shares no parameters (and no cloud encoder) with the policy.
pub struct ValueNet {
    pub params: ParamStore,
    t1: LinearIds,
    t2: LinearIds,
    t3: LinearIds,
    head: LinearIds,
    scales: Vec<f32>,
    pub rest_dim: usize,
}

impl ValueNet {
    pub fn new<R: Rng>(cfg: &EnvConfig, rng: &mut R) -> ValueNet {
        let rest_dim = oracle_rest_dim(cfg);
        let mut p = ParamStore::new();
        let t1 = add_linear(&mut p, rng, "value.0", rest_dim, 512, RELU_GAIN);
        let t2 = add_linear(&mut p, rng, "value.1", 512, 256, RELU_GAIN);
        let t3 = add_linear(&mut p, rng, "value.2", 256, 128, RELU_GAIN);
        let head = add_linear(&mut p, rng, "value.head", 128, 1, 1.0);
        ValueNet {
            params: p,
            t1,
            t2,
            t3,
            head,
            scales: rest_scales(cfg),
            rest_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, rest: NodeId) -> NodeId {
        let rest = g.col_scale(rest, &self.scales);
        let x = g.linear(rest, self.t1.w, Some(self.t1.b));
        let x = g.elu(x);
        let x = g.linear(x, self.t2.w, Some(self.t2.b));
        let x = g.elu(x);
        let x = g.linear(x, self.t3.w, Some(self.t3.b));
        let x = g.elu(x);
        g.linear(x, self.head.w, Some(self.head.b))
    }

    pub fn with_params(cfg: &EnvConfig, params: ParamStore) -> ValueNet {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut net = ValueNet::new(cfg, &mut rng);
        assert_eq!(net.params.spec_hash(), params.spec_hash(), "architecture mismatch");
        net.params = params;
        net
    }

    pub fn values_batch(&self, flat: &[f32], batch: usize, cfg: &EnvConfig) -> Vec<f32> {
        let (rest, _) = split_oracle_obs(flat, batch, cfg);
        let mut g = Graph::new(&self.params);
        let rest = g.input(rest);
        let v = self.forward(&mut g, rest);
        g.value(v).data.clone()
    }
}

/// Student policy: per-step 32-d proprio tokens embedded to 64-d with
/// sinusoidal position encoding, two pre-norm self-attention blocks (4
/// heads, width 64), mean-pool over the 30 tokens, MLP head 256-128 to 16
/// absolute joint targets.
pub struct StudentNet {
    pub params: ParamStore,
    embed: LinearIds,
    blocks: Vec<AttnBlockIds>,
    h1: LinearIds,
    h2: LinearIds,
    head: LinearIds,
    pub tokens: usize,
    pub heads: usize,
}

struct AttnBlockIds {
    ln_g: ParamId,
    ln_b: ParamId,
    q: LinearIds,
    k: LinearIds,
    v: LinearIds,
    out: LinearIds,
}

pub const STUDENT_WIDTH: usize = 64;
pub const STUDENT_HEADS: usize = 4;
pub const STUDENT_BLOCKS: usize = 2;

impl StudentNet {
    pub fn new<R: Rng>(cfg: &EnvConfig, rng: &mut R) -> StudentNet {
        let tokens = cfg.hist_len_student;
        let mut p = ParamStore::new();
        let embed = add_linear(&mut p, rng, "embed", 2 * N_JOINTS, STUDENT_WIDTH, 1.0);
        let mut blocks = Vec::new();
        for i in 0..STUDENT_BLOCKS {
            let ln_g = p.add(&format!("block{i}.ln.g"), Tensor::full(1, STUDENT_WIDTH, 1.0));
            let ln_b = p.add(&format!("block{i}.ln.b"), Tensor::zeros(1, STUDENT_WIDTH));
            let q = add_linear(&mut p, rng, &format!("block{i}.q"), STUDENT_WIDTH, STUDENT_WIDTH, 1.0);
            let k = add_linear(&mut p, rng, &format!("block{i}.k"), STUDENT_WIDTH, STUDENT_WIDTH, 1.0);
            let v = add_linear(&mut p, rng, &format!("block{i}.v"), STUDENT_WIDTH, STUDENT_WIDTH, 1.0);
            let out =
                add_linear(&mut p, rng, &format!("block{i}.out"), STUDENT_WIDTH, STUDENT_WIDTH, 1.0);
            blocks.push(AttnBlockIds {
                ln_g,
                ln_b,
                q,
                k,
                v,
                out,
            });
        }
        let h1 = add_linear(&mut p, rng, "head.0", STUDENT_WIDTH, 256, RELU_GAIN);
        let h2 = add_linear(&mut p, rng, "head.1", 256, 128, RELU_GAIN);
        let head = add_linear(&mut p, rng, "head.2", 128, N_JOINTS, 0.01);
        StudentNet {
            params: p,
            embed,
            blocks,
            h1,
            h2,
            head,
            tokens,
            heads: STUDENT_HEADS,
        }
    }

    pub fn with_params(cfg: &EnvConfig, params: ParamStore) -> StudentNet {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut net = StudentNet::new(cfg, &mut rng);
        assert_eq!(net.params.spec_hash(), params.spec_hash(), "architecture mismatch");
        net.params = params;
        net
    }

    /// `tokens_in` is `[B*tokens, 32]`; returns the `[B, 16]` action node.
    pub fn forward(&self, g: &mut Graph, tokens_in: NodeId) -> NodeId {
        let x = g.linear(tokens_in, self.embed.w, Some(self.embed.b));
        let mut x = g.pos_enc(x, self.tokens);
        for b in &self.blocks {
            let norm = g.layer_norm(x, b.ln_g, b.ln_b);
            let q = g.linear(norm, b.q.w, Some(b.q.b));
            let k = g.linear(norm, b.k.w, Some(b.k.b));
            let v = g.linear(norm, b.v.w, Some(b.v.b));
            let att = g.mhsa(q, k, v, self.heads, self.tokens);
            let att = g.linear(att, b.out.w, Some(b.out.b));
            x = g.add(x, att);
        }
        let pooled = g.mean_pool_group(x, self.tokens);
        let x = g.linear(pooled, self.h1.w, Some(self.h1.b));
        let x = g.elu(x);
        let x = g.linear(x, self.h2.w, Some(self.h2.b));
        let x = g.elu(x);
        g.linear(x, self.head.w, Some(self.head.b))
    }

    /// Actions for a batch of token matrices (`[B*tokens, 32]` flat).
    pub fn actions_batch(&self, tokens_flat: Vec<f32>, batch: usize) -> Tensor {
        let t = Tensor::from_vec(batch * self.tokens, 2 * N_JOINTS, tokens_flat);
        let mut g = Graph::new(&self.params);
        let x = g.input(t);
        let out = self.forward(&mut g, x);
        g.value(out).clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_counts_are_pinned() {
        let cfg = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let policy = OraclePolicyNet::new(&cfg, &mut rng);
        let value = ValueNet::new(&cfg, &mut rng);
        let student = StudentNet::new(&cfg, &mut rng);
        assert_eq!(policy.params.total_params(), 313_120);
        assert_eq!(value.params.total_params(), 237_057);
        assert_eq!(student.params.total_params(), 87_248);
    }

    #[test]
    fn point_encoder_is_permutation_invariant() {
        let cfg = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = OraclePolicyNet::new(&cfg, &mut rng);
        let obs_dim = crate::env::OracleObs::flat_dim(&cfg);
        let mut flat: Vec<f32> = (0..obs_dim).map(|i| ((i * 37 % 100) as f32) / 100.0 - 0.5).collect();
        let base = net.mean_batch(&flat, 1, &cfg);

        // permute the 100 cloud points (rows of 3)
        let (off, len) = crate::env::OracleObs::cloud_block(&cfg);
        let mut cloud: Vec<[f32; 3]> = flat[off..off + len]
            .chunks(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        // deterministic shuffle
        for i in (1..cloud.len()).rev() {
            cloud.swap(i, (i * 7919 + 13) % (i + 1));
        }
        for (i, p) in cloud.iter().enumerate() {
            flat[off + 3 * i..off + 3 * i + 3].copy_from_slice(p);
        }
        let perm = net.mean_batch(&flat, 1, &cfg);
        for (a, b) in base.data.iter().zip(perm.data.iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn forward_is_pure() {
        let cfg = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = ValueNet::new(&cfg, &mut rng);
        let obs_dim = crate::env::OracleObs::flat_dim(&cfg);
        let flat: Vec<f32> = (0..obs_dim * 3).map(|i| (i as f32 * 0.01).sin()).collect();
        let a = net.values_batch(&flat, 3, &cfg);
        let b = net.values_batch(&flat, 3, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn student_output_shape() {
        let cfg = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = StudentNet::new(&cfg, &mut rng);
        let tokens = vec![0.1f32; 2 * net.tokens * 2 * N_JOINTS];
        let out = net.actions_batch(tokens, 2);
        assert_eq!(out.rows, 2);
        assert_eq!(out.cols, N_JOINTS);
        assert!(out.is_finite());
    }

    #[test]
    fn zero_weight_mlp_outputs_bias() {
        let cfg = EnvConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = ValueNet::new(&cfg, &mut rng);
        // zero all weights, set the head bias
        for i in 0..net.params.len() {
            let t = net.params.get_mut(ParamId(i));
            t.data.fill(0.0);
        }
        let head_b = net.params.len() - 1;
        net.params.get_mut(ParamId(head_b)).data[0] = 0.75;
        let obs_dim = crate::env::OracleObs::flat_dim(&cfg);
        let flat = vec![0.3f32; obs_dim * 2];
        let v = net.values_batch(&flat, 2, &cfg);
        assert!(v.iter().all(|x| (*x - 0.75).abs() < 1e-7));
    }
}
