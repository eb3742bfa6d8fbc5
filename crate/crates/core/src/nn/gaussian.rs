//! Diagonal-Gaussian action head: sampling and log density outside the
//! graph (the differentiable path lives in `Graph::gaussian_log_prob`).

use super::randn;
use rand::Rng;

/// Clamp range for the learnable log standard deviation.
pub const LOG_STD_MIN: f32 = -5.0;
pub const LOG_STD_MAX: f32 = 1.0;

/// Sample `a = mean + exp(log_std) * xi` and return its log density.
/// `deterministic` returns the mean.
pub fn gaussian_sample_and_logprob<R: Rng>(
    mean: &[f32],
    log_std: &[f32],
    deterministic: bool,
    rng: &mut R,
) -> (Vec<f32>, f32) {
    let d = mean.len();
    let mut action = Vec::with_capacity(d);
    for i in 0..d {
        let ls = log_std[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
        let noise = if deterministic { 0.0 } else { randn(rng) };
        action.push(mean[i] + ls.exp() * noise);
    }
    let logp = gaussian_log_prob(mean, log_std, &action);
    (action, logp)
}

/// Log density of `action` under the diagonal Gaussian.
pub fn gaussian_log_prob(mean: &[f32], log_std: &[f32], action: &[f32]) -> f32 {
    let d = mean.len();
    let mut acc = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
    for i in 0..d {
        let ls = log_std[i].clamp(LOG_STD_MIN, LOG_STD_MAX) as f64;
        let sigma = ls.exp();
        let z = (action[i] as f64 - mean[i] as f64) / sigma;
        acc += -0.5 * z * z - ls;
    }
    acc as f32
}

/// Closed-form entropy of the diagonal Gaussian.
pub fn gaussian_entropy(log_std: &[f32]) -> f32 {
    let d = log_std.len() as f64;
    let sum_ls: f64 = log_std
        .iter()
        .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX) as f64)
        .sum();
    (0.5 * d * (1.0 + (2.0 * std::f64::consts::PI).ln()) + sum_ls) as f32
}
