//! Generalized advantage estimation.

/// Backward-recursive GAE over one environment's sequence.
///
/// `delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t`,
/// `A_t = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}`,
/// `returns = A + V`. `bootstrap_value` stands in for `V_{T}` at the end of
/// a truncated sequence.
pub fn compute_gae(
    rewards: &[f32],
    values: &[f32],
    bootstrap_value: f32,
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> (Vec<f32>, Vec<f32>) {
    assert_eq!(rewards.len(), values.len(), "gae input length mismatch");
    assert_eq!(rewards.len(), dones.len(), "gae input length mismatch");
    let t = rewards.len();
    let mut advantages = vec![0.0f32; t];
    let mut acc = 0.0f64;
    for i in (0..t).rev() {
        let not_done = if dones[i] { 0.0 } else { 1.0 };
        let next_value = if i + 1 < t {
            values[i + 1] as f64
        } else {
            bootstrap_value as f64
        };
        let delta = rewards[i] as f64 + gamma * next_value * not_done - values[i] as f64;
        acc = delta + gamma * lambda * not_done * acc;
        advantages[i] = acc as f32;
    }
    let returns = advantages
        .iter()
        .zip(values.iter())
        .map(|(a, v)| a + v)
        .collect();
    (advantages, returns)
}

/// In-place batch normalization to zero mean, unit std.
pub fn normalize_advantages(adv: &mut [f32]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().map(|v| *v as f64).sum::<f64>() / n;
    let var = adv.iter().map(|v| (*v as f64 - mean) * (*v as f64 - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var.sqrt() + 1e-8);
    for v in adv.iter_mut() {
        *v = ((*v as f64 - mean) * inv) as f32;
    }
}
