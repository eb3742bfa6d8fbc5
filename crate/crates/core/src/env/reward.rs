//! Task reward: rotation velocity about z, pen-horizontality penalty, and
//! energy penalty terms.

use super::{EnvConfig, RewardBreakdown, RewardWeights};
use crate::sim::{PenShape, SimState, StepAggregates};

/// Compute the per-step reward from the post-step state and the control
/// step's torque/work aggregates.
///
/// Raw terms are all non-negative; the weights carry the penalty signs.
pub fn compute_reward(
    state_after: &SimState,
    aggregates: &StepAggregates,
    q_init: &[f64],
    pen: &PenShape,
    weights: &RewardWeights,
    cfg: &EnvConfig,
) -> RewardBreakdown {
    let omega = state_after.pen_angvel;

    let r_rot = omega.z.clamp(0.0, cfg.omega_max);

    let shape = pen; // endpoints scale with the episode shape via caller
    let (e1, e2) = state_after.pen_endpoints(shape);
    let r_z = (e1.z - e2.z).abs();

    let r_vel = state_after.pen_linvel.norm_sq();

    let r_diff: f64 = state_after
        .q
        .iter()
        .zip(q_init.iter())
        .map(|(q, q0)| (q - q0) * (q - q0))
        .sum();

    let speed = omega.norm();
    let over = (speed - cfg.omega_penalty_threshold).max(0.0);
    let r_ang = over * over;

    let r_torq: f64 = aggregates.mean_torque.iter().map(|t| t * t).sum();

    let r_work = aggregates.work_pos;

    let mut out = RewardBreakdown {
        r_rot,
        r_z,
        r_vel,
        r_diff,
        r_ang,
        r_torq,
        r_work,
        total: 0.0,
    };
    out.total = out.weighted_total(weights);
    out
}
