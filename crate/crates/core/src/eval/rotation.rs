//! Accumulated z-axis rotation of the pen's long-axis heading.

use crate::math::{vec3, wrap_angle, Quat};

/// Heading angle of the pen's long axis projected to the horizontal plane.
/// Returns `None` when the pen is near-vertical (undefined heading).
pub fn heading_angle(q: Quat) -> Option<f64> {
    let axis = q.rotate(vec3(1.0, 0.0, 0.0));
    let norm_sq = axis.x * axis.x + axis.y * axis.y;
    if norm_sq < 1e-12 {
        None
    } else {
        Some(axis.y.atan2(axis.x))
    }
}

/// Signed accumulated rotation about z over a pose sequence: the wrap-safe
/// sum of per-step heading deltas, reported as its positive part in the
/// task's spin direction (+z).
///
/// Consecutive orientation deltas must stay below pi (20 Hz control
/// guarantees this by a wide margin). Near-vertical poses carry the
/// previous heading forward.
pub fn accumulated_z_rotation(quats: &[Quat]) -> f64 {
    if quats.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut prev = heading_angle(quats[0]);
    for q in &quats[1..] {
        let cur = heading_angle(*q);
        if let (Some(p), Some(c)) = (prev, cur) {
            total += wrap_angle(c - p);
        }
        if cur.is_some() {
            prev = cur;
        }
    }
    total.max(0.0)
}

/// Signed variant (no positive-part clamp), used internally by harvesting
/// diagnostics.
pub fn signed_z_rotation(quats: &[Quat]) -> f64 {
    if quats.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut prev = heading_angle(quats[0]);
    for q in &quats[1..] {
        let cur = heading_angle(*q);
        if let (Some(p), Some(c)) = (prev, cur) {
            total += wrap_angle(c - p);
        }
        if cur.is_some() {
            prev = cur;
        }
    }
    total
}

/// Success criterion: at least a half turn.
pub fn success(rr: f64) -> bool {
    rr >= std::f64::consts::PI
}
