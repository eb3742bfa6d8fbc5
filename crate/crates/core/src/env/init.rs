//! Canonical grasps and the noisy initial-state generator.
//!
//! Six canonical keyframes cover the gaiting cycle: the pen held horizontal
//! at yaws 0..150 degrees in 30-degree steps, caged by the four fingertips
//! pressing from below and the sides. Episode initial states are noisy
//! variants of these keyframes that survive a short hold-still stability
//! simulation.

use super::{randomize::gaussian_noise, EnvError};
use crate::math::{vec3, Quat, Vec3};
use crate::sim::{
    control_step, forward_kinematics_full, HandModel, PenShape, PhysParams, SimState,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Number of canonical grasp families.
pub const N_CANONICAL: usize = 6;

/// One hand-designed keyframe of the gaiting cycle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanonicalGrasp {
    pub q: Vec<f64>,
    pub pen_pos: Vec3,
    pub pen_quat: Quat,
}

impl CanonicalGrasp {
    pub fn to_state(&self) -> SimState {
        SimState::new(self.q.clone(), self.pen_pos, self.pen_quat)
    }
}

/// An accepted initial state with its provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitState {
    pub q: Vec<f64>,
    pub pen_pos: Vec3,
    pub pen_quat: Quat,
    /// Canonical family id, 0..N_CANONICAL.
    pub family: usize,
}

impl InitState {
    pub fn to_state(&self) -> SimState {
        SimState::new(self.q.clone(), self.pen_pos, self.pen_quat)
    }
}

/// The filtered initial-state set used by episode resets.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InitStateSet {
    pub states: Vec<InitState>,
    /// Acceptance rate of the noisy draws, per canonical family.
    pub acceptance_rates: Vec<f64>,
}

impl InitStateSet {
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn families(&self) -> usize {
        self.states.iter().map(|s| s.family + 1).max().unwrap_or(0)
    }

    pub fn of_family(&self, family: usize) -> Vec<&InitState> {
        self.states.iter().filter(|s| s.family == family).collect()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("init set serializes")
    }

    pub fn from_toml_str(s: &str) -> Result<InitStateSet, toml::de::Error> {
        toml::from_str(s)
    }
}

/// Damped least-squares IK: move one finger's tip to `target`.
fn finger_ik(hand: &HandModel, finger: usize, seed: &[f64; 4], target: Vec3) -> [f64; 4] {
    let jp = hand.joints_per_finger;
    let mut q_full = vec![0.0; hand.total_dof()];
    q_full[finger * jp..finger * jp + 4].copy_from_slice(seed);
    for _ in 0..60 {
        let frames = forward_kinematics_full(&q_full, hand).expect("fk");
        let fr = &frames[finger];
        let err = target - fr.tip_pos;
        if err.norm() < 1e-5 {
            break;
        }
        // J^T (J J^T + lambda I)^-1 err
        let cols: Vec<Vec3> = (0..jp).map(|j| fr.jacobian_column(j, fr.tip_pos)).collect();
        let mut jjt = [[0.0f64; 3]; 3];
        for c in &cols {
            let v = c.to_array();
            for (i, vi) in v.iter().enumerate() {
                for (k, vk) in v.iter().enumerate() {
                    jjt[i][k] += vi * vk;
                }
            }
        }
        let lambda = 1e-4;
        for (i, row) in jjt.iter_mut().enumerate() {
            row[i] += lambda;
        }
        let rhs = err.to_array();
        let sol = solve3(jjt, rhs);
        let sol = vec3(sol[0], sol[1], sol[2]);
        for j in 0..jp {
            let dq = cols[j].dot(sol);
            let idx = finger * jp + j;
            let (lo, hi) = hand.joint_limits[idx];
            q_full[idx] = (q_full[idx] + 0.8 * dq).clamp(lo, hi);
        }
    }
    let mut out = [0.0; 4];
    out.copy_from_slice(&q_full[finger * jp..finger * jp + 4]);
    out
}

/// Gaussian elimination with partial pivoting for a 3x3 system.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let mut piv = col;
        for r in col + 1..3 {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        if d.abs() < 1e-15 {
            continue;
        }
        for r in col + 1..3 {
            let f = a[r][col] / d;
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let mut s = b[r];
        for c in r + 1..3 {
            s -= a[r][c] * x[c];
        }
        x[r] = if a[r][r].abs() < 1e-15 { 0.0 } else { s / a[r][r] };
    }
    x
}

/// Parameters of the procedural grasp authoring.
#[derive(Debug, Clone, Copy)]
pub struct GraspDesign {
    /// Pen center height above the palm.
    pub pen_height: f64,
    /// Radius of the ring of natural fingertip workspace centers.
    pub workspace_radius: f64,
    /// Angle below the horizontal at which fingertips press the pen, rad.
    pub press_angle: f64,
    /// Contact preload: how deep the tip target sits inside touching
    /// distance, m.
    pub preload: f64,
    /// Keep contacts this far away from the capsule end caps, m.
    pub cap_margin: f64,
}

impl Default for GraspDesign {
    fn default() -> Self {
        GraspDesign {
            pen_height: 0.065,
            workspace_radius: 0.045,
            press_angle: 0.85,
            preload: 0.0005,
            cap_margin: 0.012,
        }
    }
}

/// Author one canonical grasp: pen horizontal at the given yaw, each finger
/// placed on the nearest reachable patch of the pen surface, pressing from
/// below-side.
pub fn author_grasp(
    hand: &HandModel,
    pen: &PenShape,
    design: &GraspDesign,
    yaw: f64,
) -> CanonicalGrasp {
    let pen_pos = vec3(0.0, 0.0, design.pen_height);
    let pen_quat = Quat::from_axis_angle(Vec3::Z, yaw);
    let axis = pen_quat.rotate(vec3(1.0, 0.0, 0.0));
    let hl = pen.half_segment() - design.cap_margin;
    let touch = pen.radius + hand.fingertip_radius - design.preload;

    let jp = hand.joints_per_finger;
    let mut q = vec![0.0; hand.total_dof()];
    for f in 0..hand.n_fingers {
        let base = hand.finger_base_poses[f].pos;
        let w = vec3(
            base.x / base.norm() * design.workspace_radius,
            base.y / base.norm() * design.workspace_radius,
            design.pen_height,
        );
        // nearest axial station on the pen segment
        let s = (w - pen_pos).dot(axis).clamp(-hl, hl);
        let station = pen_pos + axis * s;
        // horizontal direction from the pen axis toward this finger
        let mut out_dir = w - station;
        out_dir.z = 0.0;
        let out_dir = if out_dir.norm() < 1e-6 {
            vec3(base.x, base.y, 0.0).normalized()
        } else {
            out_dir.normalized()
        };
        // press from below-side
        let press = (out_dir * design.press_angle.cos()
            - vec3(0.0, 0.0, design.press_angle.sin()))
        .normalized();
        let target = station + press * touch;
        let seed = [0.0, 0.8, 0.7, 0.4];
        let sol = finger_ik(hand, f, &seed, target);
        q[f * jp..f * jp + 4].copy_from_slice(&sol);
    }
    CanonicalGrasp {
        q,
        pen_pos,
        pen_quat,
    }
}

/// The six canonical keyframes: pen yaw 0..150 degrees in 30-degree steps.
pub fn default_canonical_grasps(hand: &HandModel, pen: &PenShape) -> Vec<CanonicalGrasp> {
    let design = GraspDesign::default();
    (0..N_CANONICAL)
        .map(|k| {
            author_grasp(
                hand,
                pen,
                &design,
                k as f64 * std::f64::consts::PI / N_CANONICAL as f64,
            )
        })
        .collect()
}

fn pen_tilt(quat: Quat) -> f64 {
    let axis = quat.rotate(vec3(1.0, 0.0, 0.0));
    axis.z.clamp(-1.0, 1.0).asin()
}

/// Hold the hand still for 0.5 s (10 control steps). Accept iff the pen
/// center drops less than 1 cm and the pen tilt changes less than 0.2 rad;
/// on acceptance return the settled state (velocities zeroed) so episodes
/// start from an equilibrium instead of a spring-loaded pose.
pub fn settle_state(
    state: &SimState,
    hand: &HandModel,
    pen: &PenShape,
    params: &PhysParams,
) -> Option<SimState> {
    let targets = state.q.clone();
    let z0 = state.pen_pos.z;
    let tilt0 = pen_tilt(state.pen_quat);
    let mut cur = state.clone();
    for _ in 0..10 {
        match control_step(&cur, &targets, Vec3::ZERO, params, hand, pen) {
            Ok((next, _)) => cur = next,
            Err(_) => return None,
        }
    }
    let dropped = z0 - cur.pen_pos.z;
    let tilt_change = (pen_tilt(cur.pen_quat) - tilt0).abs();
    if dropped < 0.01 && tilt_change < 0.2 {
        let mut settled = cur;
        settled.qdot.fill(0.0);
        settled.pen_linvel = Vec3::ZERO;
        settled.pen_angvel = Vec3::ZERO;
        settled.t_step = 0;
        settled.contacts.clear();
        Some(settled)
    } else {
        None
    }
}

/// Boolean view of [`settle_state`].
pub fn stability_filter(
    state: &SimState,
    hand: &HandModel,
    pen: &PenShape,
    params: &PhysParams,
) -> bool {
    settle_state(state, hand, pen, params).is_some()
}

/// Joint noise sigma for initial-state synthesis, rad.
const INIT_JOINT_SIGMA: f64 = 0.05;
/// Pen position noise sigma, m.
const INIT_POS_SIGMA: f64 = 0.005;
/// Pen orientation noise sigma (per-axis small-angle), rad.
const INIT_ROT_SIGMA: f64 = 0.05;

/// Generate the filtered initial-state set: for each canonical grasp, the
/// grasp itself plus `n_per` accepted noisy variants.
pub fn generate_init_states<R: Rng>(
    canonical: &[CanonicalGrasp],
    n_per: usize,
    hand: &HandModel,
    pen: &PenShape,
    params: &PhysParams,
    rng: &mut R,
) -> Result<InitStateSet, EnvError> {
    let mut states = Vec::new();
    let mut rates = Vec::new();
    for (family, grasp) in canonical.iter().enumerate() {
        let base_state = grasp.to_state();
        let settled = settle_state(&base_state, hand, pen, params).ok_or(
            EnvError::InitGeneration {
                family,
                accepted: 0,
                requested: n_per,
                attempts: 0,
            },
        )?;
        states.push(InitState {
            q: settled.q.clone(),
            pen_pos: settled.pen_pos,
            pen_quat: settled.pen_quat,
            family,
        });

        let mut accepted = 0;
        let mut attempts = 0;
        let max_attempts = 100 * n_per.max(1);
        while accepted < n_per && attempts < max_attempts {
            attempts += 1;
            let mut q = grasp.q.clone();
            for (qi, (lo, hi)) in q.iter_mut().zip(hand.joint_limits.iter()) {
                *qi = (*qi + gaussian_noise(rng, INIT_JOINT_SIGMA)).clamp(*lo, *hi);
            }
            let pos = grasp.pen_pos
                + vec3(
                    gaussian_noise(rng, INIT_POS_SIGMA),
                    gaussian_noise(rng, INIT_POS_SIGMA),
                    gaussian_noise(rng, INIT_POS_SIGMA),
                );
            let dq = Quat::from_axis_angle(
                vec3(
                    gaussian_noise(rng, 1.0),
                    gaussian_noise(rng, 1.0),
                    gaussian_noise(rng, 1.0),
                ),
                gaussian_noise(rng, INIT_ROT_SIGMA),
            );
            let quat = dq.mul(grasp.pen_quat).normalized();
            let cand = SimState::new(q.clone(), pos, quat);
            if let Some(settled) = settle_state(&cand, hand, pen, params) {
                states.push(InitState {
                    q: settled.q,
                    pen_pos: settled.pen_pos,
                    pen_quat: settled.pen_quat,
                    family,
                });
                accepted += 1;
            }
        }
        rates.push(accepted as f64 / attempts.max(1) as f64);
        if accepted < n_per {
            return Err(EnvError::InitGeneration {
                family,
                accepted,
                requested: n_per,
                attempts,
            });
        }
    }
    Ok(InitStateSet {
        states,
        acceptance_rates: rates,
    })
}
