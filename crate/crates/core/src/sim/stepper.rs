//! Penalty-contact physics: joint dynamics, pen rigid-body dynamics, and the
//! fingertip-sphere / palm-plane vs pen-capsule contact model.
//!
//! Normal forces are spring-dampers clamped by a non-energizing impulse cap;
//! tangential friction is an impulse-style force clamped to the Coulomb cone.
//! Everything is computed in a fixed order so a substep is a pure,
//! bit-reproducible function of its inputs.

use super::{
    forward_kinematics_full, Contact, ContactBody, FingerFrames, HandModel, PenShape, PhysParams,
    SimError, SimState, SUBSTEPS_PER_CONTROL, SUBSTEP_DT,
};
use crate::math::{vec3, Quat, Vec3};

/// PD torque law with per-joint clamping to the hand's torque limit.
pub fn pd_torque(
    q_target: &[f64],
    q: &[f64],
    qdot: &[f64],
    params: &PhysParams,
    hand: &HandModel,
) -> Result<Vec<f64>, SimError> {
    let n = hand.total_dof();
    for (name, len) in [("q_target", q_target.len()), ("q", q.len()), ("qdot", qdot.len())] {
        if len != n {
            return Err(SimError::DimensionMismatch {
                context: name_to_static(name),
                expected: n,
                got: len,
            });
        }
    }
    Ok((0..n)
        .map(|i| {
            let tau = params.kp * (q_target[i] - q[i]) - params.kd * qdot[i];
            tau.clamp(-hand.torque_limit, hand.torque_limit)
        })
        .collect())
}

fn name_to_static(name: &str) -> &'static str {
    match name {
        "q_target" => "pd_torque q_target",
        "q" => "pd_torque q",
        _ => "pd_torque qdot",
    }
}

struct PenBody {
    com: Vec3,
    inv_mass: f64,
    inertia_body: [f64; 3],
    rot: Quat,
}

impl PenBody {
    /// 1 / effective mass of the pen at point `p` along unit direction `u`.
    fn inv_eff_mass(&self, p: Vec3, u: Vec3) -> f64 {
        let r = p - self.com;
        let k_body = self.rot.rotate_inv(r.cross(u));
        self.inv_mass
            + k_body.x * k_body.x / self.inertia_body[0]
            + k_body.y * k_body.y / self.inertia_body[1]
            + k_body.z * k_body.z / self.inertia_body[2]
    }
}

/// 1 / effective mass of a finger at point `p` along direction `u`.
fn finger_inv_eff_mass(frames: &FingerFrames, p: Vec3, u: Vec3, joint_inertia: f64) -> f64 {
    let mut s = 0.0;
    for j in 0..frames.joint_axes.len() {
        let g = frames.jacobian_column(j, p).dot(u);
        s += g * g / joint_inertia;
    }
    s
}

/// Geometry and kinematics of one candidate contact, before forces.
struct Candidate {
    body: ContactBody,
    point: Vec3,
    /// Direction the pen is pushed (away from the other body).
    n: Vec3,
    depth: f64,
    /// Other body's velocity at the contact point.
    v_other: Vec3,
    /// Finger index when the other body is a fingertip.
    finger: Option<usize>,
}

/// Normal force from an implicit discretization of the spring-damper:
///   f = k * (depth + approach' * dt) + c * approach',
///   approach' = approach - f * dt / m_eff,
/// solved for f. Unconditionally stable for stiff springs at this dt and
/// reduces to k*depth + c*approach as dt -> 0. The one-step prediction from
/// the non-contact loads (`base_force`) is shared by all contacts so
/// multi-contact support stays symmetric.
fn normal_force(
    cand: &Candidate,
    pen: &PenBody,
    v_com: Vec3,
    omega: Vec3,
    base_force: Vec3,
    inv_eff_other_n: f64,
    params: &PhysParams,
    dt: f64,
) -> f64 {
    let r = cand.point - pen.com;
    let v_pen = v_com + base_force * (pen.inv_mass * dt) + omega.cross(r);
    let v_rel = v_pen - cand.v_other;
    let approach = -v_rel.dot(cand.n);

    let inv_m_n = pen.inv_eff_mass(cand.point, cand.n) + inv_eff_other_n;
    let k = params.contact_stiffness;
    let c = params.contact_damping;
    let gain = k * dt + c;
    let denom = 1.0 + gain * dt * inv_m_n;
    ((k * cand.depth + gain * approach) / denom).max(0.0)
}

/// Effective contact-patch radius for torsional and rolling friction, m.
const TORSION_PATCH_RADIUS: f64 = 0.003;

fn spin_inertia(pen: &PenBody, axis: Vec3) -> f64 {
    let a_body = pen.rot.rotate_inv(axis);
    let inv_i = a_body.x * a_body.x / pen.inertia_body[0]
        + a_body.y * a_body.y / pen.inertia_body[1]
        + a_body.z * a_body.z / pen.inertia_body[2];
    1.0 / inv_i.max(1e-9)
}

/// Angular friction at a contact: torsional (about the normal) and rolling
/// (about the tangential axes) moments that remove this contact's share of
/// the relative angular velocity, each clamped to the Coulomb moment
/// `mu * f_n * patch_radius`. Without them the pen's tiny axial inertia
/// lets contact chatter spin it up about its own axis.
fn angular_friction_torque(
    cand: &Candidate,
    f_n: f64,
    share: f64,
    pen: &PenBody,
    omega: Vec3,
    omega_other: Vec3,
    params: &PhysParams,
    dt: f64,
) -> Vec3 {
    if params.friction <= 0.0 || f_n <= 0.0 {
        return Vec3::ZERO;
    }
    let max_t = params.friction * f_n * TORSION_PATCH_RADIUS;
    let w_rel = omega - omega_other;

    // spin about the normal
    let w_n = w_rel.dot(cand.n);
    let i_n = spin_inertia(pen, cand.n);
    let spin = (-share * i_n * w_n / dt).clamp(-max_t, max_t);

    // rolling about the tangential plane
    let w_t = w_rel - cand.n * w_n;
    let w_t_mag = w_t.norm();
    let mut torque = cand.n * spin;
    if w_t_mag > 1e-9 {
        let t_axis = w_t * (1.0 / w_t_mag);
        let i_t = spin_inertia(pen, t_axis);
        let roll = (share * i_t * w_t_mag / dt).min(max_t);
        torque += -t_axis * roll;
    }
    torque
}

/// Coulomb-clamped tangential friction.
///
/// The stick force removes the relative tangential velocity within the step
/// and carries this contact's share (by normal force) of the tangential
/// non-contact load, so a pen held below the Coulomb limit does not creep.
#[allow(clippy::too_many_arguments)]
fn friction_force(
    cand: &Candidate,
    f_n: f64,
    share: f64,
    pen: &PenBody,
    v_com: Vec3,
    omega: Vec3,
    base_force: Vec3,
    inv_eff_other_t: impl Fn(Vec3) -> f64,
    params: &PhysParams,
    dt: f64,
) -> Vec3 {
    if params.friction <= 0.0 || f_n <= 0.0 {
        return Vec3::ZERO;
    }
    let r = cand.point - pen.com;
    let v_rel = v_com + omega.cross(r) - cand.v_other;
    let v_t = v_rel - cand.n * v_rel.dot(cand.n);
    let load_t = base_force - cand.n * base_force.dot(cand.n);

    let v_t_mag = v_t.norm();
    let t_ref = if v_t_mag > 1e-8 {
        v_t * (1.0 / v_t_mag)
    } else if load_t.norm() > 1e-12 {
        load_t.normalized()
    } else {
        return Vec3::ZERO;
    };
    let inv_m_t = pen.inv_eff_mass(cand.point, t_ref) + inv_eff_other_t(t_ref);
    let m_eff_t = 1.0 / inv_m_t.max(1e-9);

    // The velocity-removal term is also scaled by the share so that the
    // contacts jointly remove at most one step's relative velocity;
    // overcorrection would flip-flop, undercorrection decays.
    let desired = -(v_t * (share * m_eff_t / dt)) - load_t * share;
    let mag = desired.norm();
    let max_mag = params.friction * f_n;
    if mag <= 1e-12 {
        Vec3::ZERO
    } else if mag > max_mag {
        desired * (max_mag / mag)
    } else {
        desired
    }
}

fn closest_point_on_segment(a: Vec3, b: Vec3, p: Vec3) -> Vec3 {
    let ab = b - a;
    let denom = ab.norm_sq();
    if denom < 1e-18 {
        return a;
    }
    let t = ((p - a).dot(ab) / denom).clamp(0.0, 1.0);
    a + ab * t
}

/// Advance the full state by one 1/200 s substep.
pub fn physics_substep(
    state: &SimState,
    torques: &[f64],
    external_force: Vec3,
    params: &PhysParams,
    hand: &HandModel,
    pen: &PenShape,
) -> Result<SimState, SimError> {
    let n = hand.total_dof();
    if torques.len() != n {
        return Err(SimError::DimensionMismatch {
            context: "physics_substep torques",
            expected: n,
            got: torques.len(),
        });
    }
    let dt = SUBSTEP_DT;
    let shape = pen.scaled(params.scale);
    let frames = forward_kinematics_full(&state.q, hand)?;

    let rot = state.pen_quat;
    let com = state.pen_pos + rot.rotate(params.com_offset);
    let body = PenBody {
        com,
        inv_mass: 1.0 / params.mass,
        inertia_body: shape.inertia_diag(params.mass),
        rot,
    };

    let axis = rot.rotate(vec3(1.0, 0.0, 0.0));
    let hseg = shape.half_segment();
    let seg_a = state.pen_pos + axis * hseg;
    let seg_b = state.pen_pos - axis * hseg;

    let base_force = external_force + vec3(0.0, 0.0, -params.mass * params.gravity);
    let mut force = base_force;
    let mut torque = Vec3::ZERO;
    let mut tau_contact = vec![0.0; n];

    // Pass 0: contact geometry, fixed order (fingers 0..n, then palm).
    let mut candidates = Vec::new();
    let touch_r = hand.fingertip_radius + shape.radius;
    for (f, fr) in frames.iter().enumerate() {
        let closest = closest_point_on_segment(seg_a, seg_b, fr.tip_pos);
        let delta = fr.tip_pos - closest;
        let dist = delta.norm();
        if dist >= touch_r || dist < 1e-9 {
            continue;
        }
        let to_tip = delta * (1.0 / dist);
        let depth = touch_r - dist;
        let point = closest + to_tip * (shape.radius - 0.5 * depth);
        candidates.push(Candidate {
            body: ContactBody::Fingertip(f),
            point,
            n: -to_tip,
            depth,
            v_other: fr.point_velocity(&state.qdot, point),
            finger: Some(f),
        });
    }
    for end in [seg_a, seg_b] {
        let depth = (hand.palm_z + shape.radius) - end.z;
        let within = (end.x * end.x + end.y * end.y).sqrt() <= hand.palm_radius;
        // one-sided plane: ignore bodies far below it
        if depth <= 0.0 || depth > 2.0 * shape.radius || !within {
            continue;
        }
        candidates.push(Candidate {
            body: ContactBody::Palm,
            point: vec3(end.x, end.y, end.z - shape.radius + 0.5 * depth),
            n: Vec3::Z,
            depth,
            v_other: Vec3::ZERO,
            finger: None,
        });
    }

    // Pass A: normal forces.
    let normals: Vec<f64> = candidates
        .iter()
        .map(|cand| {
            let inv_other = match cand.finger {
                Some(f) => finger_inv_eff_mass(&frames[f], cand.point, cand.n, hand.joint_inertia),
                None => 0.0,
            };
            normal_force(
                cand,
                &body,
                state.pen_linvel,
                state.pen_angvel,
                base_force,
                inv_other,
                params,
                dt,
            )
        })
        .collect();
    let total_normal: f64 = normals.iter().sum();

    // Pass B: friction, then apply everything.
    let mut contacts = Vec::with_capacity(candidates.len());
    for (cand, f_n) in candidates.iter().zip(normals.iter()) {
        let share = if total_normal > 1e-12 { f_n / total_normal } else { 0.0 };
        let f_t = friction_force(
            cand,
            *f_n,
            share,
            &body,
            state.pen_linvel,
            state.pen_angvel,
            base_force,
            |t| match cand.finger {
                Some(f) => finger_inv_eff_mass(&frames[f], cand.point, t, hand.joint_inertia),
                None => 0.0,
            },
            params,
            dt,
        );
        let f_total = cand.n * *f_n + f_t;
        let omega_other = match cand.finger {
            Some(f) => frames[f].angular_velocity(
                &state.qdot[f * hand.joints_per_finger..(f + 1) * hand.joints_per_finger],
            ),
            None => Vec3::ZERO,
        };
        let ang = angular_friction_torque(
            cand,
            *f_n,
            share,
            &body,
            state.pen_angvel,
            omega_other,
            params,
            dt,
        );
        force += f_total;
        torque += (cand.point - body.com).cross(f_total) + ang;
        if let Some(f) = cand.finger {
            let reaction = -f_total;
            let ang_reaction = -ang;
            for j in 0..hand.joints_per_finger {
                tau_contact[f * hand.joints_per_finger + j] += frames[f]
                    .jacobian_column(j, cand.point)
                    .dot(reaction)
                    + frames[f].joint_axes[j].dot(ang_reaction);
            }
        }
        contacts.push(Contact {
            body: cand.body,
            point: cand.point,
            normal: cand.n,
            force: f_total,
            normal_force: *f_n,
        });
    }

    // Joint dynamics: decoupled per-joint inertia, semi-implicit Euler,
    // joint limits enforced inelastically.
    let mut q = state.q.clone();
    let mut qdot = state.qdot.clone();
    for i in 0..n {
        let qddot = (torques[i] + tau_contact[i]) / hand.joint_inertia;
        qdot[i] += qddot * dt;
        q[i] += qdot[i] * dt;
        let (lo, hi) = hand.joint_limits[i];
        if q[i] < lo {
            q[i] = lo;
            if qdot[i] < 0.0 {
                qdot[i] = 0.0;
            }
        } else if q[i] > hi {
            q[i] = hi;
            if qdot[i] > 0.0 {
                qdot[i] = 0.0;
            }
        }
    }

    // Pen linear dynamics (semi-implicit Euler on the COM).
    let linvel = state.pen_linvel + force * (body.inv_mass * dt);
    let com_next = com + linvel * dt;

    // Pen angular dynamics: RK4 on Euler's equations in the body frame with
    // the substep's torque held constant.
    let omega_b = rot.rotate_inv(state.pen_angvel);
    let torque_b = rot.rotate_inv(torque);
    let ib = body.inertia_body;
    let deriv = |w: Vec3| -> Vec3 {
        let iw = vec3(ib[0] * w.x, ib[1] * w.y, ib[2] * w.z);
        let rhs = torque_b - w.cross(iw);
        vec3(rhs.x / ib[0], rhs.y / ib[1], rhs.z / ib[2])
    };
    let k1 = deriv(omega_b);
    let k2 = deriv(omega_b + k1 * (0.5 * dt));
    let k3 = deriv(omega_b + k2 * (0.5 * dt));
    let k4 = deriv(omega_b + k3 * dt);
    let omega_b_next = omega_b + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let angvel = rot.rotate(omega_b_next);
    let quat_next = rot.integrate(angvel, dt);
    let pos_next = com_next - quat_next.rotate(params.com_offset);

    let next = SimState {
        q,
        qdot,
        pen_pos: pos_next,
        pen_quat: quat_next,
        pen_linvel: linvel,
        pen_angvel: angvel,
        contacts,
        t_step: state.t_step,
    };
    if !next.is_finite() {
        return Err(SimError::NonFiniteState { t_step: state.t_step });
    }
    Ok(next)
}

/// Per-control-step quantities consumed by the reward.
#[derive(Debug, Clone)]
pub struct StepAggregates {
    /// Mean PD torque over the 10 substeps, per joint.
    pub mean_torque: Vec<f64>,
    /// Positive mechanical work of the controller, summed over joints and
    /// substeps.
    pub work_pos: f64,
}

/// Run one 20 Hz control step: 10 substeps holding the joint target fixed,
/// PD torques recomputed each substep.
pub fn control_step(
    state: &SimState,
    a_t: &[f64],
    disturbance: Vec3,
    params: &PhysParams,
    hand: &HandModel,
    pen: &PenShape,
) -> Result<(SimState, StepAggregates), SimError> {
    let n = hand.total_dof();
    let mut cur = state.clone();
    let mut torque_sum = vec![0.0; n];
    let mut work_pos = 0.0;
    for _ in 0..SUBSTEPS_PER_CONTROL {
        let tau = pd_torque(a_t, &cur.q, &cur.qdot, params, hand)?;
        let q_before = cur.q.clone();
        cur = physics_substep(&cur, &tau, disturbance, params, hand, pen)?;
        for i in 0..n {
            torque_sum[i] += tau[i];
            work_pos += (tau[i] * (cur.q[i] - q_before[i])).max(0.0);
        }
    }
    cur.t_step = state.t_step + 1;
    let mean_torque = torque_sum
        .into_iter()
        .map(|t| t / SUBSTEPS_PER_CONTROL as f64)
        .collect();
    Ok((cur, StepAggregates { mean_torque, work_pos }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Quat;

    fn free_pen_state(pos: Vec3, linvel: Vec3, angvel: Vec3) -> SimState {
        let mut st = SimState::new(vec![0.0; 16], pos, Quat::IDENTITY);
        st.pen_linvel = linvel;
        st.pen_angvel = angvel;
        st
    }

    fn no_gravity() -> PhysParams {
        PhysParams {
            gravity: 0.0,
            ..PhysParams::default()
        }
    }

    #[test]
    fn pd_torque_zero_error_zero_velocity() {
        let hand = HandModel::default();
        let params = PhysParams::default();
        let q = vec![0.3; 16];
        let tau = pd_torque(&q, &q, &vec![0.0; 16], &params, &hand).unwrap();
        assert!(tau.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn pd_torque_formula() {
        let hand = HandModel::default();
        let params = PhysParams {
            kp: 3.0,
            kd: 0.1,
            ..PhysParams::default()
        };
        let q = vec![0.0; 16];
        let mut tgt = vec![0.0; 16];
        tgt[3] = 0.1;
        let tau = pd_torque(&tgt, &q, &vec![0.0; 16], &params, &hand).unwrap();
        assert!((tau[3] - 0.3).abs() < 1e-12);

        let mut qdot = vec![0.0; 16];
        qdot[5] = 1.0;
        let tau = pd_torque(&q, &q, &qdot, &params, &hand).unwrap();
        assert!((tau[5] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn pd_torque_respects_limit() {
        let hand = HandModel::default();
        let params = PhysParams {
            kp: 100.0,
            ..PhysParams::default()
        };
        let tau = pd_torque(&vec![1.0; 16], &vec![0.0; 16], &vec![0.0; 16], &params, &hand).unwrap();
        assert!(tau.iter().all(|t| (*t - hand.torque_limit).abs() < 1e-12));
    }

    #[test]
    fn free_body_drifts_at_constant_velocity() {
        let hand = HandModel::default();
        let pen = PenShape::default();
        let params = no_gravity();
        let v = vec3(0.01, -0.02, 0.005);
        let st = free_pen_state(vec3(0.0, 0.0, 0.5), v, Vec3::ZERO);
        let next = physics_substep(&st, &[0.0; 16], Vec3::ZERO, &params, &hand, &pen).unwrap();
        assert!((next.pen_linvel - v).norm() < 1e-15);
        assert!((next.pen_pos - (st.pen_pos + v * SUBSTEP_DT)).norm() < 1e-15);
    }

    fn kinetic_energy(st: &SimState, params: &PhysParams, pen: &PenShape) -> f64 {
        let shape = pen.scaled(params.scale);
        let ib = shape.inertia_diag(params.mass);
        let wb = st.pen_quat.rotate_inv(st.pen_angvel);
        0.5 * params.mass * st.pen_linvel.norm_sq()
            + 0.5 * (ib[0] * wb.x * wb.x + ib[1] * wb.y * wb.y + ib[2] * wb.z * wb.z)
    }

    #[test]
    fn free_body_energy_conserved_1000_substeps() {
        let hand = HandModel::default();
        let pen = PenShape::default();
        let params = no_gravity();
        let mut st = free_pen_state(
            vec3(0.0, 0.0, 0.5),
            vec3(0.02, 0.01, -0.03),
            vec3(1.3, -2.1, 0.7),
        );
        let e0 = kinetic_energy(&st, &params, &pen);
        for _ in 0..1000 {
            st = physics_substep(&st, &[0.0; 16], Vec3::ZERO, &params, &hand, &pen).unwrap();
        }
        let e1 = kinetic_energy(&st, &params, &pen);
        assert!(
            ((e1 - e0) / e0).abs() < 1e-6,
            "relative energy drift {}",
            (e1 - e0) / e0
        );
    }

    #[test]
    fn quaternion_norm_stays_unit_100k_substeps() {
        let hand = HandModel::default();
        let pen = PenShape::default();
        let params = no_gravity();
        let mut st = free_pen_state(vec3(0.0, 0.0, 0.5), Vec3::ZERO, vec3(2.0, 1.5, -1.0));
        for _ in 0..100_000 {
            st = physics_substep(&st, &[0.0; 16], Vec3::ZERO, &params, &hand, &pen).unwrap();
        }
        assert!((st.pen_quat.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pen_settles_on_palm_with_normal_force_mg() {
        let hand = HandModel::default();
        let pen = PenShape::default();
        let params = PhysParams::default();
        // Horizontal pen dropped just above the palm, fingers parked away.
        let mut q = vec![0.0; 16];
        for f in 0..4 {
            q[f * 4] = -0.8;
        }
        let mut st = SimState::new(q, vec3(0.0, 0.0, pen.radius + 0.002), Quat::IDENTITY);
        // settle
        let targets = st.q.clone();
        for _ in 0..600 {
            let tau = pd_torque(&targets, &st.q, &st.qdot, &params, &hand).unwrap();
            st = physics_substep(&st, &tau, Vec3::ZERO, &params, &hand, &pen).unwrap();
        }
        // average palm normal force over 200 settled substeps
        let mut sum = 0.0;
        let mut count = 0;
        for _ in 0..200 {
            let tau = pd_torque(&targets, &st.q, &st.qdot, &params, &hand).unwrap();
            st = physics_substep(&st, &tau, Vec3::ZERO, &params, &hand, &pen).unwrap();
            let palm: f64 = st
                .contacts
                .iter()
                .filter(|c| c.body == ContactBody::Palm)
                .map(|c| c.normal_force)
                .sum();
            sum += palm;
            count += 1;
        }
        let mean = sum / count as f64;
        let mg = params.mass * params.gravity;
        assert!(
            (mean - mg).abs() / mg < 0.02,
            "settled normal force {mean} vs mg {mg}"
        );
    }

    #[test]
    fn static_friction_holds_below_coulomb_limit() {
        let hand = HandModel::default();
        let pen = PenShape::default();
        let params = PhysParams {
            friction: 0.5,
            ..PhysParams::default()
        };
        // Pen resting on the palm; push tangentially below mu * m * g.
        let mut q = vec![0.0; 16];
        for f in 0..4 {
            q[f * 4] = -0.8;
        }
        let mut st = SimState::new(q, vec3(0.0, 0.0, pen.radius + 0.001), Quat::IDENTITY);
        let targets = st.q.clone();
        for _ in 0..600 {
            let tau = pd_torque(&targets, &st.q, &st.qdot, &params, &hand).unwrap();
            st = physics_substep(&st, &tau, Vec3::ZERO, &params, &hand, &pen).unwrap();
        }
        let mg = params.mass * params.gravity;
        // Push along the pen axis so the capsule cannot roll; the analytic
        // stick condition applies directly.
        let push = vec3(0.3 * params.friction * mg, 0.0, 0.0); // below mu*N
        let v0 = st.pen_linvel;
        let steps = 200;
        for _ in 0..steps {
            let tau = pd_torque(&targets, &st.q, &st.qdot, &params, &hand).unwrap();
            st = physics_substep(&st, &tau, push, &params, &hand, &pen).unwrap();
        }
        // Analytic stick condition: net tangential acceleration ~ 0.
        let dv = (st.pen_linvel - v0).norm();
        let accel = dv / (steps as f64 * SUBSTEP_DT);
        assert!(accel < 0.01, "tangential accel {accel} m/s^2 (should stick)");
        assert!(st.pen_linvel.norm() < 0.002, "creep velocity {}", st.pen_linvel.norm());
    }

    #[test]
    fn sliding_above_coulomb_limit_accelerates() {
        let hand = HandModel::default();
        let pen = PenShape::default();
        let params = PhysParams {
            friction: 0.3,
            ..PhysParams::default()
        };
        let mut q = vec![0.0; 16];
        for f in 0..4 {
            q[f * 4] = -0.8;
        }
        let mut st = SimState::new(q, vec3(0.0, 0.0, pen.radius + 0.001), Quat::IDENTITY);
        let targets = st.q.clone();
        for _ in 0..600 {
            let tau = pd_torque(&targets, &st.q, &st.qdot, &params, &hand).unwrap();
            st = physics_substep(&st, &tau, Vec3::ZERO, &params, &hand, &pen).unwrap();
        }
        let mg = params.mass * params.gravity;
        let push = vec3(3.0 * params.friction * mg, 0.0, 0.0); // well above mu*N
        for _ in 0..200 {
            let tau = pd_torque(&targets, &st.q, &st.qdot, &params, &hand).unwrap();
            st = physics_substep(&st, &tau, push, &params, &hand, &pen).unwrap();
        }
        assert!(st.pen_linvel.norm() > 0.05, "should slide, v = {}", st.pen_linvel.norm());
    }

    #[test]
    fn contact_force_symmetry() {
        // The joint-space reaction must equal the Jacobian transpose of the
        // negated pen contact force. Recover both sides from the state
        // change: pen momentum gives the applied force, joint velocity
        // change gives the reaction torque.
        let hand = HandModel::default();
        let pen = PenShape::default();
        let params = PhysParams {
            gravity: 0.0,
            friction: 0.8,
            ..PhysParams::default()
        };
        // Curl finger 0 and park the pen so its side surface overlaps the tip.
        let mut q = vec![0.0; 16];
        q[1] = 0.9;
        q[2] = 0.6;
        q[3] = 0.4;
        let frames = forward_kinematics_full(&q, &hand).unwrap();
        let tip = frames[0].tip_pos;
        // offset perpendicular to the pen axis (pen axis = world x)
        let d = (pen.radius + hand.fingertip_radius) * 0.7;
        let pos = tip + vec3(0.0, -d * 0.6, -d * 0.8);
        let mut st = SimState::new(q.clone(), pos, Quat::IDENTITY);
        st.pen_linvel = vec3(0.0, 0.005, 0.01); // drive it into the tip
        let next = physics_substep(&st, &[0.0; 16], Vec3::ZERO, &params, &hand, &pen).unwrap();
        let tip_contacts: Vec<_> = next
            .contacts
            .iter()
            .filter(|c| matches!(c.body, ContactBody::Fingertip(_)))
            .collect();
        assert!(!tip_contacts.is_empty(), "expected fingertip contact");

        // Net force on the pen from the log equals the momentum change.
        let net_logged: Vec3 = next
            .contacts
            .iter()
            .fold(Vec3::ZERO, |acc, c| acc + c.force);
        let net_applied = (next.pen_linvel - st.pen_linvel) * (params.mass / SUBSTEP_DT);
        assert!(
            (net_logged - net_applied).norm() < 1e-9,
            "pen force mismatch: {net_logged:?} vs {net_applied:?}"
        );

        // Joint reaction equals J^T of the negated logged forces.
        let mut tau_expected = vec![0.0; 16];
        for c in &tip_contacts {
            let f = match c.body {
                ContactBody::Fingertip(f) => f,
                ContactBody::Palm => unreachable!(),
            };
            for j in 0..hand.joints_per_finger {
                tau_expected[f * hand.joints_per_finger + j] +=
                    frames[f].jacobian_column(j, c.point).dot(-c.force);
            }
        }
        for i in 0..16 {
            let tau_applied = (next.qdot[i] - st.qdot[i]) * hand.joint_inertia / SUBSTEP_DT;
            assert!(
                (tau_applied - tau_expected[i]).abs() < 1e-9,
                "joint {i}: {tau_applied} vs {}",
                tau_expected[i]
            );
        }
    }

    #[test]
    fn control_step_runs_ten_substeps() {
        let hand = HandModel::default();
        let pen = PenShape::default();
        let params = no_gravity();
        let st = free_pen_state(vec3(0.0, 0.0, 0.5), vec3(0.1, 0.0, 0.0), Vec3::ZERO);
        let (next, _) =
            control_step(&st, &vec![0.0; 16], Vec3::ZERO, &params, &hand, &pen).unwrap();
        assert_eq!(next.t_step, st.t_step + 1);
        // 10 substeps at 1/200 s -> 0.05 s of motion
        assert!((next.pen_pos.x - (0.5e-1 * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn control_step_equilibrium_is_fixed_point() {
        let hand = HandModel::default();
        let pen = PenShape::default();
        let params = no_gravity();
        let q = vec![0.2; 16];
        let st = SimState::new(q.clone(), vec3(0.0, 0.0, 0.5), Quat::IDENTITY);
        let (next, _) = control_step(&st, &q, Vec3::ZERO, &params, &hand, &pen).unwrap();
        for (a, b) in next.q.iter().zip(q.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(next.qdot.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn determinism_bit_identical() {
        let hand = HandModel::default();
        let pen = PenShape::default();
        let params = PhysParams::default();
        let mut q = vec![0.1; 16];
        q[2] = 0.8;
        let st = SimState::new(q.clone(), vec3(0.0, 0.0, 0.05), Quat::IDENTITY);
        let a = control_step(&st, &q, vec3(0.0, 0.01, 0.0), &params, &hand, &pen).unwrap();
        let b = control_step(&st, &q, vec3(0.0, 0.01, 0.0), &params, &hand, &pen).unwrap();
        assert_eq!(a.0.pen_pos, b.0.pen_pos);
        assert_eq!(a.0.pen_quat, b.0.pen_quat);
        assert_eq!(a.0.q, b.0.q);
        assert_eq!(a.0.qdot, b.0.qdot);
    }
}
