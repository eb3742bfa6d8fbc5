//! Simplified rigid-body simulator: a 16-DoF four-finger hand manipulating a
//! pen-shaped capsule.
//!
//! Fixed timing: 200 Hz physics substeps, 20 Hz control (10 substeps per
//! control step). Contacts are penalty springs between fingertip spheres /
//! the palm plane and the pen capsule, with Coulomb-clamped tangential
//! friction. Joint dynamics use a decoupled per-joint inertia model.

mod cloud;
mod config;
mod fk;
mod stepper;
mod tactile;

pub use cloud::{pen_point_cloud, PointCloud, CLOUD_POINTS};
pub use config::SimConfig;
pub use fk::{forward_kinematics, forward_kinematics_full, FingerFrames};
pub use stepper::{control_step, pd_torque, physics_substep, StepAggregates};
pub use tactile::{tactile_read, N_TACTILE};

use crate::math::{vec3, Pose, Quat, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Total hand DoF in the default configuration.
pub const N_JOINTS: usize = 16;
/// Number of fingers.
pub const N_FINGERS: usize = 4;
/// Physics substep length (200 Hz).
pub const SUBSTEP_DT: f64 = 1.0 / 200.0;
/// Physics substeps per control step (20 Hz control).
pub const SUBSTEPS_PER_CONTROL: usize = 10;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite state after substep {t_step}; episode invalid, caller must reset")]
    NonFiniteState { t_step: u32 },
}

/// Kinematic and sensor description of the hand.
///
/// Each finger is a serial chain: base pose, then per joint a rotation about
/// `joint_axes[j]` (local frame) followed by a translation of
/// `link_lengths[j]` along the local x axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandModel {
    pub n_fingers: usize,
    pub joints_per_finger: usize,
    /// Row-major `[finger][joint]` link lengths in meters.
    pub link_lengths: Vec<f64>,
    /// Per-joint `(lo, hi)` limits in radians, length `n_fingers * joints_per_finger`.
    pub joint_limits: Vec<(f64, f64)>,
    /// Finger base transforms relative to the palm frame.
    pub finger_base_poses: Vec<Pose>,
    /// Per-joint rotation axis in the local chain frame, `[finger][joint]`.
    pub joint_axes: Vec<Vec3>,
    /// Fingertip collision sphere radius in meters.
    pub fingertip_radius: f64,
    /// Five unit directions per fingertip (local tip frame) locating the
    /// binary tactile pads.
    pub tactile_offsets: Vec<Vec3>,
    /// Torque clamp per joint, N·m.
    pub torque_limit: f64,
    /// Decoupled per-joint rotational inertia, kg·m².
    pub joint_inertia: f64,
    /// Palm contact plane height (palm frame z).
    pub palm_z: f64,
    /// The palm plane is finite: contacts only within this radius of the origin.
    pub palm_radius: f64,
}

impl HandModel {
    pub fn total_dof(&self) -> usize {
        self.n_fingers * self.joints_per_finger
    }

    pub fn link(&self, finger: usize, joint: usize) -> f64 {
        self.link_lengths[finger * self.joints_per_finger + joint]
    }

    pub fn axis(&self, finger: usize, joint: usize) -> Vec3 {
        self.joint_axes[finger * self.joints_per_finger + joint]
    }

    /// Clamp a joint vector into the limit box, in place.
    pub fn clamp_to_limits(&self, q: &mut [f64]) {
        for (qi, (lo, hi)) in q.iter_mut().zip(self.joint_limits.iter()) {
            *qi = qi.clamp(*lo, *hi);
        }
    }
}

impl Default for HandModel {
    /// Four identical fingers arranged radially around the palm center at
    /// azimuths 45°, 135°, 225°, 315°, pointing up, with joint 0 an
    /// abduction axis (local z, radially outward) and joints 1-3 flexion
    /// axes (local y). Positive flexion curls a finger toward the palm
    /// center.
    fn default() -> Self {
        let n_fingers = N_FINGERS;
        let joints_per_finger = 4;
        let links = [0.045, 0.038, 0.030, 0.026];
        let base_radius = 0.065;

        let mut link_lengths = Vec::new();
        let mut joint_limits = Vec::new();
        let mut joint_axes = Vec::new();
        let mut finger_base_poses = Vec::new();
        for f in 0..n_fingers {
            let phi = std::f64::consts::FRAC_PI_4 + f as f64 * std::f64::consts::FRAC_PI_2;
            let radial = vec3(phi.cos(), phi.sin(), 0.0);
            // Local x = up, local z = radially outward, local y completes
            // the right-handed frame (tangential, clockwise from above).
            let rot = quat_from_basis(Vec3::Z, vec3(phi.sin(), -phi.cos(), 0.0), radial);
            finger_base_poses.push(Pose::new(rot, radial * base_radius));
            for j in 0..joints_per_finger {
                link_lengths.push(links[j]);
                if j == 0 {
                    joint_axes.push(vec3(0.0, 0.0, 1.0));
                    joint_limits.push((-0.9, 0.9));
                } else {
                    joint_axes.push(vec3(0.0, 1.0, 0.0));
                    joint_limits.push((-0.5, 1.8));
                }
            }
        }

        HandModel {
            n_fingers,
            joints_per_finger,
            link_lengths,
            joint_limits,
            finger_base_poses,
            joint_axes,
            fingertip_radius: 0.013,
            tactile_offsets: default_tactile_offsets(),
            torque_limit: 0.7,
            joint_inertia: 4.0e-4,
            palm_z: 0.0,
            palm_radius: 0.085,
        }
    }
}

/// One pad at the very tip, one palmar, one distal-palmar, two lateral-palmar.
fn default_tactile_offsets() -> Vec<Vec3> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![
        vec3(1.0, 0.0, 0.0),
        vec3(0.0, 0.0, -1.0),
        vec3(s, 0.0, -s),
        vec3(0.0, s, -s),
        vec3(0.0, -s, -s),
    ]
}

/// Build a quaternion whose columns map local x/y/z to the given
/// orthonormal world directions.
fn quat_from_basis(x: Vec3, y: Vec3, z: Vec3) -> Quat {
    // Shepperd's method on the 3x3 matrix with columns x, y, z.
    let m = [[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]];
    let trace = m[0][0] + m[1][1] + m[2][2];
    let q = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        Quat {
            w: 0.25 * s,
            x: (m[2][1] - m[1][2]) / s,
            y: (m[0][2] - m[2][0]) / s,
            z: (m[1][0] - m[0][1]) / s,
        }
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
        Quat {
            w: (m[2][1] - m[1][2]) / s,
            x: 0.25 * s,
            y: (m[0][1] + m[1][0]) / s,
            z: (m[0][2] + m[2][0]) / s,
        }
    } else if m[1][1] > m[2][2] {
        let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
        Quat {
            w: (m[0][2] - m[2][0]) / s,
            x: (m[0][1] + m[1][0]) / s,
            y: 0.25 * s,
            z: (m[1][2] + m[2][1]) / s,
        }
    } else {
        let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
        Quat {
            w: (m[1][0] - m[0][1]) / s,
            x: (m[0][2] + m[2][0]) / s,
            y: (m[1][2] + m[2][1]) / s,
            z: 0.25 * s,
        }
    };
    q.normalized()
}

/// Capsule along the body x axis; `length` is end-to-end including the caps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PenShape {
    pub length: f64,
    pub radius: f64,
}

impl PenShape {
    pub fn new(length: f64, radius: f64) -> PenShape {
        assert!(length > 0.0 && radius > 0.0 && length > 2.0 * radius);
        PenShape { length, radius }
    }

    /// Shape with both dimensions multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> PenShape {
        PenShape {
            length: self.length * scale,
            radius: self.radius * scale,
        }
    }

    /// Half-length of the core segment (excluding the spherical caps).
    pub fn half_segment(&self) -> f64 {
        0.5 * self.length - self.radius
    }

    /// Body-frame diagonal inertia for a uniform capsule of mass `m`,
    /// `[axial, transverse, transverse]` about the geometric center.
    pub fn inertia_diag(&self, m: f64) -> [f64; 3] {
        let r = self.radius;
        let lc = self.length - 2.0 * r;
        let v_cyl = std::f64::consts::PI * r * r * lc;
        let v_sph = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        let m_cyl = m * v_cyl / (v_cyl + v_sph);
        let m_sph = m - m_cyl;
        let i_axial = 0.5 * m_cyl * r * r + 0.4 * m_sph * r * r;
        let i_trans = m_cyl * (lc * lc / 12.0 + r * r / 4.0)
            + m_sph * (0.4 * r * r + 0.25 * lc * lc + 0.375 * lc * r);
        [i_axial, i_trans, i_trans]
    }
}

impl Default for PenShape {
    fn default() -> Self {
        PenShape {
            length: 0.16,
            radius: 0.015,
        }
    }
}

/// Physical parameters, the domain-randomized quantities among them.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhysParams {
    /// Pen mass, kg.
    pub mass: f64,
    /// Center-of-mass offset from the geometric center, body frame, m.
    pub com_offset: Vec3,
    /// Coulomb friction coefficient (pen vs fingertip/palm).
    pub friction: f64,
    /// Multiplier applied to the nominal `PenShape`.
    pub scale: f64,
    /// PD stiffness, applied per joint.
    pub kp: f64,
    /// PD damping, applied per joint.
    pub kd: f64,
    /// Contact normal spring stiffness, N/m.
    pub contact_stiffness: f64,
    /// Contact normal damping, N·s/m.
    pub contact_damping: f64,
    /// Gravitational acceleration magnitude, m/s² (acts along -z).
    pub gravity: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            mass: 0.02,
            com_offset: Vec3::ZERO,
            friction: 1.0,
            scale: 1.0,
            kp: 3.0,
            kd: 0.1,
            contact_stiffness: 1000.0,
            contact_damping: 6.0,
            gravity: 9.81,
        }
    }
}

impl PhysParams {
    pub fn validate(&self) -> bool {
        self.mass > 0.0 && self.friction >= 0.0 && self.kp > 0.0 && self.kd >= 0.0 && self.scale > 0.0
    }
}

/// Which body a contact involves on the hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContactBody {
    Fingertip(usize),
    Palm,
}

/// One resolved contact: position, normal (direction of the push on the
/// pen), full force vector applied to the pen and its normal component.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Contact {
    pub body: ContactBody,
    pub point: Vec3,
    pub normal: Vec3,
    pub force: Vec3,
    pub normal_force: f64,
}

/// Full simulator state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimState {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    /// Geometric center of the capsule, palm frame.
    pub pen_pos: Vec3,
    pub pen_quat: Quat,
    /// Velocity of the pen's center of mass, m/s.
    pub pen_linvel: Vec3,
    /// World-frame angular velocity, rad/s.
    pub pen_angvel: Vec3,
    pub contacts: Vec<Contact>,
    /// Control-step index.
    pub t_step: u32,
}

impl SimState {
    pub fn new(q: Vec<f64>, pen_pos: Vec3, pen_quat: Quat) -> SimState {
        let n = q.len();
        SimState {
            q,
            qdot: vec![0.0; n],
            pen_pos,
            pen_quat: pen_quat.normalized(),
            pen_linvel: Vec3::ZERO,
            pen_angvel: Vec3::ZERO,
            contacts: Vec::new(),
            t_step: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().all(|v| v.is_finite())
            && self.qdot.iter().all(|v| v.is_finite())
            && self.pen_pos.is_finite()
            && self.pen_quat.is_finite()
            && self.pen_linvel.is_finite()
            && self.pen_angvel.is_finite()
    }

    /// World position of the pen's two geometric end points.
    pub fn pen_endpoints(&self, pen: &PenShape) -> (Vec3, Vec3) {
        let axis = self.pen_quat.rotate(vec3(1.0, 0.0, 0.0));
        let h = 0.5 * pen.length;
        (self.pen_pos + axis * h, self.pen_pos - axis * h)
    }
}
