//! Forward kinematics for the serial finger chains.

use super::{HandModel, SimError};
use crate::math::{vec3, Pose, Quat, Vec3};

/// Per-finger kinematic frames produced by one FK pass.
#[derive(Debug, Clone)]
pub struct FingerFrames {
    /// Fingertip center position, palm frame.
    pub tip_pos: Vec3,
    /// Fingertip orientation (local x along the distal link).
    pub tip_rot: Quat,
    /// World-frame rotation axis of each joint.
    pub joint_axes: Vec<Vec3>,
    /// World-frame origin of each joint.
    pub joint_origins: Vec<Vec3>,
}

impl FingerFrames {
    /// Point Jacobian column for joint `j` at world point `p`:
    /// `dp/dq_j = axis_j x (p - origin_j)`.
    pub fn jacobian_column(&self, j: usize, p: Vec3) -> Vec3 {
        self.joint_axes[j].cross(p - self.joint_origins[j])
    }

    /// Velocity of the finger material point at `p` for joint rates `qdot`.
    pub fn point_velocity(&self, qdot: &[f64], p: Vec3) -> Vec3 {
        let mut v = Vec3::ZERO;
        for j in 0..self.joint_axes.len() {
            v += self.jacobian_column(j, p) * qdot[j];
        }
        v
    }

    /// Angular velocity of the distal link.
    pub fn angular_velocity(&self, qdot: &[f64]) -> Vec3 {
        let mut w = Vec3::ZERO;
        for j in 0..self.joint_axes.len() {
            w += self.joint_axes[j] * qdot[j];
        }
        w
    }
}

/// FK returning every joint frame, used by the dynamics and contact code.
pub fn forward_kinematics_full(q: &[f64], hand: &HandModel) -> Result<Vec<FingerFrames>, SimError> {
    if q.len() != hand.total_dof() {
        return Err(SimError::DimensionMismatch {
            context: "forward_kinematics q",
            expected: hand.total_dof(),
            got: q.len(),
        });
    }
    let jp = hand.joints_per_finger;
    let mut out = Vec::with_capacity(hand.n_fingers);
    for f in 0..hand.n_fingers {
        let mut pose = hand.finger_base_poses[f];
        let mut joint_axes = Vec::with_capacity(jp);
        let mut joint_origins = Vec::with_capacity(jp);
        for j in 0..jp {
            let axis_local = hand.axis(f, j);
            joint_axes.push(pose.rot.rotate(axis_local));
            joint_origins.push(pose.pos);
            let rot = Quat::from_axis_angle(axis_local, q[f * jp + j]);
            pose = pose.compose(Pose::new(rot, Vec3::ZERO));
            pose = pose.compose(Pose::new(Quat::IDENTITY, vec3(hand.link(f, j), 0.0, 0.0)));
        }
        out.push(FingerFrames {
            tip_pos: pose.pos,
            tip_rot: pose.rot,
            joint_axes,
            joint_origins,
        });
    }
    Ok(out)
}

/// Fingertip center positions in the palm frame, one row per finger.
pub fn forward_kinematics(q: &[f64], hand: &HandModel) -> Result<Vec<Vec3>, SimError> {
    Ok(forward_kinematics_full(q, hand)?
        .into_iter()
        .map(|fr| fr.tip_pos)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_finger_hand(links: &[f64], axes: &[Vec3]) -> HandModel {
        HandModel {
            n_fingers: 1,
            joints_per_finger: links.len(),
            link_lengths: links.to_vec(),
            joint_limits: vec![(-3.0, 3.0); links.len()],
            finger_base_poses: vec![Pose::default()],
            joint_axes: axes.to_vec(),
            fingertip_radius: 0.01,
            tactile_offsets: vec![vec3(1.0, 0.0, 0.0); 5],
            torque_limit: 0.7,
            joint_inertia: 4.0e-4,
            palm_z: 0.0,
            palm_radius: 0.085,
        }
    }

    #[test]
    fn straight_chain_sums_links() {
        let hand = one_finger_hand(
            &[0.05, 0.05, 0.04, 0.03],
            &[Vec3::Z, vec3(0.0, 1.0, 0.0), vec3(0.0, 1.0, 0.0), vec3(0.0, 1.0, 0.0)],
        );
        let tips = forward_kinematics(&[0.0; 4], &hand).unwrap();
        assert!((tips[0] - vec3(0.17, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn single_joint_rotation_preserves_length() {
        let hand = one_finger_hand(&[0.05], &[Vec3::Z]);
        let tips = forward_kinematics(&[std::f64::consts::FRAC_PI_2], &hand).unwrap();
        assert!((tips[0] - vec3(0.0, 0.05, 0.0)).norm() < 1e-12);
        assert!((tips[0].norm() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let hand = HandModel::default();
        assert!(forward_kinematics(&[0.0; 3], &hand).is_err());
    }

    // Independent oracle: explicit 4x4 homogeneous transform products.
    mod transform_oracle {
        use super::*;

        type Mat4 = [[f64; 4]; 4];

        fn identity() -> Mat4 {
            let mut m = [[0.0; 4]; 4];
            for (i, row) in m.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            m
        }

        fn matmul(a: &Mat4, b: &Mat4) -> Mat4 {
            let mut c = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    let mut s = 0.0;
                    for (k, bk) in b.iter().enumerate() {
                        s += a[i][k] * bk[j];
                    }
                    c[i][j] = s;
                }
            }
            c
        }

        fn rotation(axis: Vec3, angle: f64) -> Mat4 {
            // Rodrigues' formula
            let a = axis.normalized();
            let (s, c) = angle.sin_cos();
            let t = 1.0 - c;
            let (x, y, z) = (a.x, a.y, a.z);
            let mut m = identity();
            m[0][0] = t * x * x + c;
            m[0][1] = t * x * y - s * z;
            m[0][2] = t * x * z + s * y;
            m[1][0] = t * x * y + s * z;
            m[1][1] = t * y * y + c;
            m[1][2] = t * y * z - s * x;
            m[2][0] = t * x * z - s * y;
            m[2][1] = t * y * z + s * x;
            m[2][2] = t * z * z + c;
            m
        }

        fn translation(v: Vec3) -> Mat4 {
            let mut m = identity();
            m[0][3] = v.x;
            m[1][3] = v.y;
            m[2][3] = v.z;
            m
        }

        fn pose_matrix(p: &Pose) -> Mat4 {
            let x = p.rot.rotate(vec3(1.0, 0.0, 0.0));
            let y = p.rot.rotate(vec3(0.0, 1.0, 0.0));
            let z = p.rot.rotate(vec3(0.0, 0.0, 1.0));
            let mut m = identity();
            m[0][0] = x.x;
            m[1][0] = x.y;
            m[2][0] = x.z;
            m[0][1] = y.x;
            m[1][1] = y.y;
            m[2][1] = y.z;
            m[0][2] = z.x;
            m[1][2] = z.y;
            m[2][2] = z.z;
            m[0][3] = p.pos.x;
            m[1][3] = p.pos.y;
            m[2][3] = p.pos.z;
            m
        }

        pub fn fk_oracle(q: &[f64], hand: &HandModel) -> Vec<Vec3> {
            let jp = hand.joints_per_finger;
            (0..hand.n_fingers)
                .map(|f| {
                    let mut t = pose_matrix(&hand.finger_base_poses[f]);
                    for j in 0..jp {
                        t = matmul(&t, &rotation(hand.axis(f, j), q[f * jp + j]));
                        t = matmul(&t, &translation(vec3(hand.link(f, j), 0.0, 0.0)));
                    }
                    vec3(t[0][3], t[1][3], t[2][3])
                })
                .collect()
        }
    }

    #[test]
    fn matches_transform_chain_oracle_on_random_configs() {
        let hand = HandModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let q: Vec<f64> = hand
                .joint_limits
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect();
            let got = forward_kinematics(&q, &hand).unwrap();
            let want = transform_oracle::fk_oracle(&q, &hand);
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((*g - *w).norm() < 1e-9, "fk mismatch: {g:?} vs {w:?}");
            }
        }
    }

    #[test]
    fn jacobian_columns_match_finite_differences() {
        let hand = HandModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q: Vec<f64> = hand
            .joint_limits
            .iter()
            .map(|(lo, hi)| rng.gen_range(*lo * 0.5..*hi * 0.5))
            .collect();
        let frames = forward_kinematics_full(&q, &hand).unwrap();
        let h = 1e-7;
        for f in 0..hand.n_fingers {
            for j in 0..hand.joints_per_finger {
                let mut qp = q.clone();
                qp[f * hand.joints_per_finger + j] += h;
                let mut qm = q.clone();
                qm[f * hand.joints_per_finger + j] -= h;
                let tp = forward_kinematics(&qp, &hand).unwrap()[f];
                let tm = forward_kinematics(&qm, &hand).unwrap()[f];
                let fd = (tp - tm) * (1.0 / (2.0 * h));
                let analytic = frames[f].jacobian_column(j, frames[f].tip_pos);
                assert!((fd - analytic).norm() < 1e-6);
            }
        }
    }
}
