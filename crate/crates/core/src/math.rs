//! Minimal 3-D vector / quaternion math used by the simulator and metrics.
//!
//! Everything is `f64` and hand-rolled so the whole numeric path stays
//! dependency-free and bit-reproducible.

use serde::{Deserialize, Serialize};

/// 3-vector, world or body frame depending on context.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3 { x, y, z }
}

impl Vec3 {
    pub const ZERO: Vec3 = vec3(0.0, 0.0, 0.0);
    pub const Z: Vec3 = vec3(0.0, 0.0, 1.0);

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Unit vector; `Vec3::ZERO` if the norm is below `1e-12`.
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n < 1e-12 {
            Vec3::ZERO
        } else {
            self * (1.0 / n)
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Vec3 {
        vec3(a[0], a[1], a[2])
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        vec3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        vec3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        vec3(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        vec3(-self.x, -self.y, -self.z)
    }
}

impl std::ops::AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

/// Unit quaternion `(w, x, y, z)` representing a rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let n = axis.norm();
        if n < 1e-12 {
            return Quat::IDENTITY;
        }
        let half = 0.5 * angle;
        let s = half.sin() / n;
        Quat {
            w: half.cos(),
            x: axis.x * s,
            y: axis.y * s,
            z: axis.z * s,
        }
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        Quat {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    pub fn conjugate(self) -> Quat {
        Quat {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Hamilton product `self * o`.
    pub fn mul(self, o: Quat) -> Quat {
        Quat {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    /// Rotate a vector by this quaternion.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2 u x (u x v + w v), u = (x, y, z)
        let u = vec3(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Rotate a vector by the inverse of this quaternion.
    pub fn rotate_inv(self, v: Vec3) -> Vec3 {
        self.conjugate().rotate(v)
    }

    /// First-order quaternion step under world-frame angular velocity `w`,
    /// renormalized.
    pub fn integrate(self, omega_world: Vec3, dt: f64) -> Quat {
        let wq = Quat {
            w: 0.0,
            x: omega_world.x,
            y: omega_world.y,
            z: omega_world.z,
        };
        let dq = wq.mul(self);
        let half_dt = 0.5 * dt;
        Quat {
            w: self.w + dq.w * half_dt,
            x: self.x + dq.x * half_dt,
            y: self.y + dq.y * half_dt,
            z: self.z + dq.z * half_dt,
        }
        .normalized()
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 4]) -> Quat {
        Quat {
            w: a[0],
            x: a[1],
            y: a[2],
            z: a[3],
        }
    }
}

/// Rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rot: Quat,
    pub pos: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Pose {
            rot: Quat::IDENTITY,
            pos: Vec3::ZERO,
        }
    }
}

impl Pose {
    pub fn new(rot: Quat, pos: Vec3) -> Pose {
        Pose { rot, pos }
    }

    pub fn apply(self, p: Vec3) -> Vec3 {
        self.rot.rotate(p) + self.pos
    }

    /// Compose transforms: `(self ∘ o)(p) = self(o(p))`.
    pub fn compose(self, o: Pose) -> Pose {
        Pose {
            rot: self.rot.mul(o.rot),
            pos: self.rot.rotate(o.pos) + self.pos,
        }
    }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn quat_rotation_matches_axis_angle() {
        let q = Quat::from_axis_angle(Vec3::Z, PI / 2.0);
        let v = q.rotate(vec3(1.0, 0.0, 0.0));
        assert!((v - vec3(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn quat_mul_composes_rotations() {
        let a = Quat::from_axis_angle(vec3(0.0, 1.0, 0.0), 0.3);
        let b = Quat::from_axis_angle(vec3(1.0, 0.0, 0.0), -0.7);
        let v = vec3(0.2, -0.5, 0.9);
        let lhs = a.mul(b).rotate(v);
        let rhs = a.rotate(b.rotate(v));
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn rotate_inv_roundtrip() {
        let q = Quat::from_axis_angle(vec3(0.3, -1.0, 0.4), 1.1);
        let v = vec3(0.1, 0.2, -0.3);
        assert!((q.rotate_inv(q.rotate(v)) - v).norm() < 1e-12);
    }

    #[test]
    fn pose_compose_matches_sequential_apply() {
        let a = Pose::new(Quat::from_axis_angle(Vec3::Z, 0.4), vec3(0.1, 0.0, 0.2));
        let b = Pose::new(
            Quat::from_axis_angle(vec3(1.0, 0.0, 0.0), -0.9),
            vec3(0.0, 0.3, 0.0),
        );
        let p = vec3(-0.2, 0.5, 0.1);
        assert!((a.compose(b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
    }

    #[test]
    fn integrate_small_step_matches_axis_angle() {
        let q = Quat::IDENTITY;
        let omega = vec3(0.0, 0.0, 2.0);
        let dt = 1e-4;
        let q1 = q.integrate(omega, dt);
        let expect = Quat::from_axis_angle(Vec3::Z, 2.0 * dt);
        assert!((q1.w - expect.w).abs() < 1e-10);
        assert!((q1.z - expect.z).abs() < 1e-10);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.1) - 0.1).abs() < 1e-15);
    }
}
