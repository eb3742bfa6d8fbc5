//! Domain randomization ranges and per-episode sampling.

use crate::math::{vec3, Vec3};
use crate::sim::PhysParams;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Randomization ranges. Uniform ranges are `(lo, hi)`; observation and
/// action noise are Gaussian standard deviations in radians.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainRandomization {
    pub scale: (f64, f64),
    /// kg
    pub mass: (f64, f64),
    /// m, per axis
    pub com_offset: (f64, f64),
    pub friction: (f64, f64),
    pub kp: (f64, f64),
    pub kd: (f64, f64),
    /// rad
    pub obs_noise_sigma: f64,
    /// rad
    pub action_noise_sigma: f64,
    /// Disturbance force magnitude as a multiple of m*g.
    pub disturbance_magnitude: f64,
    /// Per-control-step probability of applying a disturbance.
    pub disturbance_prob: f64,
}

impl Default for DomainRandomization {
    fn default() -> Self {
        DomainRandomization {
            scale: (0.95, 1.05),
            mass: (0.01, 0.03),
            com_offset: (-0.001, 0.001),
            friction: (0.3, 3.0),
            kp: (2.5, 3.5),
            kd: (0.09, 0.11),
            obs_noise_sigma: 0.02,
            action_noise_sigma: 0.01,
            disturbance_magnitude: 0.2,
            disturbance_prob: 0.25,
        }
    }
}

impl DomainRandomization {
    /// No randomization at all: every range collapses to the base value.
    pub fn none() -> DomainRandomization {
        DomainRandomization {
            scale: (1.0, 1.0),
            mass: (0.02, 0.02),
            com_offset: (0.0, 0.0),
            friction: (1.0, 1.0),
            kp: (3.0, 3.0),
            kd: (0.1, 0.1),
            obs_noise_sigma: 0.0,
            action_noise_sigma: 0.0,
            disturbance_magnitude: 0.0,
            disturbance_prob: 0.0,
        }
    }

    /// Midpoint of a range, used for normalizing the privileged physics
    /// observation into [-1, 1].
    pub fn normalize(range: (f64, f64), v: f64) -> f64 {
        let (lo, hi) = range;
        if (hi - lo).abs() < 1e-12 {
            return 0.0;
        }
        ((v - lo) / (hi - lo)) * 2.0 - 1.0
    }
}

/// Per-episode noise scales attached to the sampled parameters.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct NoiseScales {
    pub obs_sigma: f64,
    pub action_sigma: f64,
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Sample a fresh parameter set. Draw order is fixed: scale, mass, CoM
/// (x, y, z), friction, kp, kd.
pub fn sample_randomized_params<R: Rng>(
    rng: &mut R,
    base: &PhysParams,
    dr: &DomainRandomization,
) -> (PhysParams, NoiseScales) {
    let scale = uniform(rng, dr.scale);
    let mass = uniform(rng, dr.mass);
    let com = vec3(
        uniform(rng, dr.com_offset),
        uniform(rng, dr.com_offset),
        uniform(rng, dr.com_offset),
    );
    let friction = uniform(rng, dr.friction);
    let kp = uniform(rng, dr.kp);
    let kd = uniform(rng, dr.kd);
    (
        PhysParams {
            mass,
            com_offset: com,
            friction,
            scale,
            kp,
            kd,
            ..*base
        },
        NoiseScales {
            obs_sigma: dr.obs_noise_sigma,
            action_sigma: dr.action_noise_sigma,
        },
    )
}

/// With probability `disturbance_prob`, a force of magnitude
/// `disturbance_magnitude * m * g` in a uniformly random direction;
/// otherwise zero.
pub fn maybe_disturb<R: Rng>(
    rng: &mut R,
    params: &PhysParams,
    dr: &DomainRandomization,
) -> Vec3 {
    if dr.disturbance_prob <= 0.0 || rng.gen::<f64>() >= dr.disturbance_prob {
        return Vec3::ZERO;
    }
    // uniform direction on the sphere
    let z: f64 = rng.gen_range(-1.0..1.0f64);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    let dir = vec3(r * phi.cos(), r * phi.sin(), z);
    dir * (dr.disturbance_magnitude * params.mass * 9.81)
}

/// Normalized privileged-physics vector: mass, CoM z, friction, scale, kp,
/// kd, each mapped to [-1, 1] over its randomization range.
pub fn phys_observation(params: &PhysParams, dr: &DomainRandomization) -> [f64; 6] {
    [
        DomainRandomization::normalize(dr.mass, params.mass),
        DomainRandomization::normalize(dr.com_offset, params.com_offset.z),
        DomainRandomization::normalize(dr.friction, params.friction),
        DomainRandomization::normalize(dr.scale, params.scale),
        DomainRandomization::normalize(dr.kp, params.kp),
        DomainRandomization::normalize(dr.kd, params.kd),
    ]
}

/// Gaussian sample via Box-Muller; two uniform draws per call, fixed order.
pub fn gaussian_noise<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        // keep the rng stream aligned whether or not noise is enabled
        let _ = rng.gen::<f64>();
        let _ = rng.gen::<f64>();
        return 0.0;
    }
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
