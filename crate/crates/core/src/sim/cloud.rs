//! Canonical point cloud on the pen capsule surface, rigidly transformed by
//! the current pose.

use super::PenShape;
use crate::math::{vec3, Quat, Vec3};

/// Number of surface points in the observation cloud.
pub const CLOUD_POINTS: usize = 100;

/// A fixed canonical sampling of a capsule surface.
#[derive(Debug, Clone)]
pub struct PointCloud {
    canonical: Vec<Vec3>,
}

impl PointCloud {
    /// Deterministic stratified sampling: 80 points on the cylindrical side
    /// (10 axial rings x 8 azimuths, with a fixed golden-angle twist per
    /// ring), 10 points on each spherical cap.
    pub fn canonical(pen: &PenShape) -> PointCloud {
        let mut pts = Vec::with_capacity(CLOUD_POINTS);
        let h = pen.half_segment();
        let r = pen.radius;
        let rings = 10;
        let per_ring = 8;
        let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
        for i in 0..rings {
            let x = -h + (i as f64 + 0.5) / rings as f64 * 2.0 * h;
            let twist = golden * i as f64;
            for j in 0..per_ring {
                let phi = twist + j as f64 / per_ring as f64 * std::f64::consts::TAU;
                pts.push(vec3(x, r * phi.cos(), r * phi.sin()));
            }
        }
        // caps: spiral over each hemisphere
        for (sign, base) in [(1.0, h), (-1.0, -h)] {
            for k in 0..10 {
                let t = (k as f64 + 0.5) / 10.0;
                let polar = t * std::f64::consts::FRAC_PI_2;
                let phi = golden * k as f64 * 3.0;
                let (sp, cp) = polar.sin_cos();
                pts.push(vec3(
                    base + sign * r * cp,
                    r * sp * phi.cos(),
                    r * sp * phi.sin(),
                ));
            }
        }
        debug_assert_eq!(pts.len(), CLOUD_POINTS);
        PointCloud { canonical: pts }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.canonical
    }

    /// Canonical points transformed by the given pose, written into `out`.
    pub fn transformed_into(&self, pos: Vec3, quat: Quat, out: &mut Vec<Vec3>) {
        out.clear();
        out.extend(self.canonical.iter().map(|p| quat.rotate(*p) + pos));
    }
}

/// Convenience wrapper returning a fresh buffer.
pub fn pen_point_cloud(pen_pos: Vec3, pen_quat: Quat, cloud: &PointCloud) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(CLOUD_POINTS);
    cloud.transformed_into(pen_pos, pen_quat, &mut out);
    out
}
