//! Metrics (accumulated rotation, success) and the method-comparison
//! harness.

mod rotation;

pub use rotation::{accumulated_z_rotation, heading_angle, signed_z_rotation, success};
