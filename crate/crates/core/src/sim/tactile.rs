//! Binary tactile pads: contact forces attributed to the nearest pad
//! direction on the owning fingertip, thresholded.

use super::{Contact, ContactBody, FingerFrames, HandModel};

/// Binary tactile channels in the default configuration (4 fingertips x 5 pads).
pub const N_TACTILE: usize = 20;

/// Read the binary tactile vector from a contact list.
///
/// Each contact on fingertip `f` is attributed to the pad whose direction
/// (rotated into the world frame) best aligns with the direction from the
/// tip center to the contact point; a pad reads 1 iff its summed attributed
/// force magnitude is `>= threshold`.
pub fn tactile_read(
    contacts: &[Contact],
    frames: &[FingerFrames],
    hand: &HandModel,
    threshold: f64,
) -> Vec<u8> {
    let pads = hand.tactile_offsets.len();
    let mut accum = vec![0.0; hand.n_fingers * pads];
    for c in contacts {
        let f = match c.body {
            ContactBody::Fingertip(f) => f,
            ContactBody::Palm => continue,
        };
        let dir = (c.point - frames[f].tip_pos).normalized();
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (k, off) in hand.tactile_offsets.iter().enumerate() {
            let pad_world = frames[f].tip_rot.rotate(*off);
            let d = pad_world.dot(dir);
            if d > best_dot {
                best_dot = d;
                best = k;
            }
        }
        accum[f * pads + best] += c.force.norm();
    }
    accum.into_iter().map(|a| u8::from(a >= threshold)).collect()
}
