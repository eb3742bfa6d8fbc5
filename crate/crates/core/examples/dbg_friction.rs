use dexspin_core::math::{vec3, Vec3};
use dexspin_core::sim::*;
use dexspin_core::math::Quat;
fn main() {
    let hand = HandModel::default();
    let pen = PenShape::default();
    let params = PhysParams { friction: 0.5, ..PhysParams::default() };
    let mut q = vec![0.0; 16];
    for f in 0..4 { q[f * 4] = -0.8; }
    let mut st = SimState::new(q.clone(), vec3(0.0, 0.0, pen.radius + 0.001), Quat::IDENTITY);
    let targets = st.q.clone();
    for i in 0..600 {
        let tau = pd_torque(&targets, &st.q, &st.qdot, &params, &hand).unwrap();
        st = physics_substep(&st, &tau, Vec3::ZERO, &params, &hand, &pen).unwrap();
        if i % 100 == 0 {
            println!("settle {i}: z={:.5} v={:.4?} contacts={}", st.pen_pos.z, st.pen_linvel.to_array(), st.contacts.len());
        }
    }
    let mg = params.mass * params.gravity;
    let push = vec3(0.3 * params.friction * mg, 0.0, 0.0);
    for i in 0..200 {
        let tau = pd_torque(&targets, &st.q, &st.qdot, &params, &hand).unwrap();
        st = physics_substep(&st, &tau, push, &params, &hand, &pen).unwrap();
        if i % 40 == 0 {
            println!("push {i}: pos=({:.4},{:.4},{:.4}) v={:.4?} nc={}", st.pen_pos.x, st.pen_pos.y, st.pen_pos.z, st.pen_linvel.to_array(), st.contacts.len());
        }
    }
}
