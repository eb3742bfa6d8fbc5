use dexspin_core::env::*;
use dexspin_core::sim::*;
use dexspin_core::Vec3;

fn main() {
    let hand = HandModel::default();
    let pen = PenShape::default();
    let params = PhysParams::default();
    let grasps = default_canonical_grasps(&hand, &pen);
    let g = &grasps[0];
    let mut st = settle_state(&g.to_state(), &hand, &pen, &params).expect("stable");
    let hold = st.q.clone();
    let g = CanonicalGrasp { q: hold, pen_pos: st.pen_pos, pen_quat: st.pen_quat };
    for i in 0..40 {
        let (n, _) = control_step(&st, &g.q, Vec3::ZERO, &params, &hand, &pen).unwrap();
        st = n;
        if i % 5 == 0 {
            let w = st.pen_angvel;
            let axis = st.pen_quat.rotate(dexspin_core::math::vec3(1.0, 0.0, 0.0));
            let roll = w.dot(axis);
            let perp = (w - axis * roll).norm();
            println!(
                "step {i}: |w|={:.2} roll={:.2} perp={:.2} v={:.3} z={:.4} nc={}",
                w.norm(), roll, perp, st.pen_linvel.norm(), st.pen_pos.z, st.contacts.len()
            );
        }
    }
}
