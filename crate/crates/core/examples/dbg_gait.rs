use dexspin_core::env::*;
use dexspin_core::math::vec3;
use dexspin_core::sim::*;
use dexspin_core::Vec3;

// Scripted probe: from canonical grasp 0, swing the abduction joints in a
// phased cycle (grip - swing - release - return) and watch the pen heading.
fn main() {
    let hand = HandModel::default();
    let pen = PenShape::default();
    let params = PhysParams::default();
    let grasps = default_canonical_grasps(&hand, &pen);
    let g = &grasps[0];
    let mut st = g.to_state();
    // settle
    for _ in 0..10 {
        let (n, _) = control_step(&st, &g.q, Vec3::ZERO, &params, &hand, &pen).unwrap();
        st = n;
    }
    let heading = |s: &SimState| {
        let a = s.pen_quat.rotate(vec3(1.0, 0.0, 0.0));
        a.y.atan2(a.x)
    };
    let h0 = heading(&st);
    let mut total = 0.0;
    let mut hprev = h0;
    // swing all four abduction joints together: tangential drag
    // fingers' +q0 swings clockwise seen from above (local z radially out),
    // so drive q0 negative for counter-clockwise pen rotation
    // Four-phase gait, period P control steps:
    //  phase 0: pair A grips and swings CCW, pair B released at start pose
    //  phase 1: B re-grips at start pose, then A releases
    //  phase 2: B grips and swings CCW, A released swings back to start
    //  phase 3: A re-grips, B releases
    let period = 48usize;
    let quarter = period / 4;
    for step in 0..400 {
        let ph = step % period;
        let quarter_idx = ph / quarter;
        let frac = (ph % quarter) as f64 / quarter as f64;
        let amp = 0.55;
        // swing positions in [0,1] (0 = start CW-most, 1 = end CCW-most)
        let (swing_a, grip_a, swing_b, grip_b) = match quarter_idx {
            0 => (frac, 0.20, 0.0, -0.10),                  // A strokes, B waiting
            1 => (1.0, if frac < 0.5 { 0.20 } else { -0.10 }, 0.0,
                  if frac < 0.5 { 0.20 } else { 0.20 }),     // B re-grips, A lets go
            2 => (1.0 - frac, -0.10, frac, 0.20),            // B strokes, A returns
            _ => (0.0, if frac < 0.5 { -0.10 } else { 0.20 }, 1.0,
                  if frac < 0.5 { 0.20 } else { -0.10 }),    // A re-grips, B lets go
        };
        let mut tgt = g.q.clone();
        for f in 0..4 {
            let (swing, grip) = if f % 2 == 0 { (swing_a, grip_a) } else { (swing_b, grip_b) };
            tgt[f * 4] = g.q[f * 4] + amp * (0.5 - swing); // CCW = negative q0
            tgt[f * 4 + 2] = g.q[f * 4 + 2] + grip;
            tgt[f * 4 + 3] = g.q[f * 4 + 3] + grip * 0.5;
        }
        let (n, _) = control_step(&st, &tgt, Vec3::ZERO, &params, &hand, &pen).unwrap();
        st = n;
        let h = heading(&st);
        let mut d = h - hprev;
        while d > std::f64::consts::PI { d -= std::f64::consts::TAU; }
        while d < -std::f64::consts::PI { d += std::f64::consts::TAU; }
        total += d;
        hprev = h;
        if st.pen_pos.z < -0.05 {
            println!("step {step}: pen fell");
            break;
        }
        if step % 80 == 79 {
            println!(
                "step {}: rotation so far {:.3} rad, z={:.4}, contacts={}",
                step + 1, total, st.pen_pos.z, st.contacts.len()
            );
        }
    }
    println!("total rotation over 20 s: {:.3} rad", total);
}
