use dexspin_core::env::*;
use dexspin_core::sim::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rates_for(design: &GraspDesign) -> Option<Vec<f64>> {
    let hand = HandModel::default();
    let pen = PenShape::default();
    let params = PhysParams::default();
    let grasps: Vec<CanonicalGrasp> = (0..6)
        .map(|k| author_grasp(&hand, &pen, design, k as f64 * std::f64::consts::PI / 6.0))
        .collect();
    for g in &grasps {
        if !stability_filter(&g.to_state(), &hand, &pen, &params) {
            return None;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    generate_init_states(&grasps, 20, &hand, &pen, &params, &mut rng)
        .ok()
        .map(|s| s.acceptance_rates)
}

fn main() {
    for press in [0.78, 0.85, 0.92] {
        for preload in [0.0005, 0.001] {
            for height in [0.065, 0.07, 0.075] {
                let d = GraspDesign {
                    pen_height: height,
                    press_angle: press,
                    preload,
                    ..GraspDesign::default()
                };
                match rates_for(&d) {
                    Some(r) => {
                        let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
                        println!(
                            "press={press:.2} preload={preload:.3} h={height:.3} min_rate={:.2} rates={:?}",
                            min,
                            r.iter().map(|x| (x * 100.0) as i32).collect::<Vec<_>>()
                        );
                    }
                    None => println!("press={press:.2} preload={preload:.3} h={height:.3} UNSTABLE"),
                }
            }
        }
    }
}
