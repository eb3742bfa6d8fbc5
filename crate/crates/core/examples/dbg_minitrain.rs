use dexspin_core::env::*;
use dexspin_core::rl::*;
use dexspin_core::sim::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(300_000);
    let n_envs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(64);
    let sim = SimConfig::default();
    let grasps = default_canonical_grasps(&sim.hand, &sim.pen);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let init_set = Arc::new(
        generate_init_states(&grasps, 20, &sim.hand, &sim.pen, &PhysParams::default(), &mut rng).unwrap(),
    );
    eprintln!("init set: {} states, rates {:?}", init_set.states.len(),
        init_set.acceptance_rates.iter().map(|r| (r * 100.0) as i32).collect::<Vec<_>>());
    let setup = TrainEnvSetup {
        sim,
        env: EnvConfig::default(),
        weights: RewardWeights::default(),
        dr: DomainRandomization::default(),
        init_set,
        reset_mode: ResetMode::UniformCanonical,
    };
    let cfg = PPOConfig {
        n_envs,
        minibatch_size: n_envs * 12,
        total_agent_steps: steps,
        ..PPOConfig::desk()
    };
    let sink = TrainSink {
        curves: Some("/tmp/minitrain_curves.csv".into()),
        checkpoint_dir: Some("/tmp/minitrain_ckpt".into()),
        checkpoint_every: 0,
        log_every: 20,
    };
    let t0 = std::time::Instant::now();
    let (policy, _) = train_oracle(&cfg, &setup, 1, &sink).unwrap();
    eprintln!("training done in {:.0} s", t0.elapsed().as_secs_f64());
    let eps = evaluate_policy(&policy, &setup, 20, 777).unwrap();
    let mean_rot: f64 = eps.iter().map(|e| e.rotation).sum::<f64>() / eps.len() as f64;
    let mean_dur: f64 = eps.iter().map(|e| e.duration_s).sum::<f64>() / eps.len() as f64;
    eprintln!("eval: mean rotation {mean_rot:.3} rad, mean duration {mean_dur:.2} s");
}
