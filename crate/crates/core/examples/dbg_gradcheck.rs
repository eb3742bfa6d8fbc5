use dexspin_core::env::EnvConfig;
use dexspin_core::nn::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let cfg = EnvConfig { hist_len_oracle: 1, hist_len_student: 4, tactile_dim: 2, ..EnvConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let student = StudentNet::new(&cfg, &mut rng);
    let mut params = student.params.clone();
    let tokens: Vec<f32> = (0..2 * student.tokens * 32).map(|_| rng.gen_range(-0.4..0.4f32)).collect();
    let tokens_t = Tensor::from_vec(2 * student.tokens, 32, tokens);
    let target = Tensor::full(2, 16, 0.02);
    let loss = |p: &ParamStore, grads: Option<&mut GradStore>| -> f64 {
        let net = StudentNet::with_params(&cfg, p.clone());
        let mut g = Graph::new(&net.params);
        let xi = g.input(tokens_t.clone());
        let y = net.forward(&mut g, xi);
        let t = g.input(target.clone());
        let d = g.sub(y, t);
        let sq = g.mul_elem(d, d);
        let l = g.mean_all(sq);
        let out = g.value(l).data[0] as f64;
        if let Some(gr) = grads { g.backward(l, gr); }
        out
    };
    let mut grads = GradStore::zeros_like(&params);
    loss(&params, Some(&mut grads));
    let h = 1e-3f32;
    let mut counter = 0usize;
    for pid in 0..params.len() {
        let n = params.get(ParamId(pid)).len();
        let name = params.name(ParamId(pid)).to_string();
        for j in 0..n {
            counter += 1;
            if counter % 997 != 0 { continue; }
            let orig = params.get(ParamId(pid)).data[j];
            params.get_mut(ParamId(pid)).data[j] = orig + h;
            let lp = loss(&params, None);
            params.get_mut(ParamId(pid)).data[j] = orig - h;
            let lm = loss(&params, None);
            params.get_mut(ParamId(pid)).data[j] = orig;
            let fd = (lp - lm) / (2.0 * h as f64);
            let an = grads.get(ParamId(pid)).data[j] as f64;
            if (fd - an).abs() > 1e-4 {
                println!("{name}[{j}]: an={an:.6e} fd={fd:.6e} diff={:.3e}", (fd - an).abs());
            }
        }
    }
    println!("done, probed {}", counter / 997);
}
