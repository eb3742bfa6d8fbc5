//! Central finite-difference verification of the reverse-mode gradients.

use super::params::{GradStore, ParamId, ParamStore};

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    /// Largest relative error among elements with meaningful gradient
    /// magnitude.
    pub max_rel_err: f64,
    /// Largest absolute finite difference observed where the analytic
    /// gradient is ~0.
    pub max_zero_abs: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.checked > 0 && self.max_rel_err < rel_tol && self.max_zero_abs < 1e-3
    }
}

/// Compare analytic parameter gradients against central finite differences
/// with step `h`. `loss_fn` must be a pure function of the parameters.
///
/// Elements with analytic magnitude above `meaningful` contribute to
/// `max_rel_err`; near-zero analytic entries are checked for small absolute
/// finite differences instead (the f32 forward pass limits what a 1e-3 step
/// can resolve at zero).
pub fn finite_difference_check(
    params: &mut ParamStore,
    loss_fn: impl Fn(&ParamStore) -> f64,
    analytic: &GradStore,
    h: f32,
    meaningful: f64,
) -> GradCheckReport {
    let mut report = GradCheckReport::default();
    for pid in 0..params.len() {
        let n = params.get(ParamId(pid)).len();
        for j in 0..n {
            let orig = params.get(ParamId(pid)).data[j];
            params.get_mut(ParamId(pid)).data[j] = orig + h;
            let lp = loss_fn(params);
            params.get_mut(ParamId(pid)).data[j] = orig - h;
            let lm = loss_fn(params);
            params.get_mut(ParamId(pid)).data[j] = orig;
            let fd = (lp - lm) / (2.0 * h as f64);
            let an = analytic.get(ParamId(pid)).data[j] as f64;
            report.checked += 1;
            let mag = an.abs().max(fd.abs());
            if mag > meaningful {
                let rel = (fd - an).abs() / mag;
                if rel > report.max_rel_err {
                    report.max_rel_err = rel;
                }
            } else if (fd - an).abs() > report.max_zero_abs {
                report.max_zero_abs = (fd - an).abs();
            }
        }
    }
    report
}

/// Independent f64 reference implementations of the forward ops, used as
/// the finite-difference side of the gradient checks. Written directly
/// against the math, sharing no code with the f32 graph.
pub mod f64ref {
    use super::{ParamId, ParamStore};

    #[derive(Debug, Clone)]
    pub struct T64 {
        pub rows: usize,
        pub cols: usize,
        pub data: Vec<f64>,
    }

    impl T64 {
        pub fn from_f32(rows: usize, cols: usize, data: &[f32]) -> T64 {
            T64 {
                rows,
                cols,
                data: data.iter().map(|v| *v as f64).collect(),
            }
        }

        pub fn param(p: &ParamStore, id: ParamId) -> T64 {
            let t = p.get(id);
            T64::from_f32(t.rows, t.cols, &t.data)
        }
    }

    pub fn linear(x: &T64, w: &T64, b: Option<&T64>) -> T64 {
        let mut y = T64 {
            rows: x.rows,
            cols: w.cols,
            data: vec![0.0; x.rows * w.cols],
        };
        for r in 0..x.rows {
            for c in 0..w.cols {
                let mut s = b.map_or(0.0, |b| b.data[c]);
                for k in 0..x.cols {
                    s += x.data[r * x.cols + k] * w.data[k * w.cols + c];
                }
                y.data[r * w.cols + c] = s;
            }
        }
        y
    }

    pub fn map(x: &T64, f: impl Fn(f64) -> f64) -> T64 {
        T64 {
            rows: x.rows,
            cols: x.cols,
            data: x.data.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn relu(x: &T64) -> T64 {
        map(x, |v| v.max(0.0))
    }

    pub fn elu(x: &T64) -> T64 {
        map(x, |v| if v > 0.0 { v } else { v.exp() - 1.0 })
    }

    pub fn zip(a: &T64, b: &T64, f: impl Fn(f64, f64) -> f64) -> T64 {
        T64 {
            rows: a.rows,
            cols: a.cols,
            data: a
                .data
                .iter()
                .zip(b.data.iter())
                .map(|(x, y)| f(*x, *y))
                .collect(),
        }
    }

    pub fn max_pool_group(x: &T64, group: usize) -> T64 {
        let rows = x.rows / group;
        let mut y = T64 {
            rows,
            cols: x.cols,
            data: vec![f64::NEG_INFINITY; rows * x.cols],
        };
        for r in 0..x.rows {
            let o = r / group;
            for c in 0..x.cols {
                let v = x.data[r * x.cols + c];
                if v > y.data[o * x.cols + c] {
                    y.data[o * x.cols + c] = v;
                }
            }
        }
        y
    }

    pub fn mean_pool_group(x: &T64, group: usize) -> T64 {
        let rows = x.rows / group;
        let mut y = T64 {
            rows,
            cols: x.cols,
            data: vec![0.0; rows * x.cols],
        };
        for r in 0..x.rows {
            let o = r / group;
            for c in 0..x.cols {
                y.data[o * x.cols + c] += x.data[r * x.cols + c] / group as f64;
            }
        }
        y
    }

    pub fn mean_all(x: &T64) -> f64 {
        x.data.iter().sum::<f64>() / x.data.len() as f64
    }

    pub fn layer_norm(x: &T64, gamma: &T64, beta: &T64) -> T64 {
        let n = x.cols;
        let mut y = x.clone();
        for r in 0..x.rows {
            let row = &x.data[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + 1e-5).sqrt();
            for c in 0..n {
                y.data[r * n + c] = gamma.data[c] * (row[c] - mean) * inv + beta.data[c];
            }
        }
        y
    }

    pub fn pos_enc(x: &T64, tokens: usize) -> T64 {
        let mut y = x.clone();
        let cols = x.cols;
        for r in 0..x.rows {
            let pos = r % tokens;
            for i in 0..cols / 2 {
                let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / cols as f64);
                let angle = pos as f64 * freq;
                // match the f32 table exactly
                y.data[r * cols + 2 * i] += (angle.sin() as f32) as f64;
                y.data[r * cols + 2 * i + 1] += (angle.cos() as f32) as f64;
            }
        }
        y
    }

    pub fn mhsa(q: &T64, k: &T64, v: &T64, heads: usize, tokens: usize) -> T64 {
        let d = q.cols;
        let dh = d / heads;
        let batch = q.rows / tokens;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut y = T64 {
            rows: q.rows,
            cols: d,
            data: vec![0.0; q.rows * d],
        };
        for bi in 0..batch {
            for h in 0..heads {
                let c0 = h * dh;
                for ti in 0..tokens {
                    let qrow = &q.data[(bi * tokens + ti) * d + c0..(bi * tokens + ti) * d + c0 + dh];
                    let mut scores = vec![0.0f64; tokens];
                    for tj in 0..tokens {
                        let krow =
                            &k.data[(bi * tokens + tj) * d + c0..(bi * tokens + tj) * d + c0 + dh];
                        scores[tj] = qrow.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>() * scale;
                    }
                    let maxv = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for s in scores.iter_mut() {
                        *s = (*s - maxv).exp();
                        sum += *s;
                    }
                    for tj in 0..tokens {
                        let p = scores[tj] / sum;
                        let vrow =
                            &v.data[(bi * tokens + tj) * d + c0..(bi * tokens + tj) * d + c0 + dh];
                        for c in 0..dh {
                            y.data[(bi * tokens + ti) * d + c0 + c] += p * vrow[c];
                        }
                    }
                }
            }
        }
        y
    }

    pub fn gaussian_log_prob(mean: &T64, log_std: &T64, actions: &T64) -> T64 {
        let d = mean.cols;
        let mut y = T64 {
            rows: mean.rows,
            cols: 1,
            data: vec![0.0; mean.rows],
        };
        for r in 0..mean.rows {
            let mut acc = -0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
            for c in 0..d {
                let sigma = log_std.data[c].exp();
                let z = (actions.data[r * d + c] - mean.data[r * d + c]) / sigma;
                acc += -0.5 * z * z - log_std.data[c];
            }
            y.data[r] = acc;
        }
        y
    }

    pub fn mse(a: &T64, b: &T64) -> f64 {
        a.data
            .iter()
            .zip(b.data.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / a.data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::Graph;
    use crate::nn::params::kaiming_uniform;
    use crate::nn::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mse_f64(a: &Tensor, b: &Tensor) -> f64 {
        a.data
            .iter()
            .zip(b.data.iter())
            .map(|(x, y)| {
                let d = *x as f64 - *y as f64;
                d * d
            })
            .sum::<f64>()
            / a.len() as f64
    }

    fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Tensor {
        Tensor::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect(),
        )
    }

    #[test]
    fn one_layer_linear_matches_hand_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = ParamStore::new();
        let w = params.add("w", rand_tensor(&mut rng, 3, 2, 1.0));
        let b = params.add("b", rand_tensor(&mut rng, 1, 2, 0.5));
        let x = rand_tensor(&mut rng, 4, 3, 1.0);
        let mut g = Graph::new(&params);
        let xi = g.input(x.clone());
        let y = g.linear(xi, w, Some(b));
        let yv = g.value(y);
        let wv = params.get(w);
        let bv = params.get(b);
        for r in 0..4 {
            for c in 0..2 {
                let mut s = bv.data[c];
                for k in 0..3 {
                    s += x.data[r * 3 + k] * wv.data[k * 2 + c];
                }
                assert!((yv.data[r * 2 + c] - s).abs() < 1e-6);
            }
        }
    }

    /// Two-layer MLP with ELU: the spec's named finite-difference oracle.
    #[test]
    fn two_layer_mlp_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut params = ParamStore::new();
        let w1 = params.add("w1", kaiming_uniform(&mut rng, 5, 12, 1.0));
        let b1 = params.add("b1", rand_tensor(&mut rng, 1, 12, 0.2));
        let w2 = params.add("w2", kaiming_uniform(&mut rng, 12, 3, 1.0));
        let b2 = params.add("b2", rand_tensor(&mut rng, 1, 3, 0.2));
        assert!(params.total_params() >= 100);
        let x = rand_tensor(&mut rng, 6, 5, 1.0);
        // target close to the output so the loss is small and the f32
        // forward noise stays below the finite-difference resolution
        let target = {
            let mut g = Graph::new(&params);
            let xi = g.input(x.clone());
            let h = g.linear(xi, w1, Some(b1));
            let h = g.elu(h);
            let y = g.linear(h, w2, Some(b2));
            let mut t = g.value(y).clone();
            for v in &mut t.data {
                *v += 0.05;
            }
            t
        };
        let analytic = |p: &ParamStore, gr: &mut GradStore| {
            let mut g = Graph::new(p);
            let xi = g.input(x.clone());
            let h = g.linear(xi, w1, Some(b1));
            let h = g.elu(h);
            let y = g.linear(h, w2, Some(b2));
            let ti = g.input(target.clone());
            let d = g.sub(y, ti);
            let sq = g.mul_elem(d, d);
            let l = g.mean_all(sq);
            g.backward(l, gr);
        };
        // f64 reference forward on the finite-difference side
        let x64 = f64ref::T64::from_f32(x.rows, x.cols, &x.data);
        let t64 = f64ref::T64::from_f32(target.rows, target.cols, &target.data);
        let fd_loss = |p: &ParamStore| -> f64 {
            let h = f64ref::linear(&x64, &f64ref::T64::param(p, w1), Some(&f64ref::T64::param(p, b1)));
            let h = f64ref::elu(&h);
            let y = f64ref::linear(&h, &f64ref::T64::param(p, w2), Some(&f64ref::T64::param(p, b2)));
            f64ref::mse(&y, &t64)
        };
        let mut grads = GradStore::zeros_like(&params);
        analytic(&params, &mut grads);
        let report = finite_difference_check(&mut params, fd_loss, &grads, 1e-3, 0.02);
        assert!(
            report.passes(1e-4),
            "gradcheck failed: {report:?}"
        );
    }

    #[test]
    fn elementwise_and_pool_ops_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut params = ParamStore::new();
        let w = params.add("w", rand_tensor(&mut rng, 4, 6, 0.6));
        let x = rand_tensor(&mut rng, 8, 4, 1.0);
        let analytic = |p: &ParamStore, gr: &mut GradStore| {
            let mut g = Graph::new(p);
            let xi = g.input(x.clone());
            let h = g.linear(xi, w, None);
            let r = g.relu(h);
            let e = g.exp(r);
            let c = g.clamp(e, 0.8, 2.5);
            let s = g.scale(c, 0.3);
            let m = g.min_pair(s, c);
            let pooled = g.max_pool_group(m, 4);
            let mean = g.mean_pool_group(pooled, 2);
            let l = g.mean_all(mean);
            g.backward(l, gr);
        };
        let x64 = f64ref::T64::from_f32(x.rows, x.cols, &x.data);
        let fd_loss = |p: &ParamStore| -> f64 {
            let h = f64ref::linear(&x64, &f64ref::T64::param(p, w), None);
            let r = f64ref::relu(&h);
            let e = f64ref::map(&r, f64::exp);
            let c = f64ref::map(&e, |v| v.clamp(0.8, 2.5));
            let s = f64ref::map(&c, |v| v * 0.3);
            let m = f64ref::zip(&s, &c, f64::min);
            let pooled = f64ref::max_pool_group(&m, 4);
            let mean = f64ref::mean_pool_group(&pooled, 2);
            f64ref::mean_all(&mean)
        };
        let mut grads = GradStore::zeros_like(&params);
        analytic(&params, &mut grads);
        let report = finite_difference_check(&mut params, fd_loss, &grads, 1e-3, 0.02);
        assert!(report.passes(1e-4), "gradcheck failed: {report:?}");
    }

    #[test]
    fn attention_block_gradcheck() {
        let tokens = 5;
        let width = 8;
        let heads = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut params = ParamStore::new();
        let ln_g = params.add("ln.g", Tensor::full(1, width, 1.0));
        let ln_b = params.add("ln.b", Tensor::zeros(1, width));
        let wq = params.add("wq", kaiming_uniform(&mut rng, width, width, 1.0));
        let wk = params.add("wk", kaiming_uniform(&mut rng, width, width, 1.0));
        let wv = params.add("wv", kaiming_uniform(&mut rng, width, width, 1.0));
        let wo = params.add("wo", kaiming_uniform(&mut rng, width, width, 1.0));
        let x = rand_tensor(&mut rng, 2 * tokens, width, 0.8);
        let forward = |g: &mut Graph| -> crate::nn::graph::NodeId {
            let xi = g.input(x.clone());
            let xi = g.pos_enc(xi, tokens);
            let norm = g.layer_norm(xi, ln_g, ln_b);
            let q = g.linear(norm, wq, None);
            let k = g.linear(norm, wk, None);
            let v = g.linear(norm, wv, None);
            let att = g.mhsa(q, k, v, heads, tokens);
            let att = g.linear(att, wo, None);
            let res = g.add(xi, att);
            g.mean_pool_group(res, tokens)
        };
        // target close to the output keeps the loss small (f32 resolution)
        let target = {
            let mut g = Graph::new(&params);
            let pooled = forward(&mut g);
            let mut t = g.value(pooled).clone();
            for v in &mut t.data {
                *v += 0.04;
            }
            t
        };
        let loss = |p: &ParamStore, grads: Option<&mut GradStore>| -> f64 {
            let mut g = Graph::new(p);
            let pooled = forward(&mut g);
            let out = mse_f64(g.value(pooled), &target);
            if let Some(gr) = grads {
                let t = g.input(target.clone());
                let d = g.sub(pooled, t);
                let sq = g.mul_elem(d, d);
                let l = g.mean_all(sq);
                g.backward(l, gr);
            }
            out
        };
        let mut grads = GradStore::zeros_like(&params);
        loss(&params, Some(&mut grads));
        let report = finite_difference_check(&mut params, |p| loss(p, None), &grads, 1e-3, 0.05);
        assert!(report.passes(1e-4), "gradcheck failed: {report:?}");
    }

    #[test]
    fn gaussian_logprob_gradcheck_and_stationarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let mut params = ParamStore::new();
        let w = params.add("w", rand_tensor(&mut rng, 4, 3, 0.7));
        let log_std = params.add("log_std", rand_tensor(&mut rng, 1, 3, 0.3));
        let x = rand_tensor(&mut rng, 5, 4, 1.0);
        let actions = rand_tensor(&mut rng, 5, 3, 0.8);
        let analytic = |p: &ParamStore, gr: &mut GradStore| {
            let mut g = Graph::new(p);
            let xi = g.input(x.clone());
            let mean = g.linear(xi, w, None);
            let lp = g.gaussian_log_prob(mean, log_std, actions.clone());
            let l = g.mean_all(lp);
            let l = g.scale(l, 0.05);
            g.backward(l, gr);
        };
        let x64 = f64ref::T64::from_f32(x.rows, x.cols, &x.data);
        let a64 = f64ref::T64::from_f32(actions.rows, actions.cols, &actions.data);
        let fd_loss = |p: &ParamStore| -> f64 {
            let mean = f64ref::linear(&x64, &f64ref::T64::param(p, w), None);
            let lp = f64ref::gaussian_log_prob(&mean, &f64ref::T64::param(p, log_std), &a64);
            0.05 * f64ref::mean_all(&lp)
        };
        let mut grads = GradStore::zeros_like(&params);
        analytic(&params, &mut grads);
        let report = finite_difference_check(&mut params, fd_loss, &grads, 1e-3, 0.02);
        assert!(report.passes(1e-4), "gradcheck failed: {report:?}");

        // gradient wrt mean vanishes when the action equals the mean
        let mut p2 = ParamStore::new();
        let mean_param = p2.add("mean", Tensor::full(1, 3, 0.4));
        let ls2 = p2.add("log_std", Tensor::zeros(1, 3));
        let mut g = Graph::new(&p2);
        let zero_in = g.input(Tensor::full(1, 1, 1.0));
        let mean = g.linear(zero_in, mean_param, None);
        let lp = g.gaussian_log_prob(mean, ls2, Tensor::full(1, 3, 0.4));
        let l = g.mean_all(lp);
        let mut grads2 = GradStore::zeros_like(&p2);
        g.backward(l, &mut grads2);
        for v in &grads2.get(mean_param).data {
            assert!(v.abs() < 1e-7);
        }
    }

    #[test]
    fn constant_output_head_zero_input_gradient() {
        // zero weights between input and output: input cannot influence the
        // loss, so parameter gradients upstream of the cut vanish
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let mut params = ParamStore::new();
        let w1 = params.add("w1", rand_tensor(&mut rng, 3, 4, 0.5));
        let w2 = params.add("w2", Tensor::zeros(4, 2)); // the cut
        let b2 = params.add("b2", Tensor::full(1, 2, 0.3));
        let x = rand_tensor(&mut rng, 5, 3, 1.0);
        let mut g = Graph::new(&params);
        let xi = g.input(x);
        let h = g.linear(xi, w1, None);
        let h = g.elu(h);
        let y = g.linear(h, w2, Some(b2));
        let sq = g.mul_elem(y, y);
        let l = g.mean_all(sq);
        let mut grads = GradStore::zeros_like(&params);
        g.backward(l, &mut grads);
        assert!(grads.get(w1).data.iter().all(|v| *v == 0.0));
        assert!(grads.get(b2).data.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn full_policy_and_student_gradcheck_small() {
        // End-to-end check through the real network builders on tiny configs.
        let cfg = crate::env::EnvConfig {
            hist_len_oracle: 1,
            hist_len_student: 4,
            tactile_dim: 2,
            ..crate::env::EnvConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let student = crate::nn::StudentNet::new(&cfg, &mut rng);
        let mut params = student.params.clone();
        let tokens = rand_tensor(&mut rng, 2 * student.tokens, 32, 0.4);
        let target = Tensor::full(2, 16, 0.02);
        let loss = |p: &ParamStore, grads: Option<&mut GradStore>| -> f64 {
            let net = crate::nn::StudentNet::with_params(&cfg, p.clone());
            let mut g = Graph::new(&net.params);
            let xi = g.input(tokens.clone());
            let y = net.forward(&mut g, xi);
            let out = mse_f64(g.value(y), &target);
            if let Some(gr) = grads {
                let t = g.input(target.clone());
                let d = g.sub(y, t);
                let sq = g.mul_elem(d, d);
                let l = g.mean_all(sq);
                g.backward(l, gr);
            }
            out
        };
        let mut grads = GradStore::zeros_like(&params);
        loss(&params, Some(&mut grads));
        // probe a subset: full sweep over 87k params would be slow
        let report = finite_difference_check_sampled(
            &mut params,
            |p| loss(p, None),
            &grads,
            1e-3,
            0.02,
            997,
        );
        assert!(report.passes(2e-4), "student gradcheck: {report:?}");
    }

    /// Sampled variant for large stores: probe every `stride`-th element.
    fn finite_difference_check_sampled(
        params: &mut ParamStore,
        loss_fn: impl Fn(&ParamStore) -> f64,
        analytic: &GradStore,
        h: f32,
        meaningful: f64,
        stride: usize,
    ) -> GradCheckReport {
        let mut report = GradCheckReport::default();
        let mut counter = 0usize;
        for pid in 0..params.len() {
            let n = params.get(ParamId(pid)).len();
            for j in 0..n {
                counter += 1;
                if counter % stride != 0 {
                    continue;
                }
                let orig = params.get(ParamId(pid)).data[j];
                params.get_mut(ParamId(pid)).data[j] = orig + h;
                let lp = loss_fn(params);
                params.get_mut(ParamId(pid)).data[j] = orig - h;
                let lm = loss_fn(params);
                params.get_mut(ParamId(pid)).data[j] = orig;
                let fd = (lp - lm) / (2.0 * h as f64);
                let an = analytic.get(ParamId(pid)).data[j] as f64;
                report.checked += 1;
                let mag = an.abs().max(fd.abs());
                if mag > meaningful {
                    let rel = (fd - an).abs() / mag;
                    report.max_rel_err = report.max_rel_err.max(rel);
                } else {
                    report.max_zero_abs = report.max_zero_abs.max((fd - an).abs());
                }
            }
        }
        report
    }
}
