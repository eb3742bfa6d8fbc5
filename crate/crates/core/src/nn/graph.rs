//! Tape-based reverse-mode differentiation over 2-D tensors.
//!
//! A [`Graph`] is built per forward pass: each op computes its value
//! immediately and records what backward needs. Gradients for parameters
//! accumulate into a [`GradStore`]; everything runs in creation order
//! (forward) / reverse order (backward), so results are bit-reproducible.

use super::params::{GradStore, ParamId, ParamStore};
use super::tensor::{gemm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

enum Op {
    Input,
    Linear {
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
    },
    Relu {
        x: NodeId,
    },
    Elu {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    MulElem {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        x: NodeId,
        c: f32,
    },
    Exp {
        x: NodeId,
    },
    Clamp {
        x: NodeId,
        lo: f32,
        hi: f32,
    },
    MinPair {
        a: NodeId,
        b: NodeId,
    },
    MaxPoolGroup {
        x: NodeId,
        group: usize,
        argmax: Vec<u32>,
    },
    MeanPoolGroup {
        x: NodeId,
        group: usize,
    },
    MeanAll {
        x: NodeId,
    },
    Concat {
        xs: Vec<NodeId>,
    },
    ColScale {
        x: NodeId,
        scales: Vec<f32>,
    },
    PosEnc {
        x: NodeId,
    },
    LayerNorm {
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        xhat: Tensor,
        inv_std: Vec<f32>,
    },
    Mhsa {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        tokens: usize,
        /// softmax attention weights, `[batch, heads, tokens, tokens]` flat
        probs: Vec<f32>,
    },
    GaussianLogProb {
        mean: NodeId,
        log_std: ParamId,
        actions: Tensor,
    },
}

pub struct Graph<'a> {
    params: &'a ParamStore,
    ops: Vec<Op>,
    values: Vec<Tensor>,
}

const LN_EPS: f32 = 1e-5;

impl<'a> Graph<'a> {
    pub fn new(params: &'a ParamStore) -> Graph<'a> {
        Graph {
            params,
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        NodeId(self.values.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value)
    }

    /// `y = x @ W (+ b)`; `W` is `[in, out]`, `b` is `[1, out]`.
    pub fn linear(&mut self, x: NodeId, w: ParamId, b: Option<ParamId>) -> NodeId {
        let xv = &self.values[x.0];
        let wv = self.params.get(w);
        assert_eq!(xv.cols, wv.rows, "linear shape mismatch");
        let mut y = Tensor::zeros(xv.rows, wv.cols);
        if let Some(b) = b {
            let bv = self.params.get(b);
            assert_eq!(bv.cols, wv.cols);
            for r in 0..y.rows {
                y.data[r * y.cols..(r + 1) * y.cols].copy_from_slice(&bv.data);
            }
            gemm(false, false, xv, wv, &mut y, 1.0);
        } else {
            gemm(false, false, xv, wv, &mut y, 0.0);
        }
        self.push(Op::Linear { x, w, b }, y)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let y = Tensor {
            rows: self.values[x.0].rows,
            cols: self.values[x.0].cols,
            data: self.values[x.0].data.iter().map(|v| v.max(0.0)).collect(),
        };
        self.push(Op::Relu { x }, y)
    }

    pub fn elu(&mut self, x: NodeId) -> NodeId {
        let y = Tensor {
            rows: self.values[x.0].rows,
            cols: self.values[x.0].cols,
            data: self.values[x.0]
                .data
                .iter()
                .map(|v| if *v > 0.0 { *v } else { v.exp() - 1.0 })
                .collect(),
        };
        self.push(Op::Elu { x }, y)
    }

    fn elementwise2(&mut self, a: NodeId, b: NodeId, f: impl Fn(f32, f32) -> f32) -> Tensor {
        let av = &self.values[a.0];
        let bv = &self.values[b.0];
        assert!(av.same_shape(bv), "elementwise shape mismatch");
        Tensor {
            rows: av.rows,
            cols: av.cols,
            data: av
                .data
                .iter()
                .zip(bv.data.iter())
                .map(|(x, y)| f(*x, *y))
                .collect(),
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = self.elementwise2(a, b, |x, y| x + y);
        self.push(Op::Add { a, b }, y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = self.elementwise2(a, b, |x, y| x - y);
        self.push(Op::Sub { a, b }, y)
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = self.elementwise2(a, b, |x, y| x * y);
        self.push(Op::MulElem { a, b }, y)
    }

    pub fn scale(&mut self, x: NodeId, c: f32) -> NodeId {
        let y = Tensor {
            rows: self.values[x.0].rows,
            cols: self.values[x.0].cols,
            data: self.values[x.0].data.iter().map(|v| v * c).collect(),
        };
        self.push(Op::Scale { x, c }, y)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let y = Tensor {
            rows: self.values[x.0].rows,
            cols: self.values[x.0].cols,
            data: self.values[x.0].data.iter().map(|v| v.exp()).collect(),
        };
        self.push(Op::Exp { x }, y)
    }

    pub fn clamp(&mut self, x: NodeId, lo: f32, hi: f32) -> NodeId {
        let y = Tensor {
            rows: self.values[x.0].rows,
            cols: self.values[x.0].cols,
            data: self.values[x.0].data.iter().map(|v| v.clamp(lo, hi)).collect(),
        };
        self.push(Op::Clamp { x, lo, hi }, y)
    }

    pub fn min_pair(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = self.elementwise2(a, b, f32::min);
        self.push(Op::MinPair { a, b }, y)
    }

    /// Max over groups of `group` consecutive rows: `[G*n, F] -> [n, F]`.
    pub fn max_pool_group(&mut self, x: NodeId, group: usize) -> NodeId {
        let xv = &self.values[x.0];
        assert_eq!(xv.rows % group, 0);
        let out_rows = xv.rows / group;
        let cols = xv.cols;
        let mut y = Tensor::full(out_rows, cols, f32::NEG_INFINITY);
        let mut argmax = vec![0u32; out_rows * cols];
        for r in 0..xv.rows {
            let o = r / group;
            for c in 0..cols {
                let v = xv.data[r * cols + c];
                if v > y.data[o * cols + c] {
                    y.data[o * cols + c] = v;
                    argmax[o * cols + c] = r as u32;
                }
            }
        }
        self.push(Op::MaxPoolGroup { x, group, argmax }, y)
    }

    /// Mean over groups of `group` consecutive rows.
    pub fn mean_pool_group(&mut self, x: NodeId, group: usize) -> NodeId {
        let xv = &self.values[x.0];
        assert_eq!(xv.rows % group, 0);
        let out_rows = xv.rows / group;
        let cols = xv.cols;
        let mut y = Tensor::zeros(out_rows, cols);
        for r in 0..xv.rows {
            let o = r / group;
            for c in 0..cols {
                y.data[o * cols + c] += xv.data[r * cols + c];
            }
        }
        let inv = 1.0 / group as f32;
        for v in &mut y.data {
            *v *= inv;
        }
        self.push(Op::MeanPoolGroup { x, group }, y)
    }

    /// Mean over every element, `[r, c] -> [1, 1]`.
    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let xv = &self.values[x.0];
        let m = xv.data.iter().map(|v| *v as f64).sum::<f64>() / xv.len() as f64;
        let y = Tensor::from_vec(1, 1, vec![m as f32]);
        self.push(Op::MeanAll { x }, y)
    }

    /// Column-wise concatenation of nodes with equal row counts.
    pub fn concat(&mut self, xs: &[NodeId]) -> NodeId {
        let rows = self.values[xs[0].0].rows;
        let cols: usize = xs.iter().map(|id| self.values[id.0].cols).sum();
        let mut y = Tensor::zeros(rows, cols);
        let mut off = 0;
        for id in xs {
            let v = &self.values[id.0];
            assert_eq!(v.rows, rows);
            for r in 0..rows {
                y.data[r * cols + off..r * cols + off + v.cols].copy_from_slice(v.row(r));
            }
            off += v.cols;
        }
        self.push(Op::Concat { xs: xs.to_vec() }, y)
    }

    /// Fixed per-column input scaling (no parameters).
    pub fn col_scale(&mut self, x: NodeId, scales: &[f32]) -> NodeId {
        let xv = &self.values[x.0];
        assert_eq!(xv.cols, scales.len());
        let mut y = xv.clone();
        for r in 0..y.rows {
            for c in 0..y.cols {
                y.data[r * y.cols + c] *= scales[c];
            }
        }
        self.push(
            Op::ColScale {
                x,
                scales: scales.to_vec(),
            },
            y,
        )
    }

    /// Add a sinusoidal position encoding; rows cycle through `tokens`
    /// positions (consecutive rows belong to one sequence).
    pub fn pos_enc(&mut self, x: NodeId, tokens: usize) -> NodeId {
        let xv = &self.values[x.0];
        let cols = xv.cols;
        let table = sinusoidal_table(tokens, cols);
        let mut y = xv.clone();
        for r in 0..y.rows {
            let t = r % tokens;
            for c in 0..cols {
                y.data[r * cols + c] += table[t * cols + c];
            }
        }
        self.push(Op::PosEnc { x }, y)
    }

    /// Per-row layer normalization with learnable gain/bias.
    pub fn layer_norm(&mut self, x: NodeId, gamma: ParamId, beta: ParamId) -> NodeId {
        let xv = &self.values[x.0];
        let n = xv.cols;
        let g = self.params.get(gamma);
        let b = self.params.get(beta);
        assert_eq!(g.cols, n);
        assert_eq!(b.cols, n);
        let mut xhat = Tensor::zeros(xv.rows, n);
        let mut inv_std = vec![0.0f32; xv.rows];
        let mut y = Tensor::zeros(xv.rows, n);
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f32>() / n as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n as f32;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = is;
            for c in 0..n {
                let xh = (row[c] - mean) * is;
                xhat.data[r * n + c] = xh;
                y.data[r * n + c] = g.data[c] * xh + b.data[c];
            }
        }
        self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            y,
        )
    }

    /// Multi-head self-attention core on pre-projected `[B*T, D]` Q/K/V.
    pub fn mhsa(&mut self, q: NodeId, k: NodeId, v: NodeId, heads: usize, tokens: usize) -> NodeId {
        let qv = &self.values[q.0];
        let d = qv.cols;
        assert_eq!(d % heads, 0);
        assert_eq!(qv.rows % tokens, 0);
        let dh = d / heads;
        let batch = qv.rows / tokens;
        let scale = 1.0 / (dh as f32).sqrt();
        let kv = &self.values[k.0];
        let vv = &self.values[v.0];
        let mut probs = vec![0.0f32; batch * heads * tokens * tokens];
        let mut y = Tensor::zeros(qv.rows, d);
        for bi in 0..batch {
            for h in 0..heads {
                let col0 = h * dh;
                let pbase = (bi * heads + h) * tokens * tokens;
                // scores and row-softmax
                for ti in 0..tokens {
                    let qrow = &qv.data
                        [(bi * tokens + ti) * d + col0..(bi * tokens + ti) * d + col0 + dh];
                    let mut maxv = f32::NEG_INFINITY;
                    for tj in 0..tokens {
                        let krow = &kv.data
                            [(bi * tokens + tj) * d + col0..(bi * tokens + tj) * d + col0 + dh];
                        let s: f32 = qrow.iter().zip(krow).map(|(a, b)| a * b).sum::<f32>() * scale;
                        probs[pbase + ti * tokens + tj] = s;
                        maxv = maxv.max(s);
                    }
                    let mut sum = 0.0;
                    for tj in 0..tokens {
                        let e = (probs[pbase + ti * tokens + tj] - maxv).exp();
                        probs[pbase + ti * tokens + tj] = e;
                        sum += e;
                    }
                    let inv = 1.0 / sum;
                    for tj in 0..tokens {
                        probs[pbase + ti * tokens + tj] *= inv;
                    }
                    // weighted sum of V rows
                    let yrow = &mut y.data
                        [(bi * tokens + ti) * d + col0..(bi * tokens + ti) * d + col0 + dh];
                    for tj in 0..tokens {
                        let p = probs[pbase + ti * tokens + tj];
                        let vrow = &vv.data
                            [(bi * tokens + tj) * d + col0..(bi * tokens + tj) * d + col0 + dh];
                        for c in 0..dh {
                            yrow[c] += p * vrow[c];
                        }
                    }
                }
            }
        }
        self.push(
            Op::Mhsa {
                q,
                k,
                v,
                heads,
                tokens,
                probs,
            },
            y,
        )
    }

    /// Diagonal-Gaussian log density of `actions` under mean rows and a
    /// `[1, D]` log-std parameter; output `[B, 1]`.
    pub fn gaussian_log_prob(&mut self, mean: NodeId, log_std: ParamId, actions: Tensor) -> NodeId {
        let mv = &self.values[mean.0];
        assert!(mv.same_shape(&actions));
        let ls = self.params.get(log_std);
        assert_eq!(ls.cols, mv.cols);
        let d = mv.cols;
        let mut y = Tensor::zeros(mv.rows, 1);
        let const_term = -0.5 * d as f32 * (2.0 * std::f32::consts::PI).ln();
        for r in 0..mv.rows {
            let mut acc = const_term;
            for c in 0..d {
                let sigma = ls.data[c].exp();
                let z = (actions.data[r * d + c] - mv.data[r * d + c]) / sigma;
                acc += -0.5 * z * z - ls.data[c];
            }
            y.data[r] = acc;
        }
        self.push(
            Op::GaussianLogProb {
                mean,
                log_std,
                actions,
            },
            y,
        )
    }

    /// Reverse pass from a scalar loss node. Parameter gradients accumulate
    /// into `grads`.
    pub fn backward(&self, loss: NodeId, grads: &mut GradStore) {
        let mut node_grads: Vec<Option<Tensor>> = vec![None; self.values.len()];
        let lv = &self.values[loss.0];
        assert_eq!(lv.len(), 1, "backward starts from a scalar");
        node_grads[loss.0] = Some(Tensor::full(lv.rows, lv.cols, 1.0));

        for idx in (0..self.ops.len()).rev() {
            let g = match node_grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.ops[idx] {
                Op::Input => {}
                Op::Linear { x, w, b } => {
                    let xv = &self.values[x.0];
                    let wv = self.params.get(*w);
                    // dW += x^T g
                    gemm(true, false, xv, &g, grads.get_mut(*w), 1.0);
                    if let Some(b) = b {
                        let db = grads.get_mut(*b);
                        for r in 0..g.rows {
                            for c in 0..g.cols {
                                db.data[c] += g.data[r * g.cols + c];
                            }
                        }
                    }
                    // dx += g W^T
                    let dst = acc_buffer(&mut node_grads, x.0, xv.rows, xv.cols);
                    gemm(false, true, &g, wv, dst, 1.0);
                }
                Op::Relu { x } => {
                    let yv = &self.values[idx];
                    accumulate(&mut node_grads, *x, &self.values, |data| {
                        for (i, d) in data.iter_mut().enumerate() {
                            if yv.data[i] > 0.0 {
                                *d += g.data[i];
                            }
                        }
                    });
                }
                Op::Elu { x } => {
                    let yv = &self.values[idx];
                    accumulate(&mut node_grads, *x, &self.values, |data| {
                        for (i, d) in data.iter_mut().enumerate() {
                            let deriv = if yv.data[i] > 0.0 { 1.0 } else { yv.data[i] + 1.0 };
                            *d += g.data[i] * deriv;
                        }
                    });
                }
                Op::Add { a, b } => {
                    accumulate(&mut node_grads, *a, &self.values, |d| add_into(d, &g.data, 1.0));
                    accumulate(&mut node_grads, *b, &self.values, |d| add_into(d, &g.data, 1.0));
                }
                Op::Sub { a, b } => {
                    accumulate(&mut node_grads, *a, &self.values, |d| add_into(d, &g.data, 1.0));
                    accumulate(&mut node_grads, *b, &self.values, |d| add_into(d, &g.data, -1.0));
                }
                Op::MulElem { a, b } => {
                    let av = self.values[a.0].data.clone();
                    let bv = self.values[b.0].data.clone();
                    accumulate(&mut node_grads, *a, &self.values, |d| {
                        for i in 0..d.len() {
                            d[i] += g.data[i] * bv[i];
                        }
                    });
                    accumulate(&mut node_grads, *b, &self.values, |d| {
                        for i in 0..d.len() {
                            d[i] += g.data[i] * av[i];
                        }
                    });
                }
                Op::Scale { x, c } => {
                    let c = *c;
                    accumulate(&mut node_grads, *x, &self.values, |d| add_into(d, &g.data, c));
                }
                Op::Exp { x } => {
                    let yv = &self.values[idx];
                    accumulate(&mut node_grads, *x, &self.values, |d| {
                        for i in 0..d.len() {
                            d[i] += g.data[i] * yv.data[i];
                        }
                    });
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = &self.values[x.0];
                    let (lo, hi) = (*lo, *hi);
                    accumulate(&mut node_grads, *x, &self.values, |d| {
                        for i in 0..d.len() {
                            if xv.data[i] > lo && xv.data[i] < hi {
                                d[i] += g.data[i];
                            }
                        }
                    });
                }
                Op::MinPair { a, b } => {
                    let av = &self.values[a.0];
                    let bv = &self.values[b.0];
                    let takes_a: Vec<bool> = av
                        .data
                        .iter()
                        .zip(bv.data.iter())
                        .map(|(x, y)| x <= y)
                        .collect();
                    accumulate(&mut node_grads, *a, &self.values, |d| {
                        for i in 0..d.len() {
                            if takes_a[i] {
                                d[i] += g.data[i];
                            }
                        }
                    });
                    accumulate(&mut node_grads, *b, &self.values, |d| {
                        for i in 0..d.len() {
                            if !takes_a[i] {
                                d[i] += g.data[i];
                            }
                        }
                    });
                }
                Op::MaxPoolGroup { x, group: _, argmax } => {
                    let cols = self.values[idx].cols;
                    accumulate(&mut node_grads, *x, &self.values, |d| {
                        for o in 0..g.rows {
                            for c in 0..cols {
                                let src = argmax[o * cols + c] as usize;
                                d[src * cols + c] += g.data[o * cols + c];
                            }
                        }
                    });
                }
                Op::MeanPoolGroup { x, group } => {
                    let cols = self.values[idx].cols;
                    let inv = 1.0 / *group as f32;
                    let group = *group;
                    accumulate(&mut node_grads, *x, &self.values, |d| {
                        for r in 0..d.len() / cols {
                            let o = r / group;
                            for c in 0..cols {
                                d[r * cols + c] += g.data[o * cols + c] * inv;
                            }
                        }
                    });
                }
                Op::MeanAll { x } => {
                    let n = self.values[x.0].len() as f32;
                    let gs = g.data[0] / n;
                    accumulate(&mut node_grads, *x, &self.values, |d| {
                        for v in d.iter_mut() {
                            *v += gs;
                        }
                    });
                }
                Op::Concat { xs } => {
                    let mut off = 0;
                    let cols = self.values[idx].cols;
                    for id in xs {
                        let w = self.values[id.0].cols;
                        let rows = self.values[id.0].rows;
                        accumulate(&mut node_grads, *id, &self.values, |d| {
                            for r in 0..rows {
                                for c in 0..w {
                                    d[r * w + c] += g.data[r * cols + off + c];
                                }
                            }
                        });
                        off += w;
                    }
                }
                Op::ColScale { x, scales } => {
                    let cols = scales.len();
                    accumulate(&mut node_grads, *x, &self.values, |d| {
                        for r in 0..d.len() / cols {
                            for c in 0..cols {
                                d[r * cols + c] += g.data[r * cols + c] * scales[c];
                            }
                        }
                    });
                }
                Op::PosEnc { x } => {
                    accumulate(&mut node_grads, *x, &self.values, |d| add_into(d, &g.data, 1.0));
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let n = xhat.cols;
                    let gv = self.params.get(*gamma).data.clone();
                    {
                        let dg = grads.get_mut(*gamma);
                        for r in 0..g.rows {
                            for c in 0..n {
                                dg.data[c] += g.data[r * n + c] * xhat.data[r * n + c];
                            }
                        }
                    }
                    {
                        let db = grads.get_mut(*beta);
                        for r in 0..g.rows {
                            for c in 0..n {
                                db.data[c] += g.data[r * n + c];
                            }
                        }
                    }
                    accumulate(&mut node_grads, *x, &self.values, |d| {
                        for r in 0..g.rows {
                            let mut mean_dxhat = 0.0f32;
                            let mut mean_dxx = 0.0f32;
                            for c in 0..n {
                                let dxh = g.data[r * n + c] * gv[c];
                                mean_dxhat += dxh;
                                mean_dxx += dxh * xhat.data[r * n + c];
                            }
                            mean_dxhat /= n as f32;
                            mean_dxx /= n as f32;
                            for c in 0..n {
                                let dxh = g.data[r * n + c] * gv[c];
                                d[r * n + c] += inv_std[r]
                                    * (dxh - mean_dxhat - xhat.data[r * n + c] * mean_dxx);
                            }
                        }
                    });
                }
                Op::Mhsa {
                    q,
                    k,
                    v,
                    heads,
                    tokens,
                    probs,
                } => {
                    let d = self.values[q.0].cols;
                    let dh = d / heads;
                    let batch = self.values[q.0].rows / tokens;
                    let scale = 1.0 / (dh as f32).sqrt();
                    let qd = &self.values[q.0].data;
                    let kd = &self.values[k.0].data;
                    let vd = &self.values[v.0].data;
                    let rows = self.values[q.0].rows;
                    let mut dq = vec![0.0f32; rows * d];
                    let mut dk = vec![0.0f32; rows * d];
                    let mut dv = vec![0.0f32; rows * d];
                    let (heads, tokens) = (*heads, *tokens);
                    for bi in 0..batch {
                        for h in 0..heads {
                            let col0 = h * dh;
                            let pbase = (bi * heads + h) * tokens * tokens;
                            for ti in 0..tokens {
                                let gout = &g.data[(bi * tokens + ti) * d + col0
                                    ..(bi * tokens + ti) * d + col0 + dh];
                                // dV += P^T dO ; dP = dO V^T
                                let mut dp = vec![0.0f32; tokens];
                                for tj in 0..tokens {
                                    let p = probs[pbase + ti * tokens + tj];
                                    let vrow = (bi * tokens + tj) * d + col0;
                                    let mut dot = 0.0;
                                    for c in 0..dh {
                                        dv[vrow + c] += p * gout[c];
                                        dot += gout[c] * vd[vrow + c];
                                    }
                                    dp[tj] = dot;
                                }
                                // softmax backward: dS = P .* (dP - sum(dP .* P))
                                let dot: f32 = (0..tokens)
                                    .map(|tj| dp[tj] * probs[pbase + ti * tokens + tj])
                                    .sum();
                                for tj in 0..tokens {
                                    let p = probs[pbase + ti * tokens + tj];
                                    let ds = p * (dp[tj] - dot) * scale;
                                    let qrow = (bi * tokens + ti) * d + col0;
                                    let krow = (bi * tokens + tj) * d + col0;
                                    for c in 0..dh {
                                        dq[qrow + c] += ds * kd[krow + c];
                                        dk[krow + c] += ds * qd[qrow + c];
                                    }
                                }
                            }
                        }
                    }
                    accumulate(&mut node_grads, *q, &self.values, |dst| add_into(dst, &dq, 1.0));
                    accumulate(&mut node_grads, *k, &self.values, |dst| add_into(dst, &dk, 1.0));
                    accumulate(&mut node_grads, *v, &self.values, |dst| add_into(dst, &dv, 1.0));
                }
                Op::GaussianLogProb {
                    mean,
                    log_std,
                    actions,
                } => {
                    let mv = &self.values[mean.0];
                    let d = mv.cols;
                    let ls = self.params.get(*log_std).data.clone();
                    {
                        let dls = grads.get_mut(*log_std);
                        for r in 0..mv.rows {
                            let gr = g.data[r];
                            for c in 0..d {
                                let sigma = ls[c].exp();
                                let z = (actions.data[r * d + c] - mv.data[r * d + c]) / sigma;
                                dls.data[c] += gr * (z * z - 1.0);
                            }
                        }
                    }
                    accumulate(&mut node_grads, *mean, &self.values, |dst| {
                        for r in 0..mv.rows {
                            let gr = g.data[r];
                            for c in 0..d {
                                let sigma = ls[c].exp();
                                let z = (actions.data[r * d + c] - mv.data[r * d + c]) / sigma;
                                dst[r * d + c] += gr * z / sigma;
                            }
                        }
                    });
                }
            }
        }
    }
}

/// Sinusoidal position table `[tokens, dim]`.
pub fn sinusoidal_table(tokens: usize, dim: usize) -> Vec<f32> {
    let mut t = vec![0.0f32; tokens * dim];
    for pos in 0..tokens {
        for i in 0..dim / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            let angle = pos as f64 * freq;
            t[pos * dim + 2 * i] = angle.sin() as f32;
            t[pos * dim + 2 * i + 1] = angle.cos() as f32;
        }
    }
    t
}

fn add_into(dst: &mut [f32], src: &[f32], s: f32) {
    for (d, v) in dst.iter_mut().zip(src.iter()) {
        *d += v * s;
    }
}

fn acc_buffer<'g>(
    node_grads: &'g mut [Option<Tensor>],
    idx: usize,
    rows: usize,
    cols: usize,
) -> &'g mut Tensor {
    node_grads[idx].get_or_insert_with(|| Tensor::zeros(rows, cols))
}

fn accumulate(
    node_grads: &mut [Option<Tensor>],
    target: NodeId,
    values: &[Tensor],
    f: impl FnOnce(&mut [f32]),
) {
    let v = &values[target.0];
    let buf = node_grads[target.0].get_or_insert_with(|| Tensor::zeros(v.rows, v.cols));
    f(&mut buf.data);
}
