//! Adam with global-norm gradient clipping.

use super::params::{GradStore, ParamStore};
use super::NnError;
use super::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm clip applied before the step; <= 0 disables.
    pub max_grad_norm: f64,
}

impl AdamState {
    pub fn new(params: &ParamStore, lr: f64) -> AdamState {
        AdamState {
            m: params.iter().map(|(_, t)| Tensor::zeros(t.rows, t.cols)).collect(),
            v: params.iter().map(|(_, t)| Tensor::zeros(t.rows, t.cols)).collect(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: 1.0,
        }
    }

    /// One bias-corrected Adam step. The gradient store is clipped in place
    /// when its global norm exceeds `max_grad_norm`. Non-finite gradients
    /// reject the step.
    pub fn update(&mut self, params: &mut ParamStore, grads: &mut GradStore) -> Result<f64, NnError> {
        if !grads.is_finite() {
            return Err(NnError::NonFiniteGradients);
        }
        let norm = grads.global_norm();
        if self.max_grad_norm > 0.0 && norm > self.max_grad_norm {
            grads.scale((self.max_grad_norm / norm) as f32);
        }
        self.step += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        for i in 0..self.m.len() {
            let g = grads.get(super::params::ParamId(i));
            let p = params.get_mut(super::params::ParamId(i));
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..p.data.len() {
                let gj = g.data[j] as f64;
                let mj = b1 * m.data[j] as f64 + (1.0 - b1) * gj;
                let vj = b2 * v.data[j] as f64 + (1.0 - b2) * gj * gj;
                m.data[j] = mj as f32;
                v.data[j] = vj as f32;
                let mhat = mj / bc1;
                let vhat = vj / bc2;
                p.data[j] -= (self.lr * mhat / (vhat.sqrt() + self.eps)) as f32;
            }
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::ParamId;

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut params = ParamStore::new();
        let id = params.add("w", Tensor::full(2, 2, 0.5));
        let mut opt = AdamState::new(&params, 1e-3);
        let mut grads = GradStore::zeros_like(&params);
        opt.update(&mut params, &mut grads).unwrap();
        assert!(params.get(id).data.iter().all(|v| (*v - 0.5).abs() < 1e-12));
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn grads_clipped_to_unit_global_norm() {
        let mut params = ParamStore::new();
        params.add("w", Tensor::zeros(1, 2));
        let mut opt = AdamState::new(&params, 1e-3);
        let mut grads = GradStore::zeros_like(&params);
        grads.get_mut(ParamId(0)).data.copy_from_slice(&[3.0, 4.0]); // norm 5
        let pre_norm = opt.update(&mut params, &mut grads).unwrap();
        assert!((pre_norm - 5.0).abs() < 1e-9);
        assert!((grads.global_norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_grads_reject_step() {
        let mut params = ParamStore::new();
        let id = params.add("w", Tensor::full(1, 1, 1.0));
        let mut opt = AdamState::new(&params, 1e-2);
        let mut grads = GradStore::zeros_like(&params);
        grads.get_mut(id).data[0] = f32::NAN;
        assert!(opt.update(&mut params, &mut grads).is_err());
        assert_eq!(params.get(id).data[0], 1.0);
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn minimizes_quadratic() {
        // f(w) = (w - 3)^2, lr 1e-2, converge to 1e-6 within 2000 steps
        let mut params = ParamStore::new();
        let id = params.add("w", Tensor::zeros(1, 1));
        let mut opt = AdamState::new(&params, 1e-2);
        for _ in 0..2000 {
            let w = params.get(id).data[0];
            let mut grads = GradStore::zeros_like(&params);
            grads.get_mut(id).data[0] = 2.0 * (w - 3.0);
            opt.update(&mut params, &mut grads).unwrap();
        }
        let w = params.get(id).data[0];
        assert!(
            ((w - 3.0) * (w - 3.0)) < 1e-6,
            "loss {} after 2000 steps",
            (w - 3.0) * (w - 3.0)
        );
    }
}
