use serde::{Deserialize, Serialize};

use crate::params::{ParamMut, ParamRef};
use crate::tensor::Real;

/// AdamW hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.95, eps: 1e-5, weight_decay: 0.1 }
    }
}

/// Adam with decoupled weight decay. Decay is applied only to parameters
/// flagged for it (matrices), before the moment update.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<F> {
    pub config: AdamWConfig,
    /// Number of steps taken.
    pub t: u64,
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
}

impl<F: Real> AdamW<F> {
    pub fn new(config: AdamWConfig, params: &[ParamRef<'_, F>]) -> Self {
        let zeros = || params.iter().map(|p| vec![F::zero(); p.data.len()]).collect();
        Self { config, t: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, params: Vec<ParamMut<'_, F>>, grads: Vec<ParamRef<'_, F>>) {
        assert_eq!(params.len(), self.m.len(), "optimizer built for a different model");
        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let (one_b1, one_b2) = (F::of(1.0 - c.beta1), F::of(1.0 - c.beta2));
        let step_size = F::of(c.lr / bias1);
        let inv_bias2_sqrt = F::of(1.0 / bias2.sqrt());
        let eps = F::of(c.eps);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            debug_assert_eq!(p.shape, g.shape);
            let decay = if p.decay { F::of(1.0 - c.lr * c.weight_decay) } else { F::one() };
            for (((w, &g), m), v) in p.data.iter_mut().zip(g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
                *w *= decay;
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let denom = v.sqrt() * inv_bias2_sqrt + eps;
                *w -= step_size * *m / denom;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ParamList, ParamListMut, Parameters};
    use ndarray::{array, Array1};

    struct Scalar(Array1<f64>, bool);

    impl Parameters<f64> for Scalar {
        fn collect_params<'a>(&'a self, list: &mut ParamList<'a, f64>) {
            list.push("w", &self.0, self.1);
        }
        fn collect_params_mut<'a>(&'a mut self, list: &mut ParamListMut<'a, f64>) {
            list.push("w", &mut self.0, self.1);
        }
    }

    #[test]
    fn matches_hand_stepped_oracle() {
        // Minimize f(w) = (w - 3)^2 from w = 1 for three steps.
        let c = AdamWConfig { lr: 0.1, beta1: 0.9, beta2: 0.95, eps: 1e-5, weight_decay: 0.1 };
        let mut model = Scalar(array![1.0], true);
        let mut opt = AdamW::new(c, &model.params());
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            let g = 2.0 * (w - 3.0);
            let grad = Scalar(array![2.0 * (model.0[0] - 3.0)], true);
            opt.step(model.params_mut(), grad.params());

            w *= 1.0 - 0.1 * 0.1;
            m = 0.9 * m + 0.1 * g;
            v = 0.95 * v + 0.05 * g * g;
            let mhat = m / (1.0 - 0.9f64.powi(t));
            let vhat = v / (1.0 - 0.95f64.powi(t));
            w -= 0.1 * mhat / (vhat.sqrt() + 1e-5);
            assert!((model.0[0] - w).abs() < 1e-12, "step {t}: {} vs {w}", model.0[0]);
        }
    }

    #[test]
    fn no_decay_for_flagged_parameters() {
        let c = AdamWConfig { lr: 0.1, weight_decay: 0.5, ..Default::default() };
        let mut a = Scalar(array![2.0], true);
        let mut b = Scalar(array![2.0], false);
        let zero = Scalar(array![0.0], true);
        AdamW::new(c, &a.params()).step(a.params_mut(), zero.params());
        AdamW::new(c, &b.params()).step(b.params_mut(), zero.params());
        assert!((a.0[0] - 2.0 * 0.95).abs() < 1e-15);
        assert_eq!(b.0[0], 2.0);
    }

    #[test]
    fn zero_learning_rate_leaves_weights() {
        let c = AdamWConfig { lr: 0.0, ..Default::default() };
        let mut a = Scalar(array![1.5], true);
        let g = Scalar(array![4.0], true);
        let mut opt = AdamW::new(c, &a.params());
        for _ in 0..5 {
            opt.step(a.params_mut(), g.params());
        }
        assert_eq!(a.0[0], 1.5);
    }
}
