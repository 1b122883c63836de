use serde::{Deserialize, Serialize};

use super::graph::{Gradients, ParamSet};
use super::tensor::Tensor;

/// Adam moments and step counter for one [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self::with_betas(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &ParamSet, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected descent step: `θ -= lr·m̂/(√v̂ + ε)`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients, learning_rate: f64) {
        assert_eq!(grads.0.len(), params.len(), "gradient count does not match parameters");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(&grads.0)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            assert_eq!(p.shape(), g.shape(), "gradient shape mismatch");
            for (((p, g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}
