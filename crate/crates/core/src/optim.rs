//! Parameter updates: Adam (default) and plain SGD. Both descend the loss.

use alloc::vec::Vec;

use num_traits::Float;

use crate::policy::{Gradients, PolicyParams};
use crate::real::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Rescale gradients whose global L2 norm exceeds this value.
    pub max_grad_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { kind: OptimizerKind::Adam, learning_rate: 1e-3, max_grad_norm: Some(5.0) }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    config: OptimizerConfig,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer { config, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Drops moment estimates.
    pub fn reset(&mut self) {
        self.t = 0;
        self.m.clear();
        self.v.clear();
    }

    pub fn step(&mut self, params: &mut PolicyParams<T>, grads: &Gradients<T>) {
        let lr = self.config.learning_rate;
        let scale = match self.config.max_grad_norm {
            Some(max) => {
                let mut sq = 0.0f64;
                for i in 0..9 {
                    grads.for_each_in(i, |_, g| sq += g.as_f64() * g.as_f64());
                }
                let norm = Float::sqrt(sq);
                if norm > max { max / norm } else { 1.0 }
            }
            None => 1.0,
        };
        match self.config.kind {
            OptimizerKind::Sgd => {
                let step = T::from_f64(lr * scale);
                for (i, tensor) in params.tensors_mut().into_iter().enumerate() {
                    grads.for_each_in(i, |k, g| tensor[k] -= step * g);
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    let shapes = params.tensors().map(|t| t.len());
                    self.m = shapes.iter().map(|&n| alloc::vec![T::zero(); n]).collect();
                    self.v = self.m.clone();
                }
                self.t += 1;
                let t = self.t as i32;
                let bc1 = 1.0 - Float::powi(BETA1, t);
                let bc2 = 1.0 - Float::powi(BETA2, t);
                let alpha = T::from_f64(lr * Float::sqrt(bc2) / bc1);
                let (b1, b2) = (T::from_f64(BETA1), T::from_f64(BETA2));
                let eps = T::from_f64(ADAM_EPS * Float::sqrt(bc2));
                let gscale = T::from_f64(scale);
                for (i, tensor) in params.tensors_mut().into_iter().enumerate() {
                    let g = grads.dense(i);
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    for k in 0..tensor.len() {
                        let gk = g[k] * gscale;
                        m[k] = b1 * m[k] + (T::one() - b1) * gk;
                        v[k] = b2 * v[k] + (T::one() - b2) * gk * gk;
                        tensor[k] -= alpha * m[k] / (v[k].sqrt() + eps);
                    }
                }
            }
        }
    }
}
