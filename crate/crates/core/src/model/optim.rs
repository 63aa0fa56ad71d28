use serde::{Deserialize, Serialize};

use super::{ParamSet, Scalar};
use crate::error::{Error, Result};

/// Adam with decoupled weight decay; constant learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Applied to matrices only; biases, gains and the learnable scales are not decayed.
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }

    /// One update of a flat tensor; `step` counts from 1.
    #[allow(clippy::too_many_arguments)]
    pub fn update<T: Scalar>(&self, step: u64, decay: bool, p: &mut [T], g: &[T], m: &mut [T], v: &mut [T]) {
        let b1 = T::of(self.beta1);
        let b2 = T::of(self.beta2);
        let c1 = T::of(1.0 / (1.0 - self.beta1.powf(step as f64)));
        let c2 = T::of(1.0 / (1.0 - self.beta2.powf(step as f64)));
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        let shrink = T::of(1.0 - self.lr * if decay { self.weight_decay } else { 0.0 });
        let one = T::one();
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let mhat = m[i] * c1;
            let vhat = v[i] * c2;
            p[i] = p[i] * shrink - lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// First and second moment estimates for every model tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, cfg: &AdamWConfig, step: u64, params: &mut ParamSet<T>, grads: &ParamSet<T>) {
        for i in 0..params.len() {
            let decay = params.shapes[i].len() == 2;
            cfg.update(step, decay, &mut params.data[i], &grads.data[i], &mut self.m.data[i], &mut self.v.data[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut p = [1.0f64, -2.0];
        let mut m = [0.0; 2];
        let mut v = [0.0; 2];
        cfg.update(1, false, &mut p, &[0.5, -3.0], &mut m, &mut v);
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (-2.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn decay_shrinks_without_gradient() {
        let cfg = AdamWConfig::default();
        let mut p = [2.0f64];
        let (mut m, mut v) = ([0.0], [0.0]);
        cfg.update(1, true, &mut p, &[0.0], &mut m, &mut v);
        assert!((p[0] - 2.0 * (1.0 - 1e-5)).abs() < 1e-12);
    }
}
