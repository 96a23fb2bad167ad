use serde::{Deserialize, Serialize};

use crate::error::{NetError, NetResult};
use crate::model::RelightNetParams;
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction; moments are flat, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<R: Real> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<R>,
    pub v: Vec<R>,
}

impl<R: Real> Adam<R> {
    pub fn new(config: AdamConfig, params: &RelightNetParams<R>) -> Self {
        let n = params.count();
        Self {
            config,
            step: 0,
            m: vec![R::zero(); n],
            v: vec![R::zero(); n],
        }
    }

    /// Applies one update; `grads[i]` belongs to `params.entries[i]`.
    pub fn update(&mut self, params: &mut RelightNetParams<R>, grads: &[Option<&[R]>]) -> NetResult<()> {
        if grads.len() != params.entries.len() || self.m.len() != params.count() {
            return Err(NetError::Shape("optimizer state does not match parameters".into()));
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (R::of(c.beta1), R::of(c.beta2));
        let bc1 = 1.0 - c.beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step.min(i32::MAX as u64) as i32);
        let lr = R::of(c.learning_rate * bc2.sqrt() / bc1);
        let eps = R::of(c.eps * bc2.sqrt());
        let mut off = 0;
        for (e, g) in params.entries.iter_mut().zip(grads) {
            let n = e.tensor.len();
            if let Some(g) = g {
                if g.len() != n {
                    return Err(NetError::Shape(format!("gradient for {} has {} values", e.name, g.len())));
                }
                let m = &mut self.m[off..off + n];
                let v = &mut self.v[off..off + n];
                for i in 0..n {
                    m[i] = b1 * m[i] + (R::one() - b1) * g[i];
                    v[i] = b2 * v[i] + (R::one() - b2) * g[i] * g[i];
                    e.tensor.data[i] -= lr * m[i] / (v[i].sqrt() + eps);
                }
            }
            off += n;
        }
        Ok(())
    }
}
