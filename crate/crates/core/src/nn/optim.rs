use serde::{Deserialize, Serialize};

use super::network::Param;
use crate::error::{Error, Result};
use crate::linalg::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam. Moments are kept for trainable parameters only.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &[Param<T>]) -> Self {
        let zeros = |p: &Param<T>| if p.trainable { vec![T::zero(); p.value.numel()] } else { Vec::new() };
        Adam {
            config,
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }

    /// One update; `grads` is aligned with `params` (`None` for buffers or
    /// parameters the loss does not reach).
    pub fn step(&mut self, params: &mut [Param<T>], grads: &[Option<Vec<T>>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Contract("optimizer state does not match the parameters".into()));
        }
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let corr1 = T::from_f64_lossy(1.0 - c.beta1.powi(self.step as i32));
        let corr2 = T::from_f64_lossy(1.0 - c.beta2.powi(self.step as i32));
        let (lr, eps) = (T::from_f64_lossy(c.lr), T::from_f64_lossy(c.eps));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let (true, Some(g)) = (p.trainable, g) else { continue };
            if g.len() != m.len() {
                return Err(Error::Shape(format!("gradient of {} for {}", g.len(), p.name)));
            }
            for (((w, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / corr1;
                let v_hat = *vi / corr2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
