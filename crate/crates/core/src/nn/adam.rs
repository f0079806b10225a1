use serde::{Deserialize, Serialize};

use super::params::ParamVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub bias_correction: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            bias_correction: true,
        }
    }
}

/// First/second moment estimates sharing the parameter layout.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: ParamVector,
    pub v: ParamVector,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamVector, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// One Adam update of `params` in place. A non-finite gradient aborts
    /// before anything is modified.
    pub fn step(&mut self, params: &mut ParamVector, grads: &ParamVector, lr: f64) -> Result<()> {
        params.ensure_same_layout(grads)?;
        params.ensure_same_layout(&self.m)?;
        if let Some((segment, i)) = grads.first_non_finite() {
            return Err(Error::NonFinite(format!(
                "gradient entry {i} in segment `{segment}`"
            )));
        }
        self.t += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
            bias_correction,
        } = self.config;
        let (c1, c2) = if bias_correction {
            let t = self.t as i32;
            (1.0 - beta1.powi(t), 1.0 - beta2.powi(t))
        } else {
            (1.0, 1.0)
        };
        let m = self.m.values_mut();
        let v = self.v.values_mut();
        let p = params.values_mut();
        for (((pi, mi), vi), &g) in p.iter_mut().zip(m).zip(v).zip(grads.values()) {
            *mi = beta1 * *mi + (1.0 - beta1) * g;
            *vi = beta2 * *vi + (1.0 - beta2) * g * g;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *pi -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}
