use serde::{Deserialize, Serialize};

use super::NetParams;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
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

/// Bias-corrected Adam, minimizing.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    m: NetParams<T>,
    v: NetParams<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &NetParams<T>, config: AdamConfig) -> Self {
        AdamState { config, step: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    /// One update of `params` along `-grads`. A non-finite gradient aborts
    /// the step and leaves both parameters and state untouched.
    pub fn step(&mut self, params: &mut NetParams<T>, grads: &NetParams<T>) -> Result<()> {
        params.check_layout(grads)?;
        params.check_layout(&self.m)?;
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient passed to Adam"));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let corr1 = T::lit(1.0 - c.beta1.powi(t));
        let corr2 = T::lit(1.0 - c.beta2.powi(t));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        for (((p, g), m), v) in params.tensors.iter_mut().zip(&grads.tensors).zip(&mut self.m.tensors).zip(&mut self.v.tensors) {
            for (((x, &gi), mi), vi) in p.data.iter_mut().zip(&g.data).zip(&mut m.data).zip(&mut v.data) {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                let mhat = *mi / corr1;
                let vhat = *vi / corr2;
                *x -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
