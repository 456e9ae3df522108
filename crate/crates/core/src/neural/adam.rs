use serde::{Deserialize, Serialize};

use super::Gradient;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub epsilon: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_eps(),
        }
    }
}

/// Bias-corrected Adam moments for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub step: u64,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        Self {
            first_moment: vec![T::zero(); param_count],
            second_moment: vec![T::zero(); param_count],
            step: 0,
            config,
        }
    }

    pub fn update(&mut self, params: &mut [T], grad: &Gradient<T>) -> Result<()> {
        if params.len() != grad.len() || params.len() != self.first_moment.len() {
            return Err(Error::contract(format!(
                "adam update: {} params, {} gradient entries, {} moments",
                params.len(),
                grad.len(),
                self.first_moment.len()
            )));
        }
        self.step += 1;
        let b1 = T::of(self.config.beta1);
        let b2 = T::of(self.config.beta2);
        let lr = T::of(self.config.learning_rate);
        let eps = T::of(self.config.epsilon);
        let t = self.step as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let one = T::one();
        for k in 0..params.len() {
            let g = grad.0[k];
            let m = b1 * self.first_moment[k] + (one - b1) * g;
            let v = b2 * self.second_moment[k] + (one - b2) * g * g;
            self.first_moment[k] = m;
            self.second_moment[k] = v;
            let m_hat = m / c1;
            let v_hat = v / c2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Polyak averaging: `target <- (1 - tau) * target + tau * online`,
/// evaluated as `target + tau * (online - target)` so equal networks stay
/// bit-identical.
pub fn soft_update<T: Scalar>(target: &mut [T], online: &[T], tau: T) -> Result<()> {
    if target.len() != online.len() {
        return Err(Error::contract("soft update of differently shaped networks"));
    }
    if !(tau > T::zero() && tau <= T::one()) {
        return Err(Error::contract(format!("soft update tau {tau} outside (0, 1]")));
    }
    if tau == T::one() {
        target.copy_from_slice(online);
        return Ok(());
    }
    for (t, &o) in target.iter_mut().zip(online) {
        *t += tau * (o - *t);
    }
    Ok(())
}
