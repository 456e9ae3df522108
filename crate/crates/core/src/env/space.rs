use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box of elementwise real bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Space {
    low: Vec<f64>,
    high: Vec<f64>,
}

impl Space {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.is_empty() {
            return Err(Error::contract("space must have at least one dimension"));
        }
        if low.len() != high.len() {
            return Err(Error::contract(format!(
                "space bounds differ in length: {} vs {}",
                low.len(),
                high.len()
            )));
        }
        for (k, (l, h)) in low.iter().zip(&high).enumerate() {
            if l.is_nan() || h.is_nan() || l > h {
                return Err(Error::contract(format!("space bound {k}: low {l} > high {h}")));
            }
        }
        Ok(Self { low, high })
    }

    pub fn uniform(len: usize, low: f64, high: f64) -> Result<Self> {
        Self::new(vec![low; len], vec![high; len])
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub fn len(&self) -> usize {
        self.low.len()
    }

    pub fn is_empty(&self) -> bool {
        self.low.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.len()
            && x
                .iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(v, (l, h))| v >= l && v <= h)
    }

    /// Concatenation of several spaces, in order.
    pub fn concat<'a>(spaces: impl IntoIterator<Item = &'a Space>) -> Result<Self> {
        let mut low = Vec::new();
        let mut high = Vec::new();
        for s in spaces {
            low.extend_from_slice(&s.low);
            high.extend_from_slice(&s.high);
        }
        Self::new(low, high)
    }

    /// Maps a point of the box affinely onto `[-1, 1]^n`.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(v, (l, h))| {
                let half = 0.5 * (h - l);
                if half > 0.0 {
                    (v - 0.5 * (h + l)) / half
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Inverse of [`Space::normalize`].
    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(v, (l, h))| 0.5 * (h + l) + v * 0.5 * (h - l))
            .collect()
    }
}

/// Elementwise `min(max(action, low), high)`.
pub fn clamp_action(action: &[f64], space: &Space) -> Result<Vec<f64>> {
    if action.len() != space.len() {
        return Err(Error::contract(format!(
            "action has length {}, space has {}",
            action.len(),
            space.len()
        )));
    }
    action
        .iter()
        .zip(space.low.iter().zip(&space.high))
        .enumerate()
        .map(|(k, (a, (l, h)))| {
            if a.is_nan() {
                Err(Error::NonFinite(format!("action entry {k} is NaN")))
            } else {
                Ok(a.max(*l).min(*h))
            }
        })
        .collect()
}
