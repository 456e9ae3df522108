//! From-scratch MADDPG and independent PPO over [`MultiAgentEnvironment`].

mod bandit;
mod gae;
mod maddpg;
mod policy;
mod ppo;
mod replay;

pub use bandit::BanditEnv;
pub use gae::{discounted_returns, gae_advantages, normalize};
pub use maddpg::{actor_loss, critic_loss, MaddpgAgent, MaddpgConfig, MaddpgTrainer};
pub use policy::{ConstantPolicy, MaddpgPolicy, Policy, PpoPolicy, RandomPolicy};
pub use ppo::{
    gaussian_log_prob, ppo_loss, PpoAgent, PpoConfig, PpoGradient, PpoLoss, PpoSample, PpoTrainer,
};
pub use replay::{ReplayBuffer, Transition};

use std::collections::BTreeMap;
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{MultiAgentEnvironment, Space};
use crate::error::{Error, Result};

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub iteration: usize,
    /// Mean episode return per agent over the iteration's episodes.
    pub episode_returns: BTreeMap<String, f64>,
    pub total_return: f64,
    /// Mean over agents and updates.
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub ppo_loss: Option<f64>,
    pub agent_losses: BTreeMap<String, f64>,
    /// Mean episodic voltage violation sum.
    pub v_vio: f64,
    pub skipped_samples: usize,
    pub env_steps: u64,
}

impl TrainMetrics {
    pub fn check_finite(&self) -> Result<()> {
        let losses = [self.critic_loss, self.actor_loss, self.ppo_loss];
        let bad = self.episode_returns.values().chain(self.agent_losses.values())
            .chain(losses.iter().flatten())
            .chain([self.total_return, self.v_vio].iter())
            .any(|v| !v.is_finite());
        if bad {
            return Err(Error::Training(format!(
                "non-finite value in iteration {} metrics: {self:?}",
                self.iteration
            )));
        }
        Ok(())
    }

    pub fn write_jsonl(&self, out: &mut impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut *out, self)?;
        out.write_all(b"\n")
    }
}

/// Spaces of one agent, in sorted-id order.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpaces {
    pub id: String,
    pub observation: Space,
    pub action: Space,
}

pub fn agent_spaces(env: &dyn MultiAgentEnvironment) -> Result<Vec<AgentSpaces>> {
    env.agent_ids()
        .into_iter()
        .map(|id| {
            let observation = env
                .observation_space(&id)
                .ok_or_else(|| Error::contract(format!("no observation space for '{id}'")))?
                .clone();
            let action = env
                .action_space(&id)
                .ok_or_else(|| Error::contract(format!("no action space for '{id}'")))?
                .clone();
            Ok(AgentSpaces {
                id,
                observation,
                action,
            })
        })
        .collect()
}

/// Deterministic sub-seed for a numbered stream (episode, agent, ...).
pub(crate) fn derive_seed(seed: u64, stream: &[u64]) -> u64 {
    let mut s = seed;
    for &k in stream {
        let mut rng = ChaCha8Rng::seed_from_u64(s ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        s = rng.next_u64();
    }
    s
}

/// Linear schedule clamped at its end value.
pub(crate) fn linear(start: f64, end: f64, progress: f64) -> f64 {
    let p = progress.clamp(0.0, 1.0);
    start + (end - start) * p
}

pub(crate) fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}
