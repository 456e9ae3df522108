use std::collections::BTreeMap;

use crate::env::{Meta, MultiAgentEnvironment, MultiAgentStep, Space, ALL_DONE};
use crate::error::{Error, Result};

/// Independent quadratic bandits: agent `i` earns `-(a - target_i)^2` per
/// step and always observes a constant. Used to check trainers against a
/// known optimum.
pub struct BanditEnv {
    targets: BTreeMap<String, f64>,
    horizon: usize,
    steps: usize,
    observation_space: Space,
    action_space: Space,
}

impl BanditEnv {
    pub fn new(targets: &[(&str, f64)], horizon: usize) -> Result<Self> {
        if targets.is_empty() || horizon == 0 {
            return Err(Error::config("bandit needs at least one agent and one step"));
        }
        Ok(Self {
            targets: targets.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            horizon,
            steps: 0,
            observation_space: Space::uniform(1, -1.0, 1.0)?,
            action_space: Space::uniform(1, -1.0, 1.0)?,
        })
    }
}

impl MultiAgentEnvironment for BanditEnv {
    fn agent_ids(&self) -> Vec<String> {
        self.targets.keys().cloned().collect()
    }

    fn observation_space(&self, agent: &str) -> Option<&Space> {
        self.targets.contains_key(agent).then_some(&self.observation_space)
    }

    fn action_space(&self, agent: &str) -> Option<&Space> {
        self.targets.contains_key(agent).then_some(&self.action_space)
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self, _seed: u64) -> Result<BTreeMap<String, Vec<f64>>> {
        self.steps = 0;
        Ok(self.targets.keys().map(|k| (k.clone(), vec![0.0])).collect())
    }

    fn step(&mut self, actions: &BTreeMap<String, Vec<f64>>) -> Result<MultiAgentStep> {
        if self.steps >= self.horizon {
            return Err(Error::contract("bandit stepped past its horizon"));
        }
        self.steps += 1;
        let done = self.steps >= self.horizon;
        let mut out = MultiAgentStep {
            observations: BTreeMap::new(),
            rewards: BTreeMap::new(),
            dones: BTreeMap::new(),
            metas: BTreeMap::new(),
        };
        for (id, target) in &self.targets {
            let a = actions
                .get(id)
                .and_then(|v| v.first())
                .ok_or_else(|| Error::contract(format!("missing action for '{id}'")))?
                .clamp(-1.0, 1.0);
            let r = -(a - target) * (a - target);
            out.observations.insert(id.clone(), vec![0.0]);
            out.rewards.insert(id.clone(), r);
            out.dones.insert(id.clone(), done);
            out.metas.insert(id.clone(), Meta::from([("v_vio".to_string(), 0.0)]));
        }
        out.dones.insert(ALL_DONE.to_string(), done);
        Ok(out)
    }
}
