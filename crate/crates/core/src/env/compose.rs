use std::collections::HashSet;

use super::component::{check_step, ComponentEnv, GridSignal, Meta, StepResult};
use super::space::Space;
use crate::error::{Error, Result};

/// An agent built from several components stepped side by side.
///
/// Observation and action vectors are the concatenations of the components'
/// vectors in roster order; real power and reward are sums. Every component
/// is reset with the agent's seed.
pub struct MultiComponentEnv {
    name: String,
    components: Vec<Box<dyn ComponentEnv>>,
    observation_space: Space,
    action_space: Space,
    horizon: usize,
    steps: usize,
}

impl MultiComponentEnv {
    pub fn new(name: impl Into<String>, components: Vec<Box<dyn ComponentEnv>>) -> Result<Self> {
        let name = name.into();
        if components.is_empty() {
            return Err(Error::config(format!("agent '{name}' has no components")));
        }
        let mut seen = HashSet::new();
        for c in &components {
            if !seen.insert(c.name().to_string()) {
                return Err(Error::config(format!(
                    "agent '{name}': duplicate component name '{}'",
                    c.name()
                )));
            }
        }
        let horizon = components[0].horizon();
        if let Some(c) = components.iter().find(|c| c.horizon() != horizon) {
            return Err(Error::config(format!(
                "agent '{name}': component '{}' has horizon {}, expected {horizon}",
                c.name(),
                c.horizon()
            )));
        }
        let observation_space = Space::concat(components.iter().map(|c| c.observation_space()))?;
        let action_space = Space::concat(components.iter().map(|c| c.action_space()))?;
        Ok(Self {
            name,
            components,
            observation_space,
            action_space,
            horizon,
            steps: 0,
        })
    }

    pub fn components(&self) -> &[Box<dyn ComponentEnv>] {
        &self.components
    }
}

impl ComponentEnv for MultiComponentEnv {
    fn name(&self) -> &str {
        &self.name
    }

    fn observation_space(&self) -> &Space {
        &self.observation_space
    }

    fn action_space(&self) -> &Space {
        &self.action_space
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn steps_taken(&self) -> usize {
        self.steps
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.steps = 0;
        let mut obs = Vec::with_capacity(self.observation_space.len());
        for c in &mut self.components {
            obs.extend(c.reset(seed)?);
        }
        Ok(obs)
    }

    fn step(&mut self, action: &[f64], signal: &GridSignal) -> Result<StepResult> {
        check_step(self, action)?;
        let mut observation = Vec::with_capacity(self.observation_space.len());
        let mut reward = 0.0;
        let mut done = false;
        let mut meta = Meta::new();
        let mut offset = 0;
        for c in &mut self.components {
            let n = c.action_space().len();
            let res = c.step(&action[offset..offset + n], signal)?;
            offset += n;
            observation.extend(res.observation);
            reward += res.reward;
            done |= res.done;
            meta.extend(res.meta);
        }
        self.steps += 1;
        Ok(StepResult {
            observation,
            reward,
            done,
            meta,
        })
    }

    fn real_power_kw(&self) -> f64 {
        self.components.iter().map(|c| c.real_power_kw()).sum()
    }

    fn reactive_power_kvar(&self) -> f64 {
        self.components.iter().map(|c| c.reactive_power_kvar()).sum()
    }
}
