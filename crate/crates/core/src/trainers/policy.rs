use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AgentSpaces;
use crate::error::{Error, Result};
use crate::neural::checkpoint::Checkpoint;
use crate::neural::Mlp;

/// Maps joint observations to joint actions in environment units.
pub trait Policy {
    fn actions(&mut self, observations: &BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<String, Vec<f64>>>;
}

fn observation<'a>(observations: &'a BTreeMap<String, Vec<f64>>, id: &str) -> Result<&'a [f64]> {
    observations
        .get(id)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::contract(format!("no observation for agent '{id}'")))
}

/// Uniform draws from each action space.
pub struct RandomPolicy {
    spaces: Vec<AgentSpaces>,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(spaces: Vec<AgentSpaces>, seed: u64) -> Self {
        Self {
            spaces,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn actions(&mut self, _obs: &BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<String, Vec<f64>>> {
        let mut out = BTreeMap::new();
        for s in &self.spaces {
            let a = s
                .action
                .low()
                .iter()
                .zip(s.action.high())
                .map(|(&l, &h)| if h > l { self.rng.gen_range(l..=h) } else { l })
                .collect();
            out.insert(s.id.clone(), a);
        }
        Ok(out)
    }
}

fn load_nets(ck: &Checkpoint, prefix: &str, spaces: &[AgentSpaces]) -> Result<Vec<(AgentSpaces, Mlp<f64>)>> {
    spaces
        .iter()
        .map(|s| {
            let net = ck.network(&format!("{prefix}/{}", s.id))?;
            if net.input_dim() != s.observation.len() || net.output_dim() != s.action.len() {
                return Err(Error::Checkpoint(format!(
                    "network '{prefix}/{}' maps {} -> {}, agent needs {} -> {}",
                    s.id,
                    net.input_dim(),
                    net.output_dim(),
                    s.observation.len(),
                    s.action.len()
                )));
            }
            Ok((s.clone(), net.clone()))
        })
        .collect()
}

fn deterministic(agents: &[(AgentSpaces, Mlp<f64>)], obs: &BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for (s, net) in agents {
        let o = s.observation.normalize(observation(obs, &s.id)?);
        let u: Vec<f64> = net.forward(&o)?.into_iter().map(|x| x.clamp(-1.0, 1.0)).collect();
        out.insert(s.id.clone(), s.action.denormalize(&u));
    }
    Ok(out)
}

/// Noise-free MADDPG actors.
#[derive(Clone, Debug)]
pub struct MaddpgPolicy {
    agents: Vec<(AgentSpaces, Mlp<f64>)>,
}

impl MaddpgPolicy {
    pub fn new(agents: Vec<(AgentSpaces, Mlp<f64>)>) -> Self {
        Self { agents }
    }

    pub fn from_checkpoint(ck: &Checkpoint, spaces: &[AgentSpaces]) -> Result<Self> {
        Ok(Self::new(load_nets(ck, "actor", spaces)?))
    }
}

impl Policy for MaddpgPolicy {
    fn actions(&mut self, obs: &BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<String, Vec<f64>>> {
        deterministic(&self.agents, obs)
    }
}

/// PPO policy means, without sampling.
#[derive(Clone, Debug)]
pub struct PpoPolicy {
    agents: Vec<(AgentSpaces, Mlp<f64>)>,
}

impl PpoPolicy {
    pub fn new(agents: Vec<(AgentSpaces, Mlp<f64>)>) -> Self {
        Self { agents }
    }

    pub fn from_checkpoint(ck: &Checkpoint, spaces: &[AgentSpaces]) -> Result<Self> {
        Ok(Self::new(load_nets(ck, "policy", spaces)?))
    }
}

impl Policy for PpoPolicy {
    fn actions(&mut self, obs: &BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<String, Vec<f64>>> {
        deterministic(&self.agents, obs)
    }
}

/// Wraps another policy and pins the actions of selected agents.
pub struct ConstantPolicy {
    inner: Box<dyn Policy>,
    fixed: BTreeMap<String, Vec<f64>>,
}

impl ConstantPolicy {
    pub fn new(inner: Box<dyn Policy>, fixed: BTreeMap<String, Vec<f64>>) -> Self {
        Self { inner, fixed }
    }
}

impl Policy for ConstantPolicy {
    fn actions(&mut self, obs: &BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<String, Vec<f64>>> {
        let mut out = self.inner.actions(obs)?;
        for (id, a) in &self.fixed {
            if out.insert(id.clone(), a.clone()).is_none() {
                return Err(Error::config(format!("fixed action for unknown agent '{id}'")));
            }
        }
        Ok(out)
    }
}
