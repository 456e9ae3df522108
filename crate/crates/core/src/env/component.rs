use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::space::Space;
use crate::error::{Error, Result};

/// Diagnostics attached to a step. Keys are stable column names.
pub type Meta = BTreeMap<String, f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub meta: Meta,
}

impl StepResult {
    /// Rejects non-finite observations, rewards or metadata.
    pub fn check_finite(&self, who: &str) -> Result<()> {
        if !self.reward.is_finite() {
            return Err(Error::NonFinite(format!("{who}: reward {}", self.reward)));
        }
        if let Some((k, v)) = self.observation.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{who}: observation[{k}] = {v}")));
        }
        if let Some((k, v)) = self.meta.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{who}: meta '{k}' = {v}")));
        }
        Ok(())
    }
}

/// Voltages from the most recent power flow, as seen by one agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSignal {
    /// Voltage at the agent's own bus, p.u.
    pub v_comm: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl GridSignal {
    pub fn flat(v: f64) -> Self {
        Self {
            v_comm: v,
            v_min: v,
            v_max: v,
        }
    }

    pub fn get(&self, field: GridField) -> f64 {
        match field {
            GridField::VComm => self.v_comm,
            GridField::VMin => self.v_min,
            GridField::VMax => self.v_max,
        }
    }
}

impl Default for GridSignal {
    fn default() -> Self {
        Self::flat(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GridField {
    #[serde(rename = "v_comm")]
    VComm,
    #[serde(rename = "v_min")]
    VMin,
    #[serde(rename = "v_max")]
    VMax,
}

impl GridField {
    /// Fields in the order they are appended to observations.
    pub const ALL: [GridField; 3] = [GridField::VComm, GridField::VMin, GridField::VMax];

    pub fn key(self) -> &'static str {
        match self {
            GridField::VComm => "v_comm",
            GridField::VMin => "v_min",
            GridField::VMax => "v_max",
        }
    }
}

/// Observed voltages are clamped to this band, p.u.; the raw values stay in
/// the step metadata.
pub const GRID_OBS_LOW: f64 = 0.8;
pub const GRID_OBS_HIGH: f64 = 1.2;

/// Which grid fields an agent observes, one flag per [`GridField::ALL`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GridMask(pub [bool; 3]);

impl GridMask {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_fields(fields: &[GridField]) -> Self {
        let mut mask = [false; 3];
        for f in fields {
            let k = GridField::ALL.iter().position(|g| g == f).unwrap();
            mask[k] = true;
        }
        Self(mask)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Observation bounds of the appended grid entries.
    pub fn space(&self) -> Option<Space> {
        let n = self.count();
        (n > 0).then(|| Space::uniform(n, GRID_OBS_LOW, GRID_OBS_HIGH).expect("non-empty"))
    }
}

/// Appends the masked grid fields to a device observation and checks the
/// result against the agent's declared observation space.
pub fn observation_with_grid(
    raw: &[f64],
    signal: &GridSignal,
    mask: &[bool],
    declared: &Space,
) -> Result<Vec<f64>> {
    if mask.len() != GridField::ALL.len() {
        return Err(Error::contract(format!(
            "grid mask has {} entries, expected {}",
            mask.len(),
            GridField::ALL.len()
        )));
    }
    let mut obs = raw.to_vec();
    for (field, &on) in GridField::ALL.iter().zip(mask) {
        if on {
            obs.push(signal.get(*field).clamp(GRID_OBS_LOW, GRID_OBS_HIGH));
        }
    }
    if obs.len() != declared.len() {
        return Err(Error::contract(format!(
            "observation has length {}, declared space has {}",
            obs.len(),
            declared.len()
        )));
    }
    Ok(obs)
}

/// Rounds a reward to a multiple of 2^-32.
///
/// Rewards on this grid with magnitude below 2^20 add and subtract exactly
/// in `f64`, so the logged decomposition `r = r_agent + r_sys` can be checked
/// with equality.
pub fn quantize_reward(r: f64) -> f64 {
    const SCALE: f64 = 4_294_967_296.0;
    (r * SCALE).round() / SCALE
}

/// A single controllable device or subsystem with the episodic
/// reset/step interface.
///
/// Real power follows the load convention: positive consumption, negative
/// injection.
pub trait ComponentEnv: Send {
    fn name(&self) -> &str;
    fn observation_space(&self) -> &Space;
    fn action_space(&self) -> &Space;
    fn horizon(&self) -> usize;
    fn steps_taken(&self) -> usize;

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;

    /// Advances one control step. `action` must already lie inside
    /// [`ComponentEnv::action_space`].
    fn step(&mut self, action: &[f64], signal: &GridSignal) -> Result<StepResult>;

    fn real_power_kw(&self) -> f64;
    fn reactive_power_kvar(&self) -> f64;

    fn is_done(&self) -> bool {
        self.steps_taken() >= self.horizon()
    }
}

/// Shared precondition checks for [`ComponentEnv::step`] implementations.
pub(crate) fn check_step(env: &dyn ComponentEnv, action: &[f64]) -> Result<()> {
    if env.is_done() {
        return Err(Error::contract(format!(
            "{}: step called after the episode finished",
            env.name()
        )));
    }
    if !env.action_space().contains(action) {
        return Err(Error::contract(format!(
            "{}: action {action:?} outside the action space",
            env.name()
        )));
    }
    Ok(())
}
