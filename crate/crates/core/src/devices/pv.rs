use serde::{Deserialize, Serialize};

use super::{prefixed, Clock};
use crate::env::{check_step, ComponentEnv, GridSignal, Space, StepResult};
use crate::error::{Error, Result};
use crate::profile::Profile;

/// Temporary loss of PV output over `[start, end)` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplyDrop {
    pub start: usize,
    pub end: usize,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvParams {
    /// Scale applied to the availability profile (profile is a 0..1 shape), kW.
    pub rated_kw: f64,
    pub drop: Option<SupplyDrop>,
}

impl Default for PvParams {
    fn default() -> Self {
        Self {
            rated_kw: 60.0,
            drop: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PvState {
    pub available_kw: f64,
    pub setpoint: f64,
    pub injected_kw: f64,
    pub step: usize,
}

/// Curtailable PV array: injects `setpoint * available` kW.
pub struct PvArray {
    name: String,
    params: PvParams,
    clock: Clock,
    available: Profile,
    state: PvState,
    observation_space: Space,
    action_space: Space,
}

impl PvArray {
    /// `shape` is the per-unit availability profile, scaled by `rated_kw`
    /// and the optional supply drop.
    pub fn new(name: impl Into<String>, params: PvParams, clock: Clock, shape: &Profile) -> Result<Self> {
        let name = name.into();
        if !(params.rated_kw >= 0.0 && params.rated_kw.is_finite()) {
            return Err(Error::config(format!("{name}: rated_kw must be non-negative")));
        }
        shape.require_len(clock.horizon, &format!("{name} availability"))?;
        if shape.values().iter().any(|&v| v < 0.0) {
            return Err(Error::config(format!("{name}: availability must be non-negative")));
        }
        let drop = params.drop;
        if let Some(d) = drop {
            if !(0.0..=1.0).contains(&d.factor) || d.start > d.end {
                return Err(Error::config(format!(
                    "{name}: drop needs start <= end and factor in [0, 1]"
                )));
            }
        }
        let available = Profile::from_fn(shape.len(), |k| {
            let scale = match drop {
                Some(d) if k >= d.start && k < d.end => d.factor,
                _ => 1.0,
            };
            shape.at(k) * params.rated_kw * scale
        })?;
        let state = PvState {
            available_kw: available.at(0),
            setpoint: 1.0,
            injected_kw: 0.0,
            step: 0,
        };
        Ok(Self {
            name,
            params,
            clock,
            available,
            state,
            observation_space: Space::uniform(2, 0.0, 1.0)?,
            action_space: Space::uniform(1, 0.0, 1.0)?,
        })
    }

    pub fn state(&self) -> &PvState {
        &self.state
    }

    /// Availability series after the supply drop is applied, kW.
    pub fn available(&self) -> &Profile {
        &self.available
    }

    fn observe(&self) -> Vec<f64> {
        let rated = self.params.rated_kw;
        if rated > 0.0 {
            vec![
                (self.state.available_kw / rated).clamp(0.0, 1.0),
                (self.state.injected_kw / rated).clamp(0.0, 1.0),
            ]
        } else {
            vec![0.0, 0.0]
        }
    }
}

impl ComponentEnv for PvArray {
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
        self.clock.horizon
    }

    fn steps_taken(&self) -> usize {
        self.state.step
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
        let available_kw = self.available.at(0);
        self.state = PvState {
            available_kw,
            setpoint: 1.0,
            injected_kw: available_kw,
            step: 0,
        };
        Ok(self.observe())
    }

    fn step(&mut self, action: &[f64], _signal: &GridSignal) -> Result<StepResult> {
        check_step(self, action)?;
        let available = self.available.at(self.state.step);
        let injected = action[0] * available;
        self.state.setpoint = action[0];
        self.state.injected_kw = injected;
        self.state.step += 1;
        let meta = prefixed(
            &self.name,
            &[
                ("reward", 0.0),
                ("power_kw", -injected),
                ("available_kw", available),
                ("injected_kw", injected),
            ],
        );
        // The grid-coupled penalty, when configured, is added by the
        // multi-agent environment after the power flow solve.
        self.state.available_kw = self.available.at(self.state.step);
        Ok(StepResult {
            observation: self.observe(),
            reward: 0.0,
            done: self.state.step >= self.clock.horizon,
            meta,
        })
    }

    fn real_power_kw(&self) -> f64 {
        -self.state.injected_kw
    }

    fn reactive_power_kvar(&self) -> f64 {
        0.0
    }
}
