use serde::{Deserialize, Serialize};

use super::{prefixed, Clock};
use crate::env::{check_step, ComponentEnv, GridSignal, Space, StepResult};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageParams {
    pub capacity_kwh: f64,
    pub rated_kw: f64,
    pub charge_efficiency: f64,
    pub discharge_efficiency: f64,
    /// Initial state of charge as a fraction of capacity.
    pub initial_soc: f64,
}

impl Default for StorageParams {
    fn default() -> Self {
        Self {
            capacity_kwh: 40.0,
            rated_kw: 10.0,
            charge_efficiency: 0.95,
            discharge_efficiency: 0.95,
            initial_soc: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StorageState {
    pub soc_kwh: f64,
    /// Grid-side power, + charging.
    pub power_kw: f64,
    pub step: usize,
}

/// Battery with charge/discharge efficiencies. The action is grid-side
/// power as a signed fraction of the rating (+ charge).
pub struct Storage {
    name: String,
    params: StorageParams,
    clock: Clock,
    state: StorageState,
    observation_space: Space,
    action_space: Space,
}

impl Storage {
    pub fn new(name: impl Into<String>, params: StorageParams, clock: Clock) -> Result<Self> {
        let name = name.into();
        let eff_ok = |e: f64| e > 0.0 && e <= 1.0;
        if !(params.capacity_kwh > 0.0 && params.rated_kw >= 0.0)
            || !eff_ok(params.charge_efficiency)
            || !eff_ok(params.discharge_efficiency)
            || !(0.0..=1.0).contains(&params.initial_soc)
        {
            return Err(Error::config(format!(
                "{name}: storage needs capacity > 0, rated >= 0, efficiencies in (0, 1], initial_soc in [0, 1]"
            )));
        }
        let state = StorageState {
            soc_kwh: params.initial_soc * params.capacity_kwh,
            power_kw: 0.0,
            step: 0,
        };
        Ok(Self {
            name,
            params,
            clock,
            state,
            observation_space: Space::uniform(1, 0.0, 1.0)?,
            action_space: Space::uniform(1, -1.0, 1.0)?,
        })
    }

    pub fn state(&self) -> &StorageState {
        &self.state
    }

    pub fn set_soc(&mut self, soc_kwh: f64) -> Result<()> {
        if !(0.0..=self.params.capacity_kwh).contains(&soc_kwh) {
            return Err(Error::contract("state of charge outside [0, capacity]"));
        }
        self.state.soc_kwh = soc_kwh;
        Ok(())
    }

    /// Grid-side power actually delivered for a requested power, and the
    /// resulting state of charge.
    fn apply(&self, requested_kw: f64) -> (f64, f64) {
        let p = &self.params;
        let dt = self.clock.dt_hours;
        let soc = self.state.soc_kwh;
        if requested_kw > 0.0 {
            let headroom = (p.capacity_kwh - soc) / (p.charge_efficiency * dt);
            if requested_kw >= headroom {
                return (headroom.max(0.0), p.capacity_kwh);
            }
            let next = (soc + p.charge_efficiency * requested_kw * dt).min(p.capacity_kwh);
            (requested_kw, next)
        } else if requested_kw < 0.0 {
            let available = soc * p.discharge_efficiency / dt;
            if requested_kw <= -available {
                return (-available, 0.0);
            }
            let next = (soc + requested_kw * dt / p.discharge_efficiency).max(0.0);
            (requested_kw, next)
        } else {
            (0.0, soc)
        }
    }
}

impl ComponentEnv for Storage {
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
        self.state = StorageState {
            soc_kwh: self.params.initial_soc * self.params.capacity_kwh,
            power_kw: 0.0,
            step: 0,
        };
        Ok(vec![self.params.initial_soc])
    }

    fn step(&mut self, action: &[f64], _signal: &GridSignal) -> Result<StepResult> {
        check_step(self, action)?;
        let (power, soc) = self.apply(action[0] * self.params.rated_kw);
        self.state.power_kw = power;
        self.state.soc_kwh = soc;
        self.state.step += 1;
        let frac = (soc / self.params.capacity_kwh).clamp(0.0, 1.0);
        let meta = prefixed(
            &self.name,
            &[("reward", 0.0), ("power_kw", power), ("soc_kwh", soc)],
        );
        Ok(StepResult {
            observation: vec![frac],
            reward: 0.0,
            done: self.state.step >= self.clock.horizon,
            meta,
        })
    }

    fn real_power_kw(&self) -> f64 {
        self.state.power_kw
    }

    fn reactive_power_kvar(&self) -> f64 {
        0.0
    }
}
