use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{lagging_kvar, prefixed, Clock};
use crate::env::{check_step, quantize_reward, ComponentEnv, GridSignal, Space, StepResult};
use crate::error::{Error, Result};
use crate::profile::Profile;

/// How HVAC actions map onto zones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HvacControl {
    /// One duty fraction applied to every zone.
    Shared,
    /// One duty fraction per zone.
    PerZone,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildingParams {
    pub zones: usize,
    /// Zone-to-ambient thermal resistance, degC/kW.
    pub r_ambient: f64,
    /// Zone-to-core thermal resistance, degC/kW.
    pub r_internal: f64,
    /// Zone heat capacity, kWh/degC.
    pub capacitance: f64,
    pub cop: f64,
    /// Electrical HVAC limit per zone, kW.
    pub hvac_max_kw: f64,
    pub comfort_low: f64,
    pub comfort_high: f64,
    pub comfort_weight: f64,
    /// Penalty per kWh of HVAC energy.
    pub energy_weight: f64,
    pub control: HvacControl,
    pub power_factor: f64,
    /// Initial zone temperatures are drawn uniformly from this range.
    pub initial_temp: (f64, f64),
}

impl Default for BuildingParams {
    fn default() -> Self {
        Self {
            zones: 5,
            r_ambient: 2.0,
            r_internal: 1.0,
            capacitance: 3.0,
            cop: 3.0,
            hvac_max_kw: 10.0,
            comfort_low: 20.0,
            comfort_high: 24.0,
            comfort_weight: 1.0,
            energy_weight: 0.1,
            control: HvacControl::Shared,
            power_factor: 0.95,
            initial_temp: (21.0, 23.0),
        }
    }
}

impl BuildingParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r_ambient", self.r_ambient),
            ("r_internal", self.r_internal),
            ("capacitance", self.capacitance),
            ("cop", self.cop),
            ("hvac_max_kw", self.hvac_max_kw),
        ];
        if let Some((k, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config(format!("building {k} must be positive, got {v}")));
        }
        if self.zones == 0 {
            return Err(Error::config("building needs at least one zone"));
        }
        if !(self.comfort_low < self.comfort_high) {
            return Err(Error::config("building comfort band must satisfy low < high"));
        }
        if self.comfort_weight < 0.0 || self.energy_weight < 0.0 {
            return Err(Error::config("building reward weights must be non-negative"));
        }
        if !(self.initial_temp.0 <= self.initial_temp.1) {
            return Err(Error::config("building initial_temp range is inverted"));
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return Err(Error::config("building power_factor must be in (0, 1]"));
        }
        Ok(())
    }

    fn action_len(&self) -> usize {
        match self.control {
            HvacControl::Shared => 1,
            HvacControl::PerZone => self.zones,
        }
    }

    /// Squared distance outside the comfort band, summed over zones.
    pub fn discomfort(&self, temps: &[f64]) -> f64 {
        temps
            .iter()
            .map(|&t| {
                let d = (t - self.comfort_high).max(0.0) + (self.comfort_low - t).max(0.0);
                d * d
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildingState {
    pub zone_temps: Vec<f64>,
    pub ambient: f64,
    pub hvac_kw: f64,
    pub step: usize,
}

/// Multi-zone RC building cooled by an HVAC system.
///
/// Zones exchange heat with the ambient and with a massless core node (the
/// mean zone temperature); HVAC removes `COP * P` of heat per zone:
/// `T' = T + dt/C * [(T_amb - T)/R + (T_core - T)/R_int - COP * P_zone]`.
pub struct Building {
    name: String,
    params: BuildingParams,
    clock: Clock,
    ambient: Profile,
    state: BuildingState,
    observation_space: Space,
    action_space: Space,
}

const TEMP_REF: f64 = 22.0;
const TEMP_SCALE: f64 = 5.0;
const TEMP_OBS_BOUND: f64 = 4.0;

impl Building {
    pub fn new(name: impl Into<String>, params: BuildingParams, clock: Clock, ambient: Profile) -> Result<Self> {
        let name = name.into();
        params.validate()?;
        ambient.require_len(clock.horizon, &format!("{name} ambient temperature"))?;
        let mut low = vec![-TEMP_OBS_BOUND; params.zones + 1];
        let mut high = vec![TEMP_OBS_BOUND; params.zones + 1];
        low.push(0.0);
        high.push(1.0);
        let observation_space = Space::new(low, high)?;
        let action_space = Space::uniform(params.action_len(), 0.0, 1.0)?;
        let state = BuildingState {
            zone_temps: vec![TEMP_REF; params.zones],
            ambient: ambient.at(0),
            hvac_kw: 0.0,
            step: 0,
        };
        Ok(Self {
            name,
            params,
            clock,
            ambient,
            state,
            observation_space,
            action_space,
        })
    }

    pub fn params(&self) -> &BuildingParams {
        &self.params
    }

    pub fn state(&self) -> &BuildingState {
        &self.state
    }

    /// Overrides zone temperatures, e.g. to set up a test condition.
    pub fn set_zone_temps(&mut self, temps: &[f64]) -> Result<()> {
        if temps.len() != self.params.zones {
            return Err(Error::contract("zone temperature vector has the wrong length"));
        }
        self.state.zone_temps.copy_from_slice(temps);
        Ok(())
    }

    fn observe(&self) -> Vec<f64> {
        let norm = |t: f64| ((t - TEMP_REF) / TEMP_SCALE).clamp(-TEMP_OBS_BOUND, TEMP_OBS_BOUND);
        let mut obs: Vec<f64> = self.state.zone_temps.iter().map(|&t| norm(t)).collect();
        obs.push(norm(self.state.ambient));
        obs.push(self.state.step as f64 / self.clock.horizon as f64);
        obs
    }

    /// One explicit RC update with per-zone electrical HVAC power.
    fn advance(&self, temps: &[f64], ambient: f64, zone_kw: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let core = temps.iter().sum::<f64>() / temps.len() as f64;
        let k = self.clock.dt_hours / p.capacitance;
        temps
            .iter()
            .zip(zone_kw)
            .map(|(&t, &kw)| {
                t + k * ((ambient - t) / p.r_ambient + (core - t) / p.r_internal - p.cop * kw)
            })
            .collect()
    }
}

impl ComponentEnv for Building {
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

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = self.params.initial_temp;
        self.state = BuildingState {
            zone_temps: (0..self.params.zones)
                .map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo })
                .collect(),
            ambient: self.ambient.at(0),
            hvac_kw: 0.0,
            step: 0,
        };
        Ok(self.observe())
    }

    fn step(&mut self, action: &[f64], _signal: &GridSignal) -> Result<StepResult> {
        check_step(self, action)?;
        let p = &self.params;
        let zone_kw: Vec<f64> = match p.control {
            HvacControl::Shared => vec![action[0] * p.hvac_max_kw; p.zones],
            HvacControl::PerZone => action.iter().map(|a| a * p.hvac_max_kw).collect(),
        };
        let hvac_kw: f64 = zone_kw.iter().sum();
        let ambient = self.ambient.at(self.state.step);
        let temps = self.advance(&self.state.zone_temps, ambient, &zone_kw);

        let discomfort = p.discomfort(&temps);
        let energy_kwh = hvac_kw * self.clock.dt_hours;
        let reward = quantize_reward(-p.comfort_weight * discomfort - p.energy_weight * energy_kwh);

        self.state.zone_temps = temps;
        self.state.hvac_kw = hvac_kw;
        self.state.step += 1;
        self.state.ambient = self.ambient.at(self.state.step);

        let mean_temp = self.state.zone_temps.iter().sum::<f64>() / p.zones as f64;
        let meta = prefixed(
            &self.name,
            &[
                ("reward", reward),
                ("power_kw", hvac_kw),
                ("discomfort", discomfort),
                ("mean_temp_c", mean_temp),
                ("ambient_c", ambient),
            ],
        );
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done: self.state.step >= self.clock.horizon,
            meta,
        })
    }

    fn real_power_kw(&self) -> f64 {
        self.state.hvac_kw
    }

    fn reactive_power_kvar(&self) -> f64 {
        lagging_kvar(self.state.hvac_kw, self.params.power_factor)
    }
}
