use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::devices::{BuildingParams, EvStationParams, PvParams, StorageParams};
use crate::env::GridField;
use crate::error::{Error, Result};
use crate::powerflow::{BusRecord, FeederModel};
use crate::trainers::{MaddpgConfig, PpoConfig};

/// Declarative description of a multi-agent run. See `scenarios/README.md`
/// for the file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_step_minutes")]
    pub step_minutes: f64,
    pub feeder: FeederConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub profiles: BTreeMap<String, ProfileSource>,
    #[serde(default)]
    pub base_loads: Vec<BaseLoadConfig>,
    pub agents: Vec<AgentConfig>,
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

fn default_horizon() -> usize {
    288
}

fn default_step_minutes() -> f64 {
    5.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederConfig {
    /// Named built-in topology; expanded into `buses` on normalization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub buses: Vec<BusRecord>,
    #[serde(default = "one")]
    pub slack_voltage: f64,
    #[serde(default = "default_base_kva")]
    pub base_kva: f64,
    #[serde(default = "default_base_kv")]
    pub base_kv: f64,
}

fn one() -> f64 {
    1.0
}

fn default_base_kva() -> f64 {
    1000.0
}

fn default_base_kv() -> f64 {
    4.16
}

pub const FEEDER_PRESETS: [&str; 1] = ["radial_13_bus"];

impl FeederConfig {
    pub fn model(&self) -> Result<FeederModel> {
        let mut m = match (&self.preset, self.buses.is_empty()) {
            (Some(p), true) if p == "radial_13_bus" => FeederModel::radial_13_bus(),
            (Some(p), true) => {
                return Err(Error::config(format!(
                    "feeder.preset: unknown preset '{p}' (known: {FEEDER_PRESETS:?})"
                )))
            }
            (Some(_), false) => return Err(Error::config("feeder: give either preset or buses, not both")),
            (None, false) => FeederModel::new(self.buses.clone()),
            (None, true) => return Err(Error::config("feeder: no buses and no preset")),
        };
        m.slack_voltage = self.slack_voltage;
        m.base_kva = self.base_kva;
        m.base_kv = self.base_kv;
        m.topology()?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub v_lower: f64,
    pub v_upper: f64,
    pub load_power_factor: f64,
    /// Bus id whose voltage feeds `v_vio`, or `feeder_min`.
    pub monitor: String,
    pub divergence_penalty: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

pub const MONITOR_FEEDER_MIN: &str = "feeder_min";

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            v_lower: 0.95,
            v_upper: 1.05,
            load_power_factor: 0.95,
            monitor: MONITOR_FEEDER_MIN.into(),
            divergence_penalty: 1000.0,
            tolerance: 1e-8,
            max_iterations: 50,
        }
    }
}

/// CSV series with a `step,value` header. Relative paths are resolved
/// against the scenario file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSource {
    pub file: PathBuf,
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseLoadConfig {
    pub bus: String,
    /// Profile name, kW.
    pub profile: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: String,
    pub bus: String,
    /// Grid fields appended to the agent's observation.
    #[serde(default)]
    pub observe_grid: Vec<GridField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<PenaltyConfig>,
    pub components: Vec<ComponentConfig>,
}

/// System voltage penalty `-weight * share * violation(field)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub field: GridField,
    pub weight: f64,
    /// Defaults to an even split among all penalized agents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub share: Option<f64>,
    /// Tightens the penalty band to `[v_lower + margin, v_upper - margin]`.
    /// The `v_vio` metric keeps the configured limits.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub margin: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComponentConfig {
    Building {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        /// Ambient temperature profile name, degC.
        ambient: String,
        #[serde(default)]
        params: BuildingParams,
    },
    Pv {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        /// Availability shape profile name, 0..1.
        shape: String,
        #[serde(default)]
        params: PvParams,
    },
    Storage {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default)]
        params: StorageParams,
    },
    EvStation {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default)]
        params: EvStationParams,
    },
}

impl ComponentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ComponentConfig::Building { .. } => "building",
            ComponentConfig::Pv { .. } => "pv",
            ComponentConfig::Storage { .. } => "storage",
            ComponentConfig::EvStation { .. } => "ev_station",
        }
    }

    fn default_name(&self) -> &'static str {
        match self {
            ComponentConfig::EvStation { .. } => "ev",
            other => other.kind(),
        }
    }

    pub fn name(&self) -> &str {
        let n = match self {
            ComponentConfig::Building { name, .. }
            | ComponentConfig::Pv { name, .. }
            | ComponentConfig::Storage { name, .. }
            | ComponentConfig::EvStation { name, .. } => name,
        };
        n.as_deref().unwrap_or_else(|| self.default_name())
    }

    fn fill_name(&mut self) {
        let default = self.default_name().to_string();
        match self {
            ComponentConfig::Building { name, .. }
            | ComponentConfig::Pv { name, .. }
            | ComponentConfig::Storage { name, .. }
            | ComponentConfig::EvStation { name, .. } => {
                name.get_or_insert(default);
            }
        }
    }

    fn profile_refs(&self) -> Vec<&str> {
        match self {
            ComponentConfig::Building { ambient, .. } => vec![ambient],
            ComponentConfig::Pv { shape, .. } => vec![shape],
            _ => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum TrainerConfig {
    Maddpg(MaddpgConfig),
    Ppo(PpoConfig),
}

impl TrainerConfig {
    pub fn iterations(&self) -> usize {
        match self {
            TrainerConfig::Maddpg(c) => c.iterations,
            TrainerConfig::Ppo(c) => c.iterations,
        }
    }

    pub fn set_iterations(&mut self, n: usize) {
        match self {
            TrainerConfig::Maddpg(c) => c.iterations = n,
            TrainerConfig::Ppo(c) => c.iterations = n,
        }
    }

    pub fn checkpoint_every(&self) -> usize {
        match self {
            TrainerConfig::Maddpg(c) => c.checkpoint_every,
            TrainerConfig::Ppo(c) => c.checkpoint_every,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub episodes: usize,
    /// Evaluation episode `k` uses seed `seed + seed_offset + k`.
    pub seed_offset: u64,
    /// Fixed actions (environment units) for the baseline comparison.
    pub baseline: BTreeMap<String, Vec<f64>>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            episodes: 10,
            seed_offset: 1_000_000,
            baseline: BTreeMap::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize scenario: {e}")))
    }

    pub fn dt_hours(&self) -> f64 {
        self.step_minutes / 60.0
    }

    /// Fills defaults, expands presets and resolves profile paths against
    /// `base_dir`. Idempotent.
    pub fn normalize(&mut self, base_dir: &Path) -> Result<()> {
        if self.feeder.preset.is_some() {
            let m = self.feeder.model()?;
            self.feeder.buses = m.buses;
            self.feeder.preset = None;
        }
        for p in self.profiles.values_mut() {
            if p.file.is_relative() {
                let joined = base_dir.join(&p.file);
                p.file = std::path::absolute(&joined).map_err(|e| Error::io(&joined, e))?;
            }
        }
        let penalized = self.agents.iter().filter(|a| a.penalty.is_some()).count();
        for a in &mut self.agents {
            for c in &mut a.components {
                c.fill_name();
            }
            if let Some(p) = &mut a.penalty {
                p.share.get_or_insert(1.0 / penalized as f64);
            }
        }
        Ok(())
    }

    /// Structural checks that do not need profile data.
    pub fn validate(&self) -> Result<()> {
        let err = |path: String, msg: String| Err(Error::config(format!("{path}: {msg}")));
        if self.horizon == 0 {
            return err("horizon".into(), "must be positive".into());
        }
        if !(self.step_minutes > 0.0 && self.step_minutes.is_finite()) {
            return err("step_minutes".into(), "must be positive".into());
        }
        let feeder = self.feeder.model()?;
        let g = &self.grid;
        if !(g.v_lower > 0.0 && g.v_lower <= g.v_upper) {
            return err("grid".into(), "need 0 < v_lower <= v_upper".into());
        }
        if !(g.load_power_factor > 0.0 && g.load_power_factor <= 1.0) {
            return err("grid.load_power_factor".into(), "must be in (0, 1]".into());
        }
        if g.monitor != MONITOR_FEEDER_MIN && feeder.index_of(&g.monitor).is_none() {
            return err("grid.monitor".into(), format!("bus '{}' does not exist on the feeder", g.monitor));
        }
        for (k, b) in self.base_loads.iter().enumerate() {
            if feeder.index_of(&b.bus).is_none() {
                return err(format!("base_loads[{k}].bus"), format!("bus '{}' does not exist on the feeder", b.bus));
            }
            if !self.profiles.contains_key(&b.profile) {
                return err(format!("base_loads[{k}].profile"), format!("unknown profile '{}'", b.profile));
            }
        }
        if self.agents.is_empty() {
            return err("agents".into(), "at least one agent is required".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for (k, a) in self.agents.iter().enumerate() {
            let path = format!("agents[{k}]");
            if a.id.is_empty() || a.id.contains(['.', ',', '/']) || !ids.insert(a.id.as_str()) {
                return err(format!("{path}.id"), format!("'{}' is empty, duplicated or contains '.', ',' or '/'", a.id));
            }
            if feeder.index_of(&a.bus).is_none() {
                return err(format!("{path}.bus"), format!("bus '{}' does not exist on the feeder", a.bus));
            }
            if a.components.is_empty() {
                return err(format!("{path}.components"), "at least one component is required".into());
            }
            if let Some(p) = &a.penalty {
                if !(p.weight >= 0.0) || matches!(p.share, Some(s) if !(s >= 0.0)) {
                    return err(format!("{path}.penalty"), "weight and share must be non-negative".into());
                }
                if !(p.margin >= 0.0 && 2.0 * p.margin < self.grid.v_upper - self.grid.v_lower) {
                    return err(format!("{path}.penalty.margin"), "margin must be non-negative and leave a non-empty band".into());
                }
            }
            let mut names = std::collections::BTreeSet::new();
            for (j, c) in a.components.iter().enumerate() {
                let cpath = format!("{path}.components[{j}]");
                if !names.insert(c.name().to_string()) || c.name().contains(['.', ',']) {
                    return err(format!("{cpath}.name"), format!("'{}' is duplicated or contains '.' or ','", c.name()));
                }
                for r in c.profile_refs() {
                    if !self.profiles.contains_key(r) {
                        return err(cpath.clone(), format!("unknown profile '{r}'"));
                    }
                }
            }
        }
        match &self.trainer {
            TrainerConfig::Maddpg(c) => c.validate()?,
            TrainerConfig::Ppo(c) => {
                c.validate()?;
                if let Some(k) = c.reward_multipliers.keys().find(|k| !ids.contains(k.as_str())) {
                    return err("trainer.reward_multipliers".into(), format!("unknown agent '{k}'"));
                }
            }
        }
        if let Some(k) = self.evaluation.baseline.keys().find(|k| !ids.contains(k.as_str())) {
            return err("evaluation.baseline".into(), format!("unknown agent '{k}'"));
        }
        if self.evaluation.episodes == 0 {
            return err("evaluation.episodes".into(), "must be positive".into());
        }
        Ok(())
    }
}
