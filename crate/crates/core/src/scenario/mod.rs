//! Scenario files, episode logs and the run/train/evaluate drivers.

mod config;
mod log;
mod run;

pub use config::{
    AgentConfig, BaseLoadConfig, ComponentConfig, EvaluationConfig, FeederConfig, GridConfig,
    PenaltyConfig, ProfileSource, ScenarioConfig, TrainerConfig, FEEDER_PRESETS, MONITOR_FEEDER_MIN,
};
pub use log::{run_episode, EpisodeLog, EpisodeSummary, GLOBAL_COLUMNS};
pub use run::{
    evaluate, make_policy, train, CheckpointKind, EvaluationReport, PolicySource, Stat, TrainOutcome,
};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::devices::{Building, Clock, EvStation, PvArray, Storage};
use crate::env::{
    AgentSpec, BaseLoad, ComponentEnv, GridMask, GridSettings, MultiAgentEnv, MultiComponentEnv,
    VoltageMonitor, VoltagePenalty,
};
use crate::error::{Error, Result};
use crate::powerflow::SolverOptions;
use crate::profile::Profile;
use crate::trainers::{agent_spaces, AgentSpaces};

/// Directory holding the bundled scenario files.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Accepts a path, or the bare name of a bundled scenario such as `case_a`.
pub fn resolve_path(arg: &str) -> PathBuf {
    let direct = PathBuf::from(arg);
    if direct.exists() || arg.contains(['/', '\\']) || arg.ends_with(".toml") {
        return direct;
    }
    let bundled = bundled_dir().join(format!("{arg}.toml"));
    if bundled.exists() {
        bundled
    } else {
        direct
    }
}

/// A validated, normalized scenario with its profiles loaded.
#[derive(Clone, Debug)]
pub struct Scenario {
    config: ScenarioConfig,
    profiles: BTreeMap<String, Profile>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str(&text, base, path)
    }

    /// `base_dir` resolves relative profile paths; `origin` names the
    /// source in error messages.
    pub fn from_str(text: &str, base_dir: &Path, origin: &Path) -> Result<Self> {
        let config = ScenarioConfig::parse(text, origin)?;
        Self::from_config(config, base_dir).map_err(|e| qualify(e, origin))
    }

    pub fn from_config(mut config: ScenarioConfig, base_dir: &Path) -> Result<Self> {
        config.normalize(base_dir)?;
        config.validate()?;
        let mut profiles = BTreeMap::new();
        for (name, src) in &config.profiles {
            let p = Profile::load_csv(&src.file)?.scaled(src.scale);
            p.require_len(config.horizon, &format!("profiles.{name}"))?;
            profiles.insert(name.clone(), p);
        }
        Ok(Self { config, profiles })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.config.seed = seed;
    }

    pub fn set_iterations(&mut self, n: usize) {
        self.config.trainer.set_iterations(n);
    }

    pub fn profile(&self, name: &str) -> Option<&Profile> {
        self.profiles.get(name)
    }

    /// Canonical TOML dump of the normalized config.
    pub fn to_toml(&self) -> Result<String> {
        self.config.to_toml()
    }

    pub fn clock(&self) -> Clock {
        Clock {
            dt_hours: self.config.dt_hours(),
            horizon: self.config.horizon,
        }
    }

    /// `(agent id, meta prefix)` of every EV station component.
    pub fn ev_stations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for a in &self.config.agents {
            for c in &a.components {
                if let ComponentConfig::EvStation { .. } = c {
                    out.push((a.id.clone(), c.name().to_string()));
                }
            }
        }
        out
    }

    fn component(&self, c: &ComponentConfig, clock: Clock) -> Result<Box<dyn ComponentEnv>> {
        let name = c.name().to_string();
        let profile = |p: &str| {
            self.profiles
                .get(p)
                .ok_or_else(|| Error::config(format!("unknown profile '{p}'")))
        };
        Ok(match c {
            ComponentConfig::Building { ambient, params, .. } => {
                Box::new(Building::new(name, params.clone(), clock, profile(ambient)?.clone())?)
            }
            ComponentConfig::Pv { shape, params, .. } => {
                Box::new(PvArray::new(name, params.clone(), clock, profile(shape)?)?)
            }
            ComponentConfig::Storage { params, .. } => Box::new(Storage::new(name, params.clone(), clock)?),
            ComponentConfig::EvStation { params, .. } => Box::new(EvStation::new(name, params.clone(), clock)?),
        })
    }

    /// Fresh environment instance.
    pub fn build_env(&self) -> Result<MultiAgentEnv> {
        let cfg = &self.config;
        let clock = self.clock();
        let feeder = cfg.feeder.model()?;
        let mut agents = Vec::with_capacity(cfg.agents.len());
        for (k, a) in cfg.agents.iter().enumerate() {
            let mut parts = Vec::with_capacity(a.components.len());
            for (j, c) in a.components.iter().enumerate() {
                parts.push(
                    self.component(c, clock)
                        .map_err(|e| prefix(e, &format!("agents[{k}].components[{j}]")))?,
                );
            }
            let env: Box<dyn ComponentEnv> = if parts.len() == 1 {
                parts.pop().expect("one component")
            } else {
                Box::new(MultiComponentEnv::new(a.id.clone(), parts)?)
            };
            agents.push(AgentSpec {
                id: a.id.clone(),
                env,
                bus: a.bus.clone(),
                grid_mask: GridMask::from_fields(&a.observe_grid),
                penalty: a.penalty.as_ref().map(|p| VoltagePenalty {
                    field: p.field,
                    weight: p.weight,
                    v_lower: cfg.grid.v_lower + p.margin,
                    v_upper: cfg.grid.v_upper - p.margin,
                    share: p.share.unwrap_or(1.0),
                }),
            });
        }
        let base_loads = cfg
            .base_loads
            .iter()
            .map(|b| BaseLoad {
                bus: b.bus.clone(),
                profile: self.profiles[&b.profile].clone(),
            })
            .collect();
        let settings = GridSettings {
            load_power_factor: cfg.grid.load_power_factor,
            v_lower: cfg.grid.v_lower,
            v_upper: cfg.grid.v_upper,
            monitor: if cfg.grid.monitor == MONITOR_FEEDER_MIN {
                VoltageMonitor::FeederMin
            } else {
                VoltageMonitor::Bus(cfg.grid.monitor.clone())
            },
            divergence_penalty: cfg.grid.divergence_penalty,
            solver: SolverOptions {
                tolerance: cfg.grid.tolerance,
                max_iterations: cfg.grid.max_iterations,
            },
        };
        MultiAgentEnv::new(feeder, agents, base_loads, settings)
    }

    pub fn agent_spaces(&self) -> Result<Vec<AgentSpaces>> {
        agent_spaces(&self.build_env()?)
    }
}

fn prefix(e: Error, path: &str) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{path}: {m}")),
        other => other,
    }
}

fn qualify(e: Error, origin: &Path) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", origin.display())),
        other => other,
    }
}
