//! N-agent environment with a power flow solve at every control step.
//!
//! Each call to [`MultiAgentEnv::step`] runs, in order:
//!
//! 1. clamp every agent's action to its action space;
//! 2. step each agent's device dynamics, serially in sorted-id order, to get
//!    its real and reactive power for this step;
//! 3. add the agents' powers to the base system load at their buses;
//! 4. solve the feeder power flow;
//! 5. compute grid-coupled reward terms and append the masked grid fields to
//!    each observation;
//! 6. return the per-agent maps.

use std::collections::BTreeMap;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::component::{
    observation_with_grid, quantize_reward, ComponentEnv, GridField, GridMask, GridSignal, Meta,
};
use super::space::{clamp_action, Space};
use crate::error::{Error, Result};
use crate::powerflow::{
    min_voltage, voltage_violation, FeederModel, InjectionSet, PowerFlowResult, PowerFlowSolver,
    SolverOptions, SweepSolver,
};
use crate::profile::Profile;

/// Key of the global done flag in [`MultiAgentStep::dones`].
pub const ALL_DONE: &str = "__all__";

#[derive(Clone, Debug, PartialEq)]
pub struct MultiAgentStep {
    pub observations: BTreeMap<String, Vec<f64>>,
    pub rewards: BTreeMap<String, f64>,
    /// Per-agent flags plus [`ALL_DONE`].
    pub dones: BTreeMap<String, bool>,
    pub metas: BTreeMap<String, Meta>,
}

impl MultiAgentStep {
    pub fn all_done(&self) -> bool {
        self.dones.get(ALL_DONE).copied().unwrap_or(false)
    }
}

/// Multi-agent reset/step contract consumed by the trainers.
pub trait MultiAgentEnvironment {
    /// Agent ids in sorted order.
    fn agent_ids(&self) -> Vec<String>;
    fn observation_space(&self, agent: &str) -> Option<&Space>;
    fn action_space(&self, agent: &str) -> Option<&Space>;
    fn horizon(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<BTreeMap<String, Vec<f64>>>;
    fn step(&mut self, actions: &BTreeMap<String, Vec<f64>>) -> Result<MultiAgentStep>;
}

/// Grid-coupled reward `-weight * share * violation(field)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltagePenalty {
    pub field: GridField,
    pub weight: f64,
    pub v_lower: f64,
    pub v_upper: f64,
    /// Fraction of the penalty charged to this agent.
    pub share: f64,
}

impl VoltagePenalty {
    pub fn evaluate(&self, signal: &GridSignal) -> f64 {
        -self.weight * voltage_violation(signal.get(self.field), self.v_lower, self.v_upper)
            * self.share
    }
}

pub struct AgentSpec {
    pub id: String,
    pub env: Box<dyn ComponentEnv>,
    pub bus: String,
    pub grid_mask: GridMask,
    pub penalty: Option<VoltagePenalty>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseLoad {
    pub bus: String,
    /// kW per step.
    pub profile: Profile,
}

/// Which voltage feeds the per-step violation metric `v_vio`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoltageMonitor {
    Bus(String),
    FeederMin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSettings {
    pub load_power_factor: f64,
    pub v_lower: f64,
    pub v_upper: f64,
    pub monitor: VoltageMonitor,
    pub divergence_penalty: f64,
    pub solver: SolverOptions,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            load_power_factor: 0.95,
            v_lower: 0.95,
            v_upper: 1.05,
            monitor: VoltageMonitor::FeederMin,
            divergence_penalty: 1000.0,
            solver: SolverOptions::default(),
        }
    }
}

struct AgentSlot {
    id: String,
    env: Box<dyn ComponentEnv>,
    bus: usize,
    mask: GridMask,
    penalty: Option<VoltagePenalty>,
    observation_space: Space,
    signal: GridSignal,
}

pub struct MultiAgentEnv {
    agents: Vec<AgentSlot>,
    solver: SweepSolver<f64>,
    base_loads: Vec<(usize, Profile)>,
    settings: GridSettings,
    monitor_bus: Option<usize>,
    load_q_ratio: f64,
    horizon: usize,
    steps: usize,
    finished: bool,
    last_flow: Option<PowerFlowResult<f64>>,
    last_injections: Option<InjectionSet<f64>>,
}

/// Stable 64-bit FNV-1a hash of an agent id.
pub fn agent_seed(seed: u64, id: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(id.as_bytes());
    seed ^ h.finish()
}

impl MultiAgentEnv {
    pub fn new(
        feeder: FeederModel,
        agents: Vec<AgentSpec>,
        base_loads: Vec<BaseLoad>,
        settings: GridSettings,
    ) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::config("environment has no agents"));
        }
        if !(settings.load_power_factor > 0.0 && settings.load_power_factor <= 1.0) {
            return Err(Error::config("load power factor must be in (0, 1]"));
        }
        if !(settings.v_lower < settings.v_upper) {
            return Err(Error::config("voltage band must satisfy v_lower < v_upper"));
        }
        let solver = SweepSolver::with_options(feeder, settings.solver)?;
        let feeder = solver.feeder();
        let horizon = agents[0].env.horizon();

        let mut slots = Vec::with_capacity(agents.len());
        for spec in agents {
            let bus = feeder.index_of(&spec.bus).ok_or_else(|| {
                Error::config(format!(
                    "agent '{}' is assigned to unknown bus '{}'",
                    spec.id, spec.bus
                ))
            })?;
            if spec.env.horizon() != horizon {
                return Err(Error::config(format!(
                    "agent '{}' has horizon {}, expected {horizon}",
                    spec.id,
                    spec.env.horizon()
                )));
            }
            let observation_space = match spec.grid_mask.space() {
                Some(grid) => Space::concat([spec.env.observation_space(), &grid])?,
                None => spec.env.observation_space().clone(),
            };
            slots.push(AgentSlot {
                id: spec.id,
                env: spec.env,
                bus,
                mask: spec.grid_mask,
                penalty: spec.penalty,
                observation_space,
                signal: GridSignal::default(),
            });
        }
        slots.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = slots.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::config(format!("duplicate agent id '{}'", w[0].id)));
        }

        let mut loads = Vec::with_capacity(base_loads.len());
        for bl in base_loads {
            let bus = feeder.index_of(&bl.bus).ok_or_else(|| {
                Error::config(format!("base load references unknown bus '{}'", bl.bus))
            })?;
            bl.profile
                .require_len(horizon, &format!("base load at bus '{}'", bl.bus))?;
            loads.push((bus, bl.profile));
        }
        let monitor_bus = match &settings.monitor {
            VoltageMonitor::Bus(id) => Some(feeder.index_of(id).ok_or_else(|| {
                Error::config(format!("voltage monitor references unknown bus '{id}'"))
            })?),
            VoltageMonitor::FeederMin => None,
        };
        let pf = settings.load_power_factor;
        let load_q_ratio = (1.0 - pf * pf).sqrt() / pf;

        Ok(Self {
            agents: slots,
            solver,
            base_loads: loads,
            settings,
            monitor_bus,
            load_q_ratio,
            horizon,
            steps: 0,
            finished: true,
            last_flow: None,
            last_injections: None,
        })
    }

    pub fn feeder(&self) -> &FeederModel {
        self.solver.feeder()
    }

    pub fn settings(&self) -> &GridSettings {
        &self.settings
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Power flow solution of the most recent reset or step.
    pub fn last_power_flow(&self) -> Option<&PowerFlowResult<f64>> {
        self.last_flow.as_ref()
    }

    /// Injections fed to the most recent power flow solve.
    pub fn last_injections(&self) -> Option<&InjectionSet<f64>> {
        self.last_injections.as_ref()
    }

    pub fn agent_bus(&self, agent: &str) -> Option<&str> {
        self.slot(agent)
            .map(|s| self.feeder().buses[s.bus].id.as_str())
    }

    pub fn agent_env(&self, agent: &str) -> Option<&dyn ComponentEnv> {
        self.slot(agent).map(|s| s.env.as_ref())
    }

    fn slot(&self, agent: &str) -> Option<&AgentSlot> {
        self.agents
            .binary_search_by(|s| s.id.as_str().cmp(agent))
            .ok()
            .map(|k| &self.agents[k])
    }

    fn injections(&self, step: usize) -> InjectionSet<f64> {
        let mut inj = InjectionSet::for_feeder(self.feeder());
        for (bus, profile) in &self.base_loads {
            let p = profile.at(step);
            inj.add(*bus, p, p * self.load_q_ratio);
        }
        for a in &self.agents {
            inj.add(a.bus, a.env.real_power_kw(), a.env.reactive_power_kvar());
        }
        inj
    }

    fn signal_for(&self, flow: &PowerFlowResult<f64>, bus: usize) -> Result<GridSignal> {
        Ok(GridSignal {
            v_comm: flow.magnitude(bus),
            v_min: min_voltage(flow)?,
            v_max: flow.max_voltage()?,
        })
    }

    fn monitored_violation(&self, flow: &PowerFlowResult<f64>) -> Result<f64> {
        let v = match self.monitor_bus {
            Some(bus) => flow.magnitude(bus),
            None => min_voltage(flow)?,
        };
        Ok(voltage_violation(v, self.settings.v_lower, self.settings.v_upper))
    }
}

impl MultiAgentEnvironment for MultiAgentEnv {
    fn agent_ids(&self) -> Vec<String> {
        self.agents.iter().map(|a| a.id.clone()).collect()
    }

    fn observation_space(&self, agent: &str) -> Option<&Space> {
        self.slot(agent).map(|s| &s.observation_space)
    }

    fn action_space(&self, agent: &str) -> Option<&Space> {
        self.slot(agent).map(|s| s.env.action_space())
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&mut self, seed: u64) -> Result<BTreeMap<String, Vec<f64>>> {
        let mut raw = Vec::with_capacity(self.agents.len());
        for a in &mut self.agents {
            raw.push(a.env.reset(agent_seed(seed, &a.id))?);
        }
        let inj = self.injections(0);
        let flow = self.solver.solve(&inj)?;
        if !flow.converged {
            return Err(Error::PowerFlow(format!(
                "initial solve did not converge after {} iterations",
                flow.iterations
            )));
        }
        let mut observations = BTreeMap::new();
        for (k, raw_obs) in raw.into_iter().enumerate() {
            let signal = self.signal_for(&flow, self.agents[k].bus)?;
            let a = &mut self.agents[k];
            a.signal = signal;
            let obs = observation_with_grid(&raw_obs, &signal, &a.mask.0, &a.observation_space)?;
            observations.insert(a.id.clone(), obs);
        }
        self.steps = 0;
        self.finished = false;
        self.last_flow = Some(flow);
        self.last_injections = Some(inj);
        Ok(observations)
    }

    fn step(&mut self, actions: &BTreeMap<String, Vec<f64>>) -> Result<MultiAgentStep> {
        if self.finished {
            return Err(Error::contract(
                "multi-agent step called before reset or after the episode finished",
            ));
        }
        if actions.len() != self.agents.len()
            || !self.agents.iter().all(|a| actions.contains_key(&a.id))
        {
            let have: Vec<&str> = actions.keys().map(String::as_str).collect();
            let want: Vec<&str> = self.agents.iter().map(|a| a.id.as_str()).collect();
            return Err(Error::contract(format!(
                "action keys {have:?} do not match agents {want:?}"
            )));
        }

        // (1) clamp
        let mut clamped = Vec::with_capacity(self.agents.len());
        for a in &self.agents {
            clamped.push(clamp_action(&actions[&a.id], a.env.action_space())?);
        }

        // (2) device dynamics, sorted-id order
        let mut results = Vec::with_capacity(self.agents.len());
        for (a, act) in self.agents.iter_mut().zip(&clamped) {
            let res = a.env.step(act, &a.signal)?;
            res.check_finite(&a.id)?;
            if !a.env.real_power_kw().is_finite() {
                return Err(Error::NonFinite(format!("agent '{}' real power", a.id)));
            }
            results.push(res);
        }

        // (3) + (4) aggregate and solve
        let step_index = self.steps;
        let inj = self.injections(step_index);
        let flow = self.solver.solve(&inj)?;
        let diverged = !flow.converged;
        self.steps += 1;
        let horizon_reached = self.steps >= self.horizon;

        // (5) grid coupling
        let net_power_kw = inj.total_p_kw();
        let v_vio = if diverged {
            0.0
        } else {
            self.monitored_violation(&flow)?
        };
        let mut step = MultiAgentStep {
            observations: BTreeMap::new(),
            rewards: BTreeMap::new(),
            dones: BTreeMap::new(),
            metas: BTreeMap::new(),
        };
        let mut all_done = true;
        for (k, res) in results.into_iter().enumerate() {
            let bus = self.agents[k].bus;
            let signal = if diverged {
                self.agents[k].signal
            } else {
                self.signal_for(&flow, bus)?
            };
            let a = &mut self.agents[k];
            a.signal = signal;

            let r_agent = quantize_reward(res.reward);
            let mut r_sys = match &a.penalty {
                Some(p) if !diverged => quantize_reward(p.evaluate(&signal)),
                _ => 0.0,
            };
            if diverged {
                r_sys = quantize_reward(-self.settings.divergence_penalty);
            }
            let reward = r_agent + r_sys;
            let done = diverged || horizon_reached || res.done;
            all_done &= done;

            let obs = observation_with_grid(&res.observation, &signal, &a.mask.0, &a.observation_space)?;
            let mut meta = res.meta;
            meta.insert("reward".into(), reward);
            meta.insert("r_agent".into(), r_agent);
            meta.insert("r_sys".into(), r_sys);
            meta.insert("power_kw".into(), a.env.real_power_kw());
            meta.insert("v_comm".into(), signal.v_comm);
            meta.insert("v_min".into(), signal.v_min);
            meta.insert("v_max".into(), signal.v_max);
            meta.insert("net_power_kw".into(), net_power_kw);
            meta.insert("pf_iterations".into(), flow.iterations as f64);
            meta.insert("pf_diverged".into(), if diverged { 1.0 } else { 0.0 });
            meta.insert("v_vio".into(), v_vio);
            if let Some((key, v)) = meta.iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::NonFinite(format!("agent '{}' meta '{key}' = {v}", a.id)));
            }

            step.observations.insert(a.id.clone(), obs);
            step.rewards.insert(a.id.clone(), reward);
            step.dones.insert(a.id.clone(), done);
            step.metas.insert(a.id.clone(), meta);
        }
        let all_done = all_done || horizon_reached || diverged;
        step.dones.insert(ALL_DONE.to_string(), all_done);
        self.finished = all_done;
        self.last_flow = Some(flow);
        self.last_injections = Some(inj);
        Ok(step)
    }
}
