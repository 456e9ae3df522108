//! Episodic environment contract and the three composition tiers:
//! single components, multi-component agents, and the N-agent grid
//! environment.

mod component;
mod compose;
mod multi_agent;
mod space;

pub use component::{
    observation_with_grid, quantize_reward, ComponentEnv, GridField, GridMask, GridSignal, Meta,
    StepResult,
};
pub(crate) use component::check_step;
pub use compose::MultiComponentEnv;
pub use multi_agent::{
    agent_seed, AgentSpec, BaseLoad, GridSettings, MultiAgentEnv, MultiAgentEnvironment,
    MultiAgentStep, VoltageMonitor, VoltagePenalty, ALL_DONE,
};
pub use space::{clamp_action, Space};
