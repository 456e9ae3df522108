//! Multi-agent reinforcement learning environments for distribution grids.
//!
//! Devices are episodic components that compose into agents; agents share a
//! radial feeder solved by a backward/forward sweep after every joint step.

pub mod devices;
pub mod env;
pub mod error;
pub mod neural;
pub mod powerflow;
pub mod profile;
pub mod scenario;
pub mod scalar;
pub mod trainers;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mlp64 = neural::Mlp<f64>;
pub type Mlp32 = neural::Mlp<f32>;
pub type SweepSolver64 = powerflow::SweepSolver<f64>;
pub type SweepSolver32 = powerflow::SweepSolver<f32>;
pub type PowerFlowResult64 = powerflow::PowerFlowResult<f64>;
