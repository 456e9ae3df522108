//! Component environments for the case studies: a multi-zone building with
//! HVAC, a curtailable PV array, battery storage and an EV charging station.

mod building;
mod ev;
mod pv;
mod storage;

pub use building::{Building, BuildingParams, BuildingState, HvacControl};
pub use ev::{
    sample_arrivals, ArrivalParams, EvStation, EvStationParams, EvStationState, Vehicle, VehicleSpec,
    VehicleStatus,
};
pub use pv::{PvArray, PvParams, PvState, SupplyDrop};
pub use storage::{Storage, StorageParams, StorageState};

use serde::{Deserialize, Serialize};

use crate::env::Meta;

/// Control-step length and episode horizon shared by all devices of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clock {
    pub dt_hours: f64,
    pub horizon: usize,
}

impl Clock {
    /// Five-minute steps over one day.
    pub fn five_minute_day() -> Self {
        Self {
            dt_hours: 5.0 / 60.0,
            horizon: 288,
        }
    }

    pub fn steps_per_hour(&self) -> f64 {
        1.0 / self.dt_hours
    }
}

impl Default for Clock {
    fn default() -> Self {
        Self::five_minute_day()
    }
}

/// Reactive power drawn at a lagging power factor for a real-power load.
pub(crate) fn lagging_kvar(p_kw: f64, power_factor: f64) -> f64 {
    if power_factor >= 1.0 {
        0.0
    } else {
        p_kw * (1.0 - power_factor * power_factor).sqrt() / power_factor
    }
}

pub(crate) fn prefixed(name: &str, entries: &[(&str, f64)]) -> Meta {
    entries
        .iter()
        .map(|(k, v)| (format!("{name}.{k}"), *v))
        .collect()
}
