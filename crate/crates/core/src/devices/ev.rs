use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{lagging_kvar, prefixed, Clock};
use crate::env::{check_step, quantize_reward, ComponentEnv, GridSignal, Space, StepResult};
use crate::error::{Error, Result};

/// Residual demand below this counts as fully charged.
const FULL_TOLERANCE_KWH: f64 = 1e-9;

/// Seeded arrival process: Poisson counts per step inside a daily window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrivalParams {
    pub window_start_hour: f64,
    pub window_end_hour: f64,
    pub rate_per_hour: f64,
    pub demand_kwh: (f64, f64),
    pub dwell_hours: (f64, f64),
}

impl Default for ArrivalParams {
    fn default() -> Self {
        Self {
            window_start_hour: 6.0,
            window_end_hour: 16.0,
            rate_per_hour: 1.5,
            demand_kwh: (5.0, 25.0),
            dwell_hours: (2.0, 8.0),
        }
    }
}

/// Exogenous schedule entry of one vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub arrival: usize,
    pub departure: usize,
    pub demand_kwh: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvStationParams {
    pub chargers: usize,
    pub max_rate_kw: f64,
    pub peak_threshold_kw: f64,
    /// Penalty per kWh of demand still unmet at departure.
    pub unmet_weight: f64,
    /// Penalty per kW of aggregate power above the threshold.
    pub peak_weight: f64,
    pub power_factor: f64,
    pub arrivals: ArrivalParams,
    /// Fixed schedule; when set, the arrival process is not sampled.
    pub schedule: Option<Vec<VehicleSpec>>,
}

impl Default for EvStationParams {
    fn default() -> Self {
        Self {
            chargers: 5,
            max_rate_kw: 7.0,
            peak_threshold_kw: 20.0,
            unmet_weight: 1.0,
            peak_weight: 0.1,
            power_factor: 0.95,
            arrivals: ArrivalParams::default(),
            schedule: None,
        }
    }
}

impl EvStationParams {
    pub fn validate(&self, clock: &Clock) -> Result<()> {
        let a = &self.arrivals;
        if self.chargers == 0 || !(self.max_rate_kw > 0.0) {
            return Err(Error::config("ev station needs chargers >= 1 and max_rate_kw > 0"));
        }
        if self.unmet_weight < 0.0 || self.peak_weight < 0.0 || self.peak_threshold_kw < 0.0 {
            return Err(Error::config("ev station weights and threshold must be non-negative"));
        }
        if !(a.demand_kwh.0 >= 0.0 && a.demand_kwh.0 <= a.demand_kwh.1)
            || !(a.dwell_hours.0 > 0.0 && a.dwell_hours.0 <= a.dwell_hours.1)
            || !(a.rate_per_hour >= 0.0)
            || !(a.window_start_hour <= a.window_end_hour)
        {
            return Err(Error::config("ev arrival parameters are inconsistent"));
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return Err(Error::config("ev station power_factor must be in (0, 1]"));
        }
        if let Some(s) = &self.schedule {
            for (k, v) in s.iter().enumerate() {
                if v.arrival >= v.departure || v.departure > clock.horizon || !(v.demand_kwh >= 0.0) {
                    return Err(Error::config(format!(
                        "ev schedule entry {k}: need arrival < departure <= horizon and demand >= 0"
                    )));
                }
            }
        }
        Ok(())
    }

    fn max_demand_kwh(&self) -> f64 {
        let sampled = self.arrivals.demand_kwh.1;
        self.schedule
            .as_ref()
            .map(|s| s.iter().map(|v| v.demand_kwh).fold(sampled, f64::max))
            .unwrap_or(sampled)
    }

    fn max_dwell_steps(&self, clock: &Clock) -> f64 {
        let sampled = (self.arrivals.dwell_hours.1 / clock.dt_hours).round().max(1.0);
        self.schedule
            .as_ref()
            .map(|s| {
                s.iter()
                    .map(|v| (v.departure - v.arrival) as f64)
                    .fold(sampled, f64::max)
            })
            .unwrap_or(sampled)
    }
}

/// Draws the day's vehicles. Per step inside the window: a Poisson count,
/// then for each vehicle a uniform demand and a uniform dwell time.
pub fn sample_arrivals(arrivals: &ArrivalParams, clock: &Clock, seed: u64) -> Vec<VehicleSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = arrivals.rate_per_hour * clock.dt_hours;
    let poisson = (mean > 0.0).then(|| Poisson::new(mean).expect("positive mean"));
    let mut out = Vec::new();
    for step in 0..clock.horizon {
        let hour = step as f64 * clock.dt_hours;
        if hour < arrivals.window_start_hour || hour >= arrivals.window_end_hour {
            continue;
        }
        let count = match &poisson {
            Some(p) => p.sample(&mut rng) as usize,
            None => 0,
        };
        for _ in 0..count {
            let demand_kwh = uniform(&mut rng, arrivals.demand_kwh);
            let dwell = uniform(&mut rng, arrivals.dwell_hours);
            let dwell_steps = ((dwell / clock.dt_hours).round() as usize).max(1);
            out.push(VehicleSpec {
                arrival: step,
                departure: (step + dwell_steps).min(clock.horizon),
                demand_kwh,
            });
        }
    }
    out
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VehicleStatus {
    /// Not yet arrived.
    Scheduled,
    /// Present, waiting for a free charger.
    Waiting,
    Charging,
    /// Left fully charged.
    Completed,
    /// Left at its scheduled departure with demand remaining.
    Departed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vehicle {
    pub arrival: usize,
    pub departure: usize,
    pub demand_kwh: f64,
    pub max_rate_kw: f64,
    pub delivered_kwh: f64,
    pub remaining_kwh: f64,
    pub unmet_kwh: f64,
    pub status: VehicleStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvStationState {
    /// Every vehicle of the episode, in arrival order.
    pub vehicles: Vec<Vehicle>,
    pub occupancy: usize,
    pub aggregate_kw: f64,
    pub action: f64,
    pub step: usize,
}

impl EvStationState {
    fn plugged(&self) -> impl Iterator<Item = &Vehicle> {
        self.vehicles
            .iter()
            .filter(|v| v.status == VehicleStatus::Charging)
    }
}

/// Charging station with one aggregate rate action for every plugged vehicle.
///
/// Vehicles arriving while all chargers are busy wait in arrival order and
/// still leave at their scheduled departure.
pub struct EvStation {
    name: String,
    params: EvStationParams,
    clock: Clock,
    state: EvStationState,
    observation_space: Space,
    action_space: Space,
}

impl EvStation {
    pub fn new(name: impl Into<String>, params: EvStationParams, clock: Clock) -> Result<Self> {
        let name = name.into();
        params.validate(&clock)?;
        Ok(Self {
            name,
            params,
            clock,
            state: EvStationState {
                vehicles: Vec::new(),
                occupancy: 0,
                aggregate_kw: 0.0,
                action: 0.0,
                step: 0,
            },
            observation_space: Space::uniform(4, 0.0, 1.0)?,
            action_space: Space::uniform(1, 0.0, 1.0)?,
        })
    }

    pub fn params(&self) -> &EvStationParams {
        &self.params
    }

    pub fn state(&self) -> &EvStationState {
        &self.state
    }

    /// Normalized station summary:
    /// `[occupancy / chargers, power / station max, remaining / station max
    /// energy, mean time-to-departure / max dwell]`.
    pub fn observation(&self) -> Vec<f64> {
        let p = &self.params;
        let s = &self.state;
        let chargers = p.chargers as f64;
        let occupancy = s.occupancy as f64 / chargers;
        let power = s.aggregate_kw / (chargers * p.max_rate_kw);
        let remaining: f64 = s.plugged().map(|v| v.remaining_kwh).sum();
        let max_energy = chargers * p.max_demand_kwh();
        let energy = if max_energy > 0.0 { remaining / max_energy } else { 0.0 };
        let dwell = p.max_dwell_steps(&self.clock);
        let (sum, n) = s.plugged().fold((0.0, 0usize), |(acc, n), v| {
            (acc + (v.departure.saturating_sub(s.step)) as f64 / dwell, n + 1)
        });
        let ttd = if n > 0 { sum / n as f64 } else { 0.0 };
        vec![
            occupancy.clamp(0.0, 1.0),
            power.clamp(0.0, 1.0),
            energy.clamp(0.0, 1.0),
            ttd.clamp(0.0, 1.0),
        ]
    }

    /// Moves arrivals at `step` into the queue and plugs waiting vehicles
    /// while chargers are free.
    fn admit(&mut self, step: usize) {
        for v in &mut self.state.vehicles {
            if v.status == VehicleStatus::Scheduled && v.arrival == step {
                v.status = VehicleStatus::Waiting;
            }
        }
        let mut occupancy = self.state.plugged().count();
        for v in &mut self.state.vehicles {
            if occupancy >= self.params.chargers {
                break;
            }
            if v.status == VehicleStatus::Waiting {
                v.status = VehicleStatus::Charging;
                occupancy += 1;
            }
        }
        self.state.occupancy = occupancy;
    }
}

impl ComponentEnv for EvStation {
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
        let specs = match &self.params.schedule {
            Some(s) => s.clone(),
            None => sample_arrivals(&self.params.arrivals, &self.clock, seed),
        };
        let mut vehicles: Vec<Vehicle> = specs
            .into_iter()
            .map(|s| Vehicle {
                arrival: s.arrival,
                departure: s.departure,
                demand_kwh: s.demand_kwh,
                max_rate_kw: self.params.max_rate_kw,
                delivered_kwh: 0.0,
                remaining_kwh: s.demand_kwh,
                unmet_kwh: 0.0,
                status: VehicleStatus::Scheduled,
            })
            .collect();
        vehicles.sort_by_key(|v| v.arrival);
        self.state = EvStationState {
            vehicles,
            occupancy: 0,
            aggregate_kw: 0.0,
            action: 0.0,
            step: 0,
        };
        self.admit(0);
        Ok(self.observation())
    }

    fn step(&mut self, action: &[f64], _signal: &GridSignal) -> Result<StepResult> {
        check_step(self, action)?;
        let dt = self.clock.dt_hours;
        let rate = action[0];
        let mut energy = 0.0;
        let mut completed = 0usize;
        for v in &mut self.state.vehicles {
            if v.status != VehicleStatus::Charging {
                continue;
            }
            let e = (rate * v.max_rate_kw * dt).min(v.remaining_kwh);
            v.delivered_kwh += e;
            v.remaining_kwh -= e;
            energy += e;
            if v.remaining_kwh <= FULL_TOLERANCE_KWH {
                v.remaining_kwh = 0.0;
                v.status = VehicleStatus::Completed;
                completed += 1;
            }
        }
        let aggregate_kw = energy / dt;

        let next = self.state.step + 1;
        let mut unmet = 0.0;
        for v in &mut self.state.vehicles {
            let present = matches!(v.status, VehicleStatus::Charging | VehicleStatus::Waiting);
            if present && v.departure <= next {
                v.unmet_kwh = v.remaining_kwh;
                unmet += v.remaining_kwh;
                v.status = VehicleStatus::Departed;
            }
        }
        self.state.step = next;
        self.state.aggregate_kw = aggregate_kw;
        self.state.action = rate;
        self.admit(next);

        let p = &self.params;
        let excess = (aggregate_kw - p.peak_threshold_kw).max(0.0);
        let reward = quantize_reward(-p.unmet_weight * unmet - p.peak_weight * excess);
        let waiting = self
            .state
            .vehicles
            .iter()
            .filter(|v| v.status == VehicleStatus::Waiting)
            .count();
        let meta = prefixed(
            &self.name,
            &[
                ("reward", reward),
                ("power_kw", aggregate_kw),
                ("delivered_kwh", energy),
                ("unmet_kwh", unmet),
                ("peak_excess_kw", excess),
                ("occupancy", self.state.occupancy as f64),
                ("waiting", waiting as f64),
                ("completed", completed as f64),
            ],
        );
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: next >= self.clock.horizon,
            meta,
        })
    }

    fn real_power_kw(&self) -> f64 {
        self.state.aggregate_kw
    }

    fn reactive_power_kvar(&self) -> f64 {
        lagging_kvar(self.state.aggregate_kw, self.params.power_factor)
    }
}
