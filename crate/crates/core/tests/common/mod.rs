#![allow(dead_code)]

use gridmarl::devices::{
    ArrivalParams, Building, BuildingParams, Clock, EvStation, EvStationParams, HvacControl, PvArray,
    PvParams, Storage, StorageParams,
};
use gridmarl::env::{ComponentEnv, GridSignal, MultiComponentEnv};
use gridmarl::profile::Profile;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const HORIZON: usize = 48;
/// Upper bound on the action width of any generated roster.
pub const MAX_ACTIONS: usize = 16;

#[derive(Clone, Debug)]
pub enum Kind {
    Building { per_zone: bool, zones: usize },
    Pv { rated_kw: f64 },
    Storage { initial_soc: f64 },
    Ev { rate_per_hour: f64 },
}

pub fn clock() -> Clock {
    Clock {
        dt_hours: 0.25,
        horizon: HORIZON,
    }
}

pub fn build(kind: &Kind, name: &str) -> Box<dyn ComponentEnv> {
    let clock = clock();
    match kind {
        Kind::Building { per_zone, zones } => {
            let params = BuildingParams {
                zones: *zones,
                control: if *per_zone { HvacControl::PerZone } else { HvacControl::Shared },
                ..Default::default()
            };
            let ambient = Profile::from_fn(HORIZON, |k| 25.0 + 5.0 * (k as f64 / 8.0).sin()).unwrap();
            Box::new(Building::new(name, params, clock, ambient).unwrap())
        }
        Kind::Pv { rated_kw } => {
            let shape = Profile::from_fn(HORIZON, |k| (k as f64 / HORIZON as f64 * 3.1).sin().max(0.0)).unwrap();
            let params = PvParams {
                rated_kw: *rated_kw,
                drop: None,
            };
            Box::new(PvArray::new(name, params, clock, &shape).unwrap())
        }
        Kind::Storage { initial_soc } => {
            let params = StorageParams {
                initial_soc: *initial_soc,
                ..Default::default()
            };
            Box::new(Storage::new(name, params, clock).unwrap())
        }
        Kind::Ev { rate_per_hour } => {
            let params = EvStationParams {
                arrivals: ArrivalParams {
                    window_start_hour: 0.0,
                    window_end_hour: 8.0,
                    rate_per_hour: *rate_per_hour,
                    demand_kwh: (2.0, 15.0),
                    dwell_hours: (0.5, 4.0),
                },
                ..Default::default()
            };
            Box::new(EvStation::new(name, params, clock).unwrap())
        }
    }
}

pub fn kind() -> impl Strategy<Value = Kind> {
    prop_oneof![
        (any::<bool>(), 1usize..4).prop_map(|(per_zone, zones)| Kind::Building { per_zone, zones }),
        (0.0f64..100.0).prop_map(|rated_kw| Kind::Pv { rated_kw }),
        (0.0f64..=1.0).prop_map(|initial_soc| Kind::Storage { initial_soc }),
        (0.0f64..6.0).prop_map(|rate_per_hour| Kind::Ev { rate_per_hour }),
    ]
}

/// A roster, an episode seed, unit-interval action draws and a grid voltage.
pub fn composition_case() -> impl Strategy<Value = (Vec<Kind>, u64, Vec<f64>, f64)> {
    (
        prop::collection::vec(kind(), 1..6),
        any::<u64>(),
        prop::collection::vec(0.0f64..=1.0, HORIZON * MAX_ACTIONS),
        0.9f64..1.1,
    )
}

/// Steps a composed agent and the same components standalone with identical
/// seeds and actions, and checks spaces, observations, rewards, powers and
/// metas agree exactly.
pub fn check_composition(kinds: &[Kind], seed: u64, unit_actions: &[f64], signal_v: f64) -> Result<(), TestCaseError> {
    let names: Vec<String> = (0..kinds.len()).map(|k| format!("c{k}")).collect();
    let mut standalone: Vec<Box<dyn ComponentEnv>> = kinds.iter().zip(&names).map(|(k, n)| build(k, n)).collect();
    let mut composite =
        MultiComponentEnv::new("agent", kinds.iter().zip(&names).map(|(k, n)| build(k, n)).collect()).unwrap();

    let obs_len: usize = standalone.iter().map(|c| c.observation_space().len()).sum();
    let act_len: usize = standalone.iter().map(|c| c.action_space().len()).sum();
    prop_assert!(act_len <= MAX_ACTIONS);
    prop_assert_eq!(composite.observation_space().len(), obs_len);
    prop_assert_eq!(composite.action_space().len(), act_len);
    let lows: Vec<f64> = standalone.iter().flat_map(|c| c.action_space().low().to_vec()).collect();
    prop_assert_eq!(composite.action_space().low(), &lows[..]);

    let mut expected_obs = Vec::new();
    for c in &mut standalone {
        expected_obs.extend(c.reset(seed).unwrap());
    }
    prop_assert_eq!(composite.reset(seed).unwrap(), expected_obs);

    let signal = GridSignal::flat(signal_v);
    let space = composite.action_space().clone();
    for t in 0..HORIZON {
        let action: Vec<f64> = (0..act_len)
            .map(|i| {
                let u = unit_actions[t * MAX_ACTIONS + i];
                space.low()[i] + u * (space.high()[i] - space.low()[i])
            })
            .collect();
        let got = composite.step(&action, &signal).unwrap();

        let mut offset = 0;
        let (mut reward, mut obs, mut done) = (0.0, Vec::new(), false);
        for c in &mut standalone {
            let n = c.action_space().len();
            let r = c.step(&action[offset..offset + n], &signal).unwrap();
            offset += n;
            reward += r.reward;
            obs.extend(r.observation);
            done |= r.done;
            for (key, v) in &r.meta {
                prop_assert_eq!(got.meta.get(key), Some(v), "meta {}", key);
            }
        }
        let p: f64 = standalone.iter().map(|c| c.real_power_kw()).sum();
        let q: f64 = standalone.iter().map(|c| c.reactive_power_kvar()).sum();
        prop_assert_eq!(got.reward, reward);
        prop_assert_eq!(got.observation, obs);
        prop_assert_eq!(got.done, done);
        prop_assert_eq!(got.done, t + 1 == HORIZON);
        prop_assert_eq!(composite.real_power_kw(), p);
        prop_assert_eq!(composite.reactive_power_kvar(), q);
    }
    prop_assert!(composite.is_done());
    Ok(())
}
