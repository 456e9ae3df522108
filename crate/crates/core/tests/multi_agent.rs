use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use gridmarl::env::{
    ComponentEnv, GridField, GridMask, GridSettings, GridSignal, MultiAgentEnv, MultiAgentEnvironment,
    StepResult, VoltageMonitor, VoltagePenalty, AgentSpec, BaseLoad, Meta, Space,
};
use gridmarl::powerflow::{min_voltage, solve, voltage_violation, FeederModel, InjectionSet};
use gridmarl::profile::Profile;
use gridmarl::scenario::{bundled_dir, Scenario};
use gridmarl::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HORIZON: usize = 6;

type Trace = Arc<Mutex<Vec<(String, f64)>>>;

/// Load of `kw * action` with a fixed Q/P ratio; records each step it takes.
struct Load {
    name: String,
    kw: f64,
    q_ratio: f64,
    p: f64,
    steps: usize,
    trace: Trace,
    obs: Space,
    act: Space,
}

impl Load {
    fn new(name: &str, kw: f64, trace: &Trace) -> Self {
        Self {
            name: name.into(),
            kw,
            q_ratio: 0.5,
            p: 0.0,
            steps: 0,
            trace: trace.clone(),
            obs: Space::uniform(1, 0.0, 1.0).unwrap(),
            act: Space::uniform(1, 0.0, 2.0).unwrap(),
        }
    }
}

impl ComponentEnv for Load {
    fn name(&self) -> &str {
        &self.name
    }
    fn observation_space(&self) -> &Space {
        &self.obs
    }
    fn action_space(&self) -> &Space {
        &self.act
    }
    fn horizon(&self) -> usize {
        HORIZON
    }
    fn steps_taken(&self) -> usize {
        self.steps
    }
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.steps = 0;
        self.p = 0.0;
        Ok(vec![(seed % 1000) as f64 / 1000.0])
    }
    fn step(&mut self, action: &[f64], _signal: &GridSignal) -> Result<StepResult> {
        assert!(self.act.contains(action), "unclamped action {action:?}");
        self.trace.lock().unwrap().push((self.name.clone(), action[0]));
        self.p = self.kw * action[0];
        self.steps += 1;
        Ok(StepResult {
            observation: vec![0.5],
            reward: -0.25 * action[0],
            done: self.steps >= HORIZON,
            meta: Meta::new(),
        })
    }
    fn real_power_kw(&self) -> f64 {
        self.p
    }
    fn reactive_power_kvar(&self) -> f64 {
        self.p * self.q_ratio
    }
}

struct Agent<'a> {
    id: &'a str,
    bus: &'a str,
    kw: f64,
    mask: &'a [GridField],
    penalty: Option<(GridField, f64, f64)>,
}

fn env_with(agents: &[Agent], base: &[(&str, f64)], trace: &Trace) -> MultiAgentEnv {
    let settings = GridSettings::default();
    let specs = agents
        .iter()
        .map(|a| AgentSpec {
            id: a.id.into(),
            env: Box::new(Load::new(a.id, a.kw, trace)),
            bus: a.bus.into(),
            grid_mask: GridMask::from_fields(a.mask),
            penalty: a.penalty.map(|(field, weight, share)| VoltagePenalty {
                field,
                weight,
                v_lower: settings.v_lower,
                v_upper: settings.v_upper,
                share,
            }),
        })
        .collect();
    let loads = base
        .iter()
        .map(|(bus, kw)| BaseLoad {
            bus: bus.to_string(),
            profile: Profile::constant(*kw, HORIZON),
        })
        .collect();
    MultiAgentEnv::new(FeederModel::radial_13_bus(), specs, loads, settings).unwrap()
}

fn agent<'a>(id: &'a str, bus: &'a str, kw: f64) -> Agent<'a> {
    Agent {
        id,
        bus,
        kw,
        mask: &[],
        penalty: None,
    }
}

fn actions(pairs: &[(&str, f64)]) -> BTreeMap<String, Vec<f64>> {
    pairs.iter().map(|(id, a)| (id.to_string(), vec![*a])).collect()
}

fn new_trace() -> Trace {
    Arc::new(Mutex::new(Vec::new()))
}

#[test]
fn agents_step_in_sorted_id_order_with_clamped_actions() {
    let trace = new_trace();
    let mut env = env_with(&[agent("zeta", "b3", 10.0), agent("alpha", "b5", 10.0)], &[], &trace);
    assert_eq!(env.agent_ids(), ["alpha", "zeta"]);
    env.reset(0).unwrap();
    env.step(&actions(&[("zeta", 7.0), ("alpha", -3.0)])).unwrap();
    assert_eq!(
        *trace.lock().unwrap(),
        [("alpha".to_string(), 0.0), ("zeta".to_string(), 2.0)]
    );
}

#[test]
fn zero_load_leaves_every_bus_at_slack_voltage() {
    let trace = new_trace();
    let mut env = env_with(&[agent("a", "b6", 50.0), agent("b", "b12", 50.0)], &[], &trace);
    env.reset(1).unwrap();
    let step = env.step(&actions(&[("a", 0.0), ("b", 0.0)])).unwrap();
    for v in &env.last_power_flow().unwrap().magnitudes {
        assert_eq!(*v, 1.0);
    }
    for meta in step.metas.values() {
        assert_eq!(meta["v_min"], 1.0);
        assert_eq!(meta["v_vio"], 0.0);
        assert_eq!(meta["r_sys"], 0.0);
    }
}

#[test]
fn grid_signals_match_standalone_solve() {
    let trace = new_trace();
    let mut env = env_with(
        &[agent("a", "b6", 80.0), agent("b", "b12", 120.0), agent("c", "b8", 40.0)],
        &[("b10", 60.0)],
        &trace,
    );
    env.reset(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let feeder = FeederModel::radial_13_bus();
    let pf = GridSettings::default().load_power_factor;
    let base_q = 60.0 * (1.0 - pf * pf).sqrt() / pf;
    for _ in 0..HORIZON {
        let (xa, xb, xc) = (rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0));
        let step = env.step(&actions(&[("a", xa), ("b", xb), ("c", xc)])).unwrap();

        let mut inj = InjectionSet::for_feeder(&feeder);
        inj.add_by_id(&feeder, "b10", 60.0, base_q).unwrap();
        for (bus, p) in [("b6", 80.0 * xa), ("b12", 120.0 * xb), ("b8", 40.0 * xc)] {
            inj.add_by_id(&feeder, bus, p, 0.5 * p).unwrap();
        }
        let flow = solve::<f64>(&feeder, &inj).unwrap();
        let v_min = min_voltage(&flow).unwrap();
        let by_bus = [("a", "b6"), ("b", "b12"), ("c", "b8")];
        for (id, bus) in by_bus {
            let meta = &step.metas[id];
            assert_eq!(meta["v_min"], v_min);
            assert_eq!(meta["v_comm"], flow.magnitude(feeder.index_of(bus).unwrap()));
            assert_eq!(meta["net_power_kw"], inj.total_p_kw());
        }
    }
}

#[test]
fn penalty_is_zero_inside_the_band() {
    let trace = new_trace();
    let mut env = env_with(
        &[Agent {
            penalty: Some((GridField::VMin, 1000.0, 1.0)),
            ..agent("a", "b6", 5.0)
        }],
        &[],
        &trace,
    );
    env.reset(0).unwrap();
    while let Ok(step) = env.step(&actions(&[("a", 1.0)])) {
        let meta = &step.metas["a"];
        assert!(meta["v_min"] > 0.95);
        assert_eq!(meta["r_sys"], 0.0);
        assert_eq!(meta["reward"], meta["r_agent"]);
        if step.all_done() {
            break;
        }
    }
}

#[test]
fn shared_penalty_sums_to_weighted_violation() {
    let trace = new_trace();
    let weight = 1000.0;
    let mut env = env_with(
        &[
            Agent {
                penalty: Some((GridField::VComm, weight, 0.25)),
                ..agent("a", "b6", 300.0)
            },
            Agent {
                penalty: Some((GridField::VComm, weight, 0.75)),
                ..agent("b", "b6", 300.0)
            },
        ],
        &[],
        &trace,
    );
    env.reset(0).unwrap();
    let step = env.step(&actions(&[("a", 2.0), ("b", 2.0)])).unwrap();
    let v = step.metas["a"]["v_comm"];
    let violation = voltage_violation(v, 0.95, 1.05);
    assert!(violation > 0.01, "load should pull b6 below the band: {v}");
    let total: f64 = step.metas.values().map(|m| m["r_sys"]).sum();
    assert!((total + weight * violation).abs() <= 2.0 * 2f64.powi(-32), "{total}");
    assert!((step.metas["b"]["r_sys"] / step.metas["a"]["r_sys"] - 3.0).abs() < 1e-6);
    for m in step.metas.values() {
        assert_eq!(m["reward"] - m["r_sys"], m["r_agent"]);
    }
}

#[test]
fn grid_mask_appends_exactly_the_selected_fields() {
    let trace = new_trace();
    let mut env = env_with(
        &[
            Agent {
                mask: &[GridField::VMin],
                ..agent("a", "b6", 100.0)
            },
            agent("b", "b12", 100.0),
        ],
        &[],
        &trace,
    );
    assert_eq!(env.observation_space("a").unwrap().len(), 2);
    assert_eq!(env.observation_space("b").unwrap().len(), 1);
    let obs = env.reset(0).unwrap();
    assert_eq!(obs["a"].len(), 2);
    assert_eq!(obs["b"].len(), 1);
    let step = env.step(&actions(&[("a", 1.0), ("b", 1.0)])).unwrap();
    let o = &step.observations["a"];
    assert_eq!(o.len(), 2);
    assert_eq!(o[0], 0.5);
    let space = env.observation_space("a").unwrap();
    let v_min = step.metas["a"]["v_min"];
    assert!(space.low()[1] < v_min && v_min < space.high()[1]);
    assert_eq!(o[1], v_min);
}

#[test]
fn diverged_solve_ends_the_episode_with_the_penalty() {
    let trace = new_trace();
    let mut env = env_with(&[agent("a", "b6", 1.0e6)], &[], &trace);
    env.reset(0).unwrap();
    let step = env.step(&actions(&[("a", 2.0)])).unwrap();
    let meta = &step.metas["a"];
    assert_eq!(meta["pf_diverged"], 1.0);
    assert_eq!(meta["r_sys"], -GridSettings::default().divergence_penalty);
    assert!(step.all_done());
    assert!(env.step(&actions(&[("a", 0.0)])).is_err());
}

#[test]
fn episode_ends_at_horizon_and_rejects_further_steps() {
    let trace = new_trace();
    let mut env = env_with(&[agent("a", "b2", 1.0)], &[], &trace);
    assert!(env.step(&actions(&[("a", 1.0)])).is_err(), "step before reset");
    env.reset(0).unwrap();
    for k in 1..=HORIZON {
        let step = env.step(&actions(&[("a", 1.0)])).unwrap();
        assert_eq!(step.all_done(), k == HORIZON);
    }
    assert!(env.step(&actions(&[("a", 1.0)])).is_err());
    assert!(env.reset(0).is_ok());
    assert!(env.step(&actions(&[("b", 1.0)])).is_err(), "unknown agent key");
}

#[test]
fn monitor_selects_the_voltage_behind_v_vio() {
    let trace = new_trace();
    let make = |monitor: VoltageMonitor| {
        let specs = vec![AgentSpec {
            id: "a".into(),
            env: Box::new(Load::new("a", 250.0, &trace)),
            bus: "b12".into(),
            grid_mask: GridMask::none(),
            penalty: None,
        }];
        let settings = GridSettings {
            monitor,
            ..Default::default()
        };
        MultiAgentEnv::new(FeederModel::radial_13_bus(), specs, vec![], settings).unwrap()
    };
    let mut at_b1 = make(VoltageMonitor::Bus("b1".into()));
    let mut feeder_min = make(VoltageMonitor::FeederMin);
    at_b1.reset(0).unwrap();
    feeder_min.reset(0).unwrap();
    let s1 = at_b1.step(&actions(&[("a", 2.0)])).unwrap();
    let s2 = feeder_min.step(&actions(&[("a", 2.0)])).unwrap();
    let v_min = s2.metas["a"]["v_min"];
    assert_eq!(s2.metas["a"]["v_vio"], voltage_violation(v_min, 0.95, 1.05));
    assert!(s2.metas["a"]["v_vio"] > 0.0);
    assert_eq!(s1.metas["a"]["v_vio"], 0.0);
}

#[test]
fn same_seed_episodes_are_identical() {
    let scenario = Scenario::load(&bundled_dir().join("case_b.toml")).unwrap();
    let run = |seed: u64| {
        let mut env = scenario.build_env().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![format!("{:?}", env.reset(seed).unwrap())];
        loop {
            let acts: BTreeMap<String, Vec<f64>> = env
                .agent_ids()
                .into_iter()
                .map(|id| {
                    let s = env.action_space(&id).unwrap();
                    let a = (0..s.len()).map(|i| rng.gen_range(s.low()[i]..=s.high()[i])).collect();
                    (id, a)
                })
                .collect();
            let step = env.step(&acts).unwrap();
            out.push(format!("{step:?}"));
            if step.all_done() {
                return out;
            }
        }
    };
    let first = run(11);
    assert_eq!(first.len(), 289);
    assert_eq!(first, run(11));
    assert_ne!(first, run(12));
}
