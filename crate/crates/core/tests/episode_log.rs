use std::collections::BTreeMap;

use gridmarl::powerflow::voltage_violation;
use gridmarl::scenario::{bundled_dir, evaluate, make_policy, run_episode, EpisodeLog, PolicySource, Scenario};

fn load(name: &str) -> Scenario {
    Scenario::load(&bundled_dir().join(format!("{name}.toml"))).unwrap()
}

fn random_episode(scenario: &Scenario, seed: u64) -> EpisodeLog {
    let spaces = scenario.agent_spaces().unwrap();
    let mut policy = make_policy(&spaces, &PolicySource::Random, &BTreeMap::new(), seed).unwrap();
    let mut env = scenario.build_env().unwrap();
    run_episode(&mut env, policy.as_mut(), seed, &scenario.ev_stations()).unwrap()
}

struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn read(path: &std::path::Path) -> Self {
        let (columns, rows) = EpisodeLog::read_csv(path).unwrap();
        Self { columns, rows }
    }

    fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

fn csv_round_trip(log: &EpisodeLog) -> Table {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("episode.csv");
    log.write_csv(&path).unwrap();
    Table::read(&path)
}

#[test]
fn random_case_a_episode_has_documented_columns() {
    let s = load("case_a");
    let log = random_episode(&s, 5);
    assert_eq!(log.rows.len(), 288);
    assert_eq!(log.summary.steps, 288);
    assert_eq!(log.columns[0], "step");
    for id in ["agent_1", "agent_2", "agent_3"] {
        for col in [
            "obs_0", "action_0", "reward", "r_agent", "r_sys", "v_comm", "v_min",
            "building.reward", "pv.reward", "storage.reward", "storage.soc_kwh",
        ] {
            let name = format!("{id}.{col}");
            assert!(log.columns.contains(&name), "missing {name}");
        }
    }
    for col in ["net_power_kw", "pf_iterations", "pf_diverged", "v_vio"] {
        assert!(log.columns.iter().any(|c| c == col), "missing {col}");
    }
    let steps = log.column("step").unwrap();
    assert!(steps.iter().enumerate().all(|(k, &s)| s == k as f64));
}

#[test]
fn csv_preserves_every_value() {
    let log = random_episode(&load("case_b"), 2);
    let back = csv_round_trip(&log);
    assert_eq!(back.columns, log.columns);
    assert_eq!(back.rows, log.rows);
}

#[test]
fn logged_rewards_decompose_exactly() {
    let s = load("case_a");
    let log = csv_round_trip(&random_episode(&s, 9));
    let ids = ["agent_1", "agent_2", "agent_3"];
    for id in ids {
        let r = log.column(&format!("{id}.reward")).unwrap();
        let agent = log.column(&format!("{id}.r_agent")).unwrap();
        let sys = log.column(&format!("{id}.r_sys")).unwrap();
        for k in 0..r.len() {
            assert_eq!(r[k] - sys[k], agent[k], "{id} step {k}");
        }
    }
    let first = log.column("agent_1.r_sys").unwrap();
    assert!(first.iter().any(|&x| x < 0.0), "random play should trigger the penalty");
    for id in &ids[1..] {
        assert_eq!(log.column(&format!("{id}.r_sys")).unwrap(), first);
    }
}

#[test]
fn component_rewards_sum_to_agent_reward() {
    let log = random_episode(&load("case_a"), 4);
    for id in ["agent_1", "agent_2", "agent_3"] {
        let agent = log.column(&format!("{id}.r_agent")).unwrap();
        let parts: Vec<Vec<f64>> = ["building", "pv", "storage"]
            .iter()
            .map(|c| log.column(&format!("{id}.{c}.reward")).unwrap())
            .collect();
        for k in 0..agent.len() {
            assert_eq!(parts[0][k] + parts[1][k] + parts[2][k], agent[k]);
            assert_eq!(parts[1][k], 0.0);
            assert_eq!(parts[2][k], 0.0);
            assert!(parts[0][k] <= 0.0);
        }
    }
}

#[test]
fn v_vio_summary_recomputes_from_csv() {
    let s = load("case_a");
    let original = random_episode(&s, 13);
    let log = csv_round_trip(&original);
    let g = &s.config().grid;
    // case_a monitors the agents' common bus.
    let v = log.column("agent_1.v_comm").unwrap();
    let recomputed: f64 = v.iter().map(|&v| voltage_violation(v, g.v_lower, g.v_upper)).sum();
    assert!(recomputed > 0.0);
    assert!((recomputed - original.summary.v_vio).abs() < 1e-12, "{recomputed} vs {}", original.summary.v_vio);
}

#[test]
fn single_episode_report_has_zero_spread() {
    let s = load("case_b");
    let spaces = s.agent_spaces().unwrap();
    let mut policy = make_policy(&spaces, &PolicySource::Random, &BTreeMap::new(), 1).unwrap();
    let report = evaluate(&s, policy.as_mut(), 1, None).unwrap();
    assert_eq!(report.episodes.len(), 1);
    for stat in report.returns.values() {
        assert_eq!(stat.std, 0.0);
    }
    for stat in [report.total_return, report.v_vio, report.ev_peak_kw, report.ev_peak_excess, report.ev_unmet_kwh] {
        assert_eq!(stat.std, 0.0);
    }
}

#[test]
fn report_matches_episode_csvs() {
    let s = load("case_b");
    let spaces = s.agent_spaces().unwrap();
    let mut policy = make_policy(&spaces, &PolicySource::Random, &BTreeMap::new(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = evaluate(&s, policy.as_mut(), 3, Some(dir.path())).unwrap();
    assert!(dir.path().join("evaluation.json").exists());

    let logs: Vec<Table> = (0..3)
        .map(|k| Table::read(&dir.path().join(format!("episode_{k:03}.csv"))))
        .collect();
    let mean_std = |xs: &[f64]| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
    };
    for (id, stat) in &report.returns {
        let per_episode: Vec<f64> = logs
            .iter()
            .map(|l| l.column(&format!("{id}.reward")).unwrap().iter().sum())
            .collect();
        let (m, sd) = mean_std(&per_episode);
        assert!((m - stat.mean).abs() < 1e-9 * m.abs().max(1.0), "{id}");
        assert!((sd - stat.std).abs() < 1e-9 * sd.abs().max(1.0), "{id}");
    }
    let vio: Vec<f64> = logs.iter().map(|l| l.column("v_vio").unwrap().iter().sum()).collect();
    assert!((mean_std(&vio).0 - report.v_vio.mean).abs() < 1e-12);
    let peak: Vec<f64> = logs
        .iter()
        .map(|l| l.column("ev_station.ev.power_kw").unwrap().into_iter().fold(0.0, f64::max))
        .collect();
    assert!((mean_std(&peak).0 - report.ev_peak_kw.mean).abs() < 1e-12);
    let unmet: Vec<f64> = logs
        .iter()
        .map(|l| l.column("ev_station.ev.unmet_kwh").unwrap().iter().sum())
        .collect();
    assert!((mean_std(&unmet).0 - report.ev_unmet_kwh.mean).abs() < 1e-9);
}

#[test]
fn evaluation_seeds_are_distinct_and_offset() {
    let s = load("case_b");
    let spaces = s.agent_spaces().unwrap();
    let mut policy = make_policy(&spaces, &PolicySource::Random, &BTreeMap::new(), 3).unwrap();
    let report = evaluate(&s, policy.as_mut(), 3, None).unwrap();
    let base = s.seed() + s.config().evaluation.seed_offset;
    let seeds: Vec<u64> = report.episodes.iter().map(|e| e.seed).collect();
    assert_eq!(seeds, [base, base + 1, base + 2]);
}
