use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::log::{run_episode, EpisodeSummary};
use super::{Scenario, TrainerConfig};
use crate::error::{Error, Result};
use crate::neural::checkpoint::Checkpoint;
use crate::trainers::{
    AgentSpaces, ConstantPolicy, MaddpgPolicy, MaddpgTrainer, Policy, PpoPolicy, PpoTrainer,
    RandomPolicy, TrainMetrics,
};

/// Where actions come from in `run` and `evaluate`.
#[derive(Clone, Debug, PartialEq)]
pub enum PolicySource {
    Random,
    Checkpoint(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckpointKind {
    Maddpg,
    Ppo,
}

impl CheckpointKind {
    pub fn detect(ck: &Checkpoint, spaces: &[AgentSpaces]) -> Result<Self> {
        let id = &spaces
            .first()
            .ok_or_else(|| Error::contract("scenario has no agents"))?
            .id;
        if ck.entries.contains_key(&format!("actor/{id}")) {
            Ok(CheckpointKind::Maddpg)
        } else if ck.entries.contains_key(&format!("policy/{id}")) {
            Ok(CheckpointKind::Ppo)
        } else {
            Err(Error::Checkpoint(format!("no actor or policy network for agent '{id}'")))
        }
    }
}

/// Builds a policy; `fixed` pins the actions of the named agents.
pub fn make_policy(
    spaces: &[AgentSpaces],
    source: &PolicySource,
    fixed: &BTreeMap<String, Vec<f64>>,
    seed: u64,
) -> Result<Box<dyn Policy>> {
    let base: Box<dyn Policy> = match source {
        PolicySource::Random => Box::new(RandomPolicy::new(spaces.to_vec(), seed ^ 0x5eed_0f_7a9d)),
        PolicySource::Checkpoint(path) => {
            let ck = Checkpoint::load(path)?;
            match CheckpointKind::detect(&ck, spaces)? {
                CheckpointKind::Maddpg => Box::new(MaddpgPolicy::from_checkpoint(&ck, spaces)?),
                CheckpointKind::Ppo => Box::new(PpoPolicy::from_checkpoint(&ck, spaces)?),
            }
        }
    };
    if fixed.is_empty() {
        return Ok(base);
    }
    for (id, a) in fixed {
        let s = spaces
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| Error::config(format!("fixed action for unknown agent '{id}'")))?;
        if a.len() != s.action.len() {
            return Err(Error::config(format!(
                "fixed action for '{id}' has {} entries, action space has {}",
                a.len(),
                s.action.len()
            )));
        }
    }
    Ok(Box::new(ConstantPolicy::new(base, fixed.clone())))
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scenario: String,
    pub episodes: Vec<EpisodeSummary>,
    pub returns: BTreeMap<String, Stat>,
    pub total_return: Stat,
    pub v_vio: Stat,
    pub ev_peak_kw: Stat,
    pub ev_peak_excess: Stat,
    pub ev_unmet_kwh: Stat,
}

impl EvaluationReport {
    pub fn from_summaries(scenario: &str, episodes: Vec<EpisodeSummary>) -> Self {
        let stat = |f: &dyn Fn(&EpisodeSummary) -> f64| Stat::of(&episodes.iter().map(f).collect::<Vec<_>>());
        let mut returns = BTreeMap::new();
        if let Some(first) = episodes.first() {
            for id in first.returns.keys() {
                returns.insert(id.clone(), stat(&|e| e.returns[id]));
            }
        }
        Self {
            scenario: scenario.to_string(),
            total_return: stat(&|e| e.total_return),
            v_vio: stat(&|e| e.v_vio),
            ev_peak_kw: stat(&|e| e.ev_peak_kw),
            ev_peak_excess: stat(&|e| e.ev_peak_excess),
            ev_unmet_kwh: stat(&|e| e.ev_unmet_kwh),
            returns,
            episodes,
        }
    }
}

/// Runs `episodes` episodes on seeds `seed + seed_offset + k`. When
/// `out_dir` is given, writes `episode_<k>.csv` and `evaluation.json`.
pub fn evaluate(
    scenario: &Scenario,
    policy: &mut dyn Policy,
    episodes: usize,
    out_dir: Option<&Path>,
) -> Result<EvaluationReport> {
    if episodes == 0 {
        return Err(Error::config("evaluation needs at least one episode"));
    }
    let mut env = scenario.build_env()?;
    let ev = scenario.ev_stations();
    let base = scenario.seed().wrapping_add(scenario.config().evaluation.seed_offset);
    let mut summaries = Vec::with_capacity(episodes);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for k in 0..episodes {
        let log = run_episode(&mut env, policy, base.wrapping_add(k as u64), &ev)?;
        if let Some(dir) = out_dir {
            log.write_csv(&dir.join(format!("episode_{k:03}.csv")))?;
        }
        summaries.push(log.summary);
    }
    let report = EvaluationReport::from_summaries(scenario.name(), summaries);
    if let Some(dir) = out_dir {
        let path = dir.join("evaluation.json");
        let text = serde_json::to_string_pretty(&report).map_err(|e| Error::config(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub metrics: Vec<TrainMetrics>,
    /// Checkpoint of the untrained networks.
    pub initial_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
}

/// Trains with the scenario's trainer and seed. Writes into `out_dir`:
/// `config.toml` (normalized, reproduces the run), `metrics.jsonl`, and
/// `checkpoints/checkpoint_<iteration>.bin` before training, every
/// `checkpoint_every` iterations and at the end (`checkpoint_final.bin`).
pub fn train(
    scenario: &Scenario,
    out_dir: &Path,
    mut progress: impl FnMut(&TrainMetrics),
) -> Result<TrainOutcome> {
    let ck_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&ck_dir).map_err(|e| Error::io(&ck_dir, e))?;
    let config_path = out_dir.join("config.toml");
    std::fs::write(&config_path, scenario.to_toml()?).map_err(|e| Error::io(&config_path, e))?;
    let metrics_path = out_dir.join("metrics.jsonl");
    let mut metrics_out =
        BufWriter::new(File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?);

    let env = scenario.build_env()?;
    let seed = scenario.seed();
    let iterations = scenario.config().trainer.iterations();
    let every = scenario.config().trainer.checkpoint_every();
    let mut learner: Box<dyn Learner> = match &scenario.config().trainer {
        TrainerConfig::Maddpg(c) => Box::new(MaddpgTrainer::new(env, c.clone(), seed)?),
        TrainerConfig::Ppo(c) => Box::new(PpoTrainer::new(env, c.clone(), seed)?),
    };

    let initial_checkpoint = ck_dir.join("checkpoint_0000.bin");
    learner.checkpoint().save(&initial_checkpoint)?;
    let mut metrics = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let m = learner.step_iteration()?;
        m.write_jsonl(&mut metrics_out)
            .and_then(|_| metrics_out.flush())
            .map_err(|e| Error::io(&metrics_path, e))?;
        progress(&m);
        metrics.push(m);
        let done = it + 1;
        if every > 0 && done % every == 0 && done < iterations {
            learner.checkpoint().save(&ck_dir.join(format!("checkpoint_{done:04}.bin")))?;
        }
    }
    let final_checkpoint = ck_dir.join("checkpoint_final.bin");
    learner.checkpoint().save(&final_checkpoint)?;
    Ok(TrainOutcome {
        metrics,
        initial_checkpoint,
        final_checkpoint,
    })
}

trait Learner {
    fn step_iteration(&mut self) -> Result<TrainMetrics>;
    fn checkpoint(&self) -> Checkpoint;
}

impl<E: crate::env::MultiAgentEnvironment> Learner for MaddpgTrainer<E> {
    fn step_iteration(&mut self) -> Result<TrainMetrics> {
        MaddpgTrainer::step_iteration(self)
    }

    fn checkpoint(&self) -> Checkpoint {
        MaddpgTrainer::checkpoint(self)
    }
}

impl<E: crate::env::MultiAgentEnvironment> Learner for PpoTrainer<E> {
    fn step_iteration(&mut self) -> Result<TrainMetrics> {
        PpoTrainer::step_iteration(self)
    }

    fn checkpoint(&self) -> Checkpoint {
        PpoTrainer::checkpoint(self)
    }
}
