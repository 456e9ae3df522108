use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{clamp_action, MultiAgentEnvironment};
use crate::error::{Error, Result};
use crate::trainers::Policy;

/// Step metadata shared by every agent; logged once per row.
pub const GLOBAL_COLUMNS: [&str; 4] = ["net_power_kw", "pf_iterations", "pf_diverged", "v_vio"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub steps: usize,
    pub returns: BTreeMap<String, f64>,
    pub total_return: f64,
    pub v_vio: f64,
    /// Largest combined EV station power over the episode, kW.
    pub ev_peak_kw: f64,
    /// Sum over steps of station power above the peak threshold, kW.
    pub ev_peak_excess: f64,
    pub ev_unmet_kwh: f64,
    pub pf_diverged: bool,
}

/// One row per step: `step`, then per agent (sorted id) the observation the
/// action was taken on, the applied action, and every metadata field as
/// `<agent>.<field>` (device fields are `<agent>.<component>.<field>`), then
/// the global columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub summary: EpisodeSummary,
}

impl EpisodeLog {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(&self.columns).map_err(|e| csv_err(path, e))?;
        for (k, row) in self.rows.iter().enumerate() {
            let mut rec = Vec::with_capacity(row.len());
            rec.push(k.to_string());
            rec.extend(row[1..].iter().map(|v| format!("{v:?}")));
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let columns: Vec<String> = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                })?;
            rows.push(row);
        }
        Ok((columns, rows))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Plays one seeded episode. `ev_stations` lists `(agent, component)` pairs
/// whose power feeds the EV summary fields.
pub fn run_episode(
    env: &mut dyn MultiAgentEnvironment,
    policy: &mut dyn Policy,
    seed: u64,
    ev_stations: &[(String, String)],
) -> Result<EpisodeLog> {
    let ids = env.agent_ids();
    let mut observations = env.reset(seed)?;
    let mut columns: Vec<String> = Vec::new();
    let mut rows = Vec::new();
    let mut returns: BTreeMap<String, f64> = ids.iter().map(|id| (id.clone(), 0.0)).collect();
    let mut v_vio = 0.0;
    let mut ev_peak_kw: f64 = 0.0;
    let mut ev_peak_excess = 0.0;
    let mut ev_unmet_kwh = 0.0;
    let mut pf_diverged = false;

    for step in 0..env.horizon() {
        let proposed = policy.actions(&observations)?;
        let mut applied = BTreeMap::new();
        for id in &ids {
            let space = env
                .action_space(id)
                .ok_or_else(|| Error::contract(format!("no action space for '{id}'")))?;
            let a = proposed
                .get(id)
                .ok_or_else(|| Error::contract(format!("policy gave no action for '{id}'")))?;
            applied.insert(id.clone(), clamp_action(a, space)?);
        }
        let out = env.step(&applied)?;

        if columns.is_empty() {
            columns.push("step".into());
            for id in &ids {
                columns.extend((0..observations[id].len()).map(|k| format!("{id}.obs_{k}")));
                columns.extend((0..applied[id].len()).map(|k| format!("{id}.action_{k}")));
                columns.extend(
                    out.metas[id]
                        .keys()
                        .filter(|k| !GLOBAL_COLUMNS.contains(&k.as_str()))
                        .map(|k| format!("{id}.{k}")),
                );
            }
            columns.extend(GLOBAL_COLUMNS.iter().map(|c| c.to_string()));
        }

        let mut row = Vec::with_capacity(columns.len());
        row.push(step as f64);
        for id in &ids {
            row.extend(&observations[id]);
            row.extend(&applied[id]);
            row.extend(
                out.metas[id]
                    .iter()
                    .filter(|(k, _)| !GLOBAL_COLUMNS.contains(&k.as_str()))
                    .map(|(_, v)| *v),
            );
            *returns.get_mut(id).expect("known id") += out.rewards[id];
        }
        let first = &out.metas[&ids[0]];
        for c in GLOBAL_COLUMNS {
            row.push(first.get(c).copied().unwrap_or(0.0));
        }
        if row.len() != columns.len() {
            return Err(Error::contract(format!(
                "step {step}: row has {} fields, header has {}",
                row.len(),
                columns.len()
            )));
        }
        rows.push(row);

        v_vio += first.get("v_vio").copied().unwrap_or(0.0);
        pf_diverged |= first.get("pf_diverged").copied().unwrap_or(0.0) > 0.0;
        let mut station_kw = 0.0;
        for (agent, comp) in ev_stations {
            let m = &out.metas[agent];
            let get = |f: &str| m.get(&format!("{comp}.{f}")).copied().unwrap_or(0.0);
            station_kw += get("power_kw");
            ev_peak_excess += get("peak_excess_kw");
            ev_unmet_kwh += get("unmet_kwh");
        }
        ev_peak_kw = ev_peak_kw.max(station_kw);

        observations = out.observations.clone();
        if out.all_done() {
            break;
        }
    }

    let total_return = returns.values().sum();
    Ok(EpisodeLog {
        summary: EpisodeSummary {
            seed,
            steps: rows.len(),
            returns,
            total_return,
            v_vio,
            ev_peak_kw,
            ev_peak_excess,
            ev_unmet_kwh,
            pf_diverged,
        },
        columns,
        rows,
    })
}
