use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridmarl::scenario::{
    evaluate, make_policy, resolve_path, run_episode, train, EvaluationReport, PolicySource, Scenario,
};
use gridmarl::{Error, Result};

#[derive(Parser)]
#[command(name = "gridmarl", version, about = "Multi-agent power-system environments and trainers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its step log as CSV.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Train with the scenario's trainer.
    Train {
        #[command(flatten)]
        common: Common,
        /// Override the configured number of training iterations.
        #[arg(long)]
        iterations: Option<usize>,
        /// Suppress per-iteration progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Run noise-free evaluation episodes and report mean and std.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Number of episodes; defaults to the scenario's evaluation setting.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Check a scenario file and print its normalized form.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file, or the name of a bundled scenario (case_a, case_b).
    #[arg(long)]
    scenario: String,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to runs/<scenario>/<command>.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PolicyArgs {
    /// Checkpoint to act with; random actions when omitted.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Pin an agent's actions, e.g. `--fixed ev_station=1.0`. Repeatable.
    #[arg(long, value_parser = parse_fixed)]
    fixed: Vec<(String, Vec<f64>)>,
    /// Pin the actions listed in the scenario's evaluation baseline.
    #[arg(long)]
    baseline: bool,
}

fn parse_fixed(s: &str) -> std::result::Result<(String, Vec<f64>), String> {
    let (id, values) = s
        .split_once('=')
        .ok_or_else(|| format!("expected AGENT=V1,V2,..., got '{s}'"))?;
    let values = values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((id.trim().to_string(), values))
}

impl Common {
    fn load(&self) -> Result<Scenario> {
        let mut scenario = Scenario::load(&resolve_path(&self.scenario))?;
        if let Some(seed) = self.seed {
            scenario.set_seed(seed);
        }
        Ok(scenario)
    }

    fn out_dir(&self, scenario: &Scenario, command: &str) -> PathBuf {
        self.out_dir
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(scenario.name()).join(command))
    }
}

impl PolicyArgs {
    fn source(&self) -> PolicySource {
        match &self.checkpoint {
            Some(path) => PolicySource::Checkpoint(path.clone()),
            None => PolicySource::Random,
        }
    }

    fn fixed(&self, scenario: &Scenario) -> BTreeMap<String, Vec<f64>> {
        let mut fixed = BTreeMap::new();
        if self.baseline {
            fixed.extend(scenario.config().evaluation.baseline.clone());
        }
        fixed.extend(self.fixed.iter().cloned());
        fixed
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { common, policy } => cmd_run(&common, &policy),
        Command::Train {
            common,
            iterations,
            quiet,
        } => cmd_train(&common, iterations, quiet),
        Command::Evaluate {
            common,
            policy,
            episodes,
        } => cmd_evaluate(&common, &policy, episodes),
        Command::Validate { common } => cmd_validate(&common),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_run(common: &Common, args: &PolicyArgs) -> Result<()> {
    let scenario = common.load()?;
    let spaces = scenario.agent_spaces()?;
    let mut policy = make_policy(&spaces, &args.source(), &args.fixed(&scenario), scenario.seed())?;
    let mut env = scenario.build_env()?;
    let log = run_episode(&mut env, policy.as_mut(), scenario.seed(), &scenario.ev_stations())?;
    let dir = common.out_dir(&scenario, "run");
    create_dir(&dir)?;
    let path = dir.join("episode.csv");
    log.write_csv(&path)?;

    let s = &log.summary;
    println!("scenario {} seed {} steps {}", scenario.name(), s.seed, s.steps);
    for (id, r) in &s.returns {
        println!("  return {id:<20} {r:>14.4}");
    }
    println!("  total return {:>26.4}", s.total_return);
    println!("  v_vio {:>33.6}", s.v_vio);
    if !scenario.ev_stations().is_empty() {
        println!("  ev peak kW {:>28.3}", s.ev_peak_kw);
        println!("  ev unmet kWh {:>26.3}", s.ev_unmet_kwh);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_train(common: &Common, iterations: Option<usize>, quiet: bool) -> Result<()> {
    let mut scenario = common.load()?;
    if let Some(n) = iterations {
        scenario.set_iterations(n);
    }
    let dir = common.out_dir(&scenario, "train");
    let outcome = train(&scenario, &dir, |m| {
        if quiet {
            return;
        }
        let loss = match (m.critic_loss, m.actor_loss, m.ppo_loss) {
            (Some(c), Some(a), _) => format!("critic {c:.5} actor {a:.5}"),
            (_, _, Some(p)) => format!("loss {p:.5}"),
            _ => "warmup".to_string(),
        };
        println!(
            "iter {:>4}  return {:>12.3}  v_vio {:>9.5}  {loss}",
            m.iteration, m.total_return, m.v_vio
        );
    })?;
    if let Some(last) = outcome.metrics.last() {
        println!("final iteration {}: total return {:.4}", last.iteration, last.total_return);
    }
    println!("wrote {}", dir.display());
    println!("final checkpoint {}", outcome.final_checkpoint.display());
    Ok(())
}

fn cmd_evaluate(common: &Common, args: &PolicyArgs, episodes: Option<usize>) -> Result<()> {
    let scenario = common.load()?;
    let spaces = scenario.agent_spaces()?;
    let mut policy = make_policy(&spaces, &args.source(), &args.fixed(&scenario), scenario.seed())?;
    let n = episodes.unwrap_or(scenario.config().evaluation.episodes);
    let dir = common.out_dir(&scenario, "evaluate");
    let report = evaluate(&scenario, policy.as_mut(), n, Some(&dir))?;
    print_report(&report, !scenario.ev_stations().is_empty());
    println!("wrote {}", dir.display());
    Ok(())
}

fn print_report(report: &EvaluationReport, ev: bool) {
    println!("scenario {} episodes {}", report.scenario, report.episodes.len());
    let row = |name: &str, s: &gridmarl::scenario::Stat| {
        println!("  {name:<24} mean {:>14.4}  std {:>12.4}", s.mean, s.std);
    };
    for (id, s) in &report.returns {
        row(&format!("return {id}"), s);
    }
    row("total return", &report.total_return);
    row("v_vio", &report.v_vio);
    if ev {
        row("ev peak kW", &report.ev_peak_kw);
        row("ev peak excess", &report.ev_peak_excess);
        row("ev unmet kWh", &report.ev_unmet_kwh);
    }
}

fn cmd_validate(common: &Common) -> Result<()> {
    let scenario = common.load()?;
    let text = scenario.to_toml()?;
    if let Some(dir) = &common.out_dir {
        create_dir(dir)?;
        let path = dir.join("config.toml");
        std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    }
    print!("{text}");
    eprintln!("scenario '{}' is valid", scenario.name());
    Ok(())
}
