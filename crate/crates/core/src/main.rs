use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddsafe::orchestrator::{
    self, read_trace, replay_verify, write_metrics_csv, write_summary_csv, write_trace, AgentKind, Mode, RunConfig,
};
use ddsafe::reachability::TrajectorySet;
use ddsafe::rl_agent::RandomAgent;
use ddsafe::Error;

#[derive(Parser)]
#[command(name = "ddsafe", about = "Data-driven safety layer for reinforcement learning", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out excitation data in the obstacle-free world.
    Collect(Common),
    /// Train a TD3 agent behind the safety filter.
    Train(Common),
    /// Evaluate a trained (or random) agent.
    Eval(Common),
    /// Recompute events and rewards of a step trace.
    Replay(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Disable the safety filter.
    #[arg(long)]
    baseline: bool,
    /// Record wall-clock filter latency (makes metric files non-reproducible).
    #[arg(long)]
    timing: bool,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

impl Common {
    fn load(&self, mode: Mode) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.baseline |= self.baseline;
        cfg.record_timing |= self.timing;
        cfg.mode = mode;
        cfg.validate()?;
        fs::create_dir_all(&self.out)?;
        Ok(cfg)
    }
}

fn dataset_path(cfg: &RunConfig, out: &Path) -> PathBuf {
    cfg.dataset_path.clone().unwrap_or_else(|| out.join("dataset.jsonl"))
}

fn weights_path(cfg: &RunConfig, out: &Path) -> PathBuf {
    cfg.weights_path.clone().unwrap_or_else(|| out.join("weights.bin"))
}

fn read_dataset(path: &Path) -> Result<TrajectorySet, Error> {
    if !path.exists() {
        return Err(Error::MissingInput(format!(
            "dataset {} not found (run `ddsafe collect` first)",
            path.display()
        )));
    }
    TrajectorySet::read_jsonl(BufReader::new(File::open(path)?))
}

fn identified(cfg: &RunConfig, out: &Path) -> Result<Option<orchestrator::Identified>, Error> {
    if cfg.baseline {
        return Ok(None);
    }
    let data = read_dataset(&dataset_path(cfg, out))?;
    Ok(Some(orchestrator::identify(cfg, &data)?))
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Collect(c) => {
            let cfg = c.load(Mode::Collect)?;
            let data = orchestrator::collect(&cfg)?;
            let path = dataset_path(&cfg, &c.out);
            data.write_jsonl(BufWriter::new(File::create(&path)?))?;
            println!("wrote {} trajectories to {}", data.trajectories.len(), path.display());
        }
        Command::Train(c) => {
            let cfg = c.load(Mode::Train)?;
            let ident = identified(&cfg, &c.out)?;
            let report = orchestrator::train(&cfg, ident.as_ref())?;
            let weights = weights_path(&cfg, &c.out);
            report.agent.learner.save(&weights)?;
            write_metrics_csv(BufWriter::new(File::create(c.out.join("train_metrics.csv"))?), &report.episodes)?;
            if cfg.record_trace {
                write_trace(BufWriter::new(File::create(c.out.join("train_trace.jsonl"))?), &report.trace)?;
            }
            let agg = orchestrator::aggregate(&report.episodes);
            println!(
                "trained {} episodes ({} steps), collision rate {}, weights in {}",
                agg.episodes,
                agg.total_steps,
                agg.collision_rate,
                weights.display()
            );
        }
        Command::Eval(c) => {
            let cfg = c.load(Mode::Eval)?;
            let ident = identified(&cfg, &c.out)?;
            let report = match cfg.agent_kind {
                AgentKind::Td3 => {
                    let agent = orchestrator::load_td3_agent(&cfg, &weights_path(&cfg, &c.out))?;
                    orchestrator::evaluate(&cfg, ident.as_ref(), &agent)?
                }
                AgentKind::Random => {
                    let agent = RandomAgent::new(cfg.world.u_box.clone());
                    orchestrator::evaluate(&cfg, ident.as_ref(), &agent)?
                }
            };
            write_metrics_csv(BufWriter::new(File::create(c.out.join("eval_metrics.csv"))?), &report.episodes)?;
            write_summary_csv(BufWriter::new(File::create(c.out.join("eval_summary.csv"))?), &report.aggregate)?;
            if cfg.record_trace {
                write_trace(BufWriter::new(File::create(c.out.join("eval_trace.jsonl"))?), &report.trace)?;
            }
            let a = &report.aggregate;
            println!(
                "{} episodes: goal rate {}, collision rate {}, mean reward {}",
                a.episodes, a.goal_rate, a.collision_rate, a.mean_reward
            );
        }
        Command::Replay(c) => {
            let cfg = c.load(Mode::Replay)?;
            let path = cfg.trace_path.clone().unwrap_or_else(|| c.out.join("eval_trace.jsonl"));
            if !path.exists() {
                return Err(Error::MissingInput(format!("trace {} not found", path.display())));
            }
            let records = read_trace(BufReader::new(File::open(&path)?))?;
            let report = replay_verify(&records, &cfg)?;
            serde_json::to_writer_pretty(File::create(c.out.join("replay_report.json"))?, &report)?;
            println!("{} records, {} mismatches", report.records, report.mismatches.len());
            for m in report.mismatches.iter().take(20) {
                println!("  record {}: {} logged {} recomputed {}", m.record, m.field, m.logged, m.recomputed);
            }
            return Ok(report.is_clean());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
