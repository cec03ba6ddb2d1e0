use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::episode::{run_episode, EvalDriver, Safety, TrainDriver};
use super::metrics::{aggregate, Aggregate, EpisodeMetrics};
use super::trace::StepRecord;
use super::{derive_seed, RunConfig, SeedStream};
use crate::environment::collect_offline_data;
use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Execution};
use crate::reachability::{build_data_matrices, compute_model_set, ModelSet, NoiseModel, TrajectorySet};
use crate::rl_agent::{Agent, Td3, Td3Agent};
use crate::safety_filter::FilterConfig;

/// Offline excitation data for the configured world.
pub fn collect(cfg: &RunConfig) -> Result<TrajectorySet> {
    collect_offline_data(
        &cfg.world,
        cfg.collect_trajectories,
        cfg.collect_steps,
        derive_seed(cfg.seed, SeedStream::Collect, 0),
    )
}

/// Model set identified once from offline data, with the noise bounds and
/// filter settings it is used with.
#[derive(Debug, Clone)]
pub struct Identified {
    pub model: ModelSet,
    pub noise: NoiseModel,
    pub filter: FilterConfig,
}

impl Identified {
    pub fn safety(&self) -> Safety<'_> {
        Safety {
            model: &self.model,
            noise: &self.noise,
            filter: &self.filter,
        }
    }
}

pub fn identify(cfg: &RunConfig, data: &TrajectorySet) -> Result<Identified> {
    let noise = cfg.world.noise.model()?;
    let model = compute_model_set(&build_data_matrices(data)?, &noise)?;
    Ok(Identified {
        model,
        noise,
        filter: cfg.filter_config(),
    })
}

fn safety_for<'a>(cfg: &RunConfig, ident: Option<&'a Identified>) -> Result<Option<Safety<'a>>> {
    if cfg.baseline {
        return Ok(None);
    }
    ident
        .map(|i| Some(i.safety()))
        .ok_or_else(|| Error::MissingInput("the safety filter needs an identified model set".into()))
}

pub fn new_td3_agent(cfg: &RunConfig) -> Result<Td3Agent> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SeedStream::AgentInit, 0));
    let learner = Td3::new(cfg.world.observation_dim(), &cfg.world.u_box, cfg.agent.clone(), &mut rng)?;
    Ok(Td3Agent::new(learner))
}

pub fn load_td3_agent(cfg: &RunConfig, path: &Path) -> Result<Td3Agent> {
    let mut agent = new_td3_agent(cfg)?;
    agent.learner.load_params(path)?;
    Ok(agent)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub agent: Td3Agent,
    pub episodes: Vec<EpisodeMetrics>,
    pub trace: Vec<StepRecord>,
}

/// Trains a fresh TD3 agent (see [`train_agent`]).
pub fn train(cfg: &RunConfig, ident: Option<&Identified>) -> Result<TrainReport> {
    let mut agent = new_td3_agent(cfg)?;
    let (episodes, trace) = train_agent(cfg, ident, &mut agent)?;
    Ok(TrainReport { agent, episodes, trace })
}

/// Sequential training: episodes run in order until `episodes` or the
/// step budget is used up.
pub fn train_agent<A: Agent>(
    cfg: &RunConfig,
    ident: Option<&Identified>,
    agent: &mut A,
) -> Result<(Vec<EpisodeMetrics>, Vec<StepRecord>)> {
    cfg.validate()?;
    let safety = safety_for(cfg, ident)?;
    let mut remaining = cfg.step_budget();
    let mut metrics = Vec::with_capacity(cfg.episodes);
    let mut trace = Vec::new();
    for e in 0..cfg.episodes {
        if remaining == 0 {
            break;
        }
        let mut driver = TrainDriver {
            agent: &mut *agent,
            updates_per_step: cfg.updates_per_step,
            stored_action: cfg.stored_action,
        };
        let out = run_episode(
            &cfg.world,
            e,
            derive_seed(cfg.seed, SeedStream::TrainEpisode, e as u64),
            derive_seed(cfg.seed, SeedStream::Learner, e as u64),
            safety,
            &cfg.rewards,
            cfg.world.max_steps.min(remaining),
            cfg.record_timing,
            cfg.record_trace,
            &mut driver,
        )?;
        remaining -= out.metrics.steps;
        metrics.push(out.metrics);
        trace.extend(out.trace);
    }
    Ok((metrics, trace))
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub episodes: Vec<EpisodeMetrics>,
    pub aggregate: Aggregate,
    pub trace: Vec<StepRecord>,
    pub latencies_ms: Vec<f64>,
}

/// [`evaluate_with`] on the default execution path.
pub fn evaluate<A: Agent + Sync + ?Sized>(cfg: &RunConfig, ident: Option<&Identified>, agent: &A) -> Result<EvalReport> {
    evaluate_with(Execution::default(), cfg, ident, agent)
}

/// `eval_episodes` independent episodes; results are in episode order and
/// do not depend on `exec`.
pub fn evaluate_with<A: Agent + Sync + ?Sized>(
    exec: Execution,
    cfg: &RunConfig,
    ident: Option<&Identified>,
    agent: &A,
) -> Result<EvalReport> {
    cfg.validate()?;
    let safety = safety_for(cfg, ident)?;
    let outcomes = map_indexed(exec, cfg.eval_episodes, |e| {
        run_episode(
            &cfg.world,
            e,
            derive_seed(cfg.seed, SeedStream::EvalEpisode, e as u64),
            derive_seed(cfg.seed, SeedStream::EvalPolicy, e as u64),
            safety,
            &cfg.rewards,
            cfg.world.max_steps,
            cfg.record_timing,
            cfg.record_trace,
            &mut EvalDriver { agent },
        )
    });
    let mut episodes = Vec::with_capacity(outcomes.len());
    let mut trace = Vec::new();
    let mut latencies_ms = Vec::new();
    for o in outcomes {
        let o = o?;
        episodes.push(o.metrics);
        trace.extend(o.trace);
        latencies_ms.extend(o.latencies_ms);
    }
    Ok(EvalReport {
        aggregate: aggregate(&episodes),
        episodes,
        trace,
        latencies_ms,
    })
}
