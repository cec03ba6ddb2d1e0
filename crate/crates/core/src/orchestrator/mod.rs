//! Safe learning loop end to end: configuration, the per-step
//! filter-then-act cycle with a failsafe fallback, training, evaluation,
//! metrics and trace files.

mod episode;
mod metrics;
mod run;
mod trace;

use std::path::PathBuf;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::environment::{AgentObservation, StepEvents, WorldConfig, POSITION_DIMS, STATE_DIM};
use crate::error::{Error, Result};
use crate::rl_agent::Td3Config;
use crate::safety_filter::FilterConfig;

pub use episode::{policy_input, run_episode, EpisodeDriver, EpisodeOutcome, EvalDriver, Safety, TrainDriver};
pub use metrics::{aggregate, write_metrics_csv, write_summary_csv, Aggregate, EpisodeMetrics, METRICS_HEADER, SUMMARY_HEADER};
pub use run::{
    collect, evaluate, evaluate_with, identify, load_td3_agent, new_td3_agent, train, train_agent, EvalReport, Identified,
    TrainReport,
};
pub use trace::{read_trace, replay_verify, write_trace, Mismatch, ReplayReport, StepRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub w_dist: f64,
    pub r_goal: f64,
    pub r_collide: f64,
    /// Weight of the squared filter adjustment; 0 recovers the plain reward.
    pub lambda_adjust: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_dist: 0.1,
            r_goal: 100.0,
            r_collide: -100.0,
            lambda_adjust: 1.0,
        }
    }
}

/// `−w_dist ‖p − goal‖ + R_goal [goal] + R_collide [collision]
/// − λ ‖u_rl − u_applied‖²`, with `p` the measured position in `obs`.
pub fn reward(
    obs: &AgentObservation,
    goal: [f64; 2],
    u_rl: &DVector<f64>,
    u_applied: &DVector<f64>,
    events: &StepEvents,
    w: &RewardWeights,
) -> f64 {
    let p = [obs.values[POSITION_DIMS[0]], obs.values[POSITION_DIMS[1]]];
    let dist = (p[0] - goal[0]).hypot(p[1] - goal[1]);
    let mut r = -w.w_dist * dist;
    if events.goal_reached {
        r += w.r_goal;
    }
    if events.collision {
        r += w.r_collide;
    }
    r - w.lambda_adjust * (u_rl - u_applied).norm_squared()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Collect,
    #[default]
    Train,
    Eval,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    #[default]
    Td3,
    Random,
}

/// Action written into the replay buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoredAction {
    /// The agent's own proposal, so the adjustment penalty is attributed to
    /// the action that caused it.
    #[default]
    Proposed,
    /// The filtered action actually applied.
    Applied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub world: WorldConfig,
    /// `None` derives the filter from `world` (see [`FilterConfig::for_world`]).
    pub filter: Option<FilterConfig>,
    pub agent: Td3Config,
    pub agent_kind: AgentKind,
    pub rewards: RewardWeights,
    /// Cap on total environment steps; `None` means `episodes × max_steps`.
    pub n_total: Option<usize>,
    pub episodes: usize,
    pub eval_episodes: usize,
    pub mode: Mode,
    /// Offline data collection: trajectory count and length.
    pub collect_trajectories: usize,
    pub collect_steps: usize,
    pub dataset_path: Option<PathBuf>,
    pub weights_path: Option<PathBuf>,
    pub trace_path: Option<PathBuf>,
    /// Disables the safety filter.
    pub baseline: bool,
    /// Wall-clock filter timing in the metrics. Off by default so metric
    /// files are a pure function of seed, config and weights.
    pub record_timing: bool,
    pub record_trace: bool,
    /// Agent updates per stored transition. Two learn markedly faster than
    /// one on short training budgets, at twice the update time.
    pub updates_per_step: usize,
    pub stored_action: StoredAction,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            filter: None,
            agent: Td3Config::default(),
            agent_kind: AgentKind::Td3,
            rewards: RewardWeights::default(),
            n_total: None,
            episodes: 200,
            eval_episodes: 100,
            mode: Mode::Train,
            collect_trajectories: 10,
            collect_steps: 30,
            dataset_path: None,
            weights_path: None,
            trace_path: None,
            baseline: false,
            record_timing: false,
            record_trace: true,
            updates_per_step: 2,
            stored_action: StoredAction::Proposed,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn filter_config(&self) -> FilterConfig {
        self.filter
            .clone()
            .unwrap_or_else(|| FilterConfig::for_world(&self.world))
    }

    pub fn step_budget(&self) -> usize {
        self.n_total
            .unwrap_or_else(|| self.episodes.saturating_mul(self.world.max_steps))
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.filter_config().validate(STATE_DIM)?;
        self.agent.validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.world.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if self.collect_trajectories == 0 || self.collect_steps == 0 {
            return bad("collect_trajectories and collect_steps must be positive");
        }
        if !(self.rewards.lambda_adjust >= 0.0) {
            return bad("lambda_adjust must be non-negative");
        }
        if self.n_total == Some(0) {
            return bad("n_total must be positive");
        }
        Ok(())
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        Ok(cfg)
    }
}

/// Independent random streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedStream {
    Collect = 1,
    TrainEpisode = 2,
    EvalEpisode = 3,
    AgentInit = 4,
    Learner = 5,
    EvalPolicy = 6,
}

/// SplitMix64 finalizer over `(master, stream, index)`.
pub fn derive_seed(master: u64, stream: SeedStream, index: u64) -> u64 {
    let mut z = master
        ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
