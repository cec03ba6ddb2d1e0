use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::EpisodeMetrics;
use super::trace::StepRecord;
use super::{reward, RewardWeights, StoredAction};
use crate::environment::{AgentObservation, NavWorld, WorldConfig, POSITION_DIMS, STATE_DIM};
use crate::error::{Error, Result};
use crate::reachability::{ModelSet, NoiseModel};
use crate::rl_agent::{Agent, Transition};
use crate::safety_filter::{enforce_safety, was_adjusted, FilterConfig, Plan};
use crate::set_algebra::Zonotope;

/// Everything the safety layer needs, shared read-only across episodes.
#[derive(Debug, Clone, Copy)]
pub struct Safety<'a> {
    pub model: &'a ModelSet,
    pub noise: &'a NoiseModel,
    pub filter: &'a FilterConfig,
}

/// How an episode obtains actions and what it does with transitions.
pub trait EpisodeDriver {
    fn action(&mut self, input: &[f64], rng: &mut ChaCha8Rng) -> DVector<f64>;
    /// `t.action` holds the applied action; `proposed` is the agent's.
    fn transition(&mut self, t: Transition, proposed: &DVector<f64>, rng: &mut ChaCha8Rng);
}

/// Exploratory actions; every stored transition is followed by
/// `updates_per_step` learner updates.
pub struct TrainDriver<'a, A: Agent> {
    pub agent: &'a mut A,
    pub updates_per_step: usize,
    pub stored_action: StoredAction,
}

impl<A: Agent> EpisodeDriver for TrainDriver<'_, A> {
    fn action(&mut self, input: &[f64], rng: &mut ChaCha8Rng) -> DVector<f64> {
        self.agent.act_exploratory(input, rng)
    }

    fn transition(&mut self, mut t: Transition, proposed: &DVector<f64>, rng: &mut ChaCha8Rng) {
        if self.stored_action == StoredAction::Proposed {
            t.action = proposed.iter().copied().collect();
        }
        self.agent.observe_transition(t);
        for _ in 0..self.updates_per_step {
            self.agent.update(rng);
        }
    }
}

/// Evaluation actions, nothing learned.
pub struct EvalDriver<'a, A: Agent + ?Sized> {
    pub agent: &'a A,
}

impl<A: Agent + ?Sized> EpisodeDriver for EvalDriver<'_, A> {
    fn action(&mut self, input: &[f64], rng: &mut ChaCha8Rng) -> DVector<f64> {
        self.agent.eval_action(input, rng)
    }

    fn transition(&mut self, _t: Transition, _proposed: &DVector<f64>, _rng: &mut ChaCha8Rng) {}
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub metrics: EpisodeMetrics,
    pub trace: Vec<StepRecord>,
    /// Per-call filter wall time, empty unless timing is recorded.
    pub latencies_ms: Vec<f64>,
}

/// Network input: positions mapped to `[-1, 1]` over the workspace, goal
/// offset divided by the workspace width, rays divided by their range;
/// velocities unchanged.
pub fn policy_input(obs: &AgentObservation, cfg: &WorldConfig) -> Vec<f64> {
    let ws = &cfg.workspace;
    let mut v = obs.values.clone();
    for (k, &d) in POSITION_DIMS.iter().enumerate() {
        let (lo, w) = (ws.lower()[k], ws.widths()[k]);
        v[d] = 2.0 * (v[d] - lo) / w - 1.0;
        v[STATE_DIM + k] /= w;
    }
    for r in &mut v[STATE_DIM + 2..] {
        *r /= cfg.ray_range;
    }
    v
}

/// Plan kept for failsafe use and the index of its next unused input.
struct StoredPlan {
    plan: Plan,
    next: usize,
}

impl StoredPlan {
    fn take_next(&mut self) -> Option<DVector<f64>> {
        let u = self.plan.inputs.get(self.next).cloned();
        if u.is_some() {
            self.next += 1;
        }
        u
    }
}

/// Runs one episode of at most `max_steps` steps. With `safety` set, every
/// proposed action passes through the filter; when the filter finds no plan
/// the next input of the last verified plan is applied and the step is not
/// used for learning.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<D: EpisodeDriver>(
    world_cfg: &WorldConfig,
    episode: usize,
    episode_seed: u64,
    policy_seed: u64,
    safety: Option<Safety<'_>>,
    rewards: &RewardWeights,
    max_steps: usize,
    record_timing: bool,
    record_trace: bool,
    driver: &mut D,
) -> Result<EpisodeOutcome> {
    let (mut world, mut state, mut obs) = NavWorld::reset(world_cfg, episode_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy_seed);
    let goal = world.goal();
    let mut m = EpisodeMetrics {
        episode,
        ..Default::default()
    };
    let mut trace = Vec::new();
    let mut latencies_ms = Vec::new();
    let mut stored: Option<StoredPlan> = None;
    let mut speed_sum = 0.0;

    for k in 0..max_steps {
        let input = policy_input(&obs, world_cfg);
        let u_rl = driver.action(&input, &mut rng);
        let (u_applied, failsafe) = match safety {
            None => (u_rl.clone(), false),
            Some(s) => {
                let start = Instant::now();
                let res = enforce_safety(
                    &Zonotope::point(state.y.clone()),
                    &u_rl,
                    &state.y,
                    world.obstacles(),
                    s.model,
                    s.noise,
                    s.filter,
                );
                if record_timing {
                    latencies_ms.push(start.elapsed().as_secs_f64() * 1e3);
                }
                match res {
                    Ok(Some(mut plan)) => {
                        plan.created_at = k;
                        let u = plan.inputs[0].clone();
                        if was_adjusted(&plan, &u_rl, s.filter.solver_tol) {
                            m.adjustments += 1;
                        }
                        stored = Some(StoredPlan { plan, next: 1 });
                        (u, false)
                    }
                    Ok(None) | Err(Error::InfeasibleStart) => {
                        m.failsafes += 1;
                        let u = match stored.as_mut().and_then(StoredPlan::take_next) {
                            Some(u) => u,
                            None => {
                                m.failsafes_without_plan += 1;
                                s.filter.braking_input(&state.y)
                            }
                        };
                        (u, true)
                    }
                    Err(e) => return Err(e),
                }
            }
        };

        let (next, next_obs, events) = world.step(&state, u_applied.as_slice());
        let r = reward(&next_obs, goal, &u_rl, &u_applied, &events, rewards);
        m.steps += 1;
        m.cum_reward += r;
        let speed = next.true_speed();
        speed_sum += speed;
        m.max_speed = m.max_speed.max(speed);
        m.collided |= events.collision;
        m.reached_goal |= events.goal_reached;
        let done = events.collision || events.goal_reached;

        if !failsafe {
            driver.transition(
                Transition {
                    obs: input,
                    action: u_applied.iter().copied().collect(),
                    reward: r,
                    next_obs: policy_input(&next_obs, world_cfg),
                    done,
                },
                &u_rl,
                &mut rng,
            );
        }
        if record_trace {
            trace.push(StepRecord {
                episode,
                seed: episode_seed,
                k,
                x: next.x.iter().copied().collect(),
                y: next.y.iter().copied().collect(),
                u_rl: u_rl.iter().copied().collect(),
                u_applied: u_applied.iter().copied().collect(),
                adjusted: (&u_applied - &u_rl).norm() > safety.map_or(0.0, |s| s.filter.solver_tol),
                failsafe,
                reward: r,
                collision: events.collision,
                goal: events.goal_reached,
            });
        }
        state = next;
        obs = next_obs;
        if done {
            break;
        }
    }
    if m.steps > 0 {
        m.mean_speed = speed_sum / m.steps as f64;
    }
    m.filter_calls = latencies_ms.len();
    if !latencies_ms.is_empty() {
        m.latency_sum_ms = latencies_ms.iter().sum();
        m.latency_sq_sum_ms = latencies_ms.iter().map(|l| l * l).sum();
        m.mean_latency_ms = m.latency_sum_ms / latencies_ms.len() as f64;
    }
    Ok(EpisodeOutcome {
        metrics: m,
        trace,
        latencies_ms,
    })
}
