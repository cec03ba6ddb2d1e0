use std::collections::HashMap;
use std::io::{BufRead, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{reward, RunConfig};
use crate::environment::{NavWorld, RobotState, StepEvents};
use crate::error::{Error, Result};

/// One line of the step trace. `x` and `y` are the state and measurement
/// after the step; `reward`, `collision` and `goal` refer to that step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    /// Episode seed; regenerates obstacles and goal.
    pub seed: u64,
    pub k: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u_rl: Vec<f64>,
    pub u_applied: Vec<f64>,
    pub adjusted: bool,
    pub failsafe: bool,
    pub reward: f64,
    pub collision: bool,
    pub goal: bool,
}

pub fn write_trace<W: Write>(mut w: W, records: &[StepRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSON-lines trace; blank lines are skipped.
pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<StepRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::MalformedLog {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    /// Zero-based record index.
    pub record: usize,
    pub field: &'static str,
    pub logged: String,
    pub recomputed: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReplayReport {
    pub records: usize,
    pub mismatches: Vec<Mismatch>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

const REWARD_TOL: f64 = 1e-9;

/// Recomputes collision, goal and reward of every record from the logged
/// states and the world regenerated from the record's seed.
pub fn replay_verify(records: &[StepRecord], cfg: &RunConfig) -> Result<ReplayReport> {
    let mut worlds: HashMap<u64, NavWorld> = HashMap::new();
    let mut report = ReplayReport {
        records: records.len(),
        mismatches: Vec::new(),
    };
    for (i, r) in records.iter().enumerate() {
        let n = cfg.world.u_box.dim();
        if r.x.len() < 2 || r.x.len() != r.y.len() || r.u_rl.len() != n || r.u_applied.len() != n {
            return Err(Error::MalformedLog {
                line: i + 1,
                reason: "vector lengths do not match the configured world".into(),
            });
        }
        let world = match worlds.get(&r.seed) {
            Some(w) => w,
            None => {
                let (w, _, _) = NavWorld::reset(&cfg.world, r.seed)?;
                worlds.entry(r.seed).or_insert(w)
            }
        };
        let state = RobotState {
            x: DVector::from_column_slice(&r.x),
            y: DVector::from_column_slice(&r.y),
        };
        let events = StepEvents {
            collision: world.is_collision(state.true_position()),
            goal_reached: world.is_goal(state.true_position()),
            clamped: false,
        };
        let obs = world.observe(&state);
        let rec_reward = reward(
            &obs,
            world.goal(),
            &DVector::from_column_slice(&r.u_rl),
            &DVector::from_column_slice(&r.u_applied),
            &events,
            &cfg.rewards,
        );
        let mut flag = |field, logged: String, recomputed: String| {
            report.mismatches.push(Mismatch { record: i, field, logged, recomputed });
        };
        if events.collision != r.collision {
            flag("collision", r.collision.to_string(), events.collision.to_string());
        }
        if events.goal_reached != r.goal {
            flag("goal", r.goal.to_string(), events.goal_reached.to_string());
        }
        if (rec_reward - r.reward).abs() > REWARD_TOL * rec_reward.abs().max(1.0) {
            flag("reward", r.reward.to_string(), rec_reward.to_string());
        }
    }
    Ok(report)
}
