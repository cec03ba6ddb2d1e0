//! Safety layer: turns the agent's proposed action into the closest action
//! whose data-driven reachable tube stays inside the free space, or reports
//! that no such plan exists.
//!
//! Every plan ends in a braking suffix. The suffix inputs come from a
//! linear braking law `clamp(u_brk + K ŷ)` evaluated on the predicted set
//! centers, so with `K = 0` the suffix is `u_brk` repeated. Plans are only
//! returned after the reachable sets pass exact interval checks against the
//! schedule and the obstacles.

mod schedule;
mod solver;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::environment::{clamp_to_box, WorldConfig, POSITION_DIMS, VELOCITY_DIMS};
use crate::error::{check_dim, Error, Result};
use crate::reachability::{default_generator_cap, reach_horizon_capped, ModelSet, NoiseModel};
use crate::set_algebra::{box_contains, IntervalBox, Zonotope};

pub use schedule::{free_boxes, grow_free_box, SafeRegionSchedule};
pub use solver::{project_onto_halfspaces, DdpcSolution};

/// Static obstacle, a box in position coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    region: IntervalBox,
}

impl Obstacle {
    pub fn new(region: IntervalBox) -> Result<Self> {
        if region.dim() == 0 {
            return Err(Error::InvalidArgument("obstacle must have a dimension".into()));
        }
        Ok(Self { region })
    }

    pub fn region(&self) -> &IntervalBox {
        &self.region
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Planning horizon; must exceed `n_brake`.
    pub n_plan: usize,
    /// Steps the braking law needs to stop from `v_max`.
    pub n_brake: usize,
    pub u_box: IntervalBox,
    /// Constant part of the braking law.
    pub u_brk: Vec<f64>,
    /// Feedback part `K` of the braking law, `m` rows of length `n`.
    pub brake_gain: Vec<Vec<f64>>,
    pub solver_tol: f64,
    /// Solver wall-clock budget in milliseconds.
    pub time_limit_ms: f64,
    /// Position bounds (meters) in which the robot must stay.
    pub workspace: IntervalBox,
    pub position_dims: Vec<usize>,
    pub velocity_dims: Vec<usize>,
    pub v_max: f64,
    /// Speed bound on the final set of a plan, `None` to skip.
    pub v_terminal: Option<f64>,
    /// Extra margin added to the measurement-noise inflation of obstacles.
    pub clearance: f64,
    /// Order-reduction cap for reachable sets, `None` for `5n`.
    pub max_generators: Option<usize>,
}

impl FilterConfig {
    /// Defaults matched to the navigation world: braking law
    /// `clamp(−v / dt)`, horizon 10, speed limit 1 m/s.
    pub fn for_world(world: &WorldConfig) -> Self {
        let mut brake_gain = vec![vec![0.0; 4]; 2];
        brake_gain[0][VELOCITY_DIMS[0]] = -1.0 / world.dt;
        brake_gain[1][VELOCITY_DIMS[1]] = -1.0 / world.dt;
        Self {
            n_plan: 10,
            n_brake: 9,
            u_box: world.u_box.clone(),
            u_brk: vec![0.0; 2],
            brake_gain,
            solver_tol: 1e-6,
            time_limit_ms: 1000.0,
            workspace: world.workspace.clone(),
            position_dims: POSITION_DIMS.to_vec(),
            velocity_dims: VELOCITY_DIMS.to_vec(),
            v_max: 1.0,
            v_terminal: Some(0.3),
            clearance: 0.01,
            max_generators: None,
        }
    }

    pub fn validate(&self, state_dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_plan <= self.n_brake {
            return bad(format!(
                "n_plan ({}) must exceed n_brake ({})",
                self.n_plan, self.n_brake
            ));
        }
        if !(self.time_limit_ms > 0.0) {
            return bad("time_limit_ms must be positive".into());
        }
        let m = self.u_box.dim();
        check_dim("FilterConfig.u_brk", m, self.u_brk.len())?;
        if !self.u_box.contains_point(&DVector::from_column_slice(&self.u_brk)) {
            return bad("u_brk must lie inside u_box".into());
        }
        check_dim("FilterConfig.brake_gain", m, self.brake_gain.len())?;
        for row in &self.brake_gain {
            check_dim("FilterConfig.brake_gain row", state_dim, row.len())?;
        }
        check_dim("FilterConfig.workspace", self.position_dims.len(), self.workspace.dim())?;
        if self
            .position_dims
            .iter()
            .chain(&self.velocity_dims)
            .any(|&d| d >= state_dim)
        {
            return bad("state coordinate index out of range".into());
        }
        if !(self.v_max > 0.0) || !(self.clearance >= 0.0) {
            return bad("v_max must be positive and clearance non-negative".into());
        }
        Ok(())
    }

    pub fn generator_cap(&self, state_dim: usize) -> usize {
        self.max_generators
            .unwrap_or_else(|| default_generator_cap(state_dim))
    }

    pub(crate) fn gain_matrix(&self) -> DMatrix<f64> {
        let m = self.brake_gain.len();
        let n = self.brake_gain.first().map_or(0, Vec::len);
        DMatrix::from_fn(m, n, |i, j| self.brake_gain[i][j])
    }

    /// Braking-law input for a (predicted) state.
    pub fn braking_input(&self, state: &DVector<f64>) -> DVector<f64> {
        let u = DVector::from_column_slice(&self.u_brk) + self.gain_matrix() * state;
        clamp_to_box(&u, &self.u_box)
    }

    /// Obstacle inflation: measurement-noise hull radius plus clearance.
    pub fn inflation(&self, noise: &NoiseModel) -> f64 {
        let r = noise.zv.hull_radius();
        let pos_r = self.position_dims.iter().map(|&d| r[d]).fold(0.0, f64::max);
        pos_r + self.clearance
    }
}

/// A verified input sequence with its reachable sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub inputs: Vec<DVector<f64>>,
    pub reach_sets: Vec<Zonotope>,
    /// Step index at which the plan was made.
    pub created_at: usize,
}

impl Plan {
    pub fn first_action(&self) -> &DVector<f64> {
        &self.inputs[0]
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Exact re-check: recompute the tube for `inputs` from `r_k` and test
/// every set against its schedule box.
pub fn verify_tube(
    r_k: &Zonotope,
    inputs: &[DVector<f64>],
    schedule: &SafeRegionSchedule,
    model: &ModelSet,
    noise: &NoiseModel,
    cfg: &FilterConfig,
) -> Result<Option<Vec<Zonotope>>> {
    if inputs.len() != schedule.len() {
        return Ok(None);
    }
    let points: Vec<Zonotope> = inputs.iter().cloned().map(Zonotope::point).collect();
    let sets = reach_horizon_capped(model, r_k, &points, noise, cfg.generator_cap(model.state_dim()))?;
    for (set, b) in sets.iter().zip(&schedule.boxes) {
        if !box_contains(b, set)? {
            return Ok(None);
        }
    }
    Ok(Some(sets))
}

/// Solves the data-driven predictive control problem for the reference
/// input. Returns `None` when no verified plan is found or the time budget
/// runs out.
pub fn solve_ddpc(
    reference: &DVector<f64>,
    y: &DVector<f64>,
    schedule: &SafeRegionSchedule,
    model: &ModelSet,
    noise: &NoiseModel,
    cfg: &FilterConfig,
) -> Result<Option<DdpcSolution>> {
    solve_ddpc_from(&Zonotope::point(y.clone()), reference, y, schedule, model, noise, cfg)
}

pub(crate) fn solve_ddpc_from(
    r_k: &Zonotope,
    reference: &DVector<f64>,
    y: &DVector<f64>,
    schedule: &SafeRegionSchedule,
    model: &ModelSet,
    noise: &NoiseModel,
    cfg: &FilterConfig,
) -> Result<Option<DdpcSolution>> {
    check_dim("solve_ddpc(reference)", model.input_dim(), reference.len())?;
    check_dim("solve_ddpc(state)", model.state_dim(), y.len())?;
    if schedule.len() != cfg.n_plan {
        return Err(Error::InvalidArgument(format!(
            "schedule has {} boxes, horizon is {}",
            schedule.len(),
            cfg.n_plan
        )));
    }
    let deadline = Instant::now() + std::time::Duration::from_secs_f64(cfg.time_limit_ms / 1000.0);
    let Some(candidate) = solver::solve(r_k, reference, y, schedule, model, noise, cfg, deadline)? else {
        return Ok(None);
    };
    // post-hoc gate, independent of the solver's own bookkeeping
    match verify_tube(r_k, &candidate.inputs, schedule, model, noise, cfg)? {
        Some(sets) => Ok(Some(DdpcSolution {
            inputs: candidate.inputs,
            reach_sets: sets,
        })),
        None => Ok(None),
    }
}

/// `[braking law …]` for the whole horizon, if it verifies.
pub fn braking_plan(
    y: &DVector<f64>,
    model: &ModelSet,
    noise: &NoiseModel,
    schedule: &SafeRegionSchedule,
    cfg: &FilterConfig,
) -> Result<Option<Plan>> {
    let r_k = Zonotope::point(y.clone());
    let u0 = cfg.braking_input(y);
    let inputs = solver::rollout_inputs(&r_k, &u0, model, noise, cfg)?;
    let Some(sets) = verify_tube(&r_k, &inputs, schedule, model, noise, cfg)? else {
        return Ok(None);
    };
    Ok(Some(Plan {
        inputs,
        reach_sets: sets,
        created_at: 0,
    }))
}

/// `true` when no reachable set's interval hull touches an obstacle
/// (lifted to state space over the position coordinates).
pub fn tube_avoids_obstacles(
    sets: &[Zonotope],
    obstacles: &[Obstacle],
    inflation: f64,
    cfg: &FilterConfig,
) -> Result<bool> {
    for o in obstacles {
        let lifted = o
            .region()
            .inflate(inflation)?
            .lift(sets.first().map_or(0, Zonotope::dim), &cfg.position_dims)?;
        for s in sets {
            if s.may_intersect_box(&lifted)? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Full safety layer for one step: free space, predictive control, final
/// obstacle check. `r_k` is normally the point `⟨y, 0⟩`.
pub fn enforce_safety(
    r_k: &Zonotope,
    u_rl: &DVector<f64>,
    y: &DVector<f64>,
    obstacles: &[Obstacle],
    model: &ModelSet,
    noise: &NoiseModel,
    cfg: &FilterConfig,
) -> Result<Option<Plan>> {
    cfg.validate(model.state_dim())?;
    let inflation = cfg.inflation(noise);
    let mut schedule = free_boxes(y, obstacles, cfg, inflation)?;
    if let Some(v) = cfg.v_terminal {
        schedule = schedule.with_terminal_speed(&cfg.velocity_dims, v);
    }
    let Some(sol) = solve_ddpc_from(r_k, u_rl, y, &schedule, model, noise, cfg)? else {
        return Ok(None);
    };
    if !tube_avoids_obstacles(&sol.reach_sets, obstacles, inflation, cfg)? {
        return Ok(None);
    }
    Ok(Some(Plan {
        inputs: sol.inputs,
        reach_sets: sol.reach_sets,
        created_at: 0,
    }))
}

/// `‖inputs[0] − u_rl‖ > tol` (strict).
pub fn was_adjusted(plan: &Plan, u_rl: &DVector<f64>, tol: f64) -> bool {
    (plan.first_action() - u_rl).norm() > tol
}
