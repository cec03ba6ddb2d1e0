//! Planar navigation world: a damped double integrator with bounded
//! process and measurement noise, random static box obstacles and a goal
//! per episode, and ray-cast range readings.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reachability::{NoiseModel, Trajectory, TrajectorySet};
use crate::safety_filter::Obstacle;
use crate::set_algebra::IntervalBox;

pub const STATE_DIM: usize = 4;
pub const INPUT_DIM: usize = 2;
/// Position coordinates inside the state `[px, py, vx, vy]`.
pub const POSITION_DIMS: [usize; 2] = [0, 1];
pub const VELOCITY_DIMS: [usize; 2] = [2, 3];

const MAX_REJECTION_DRAWS: usize = 10_000;

/// Bounds for the box-shaped noise zonotopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub process_radius: f64,
    pub measurement_radius: f64,
    /// Upper bound on `‖A‖₂` used to build `Z_Av`.
    pub a_norm_bound: f64,
}

impl NoiseConfig {
    pub fn model(&self) -> Result<NoiseModel> {
        NoiseModel::boxes(
            STATE_DIM,
            self.process_radius,
            self.measurement_radius,
            self.a_norm_bound,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Position bounds in meters.
    pub workspace: IntervalBox,
    pub n_obstacles: usize,
    pub obstacle_size_range: [f64; 2],
    pub goal_radius: f64,
    /// Sample time in seconds.
    pub dt: f64,
    /// Per-step velocity damping μ.
    pub damping: f64,
    pub u_box: IntervalBox,
    pub noise: NoiseConfig,
    pub n_rays: usize,
    pub ray_range: f64,
    pub max_steps: usize,
    /// Free margin around the start position beyond measurement inflation.
    pub start_clearance: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            workspace: IntervalBox::uniform(2, 0.0, 10.0).expect("valid box"),
            n_obstacles: 8,
            obstacle_size_range: [0.5, 1.5],
            goal_radius: 0.4,
            dt: 0.1,
            damping: 0.05,
            u_box: IntervalBox::uniform(2, -1.0, 1.0).expect("valid box"),
            noise: NoiseConfig {
                process_radius: 1e-4,
                measurement_radius: 1e-4,
                a_norm_bound: 1.1,
            },
            n_rays: 8,
            ray_range: 5.0,
            max_steps: 200,
            start_clearance: 0.6,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.workspace.dim() != 2 || self.u_box.dim() != INPUT_DIM {
            return bad("workspace and u_box must be two-dimensional");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.goal_radius > 0.0) {
            return bad("goal_radius must be positive");
        }
        if !(0.0..1.0).contains(&self.damping) {
            return bad("damping must lie in [0, 1)");
        }
        let [lo, hi] = self.obstacle_size_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad("obstacle_size_range must satisfy 0 < min <= max");
        }
        if self.noise.process_radius < 0.0 || self.noise.measurement_radius < 0.0 {
            return bad("noise radii must be non-negative");
        }
        let a_norm = self.system_matrix().svd(false, false).singular_values.max();
        if self.noise.a_norm_bound < a_norm {
            return Err(Error::InvalidArgument(format!(
                "a_norm_bound {} is below ‖A‖₂ = {a_norm}",
                self.noise.a_norm_bound
            )));
        }
        Ok(())
    }

    /// `A` of the true (hidden) robot model.
    pub fn system_matrix(&self) -> DMatrix<f64> {
        let (dt, keep) = (self.dt, 1.0 - self.damping);
        DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, dt, 0.0, //
                0.0, 1.0, 0.0, dt, //
                0.0, 0.0, keep, 0.0, //
                0.0, 0.0, 0.0, keep,
            ],
        )
    }

    /// `B` of the true robot model.
    pub fn input_matrix(&self) -> DMatrix<f64> {
        let dt = self.dt;
        DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, dt, 0.0, 0.0, dt])
    }

    /// Saturated velocity opposition `clamp(−v / dt)` on the input box.
    pub fn braking_input(&self, velocity: &[f64]) -> DVector<f64> {
        clamp_to_box(
            &DVector::from_iterator(velocity.len(), velocity.iter().map(|v| -v / self.dt)),
            &self.u_box,
        )
    }

    pub fn observation_dim(&self) -> usize {
        STATE_DIM + 2 + self.n_rays
    }
}

pub(crate) fn clamp_to_box(u: &DVector<f64>, b: &IntervalBox) -> DVector<f64> {
    DVector::from_iterator(
        u.len(),
        u.iter()
            .enumerate()
            .map(|(i, v)| v.clamp(b.lower()[i], b.upper()[i])),
    )
}

/// True state `x` and its measurement `y = x + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl RobotState {
    pub fn true_position(&self) -> [f64; 2] {
        [self.x[0], self.x[1]]
    }

    pub fn measured_position(&self) -> [f64; 2] {
        [self.y[0], self.y[1]]
    }

    pub fn true_speed(&self) -> f64 {
        self.x[2].hypot(self.x[3])
    }
}

/// Agent input `ŷ = [y (4), goal − position (2), ray distances]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentObservation {
    pub values: Vec<f64>,
}

impl AgentObservation {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn rays(&self) -> &[f64] {
        &self.values[STATE_DIM + 2..]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepEvents {
    pub collision: bool,
    pub goal_reached: bool,
    /// The commanded input lay outside `u_box` and was clamped.
    pub clamped: bool,
}

/// One episode's world: geometry plus the noise stream.
#[derive(Debug, Clone)]
pub struct NavWorld {
    cfg: WorldConfig,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    noise: NoiseModel,
    obstacles: Vec<Obstacle>,
    goal: [f64; 2],
    rng: ChaCha8Rng,
}

impl NavWorld {
    /// Samples obstacles, goal and start. Deterministic in `episode_seed`.
    pub fn reset(cfg: &WorldConfig, episode_seed: u64) -> Result<(Self, RobotState, AgentObservation)> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
        let noise = cfg.noise.model()?;
        let ws = &cfg.workspace;
        let [smin, smax] = cfg.obstacle_size_range;

        let mut obstacles = Vec::with_capacity(cfg.n_obstacles);
        for _ in 0..cfg.n_obstacles {
            let mut lo = [0.0; 2];
            let mut hi = [0.0; 2];
            for d in 0..2 {
                let size = rng.random_range(smin..=smax).min(ws.upper()[d] - ws.lower()[d]);
                let start = rng.random_range(ws.lower()[d]..=ws.upper()[d] - size);
                lo[d] = start;
                hi[d] = start + size;
            }
            obstacles.push(Obstacle::new(IntervalBox::from_slices(&lo, &hi)?)?);
        }

        let inflation = noise.zv.hull_radius().amax() + cfg.start_clearance;
        let start_region = ws.inflate(-inflation).map_err(|_| Error::WorldTooCluttered(0))?;
        let goal_region = ws.inflate(-cfg.goal_radius).map_err(|_| Error::WorldTooCluttered(0))?;
        let mut draws = 0;
        let mut draw_point = |rng: &mut ChaCha8Rng, region: &IntervalBox, margin: f64| loop {
            draws += 1;
            if draws > MAX_REJECTION_DRAWS {
                return Err(Error::WorldTooCluttered(MAX_REJECTION_DRAWS));
            }
            let p = [
                rng.random_range(region.lower()[0]..=region.upper()[0]),
                rng.random_range(region.lower()[1]..=region.upper()[1]),
            ];
            let clear = obstacles
                .iter()
                .all(|o| !o.region().inflate(margin).expect("margin >= 0").contains_point(&DVector::from_column_slice(&p)));
            if clear {
                return Ok(p);
            }
        };
        let start = draw_point(&mut rng, &start_region, inflation)?;
        let goal = draw_point(&mut rng, &goal_region, cfg.goal_radius)?;

        let x = DVector::from_column_slice(&[start[0], start[1], 0.0, 0.0]);
        let y = &x + noise.zv.sample(&mut rng);
        let world = Self {
            a: cfg.system_matrix(),
            b: cfg.input_matrix(),
            cfg: cfg.clone(),
            noise,
            obstacles,
            goal,
            rng,
        };
        let state = RobotState { x, y };
        let obs = world.observe(&state);
        Ok((world, state, obs))
    }

    /// Rebuilds a world with explicit geometry (tests, log replay).
    pub fn with_geometry(
        cfg: &WorldConfig,
        obstacles: Vec<Obstacle>,
        goal: [f64; 2],
        noise_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            a: cfg.system_matrix(),
            b: cfg.input_matrix(),
            noise: cfg.noise.model()?,
            cfg: cfg.clone(),
            obstacles,
            goal,
            rng: ChaCha8Rng::seed_from_u64(noise_seed),
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// `x' = A x + B u + w`, `y' = x' + v'`, with `u` clamped to `u_box`.
    pub fn step(&mut self, state: &RobotState, u: &[f64]) -> (RobotState, AgentObservation, StepEvents) {
        let raw = DVector::from_column_slice(u);
        let applied = clamp_to_box(&raw, &self.cfg.u_box);
        let clamped = applied != raw;
        let w = self.noise.zw.sample(&mut self.rng);
        let x = &self.a * &state.x + &self.b * &applied + w;
        let v = self.noise.zv.sample(&mut self.rng);
        let y = &x + v;
        let next = RobotState { x, y };
        let events = StepEvents {
            collision: self.is_collision(next.true_position()),
            goal_reached: self.is_goal(next.true_position()),
            clamped,
        };
        let obs = self.observe(&next);
        (next, obs, events)
    }

    /// Position inside any obstacle (closed) or outside the workspace.
    pub fn is_collision(&self, p: [f64; 2]) -> bool {
        let pv = DVector::from_column_slice(&p);
        !self.cfg.workspace.contains_point(&pv)
            || self.obstacles.iter().any(|o| o.region().contains_point(&pv))
    }

    pub fn is_goal(&self, p: [f64; 2]) -> bool {
        distance(p, self.goal) <= self.cfg.goal_radius
    }

    pub fn observe(&self, state: &RobotState) -> AgentObservation {
        observe(state, &self.obstacles, self.goal, &self.cfg)
    }
}

pub(crate) fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Builds `ŷ`. Rays start at the measured position and evenly span 180°
/// centered on the goal direction.
pub fn observe(
    state: &RobotState,
    obstacles: &[Obstacle],
    goal: [f64; 2],
    cfg: &WorldConfig,
) -> AgentObservation {
    let p = state.measured_position();
    let mut values: Vec<f64> = state.y.iter().copied().collect();
    values.push(goal[0] - p[0]);
    values.push(goal[1] - p[1]);
    let heading = (goal[1] - p[1]).atan2(goal[0] - p[0]);
    for angle in ray_angles(heading, cfg.n_rays) {
        values.push(cast_ray(p, [angle.cos(), angle.sin()], obstacles, &cfg.workspace, cfg.ray_range));
    }
    AgentObservation { values }
}

pub fn ray_angles(heading: f64, n_rays: usize) -> Vec<f64> {
    match n_rays {
        0 => Vec::new(),
        1 => vec![heading],
        n => (0..n)
            .map(|i| heading - std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Distance along `dir` (unit) to the nearest obstacle face or workspace
/// wall, capped at `max_range`. Zero when the origin is already blocked.
pub fn cast_ray(
    origin: [f64; 2],
    dir: [f64; 2],
    obstacles: &[Obstacle],
    workspace: &IntervalBox,
    max_range: f64,
) -> f64 {
    let o = DVector::from_column_slice(&origin);
    if !workspace.contains_point(&o) {
        return 0.0;
    }
    let mut best = max_range;
    if let Some((_, exit)) = slab(origin, dir, workspace) {
        best = best.min(exit.max(0.0));
    }
    for ob in obstacles {
        if let Some((enter, exit)) = slab(origin, dir, ob.region()) {
            if exit >= 0.0 {
                best = best.min(enter.max(0.0));
            }
        }
    }
    best
}

/// Parametric entry/exit of the ray `origin + t·dir` through a 2-D box.
fn slab(origin: [f64; 2], dir: [f64; 2], b: &IntervalBox) -> Option<(f64, f64)> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for d in 0..2 {
        let (lo, hi) = (b.lower()[d], b.upper()[d]);
        if dir[d].abs() < 1e-15 {
            if origin[d] < lo || origin[d] > hi {
                return None;
            }
        } else {
            let t1 = (lo - origin[d]) / dir[d];
            let t2 = (hi - origin[d]) / dir[d];
            t_enter = t_enter.max(t1.min(t2));
            t_exit = t_exit.min(t1.max(t2));
        }
    }
    (t_enter <= t_exit).then_some((t_enter, t_exit))
}

/// Rolls out `q` trajectories of `t_len` steps in the obstacle-free world
/// with inputs uniform on `u_box`. Starts are uniform in the workspace with
/// velocities uniform in `[-1, 1]` m/s. Records measured states.
pub fn collect_offline_data(
    cfg: &WorldConfig,
    q: usize,
    t_len: usize,
    excitation_seed: u64,
) -> Result<TrajectorySet> {
    if q == 0 || t_len == 0 {
        return Err(Error::InvalidArgument(
            "collect_offline_data needs q >= 1 and T >= 1".into(),
        ));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(excitation_seed);
    let a = cfg.system_matrix();
    let b = cfg.input_matrix();
    let noise = cfg.noise.model()?;
    let ws = &cfg.workspace;
    let mut trajectories = Vec::with_capacity(q);
    for _ in 0..q {
        let mut x = DVector::from_column_slice(&[
            rng.random_range(ws.lower()[0]..=ws.upper()[0]),
            rng.random_range(ws.lower()[1]..=ws.upper()[1]),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        ]);
        let mut states = DMatrix::zeros(STATE_DIM, t_len + 1);
        let mut inputs = DMatrix::zeros(INPUT_DIM, t_len);
        states.set_column(0, &(&x + noise.zv.sample(&mut rng)));
        for k in 0..t_len {
            let u = DVector::from_fn(INPUT_DIM, |i, _| {
                rng.random_range(cfg.u_box.lower()[i]..=cfg.u_box.upper()[i])
            });
            x = &a * &x + &b * &u + noise.zw.sample(&mut rng);
            states.set_column(k + 1, &(&x + noise.zv.sample(&mut rng)));
            inputs.set_column(k, &u);
        }
        trajectories.push(Trajectory::new(states, inputs)?);
    }
    Ok(TrajectorySet { trajectories })
}
