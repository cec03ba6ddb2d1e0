//! Independent oracles shared by the integration tests. Nothing here calls
//! into the set-algebra routines it is meant to check.

#![allow(dead_code)]

pub mod grad_checks;
pub mod zono_props;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ddsafe::reachability::{NoiseModel, Trajectory, TrajectorySet};
use ddsafe::set_algebra::Zonotope;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All `2^γ` points `c + G s` with `s ∈ {−1, 1}^γ`. Every vertex of the
/// zonotope is among them.
pub fn sign_points(center: &DVector<f64>, gens: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let g = gens.ncols();
    assert!(g <= 16, "vertex enumeration limited to 16 generators");
    (0..1usize << g)
        .map(|mask| {
            let mut p = center.clone();
            for j in 0..g {
                let s = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
                p += gens.column(j) * s;
            }
            p
        })
        .collect()
}

/// Axis-aligned bounding box of a point cloud as `(lower, upper)`.
pub fn bounding_box(points: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
    let n = points[0].len();
    let mut lo = DVector::from_element(n, f64::INFINITY);
    let mut hi = DVector::from_element(n, f64::NEG_INFINITY);
    for p in points {
        for i in 0..n {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    (lo, hi)
}

/// Moore–Penrose pseudoinverse of a wide matrix through the normal
/// equations, `Gᵀ (G Gᵀ)⁻¹`, falling back to SVD if `G Gᵀ` is singular.
fn right_inverse(g: &DMatrix<f64>) -> DMatrix<f64> {
    let ggt = g * g.transpose();
    match ggt.clone().cholesky() {
        Some(ch) => g.transpose() * ch.inverse(),
        None => g.clone().pseudo_inverse(1e-12).expect("svd converges"),
    }
}

/// Distance-like residual of the membership test `p ∈ ⟨c, G⟩`:
/// alternating projections between `{β : G β = p − c}` and the box
/// `[−1, 1]^γ`, reporting `‖G β − (p − c)‖` for the best boxed `β`.
/// Zero (up to rounding) for members; bounded away from zero otherwise.
pub fn membership_residual(center: &DVector<f64>, gens: &DMatrix<f64>, p: &DVector<f64>) -> f64 {
    let r = p - center;
    if gens.ncols() == 0 {
        return r.norm();
    }
    let pinv = right_inverse(gens);
    let mut beta = &pinv * &r;
    let mut best = f64::INFINITY;
    for _ in 0..20_000 {
        let boxed = beta.map(|b| b.clamp(-1.0, 1.0));
        let res = (gens * &boxed - &r).norm();
        best = best.min(res);
        if res <= 1e-14 * (1.0 + r.norm()) {
            break;
        }
        beta = &boxed + &pinv * (&r - gens * &boxed);
    }
    best
}

pub fn zono_residual(z: &Zonotope, p: &DVector<f64>) -> f64 {
    membership_residual(z.center(), z.generators(), p)
}

/// Spectral norm via the largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

pub fn uniform_matrix(r: usize, c: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(lo..hi))
}

/// Uniform draw from the centered box with the given radii.
pub fn box_sample(radius: &[f64], rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_iterator(radius.len(), radius.iter().map(|&r| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 }))
}

/// A random discrete-time system `x⁺ = A x + B u + w`, `y = x + v` with
/// box-bounded noise.
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub w_radius: f64,
    pub v_radius: f64,
}

impl LinearSystem {
    /// `A` scaled to spectral norm `a_norm`, `B` with entries in `[−1, 1]`.
    pub fn random(n: usize, m: usize, a_norm: f64, w_radius: f64, v_radius: f64, rng: &mut impl Rng) -> Self {
        let a = uniform_matrix(n, n, -1.0, 1.0, rng);
        let a = &a * (a_norm / spectral_norm(&a));
        let b = uniform_matrix(n, m, -1.0, 1.0, rng);
        Self {
            a,
            b,
            w_radius,
            v_radius,
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn ab(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n(), self.n() + self.m());
        out.columns_mut(0, self.n()).copy_from(&self.a);
        out.columns_mut(self.n(), self.m()).copy_from(&self.b);
        out
    }

    /// Box noise model with `Z_Av` from the true spectral norm.
    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel::boxes(self.n(), self.w_radius, self.v_radius, spectral_norm(&self.a)).unwrap()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
        &self.a * x + &self.b * u + box_sample(&vec![self.w_radius; self.n()], rng)
    }

    pub fn measure(&self, x: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
        x + box_sample(&vec![self.v_radius; self.n()], rng)
    }

    /// `q` measured trajectories of length `t` under uniform inputs in
    /// `[−1, 1]^m` from uniform initial states in `[−1, 1]^n`.
    pub fn collect(&self, q: usize, t: usize, rng: &mut impl Rng) -> TrajectorySet {
        let (n, m) = (self.n(), self.m());
        let trajectories = (0..q)
            .map(|_| {
                let mut x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                let mut ys = DMatrix::zeros(n, t + 1);
                let mut us = DMatrix::zeros(m, t);
                ys.set_column(0, &self.measure(&x, rng));
                for k in 0..t {
                    let u = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
                    x = self.step(&x, &u, rng);
                    ys.set_column(k + 1, &self.measure(&x, rng));
                    us.set_column(k, &u);
                }
                Trajectory::new(ys, us).unwrap()
            })
            .collect();
        TrajectorySet { trajectories }
    }
}

/// Column-major vectorization.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn cross(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_column_slice(&[
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

/// Directions containing every facet normal of any zonotope in `R¹..R³`
/// with these generators, degenerate ones included.
fn candidate_normals(gens: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = gens.nrows();
    let g: Vec<DVector<f64>> = gens
        .column_iter()
        .map(|c| c.into_owned())
        .filter(|c| c.norm() > 1e-12)
        .collect();
    let axes: Vec<DVector<f64>> = (0..n).map(|i| DVector::from_fn(n, |k, _| f64::from(k == i))).collect();
    let mut dirs = axes.clone();
    dirs.extend(g.iter().cloned());
    match n {
        1 => {}
        2 => dirs.extend(g.iter().map(|v| DVector::from_column_slice(&[-v[1], v[0]]))),
        3 => {
            let mut planes = Vec::new();
            for i in 0..g.len() {
                for j in i + 1..g.len() {
                    planes.push(cross(&g[i], &g[j]));
                }
            }
            for e in &axes {
                for v in &g {
                    dirs.push(cross(e, v));
                }
            }
            for p in &planes {
                for v in &g {
                    dirs.push(cross(p, v));
                }
            }
            dirs.extend(planes);
        }
        _ => panic!("support oracle only covers dimensions 1 to 3"),
    }
    dirs.into_iter()
        .filter_map(|d| {
            let norm = d.norm();
            (norm > 1e-9).then(|| d / norm)
        })
        .collect()
}

/// Largest violation `|dᵀ(p − c)| − Σⱼ |dᵀ gⱼ|` over all facet normals.
/// `p` belongs to the zonotope iff the result is `≤ 0` (exact H-form in
/// dimensions up to 3).
pub fn support_violation(center: &DVector<f64>, gens: &DMatrix<f64>, p: &DVector<f64>) -> f64 {
    let r = p - center;
    candidate_normals(gens)
        .iter()
        .map(|d| {
            let h: f64 = gens.column_iter().map(|g| d.dot(&g).abs()).sum();
            d.dot(&r).abs() - h
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn in_zonotope(z: &Zonotope, p: &DVector<f64>, tol: f64) -> bool {
    support_violation(z.center(), z.generators(), p) <= tol
}

/// Residual of `[A B] ∈ M_Σ` from the box-constrained least-squares
/// oracle on the vectorized generators.
pub fn model_membership_residual(sigma: &ddsafe::set_algebra::MatrixZonotope, ab: &DMatrix<f64>) -> f64 {
    let gens = sigma.generators();
    let mut stacked = DMatrix::zeros(ab.len(), gens.len());
    for (j, g) in gens.iter().enumerate() {
        stacked.set_column(j, &vec_of(g));
    }
    membership_residual(&vec_of(sigma.center()), &stacked, &vec_of(ab))
}

/// Noisy rollouts of the true system from measured initial outputs in `y0`
/// under inputs drawn from `inputs[t]`; counts outputs outside the given
/// hulls. Returns `(escapes, samples)`.
pub fn count_escapes(
    sys: &LinearSystem,
    y0: &Zonotope,
    inputs: &[Zonotope],
    hulls: &[ddsafe::set_algebra::IntervalBox],
    rollouts: usize,
    rng: &mut impl Rng,
) -> (usize, usize) {
    let v_radius = vec![sys.v_radius; sys.n()];
    let mut escapes = 0;
    let mut samples = 0;
    for _ in 0..rollouts {
        let y = y0.sample(rng);
        let mut x = &y - box_sample(&v_radius, rng);
        for (u_set, h) in inputs.iter().zip(hulls) {
            let u = u_set.sample(rng);
            x = sys.step(&x, &u, rng);
            let y = sys.measure(&x, rng);
            samples += 1;
            escapes += usize::from(!h.contains_point(&y));
        }
    }
    (escapes, samples)
}

// ---------------------------------------------------------------------------
// Safety-filter oracles

use ddsafe::environment::{collect_offline_data, WorldConfig};
use ddsafe::reachability::{build_data_matrices, compute_model_set, reach_step_capped, ModelSet};
use ddsafe::safety_filter::{free_boxes, FilterConfig, Obstacle};
use ddsafe::set_algebra::IntervalBox;

pub struct Scene {
    pub model: ModelSet,
    pub noise: NoiseModel,
    pub cfg: FilterConfig,
}

/// The default robot world, identified from its default offline data.
pub fn robot_scene(world: &WorldConfig, seed: u64) -> Scene {
    let data = collect_offline_data(world, 10, 30, seed).unwrap();
    let noise = world.noise.model().unwrap();
    let model = compute_model_set(&build_data_matrices(&data).unwrap(), &noise).unwrap();
    Scene {
        model,
        noise,
        cfg: FilterConfig::for_world(world),
    }
}

/// Damped double integrator on a line, `dt = 0.1`, with a filter that
/// brakes by `−v/dt`.
pub fn line_scene(seed: u64) -> Scene {
    let dt = 0.1;
    let sys = LinearSystem {
        a: DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 0.95]),
        b: DMatrix::from_row_slice(2, 1, &[0.0, dt]),
        w_radius: 1e-4,
        v_radius: 1e-4,
    };
    let mut r = rng(seed);
    let noise = sys.noise_model();
    let model = compute_model_set(&build_data_matrices(&sys.collect(5, 30, &mut r)).unwrap(), &noise).unwrap();
    let cfg = FilterConfig {
        n_plan: 10,
        n_brake: 9,
        u_box: IntervalBox::uniform(1, -1.0, 1.0).unwrap(),
        u_brk: vec![0.0],
        brake_gain: vec![vec![0.0, -1.0 / dt]],
        solver_tol: 1e-6,
        time_limit_ms: 60_000.0,
        workspace: IntervalBox::uniform(1, 0.0, 10.0).unwrap(),
        position_dims: vec![0],
        velocity_dims: vec![1],
        v_max: 1.0,
        v_terminal: Some(0.3),
        clearance: 0.01,
        max_generators: None,
    };
    Scene { model, noise, cfg }
}

/// `clamp(u_brk + K y)` written out independently of the library.
pub fn braking_law(cfg: &FilterConfig, y: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(cfg.u_brk.len(), |i, _| {
        let raw = cfg.u_brk[i] + cfg.brake_gain[i].iter().zip(y.iter()).map(|(k, v)| k * v).sum::<f64>();
        raw.clamp(cfg.u_box.lower()[i], cfg.u_box.upper()[i])
    })
}

/// Reachable tube of the plan `[u0, braking law …]` from the point `y`.
pub fn oracle_tube(u0: &DVector<f64>, y: &DVector<f64>, s: &Scene) -> Vec<Zonotope> {
    let cap = s.cfg.generator_cap(s.model.state_dim());
    let mut cur = Zonotope::point(y.clone());
    let mut out = Vec::with_capacity(s.cfg.n_plan);
    for i in 0..s.cfg.n_plan {
        let u = if i == 0 { u0.clone() } else { braking_law(&s.cfg, cur.center()) };
        cur = reach_step_capped(&s.model, &cur, &Zonotope::point(u), &s.noise, cap).unwrap();
        out.push(cur.clone());
    }
    out
}

fn hull_bounds(z: &Zonotope) -> (DVector<f64>, DVector<f64>) {
    let r = DVector::from_iterator(z.dim(), z.generators().row_iter().map(|row| row.iter().map(|v| v.abs()).sum()));
    (z.center() - &r, z.center() + r)
}

/// Whether the plan `[u0, braking law …]` passes every check the filter is
/// specified to make: each hull inside the free box (terminal speed bound on
/// the last one) and away from every inflated obstacle.
pub fn plan_feasible(u0: &DVector<f64>, y: &DVector<f64>, obstacles: &[Obstacle], s: &Scene) -> bool {
    let inflation = s.cfg.inflation(&s.noise);
    let Ok(mut schedule) = free_boxes(y, obstacles, &s.cfg, inflation) else {
        return false;
    };
    if let Some(v) = s.cfg.v_terminal {
        schedule = schedule.with_terminal_speed(&s.cfg.velocity_dims, v);
    }
    let pd = &s.cfg.position_dims;
    oracle_tube(u0, y, s).iter().zip(&schedule.boxes).all(|(z, b)| {
        let (lo, hi) = hull_bounds(z);
        let inside = (0..z.dim()).all(|i| b.lower()[i] <= lo[i] && hi[i] <= b.upper()[i]);
        let clear = obstacles.iter().all(|o| {
            let ob = o.region();
            pd.iter().enumerate().any(|(k, &d)| {
                hi[d] < ob.lower()[k] - inflation || lo[d] > ob.upper()[k] + inflation
            })
        });
        inside && clear
    })
}

/// Brute-force nearest feasible grid input to `reference` over `u_box`
/// with spacing `h`.
pub fn grid_oracle(reference: &DVector<f64>, y: &DVector<f64>, obstacles: &[Obstacle], s: &Scene, h: f64) -> Option<DVector<f64>> {
    grid_search(reference, y, obstacles, s, h, 0.0).map(|g| g.best)
}

/// Feasible grid points ordered by distance to the reference: the nearest
/// one and every other one within `slack` of its distance.
pub struct GridResult {
    pub best: DVector<f64>,
    pub near_optimal: Vec<DVector<f64>>,
}

pub fn grid_search(
    reference: &DVector<f64>,
    y: &DVector<f64>,
    obstacles: &[Obstacle],
    s: &Scene,
    h: f64,
    slack: f64,
) -> Option<GridResult> {
    let ub = &s.cfg.u_box;
    let m = ub.dim();
    let counts: Vec<usize> = (0..m).map(|j| (ub.widths()[j] / h).round() as usize + 1).collect();
    let total: usize = counts.iter().product();
    let mut points: Vec<(f64, DVector<f64>)> = (0..total)
        .map(|idx| {
            let mut rest = idx;
            let u = DVector::from_fn(m, |j, _| {
                let k = rest % counts[j];
                rest /= counts[j];
                (ub.lower()[j] + k as f64 * h).min(ub.upper()[j])
            });
            ((&u - reference).norm(), u)
        })
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<f64> = None;
    let mut near = Vec::new();
    for (d, u) in points {
        if best.is_some_and(|b| d > b + slack) {
            break;
        }
        if plan_feasible(&u, y, obstacles, s) {
            best.get_or_insert(d);
            near.push(u);
        }
    }
    let best = near.first()?.clone();
    Some(GridResult { best, near_optimal: near })
}

pub fn box_obstacle(lo: &[f64], hi: &[f64]) -> Obstacle {
    Obstacle::new(IntervalBox::from_slices(lo, hi).unwrap()).unwrap()
}

/// A state approaching a wall with a reference that drives into it: the
/// reference plan is infeasible but some grid input is feasible.
pub struct UnsafeInstance {
    pub y: DVector<f64>,
    pub reference: DVector<f64>,
    pub obstacles: Vec<Obstacle>,
    /// Grid search with slack of one grid diagonal.
    pub grid: GridResult,
}

pub fn unsafe_line_instance(s: &Scene, h: f64, r: &mut impl Rng) -> UnsafeInstance {
    let obstacles = vec![box_obstacle(&[6.0], &[7.0])];
    loop {
        let y = DVector::from_column_slice(&[r.random_range(4.0..5.9), r.random_range(0.0..1.0)]);
        let reference = DVector::from_column_slice(&[r.random_range(0.0..1.0)]);
        if plan_feasible(&reference, &y, &obstacles, s) {
            continue;
        }
        let diag = h * (reference.len() as f64).sqrt();
        if let Some(grid) = grid_search(&reference, &y, &obstacles, s, h, diag) {
            return UnsafeInstance { y, reference, obstacles, grid };
        }
    }
}

pub fn unsafe_plane_instance(s: &Scene, h: f64, r: &mut impl Rng) -> UnsafeInstance {
    let obstacles = vec![box_obstacle(&[6.0, 3.0], &[7.0, 7.0])];
    loop {
        let y = DVector::from_column_slice(&[
            r.random_range(4.5..5.9),
            r.random_range(4.0..6.0),
            r.random_range(0.0..0.9),
            r.random_range(-0.3..0.3),
        ]);
        let reference = DVector::from_column_slice(&[r.random_range(0.0..1.0), r.random_range(-1.0..1.0)]);
        if plan_feasible(&reference, &y, &obstacles, s) {
            continue;
        }
        let diag = h * (reference.len() as f64).sqrt();
        if let Some(grid) = grid_search(&reference, &y, &obstacles, s, h, diag) {
            return UnsafeInstance { y, reference, obstacles, grid };
        }
    }
}

/// A random query in a random cluttered world: measured state clear of
/// every obstacle by 0.3 m, speed up to 0.8 m/s, reference uniform in the
/// input box.
pub fn random_robot_query(world: &WorldConfig, r: &mut impl Rng) -> (DVector<f64>, DVector<f64>, Vec<Obstacle>) {
    let (nav, _, _) = ddsafe::environment::NavWorld::reset(world, r.random()).unwrap();
    let obstacles = nav.obstacles().to_vec();
    let ws = &world.workspace;
    loop {
        let p = [
            r.random_range(ws.lower()[0] + 0.3..ws.upper()[0] - 0.3),
            r.random_range(ws.lower()[1] + 0.3..ws.upper()[1] - 0.3),
        ];
        let near = obstacles.iter().any(|o| {
            let b = o.region();
            (0..2).all(|k| p[k] >= b.lower()[k] - 0.3 && p[k] <= b.upper()[k] + 0.3)
        });
        if near {
            continue;
        }
        let speed = r.random_range(0.0..0.8);
        let heading = r.random_range(0.0..std::f64::consts::TAU);
        let y = DVector::from_column_slice(&[p[0], p[1], speed * heading.cos(), speed * heading.sin()]);
        let u = DVector::from_fn(2, |j, _| r.random_range(world.u_box.lower()[j]..=world.u_box.upper()[j]));
        return (y, u, obstacles);
    }
}

/// Checks a filter correction against the grid oracle: feasible for the
/// oracle, no farther from the reference than the best grid point plus one
/// grid diagonal, and within `2h` of a feasible grid point that is itself
/// that close to optimal. Along a boundary stretch nearly tangent to the
/// distance level sets many points are almost equally good, so the single
/// best grid point can sit far from the true minimizer.
pub fn correction_error(u: &DVector<f64>, inst: &UnsafeInstance, s: &Scene, h: f64) -> Result<(), String> {
    if !plan_feasible(u, &inst.y, &inst.obstacles, s) {
        return Err(format!("correction {:?} is not feasible at y = {:?}", u.as_slice(), inst.y.as_slice()));
    }
    let got = (u - &inst.reference).norm();
    let grid = (&inst.grid.best - &inst.reference).norm();
    let diag = h * (u.len() as f64).sqrt();
    if got > grid + diag {
        return Err(format!("distance {got} vs grid optimum {grid} at y = {:?}", inst.y.as_slice()));
    }
    let gap = inst.grid.near_optimal.iter().map(|g| (u - g).norm()).fold(f64::INFINITY, f64::min);
    if gap > 2.0 * h {
        return Err(format!("correction {:?} is {gap} from the near-optimal grid set at y = {:?}", u.as_slice(), inst.y.as_slice()));
    }
    Ok(())
}
