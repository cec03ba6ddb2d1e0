//! Predictive-control solver over the first input.
//!
//! The plan is `[u0, b(ŷ₁), …, b(ŷ_{N−1})]` with `b` the braking law and
//! `ŷᵢ` the center of the i-th reachable set. Only `u0` is free, so the
//! search lives in `m` dimensions: a feasible anchor, bisection toward the
//! reference, then cutting-plane rounds: project the reference onto the
//! accumulated linearized constraints, bisect toward the projection.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{FilterConfig, SafeRegionSchedule};
use crate::environment::clamp_to_box;
use crate::error::Result;
use crate::reachability::{reach_step_capped, ModelSet, NoiseModel};
use crate::set_algebra::Zonotope;

/// Bisection stops once the bracket is this short (input units).
const BISECTION_TOL: f64 = 1e-6;
const CUT_ROUNDS: usize = 12;
const FD_STEP: f64 = 1e-6;
const HILDRETH_SWEEPS: usize = 500;

/// Verified solver output.
#[derive(Debug, Clone, PartialEq)]
pub struct DdpcSolution {
    pub inputs: Vec<DVector<f64>>,
    pub reach_sets: Vec<Zonotope>,
}

pub(crate) struct Candidate {
    pub inputs: Vec<DVector<f64>>,
}

/// Plan inputs and reachable sets for a given first input.
pub(crate) fn rollout(
    r_k: &Zonotope,
    u0: &DVector<f64>,
    model: &ModelSet,
    noise: &NoiseModel,
    cfg: &FilterConfig,
) -> Result<(Vec<DVector<f64>>, Vec<Zonotope>)> {
    let cap = cfg.generator_cap(model.state_dim());
    let mut inputs = Vec::with_capacity(cfg.n_plan);
    let mut sets = Vec::with_capacity(cfg.n_plan);
    let mut current = r_k.clone();
    let mut u = u0.clone();
    for i in 0..cfg.n_plan {
        if i > 0 {
            u = cfg.braking_input(current.center());
        }
        current = reach_step_capped(model, &current, &Zonotope::point(u.clone()), noise, cap)?;
        inputs.push(u.clone());
        sets.push(current.clone());
    }
    Ok((inputs, sets))
}

pub(crate) fn rollout_inputs(
    r_k: &Zonotope,
    u0: &DVector<f64>,
    model: &ModelSet,
    noise: &NoiseModel,
    cfg: &FilterConfig,
) -> Result<Vec<DVector<f64>>> {
    Ok(rollout(r_k, u0, model, noise, cfg)?.0)
}

struct Evaluator<'a> {
    r_k: &'a Zonotope,
    schedule: &'a SafeRegionSchedule,
    model: &'a ModelSet,
    noise: &'a NoiseModel,
    cfg: &'a FilterConfig,
    deadline: Instant,
}

impl Evaluator<'_> {
    /// Constraint slacks `[ub − hull_hi; hull_lo − lb]` over all finite
    /// bounds; the plan is feasible iff every entry is `≥ 0`. `None` once
    /// the time budget is gone.
    fn slacks(&self, u0: &DVector<f64>) -> Result<Option<DVector<f64>>> {
        if Instant::now() > self.deadline {
            return Ok(None);
        }
        let (_, sets) = rollout(self.r_k, u0, self.model, self.noise, self.cfg)?;
        let mut out = Vec::new();
        for (set, b) in sets.iter().zip(&self.schedule.boxes) {
            let hull = set.interval_hull();
            for d in 0..hull.dim() {
                if b.upper()[d].is_finite() {
                    out.push(b.upper()[d] - hull.upper()[d]);
                }
                if b.lower()[d].is_finite() {
                    out.push(hull.lower()[d] - b.lower()[d]);
                }
            }
        }
        Ok(Some(DVector::from_vec(out)))
    }

    fn feasible(&self, u0: &DVector<f64>) -> Result<Option<bool>> {
        Ok(self.slacks(u0)?.map(|s| s.iter().all(|v| *v >= 0.0)))
    }

    /// Largest `t ∈ [0, 1]` found by bisection with `from + t (to − from)`
    /// feasible; `from` must be feasible.
    fn bisect(&self, from: &DVector<f64>, to: &DVector<f64>) -> Result<Option<DVector<f64>>> {
        match self.feasible(to)? {
            None => return Ok(None),
            Some(true) => return Ok(Some(to.clone())),
            Some(false) => {}
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        let len = (to - from).norm();
        while (hi - lo) * len > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            match self.feasible(&lerp(from, to, mid))? {
                None => return Ok(None),
                Some(true) => lo = mid,
                Some(false) => hi = mid,
            }
        }
        Ok(Some(lerp(from, to, lo)))
    }
}

fn anchor_candidates(y: &DVector<f64>, cfg: &FilterConfig) -> Vec<DVector<f64>> {
    let b = &cfg.u_box;
    let m = b.dim();
    let mut out = vec![
        cfg.braking_input(y),
        DVector::from_column_slice(&cfg.u_brk),
        b.center(),
    ];
    for j in 0..m {
        for v in [b.lower()[j], b.upper()[j]] {
            let mut u = b.center();
            u[j] = v;
            out.push(u);
        }
    }
    if m <= 4 {
        for mask in 0..(1usize << m) {
            out.push(DVector::from_fn(m, |j, _| {
                if mask >> j & 1 == 1 {
                    b.upper()[j]
                } else {
                    b.lower()[j]
                }
            }));
        }
    }
    out
}

fn lerp(a: &DVector<f64>, b: &DVector<f64>, t: f64) -> DVector<f64> {
    a + (b - a) * t
}

/// Euclidean projection of `r` onto `{u : A u ≤ b}` by Hildreth's dual
/// coordinate ascent. Returns the last primal iterate; for an empty set
/// this is not a feasible point.
pub fn project_onto_halfspaces(
    r: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    max_sweeps: usize,
    tol: f64,
) -> DVector<f64> {
    let rows = a.nrows();
    let norms: Vec<f64> = (0..rows).map(|i| a.row(i).norm_squared()).collect();
    let mut lambda = vec![0.0; rows];
    let mut u = r.clone();
    for _ in 0..max_sweeps {
        let mut change = 0.0f64;
        for i in 0..rows {
            if norms[i] == 0.0 {
                continue;
            }
            let row = a.row(i);
            let viol = (row * &u)[0] - b[i];
            let next = (lambda[i] + viol / norms[i]).max(0.0);
            let delta = next - lambda[i];
            if delta != 0.0 {
                u -= row.transpose() * delta;
                lambda[i] = next;
                change = change.max(delta.abs() * norms[i].sqrt());
            }
        }
        if change <= tol {
            break;
        }
    }
    u
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn solve(
    r_k: &Zonotope,
    reference: &DVector<f64>,
    y: &DVector<f64>,
    schedule: &SafeRegionSchedule,
    model: &ModelSet,
    noise: &NoiseModel,
    cfg: &FilterConfig,
    deadline: Instant,
) -> Result<Option<Candidate>> {
    let ev = Evaluator {
        r_k,
        schedule,
        model,
        noise,
        cfg,
        deadline,
    };
    let finish = |u0: DVector<f64>| -> Result<Option<Candidate>> {
        Ok(Some(Candidate {
            inputs: rollout_inputs(r_k, &u0, model, noise, cfg)?,
        }))
    };

    let target = clamp_to_box(reference, &cfg.u_box);
    match ev.feasible(&target)? {
        None => return Ok(None),
        Some(true) => return finish(target),
        Some(false) => {}
    }

    // feasible anchor nearest to the reference among the braking law, the
    // fixed braking input, and the center, face centers and corners of the
    // input box; the last two let a robot at rest back away from a face
    let mut best: Option<(f64, DVector<f64>)> = None;
    for a in anchor_candidates(y, cfg) {
        let d = (&a - &target).norm();
        if best.as_ref().is_some_and(|(bd, _)| *bd <= d) {
            continue;
        }
        match ev.feasible(&a)? {
            None => return Ok(None),
            Some(true) => best = Some((d, a)),
            Some(false) => {}
        }
    }
    let Some((_, anchor)) = best else {
        return Ok(None);
    };
    let Some(mut best) = ev.bisect(&anchor, &target)? else {
        return Ok(None);
    };
    let mut best_dist = (&best - &target).norm();

    // Outer approximation: every linearization point contributes the cuts
    // `s(p) + J(p)(u − p) ≥ 0`. Hull bounds are convex in `u0` while the
    // braking clamps do not switch, so the cuts keep the feasible set and
    // the projection of the reference onto them bounds the optimum from
    // below. Bisecting from the best feasible point toward that projection
    // closes the gap from inside.
    let m = target.len();
    let mut cuts_a: Vec<f64> = Vec::new();
    let mut cuts_b: Vec<f64> = Vec::new();
    let mut pending = vec![best.clone()];
    for _ in 0..CUT_ROUNDS {
        if best_dist <= cfg.solver_tol {
            break;
        }
        for p in pending.drain(..) {
            let Some(s0) = ev.slacks(&p)? else {
                return Ok(None);
            };
            let mut jac = DMatrix::zeros(s0.len(), m);
            for j in 0..m {
                let mut probe = p.clone();
                probe[j] += FD_STEP;
                let Some(s1) = ev.slacks(&probe)? else {
                    return Ok(None);
                };
                jac.set_column(j, &((s1 - &s0) / FD_STEP));
            }
            // s0 + J (u − p) ≥ 0   ⇔   −J u ≤ s0 − J p
            let rhs = &s0 - &jac * &p;
            for i in 0..s0.len() {
                cuts_a.extend(jac.row(i).iter().map(|v| -v));
                cuts_b.push(rhs[i]);
            }
        }
        let rows = cuts_b.len() + 2 * m;
        let mut a = DMatrix::zeros(rows, m);
        let mut b = DVector::zeros(rows);
        for (i, rhs) in cuts_b.iter().enumerate() {
            a.row_mut(i).copy_from_slice(&cuts_a[i * m..(i + 1) * m]);
            b[i] = *rhs;
        }
        let base = cuts_b.len();
        for j in 0..m {
            a[(base + 2 * j, j)] = 1.0;
            b[base + 2 * j] = cfg.u_box.upper()[j];
            a[(base + 2 * j + 1, j)] = -1.0;
            b[base + 2 * j + 1] = -cfg.u_box.lower()[j];
        }
        let qp = clamp_to_box(&project_onto_halfspaces(&target, &a, &b, HILDRETH_SWEEPS, 1e-12), &cfg.u_box);
        if (&qp - &target).norm() + cfg.solver_tol >= best_dist {
            break;
        }
        let Some(cand) = ev.bisect(&best, &qp)? else {
            return Ok(None);
        };
        let dist = (&cand - &target).norm();
        if dist < best_dist {
            best = cand.clone();
            best_dist = dist;
        }
        if cand != qp {
            pending.push(cand);
        }
        pending.push(qp);
    }
    finish(best)
}
