//! Data-driven reachability for an unknown linear system.
//!
//! Offline trajectories are stacked into shifted data matrices, the set of
//! all `[A B]` consistent with the data and the noise bounds is computed as
//! a matrix zonotope, and reachable sets of the measured output are
//! propagated with it.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::set_algebra::{hcat, MatrixZonotope, Zonotope};

/// Relative singular-value cutoff used by [`pseudo_inverse`].
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

/// One measured trajectory: `states` holds `T + 1` columns, `inputs` `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: DMatrix<f64>,
    pub inputs: DMatrix<f64>,
}

impl Trajectory {
    pub fn new(states: DMatrix<f64>, inputs: DMatrix<f64>) -> Result<Self> {
        if states.ncols() < 2 {
            return Err(Error::InvalidArgument(
                "trajectory needs at least two state samples".into(),
            ));
        }
        if inputs.ncols() + 1 != states.ncols() {
            return Err(Error::InvalidArgument(format!(
                "trajectory has {} states but {} inputs",
                states.ncols(),
                inputs.ncols()
            )));
        }
        Ok(Self { states, inputs })
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.ncols() == 0
    }
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
}

/// Offline data: `q` trajectories of possibly different lengths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectorySet {
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn total_len(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// JSON lines, one `{"states": [[..]..], "inputs": [[..]..]}` per trajectory.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.trajectories {
            let rec = TrajectoryRecord {
                states: t.states.column_iter().map(|c| c.iter().copied().collect()).collect(),
                inputs: t.inputs.column_iter().map(|c| c.iter().copied().collect()).collect(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut trajectories = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TrajectoryRecord = serde_json::from_str(&line).map_err(|e| {
                Error::MalformedLog {
                    line: i + 1,
                    reason: e.to_string(),
                }
            })?;
            let states = columns_to_matrix(&rec.states, i + 1)?;
            let inputs = if rec.inputs.is_empty() {
                DMatrix::zeros(0, 0)
            } else {
                columns_to_matrix(&rec.inputs, i + 1)?
            };
            trajectories.push(Trajectory::new(states, inputs)?);
        }
        Ok(Self { trajectories })
    }
}

fn columns_to_matrix(cols: &[Vec<f64>], line: usize) -> Result<DMatrix<f64>> {
    let rows = cols.first().map_or(0, Vec::len);
    if cols.iter().any(|c| c.len() != rows) {
        return Err(Error::MalformedLog {
            line,
            reason: "ragged vector lengths".into(),
        });
    }
    Ok(DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i]))
}

/// Shifted data matrices `Y₋`, `Y₊`, `U₋`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub y_minus: DMatrix<f64>,
    pub y_plus: DMatrix<f64>,
    pub u_minus: DMatrix<f64>,
}

impl DataSet {
    pub fn state_dim(&self) -> usize {
        self.y_minus.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.u_minus.nrows()
    }

    pub fn len(&self) -> usize {
        self.y_minus.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `D = [Y₋; U₋]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (n, m, t) = (self.state_dim(), self.input_dim(), self.len());
        let mut d = DMatrix::zeros(n + m, t);
        d.rows_mut(0, n).copy_from(&self.y_minus);
        d.rows_mut(n, m).copy_from(&self.u_minus);
        d
    }
}

/// Stacks trajectories into shift-paired columns, trajectory by trajectory.
/// No column pairs samples from two different trajectories.
pub fn build_data_matrices(trajs: &TrajectorySet) -> Result<DataSet> {
    let first = trajs
        .trajectories
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory set".into()))?;
    let n = first.states.nrows();
    let m = first.inputs.nrows();
    let total = trajs.total_len();
    let mut y_minus = DMatrix::zeros(n, total);
    let mut y_plus = DMatrix::zeros(n, total);
    let mut u_minus = DMatrix::zeros(m, total);
    let mut col = 0;
    for t in &trajs.trajectories {
        check_dim("build_data_matrices(state)", n, t.states.nrows())?;
        check_dim("build_data_matrices(input)", m, t.inputs.nrows())?;
        if t.inputs.ncols() + 1 != t.states.ncols() {
            return Err(Error::InvalidArgument("trajectory length mismatch".into()));
        }
        let len = t.len();
        y_minus
            .columns_mut(col, len)
            .copy_from(&t.states.columns(0, len));
        y_plus
            .columns_mut(col, len)
            .copy_from(&t.states.columns(1, len));
        u_minus.columns_mut(col, len).copy_from(&t.inputs);
        col += len;
    }
    Ok(DataSet {
        y_minus,
        y_plus,
        u_minus,
    })
}

/// Noise bounds: process noise `Z_w`, measurement noise `Z_v`, and a bound
/// `Z_Av` on the one-step propagated measurement noise `A v`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub zw: Zonotope,
    pub zv: Zonotope,
    pub z_av: Zonotope,
}

impl NoiseModel {
    pub fn new(zw: Zonotope, zv: Zonotope, z_av: Zonotope) -> Result<Self> {
        check_dim("NoiseModel(zv)", zw.dim(), zv.dim())?;
        check_dim("NoiseModel(z_av)", zw.dim(), z_av.dim())?;
        Ok(Self { zw, zv, z_av })
    }

    /// Builds `Z_Av` from a bound `a_norm_bound ≥ ‖A‖₂`: every `v ∈ Z_v`
    /// satisfies `‖v‖₂ ≤ ρ` (ρ the norm of the hull's farthest corner), so
    /// `A v` lies in the centered cube of half-width `a_norm_bound · ρ`.
    pub fn with_spectral_bound(zw: Zonotope, zv: Zonotope, a_norm_bound: f64) -> Result<Self> {
        if !(a_norm_bound >= 0.0) || !a_norm_bound.is_finite() {
            return Err(Error::InvalidArgument(
                "spectral norm bound must be finite and non-negative".into(),
            ));
        }
        let reach = zv.center().abs() + zv.hull_radius();
        let rho = reach.norm() * a_norm_bound;
        let z_av = Zonotope::centered_box(&vec![rho; zv.dim()])?;
        Self::new(zw, zv, z_av)
    }

    /// Centered axis-aligned boxes with uniform radii.
    pub fn boxes(dim: usize, w_radius: f64, v_radius: f64, a_norm_bound: f64) -> Result<Self> {
        let zw = Zonotope::centered_box(&vec![w_radius; dim])?;
        let zv = Zonotope::centered_box(&vec![v_radius; dim])?;
        Self::with_spectral_bound(zw, zv, a_norm_bound)
    }

    pub fn dim(&self) -> usize {
        self.zw.dim()
    }

    /// Every term added per propagation step: `Z_w + Z_v − Z_Av`.
    pub fn step_noise(&self) -> Zonotope {
        self.zw
            .minkowski_sum(&self.zv)
            .and_then(|s| s.minkowski_difference(&self.z_av))
            .expect("noise zonotopes share a dimension")
    }

    /// Each coordinate scaled by `alpha` (centers and generators).
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            zw: self.zw.scale(alpha),
            zv: self.zv.scale(alpha),
            z_av: self.z_av.scale(alpha),
        }
    }
}

/// Matrix zonotope of every `n × T` matrix whose columns all lie in `z`:
/// one generator per (generator of `z`, column) pair.
pub fn lift_noise(z: &Zonotope, t: usize) -> Result<MatrixZonotope> {
    if t == 0 {
        return Err(Error::InvalidArgument("lift_noise: T must be positive".into()));
    }
    let n = z.dim();
    let center = DMatrix::from_fn(n, t, |i, _| z.center()[i]);
    let mut generators = Vec::with_capacity(z.num_generators() * t);
    for g in z.generators().column_iter() {
        for col in 0..t {
            let mut gm = DMatrix::zeros(n, t);
            gm.set_column(col, &g);
            generators.push(gm);
        }
    }
    MatrixZonotope::new(center, generators)
}

/// Moore–Penrose pseudoinverse via SVD with the relative cutoff
/// [`PINV_RELATIVE_CUTOFF`]`·σ_max`. Also returns the numerical rank.
pub fn pseudo_inverse(d: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let (rows, cols) = d.shape();
    if rows == 0 || cols == 0 {
        return (DMatrix::zeros(cols, rows), 0);
    }
    let svd = d.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma_max = svd.singular_values.max();
    let cutoff = PINV_RELATIVE_CUTOFF * sigma_max;
    let mut pinv = DMatrix::zeros(cols, rows);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            pinv += (v_t.row(k).transpose() * u.column(k).transpose()) / s;
        }
    }
    (pinv, rank)
}

/// The matrix-zonotope set `M_Σ ∋ [A B]` together with the factors needed to
/// multiply it with zonotopes cheaply.
#[derive(Debug, Clone)]
pub struct ModelSet {
    sigma: MatrixZonotope,
    state_dim: usize,
    input_dim: usize,
    /// `D†`, `T × (n + m)`.
    pinv: DMatrix<f64>,
    /// Generators of `Z_w`, `Z_v`, `Z_Av` whose lifted copies make up the
    /// generators of `M_Σ` (each lifted generator is `±g · D†[t, :]`).
    noise_dirs: Vec<DVector<f64>>,
    rank: usize,
}

impl ModelSet {
    pub fn sigma(&self) -> &MatrixZonotope {
        &self.sigma
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn center(&self) -> &DMatrix<f64> {
        self.sigma.center()
    }

    /// `M_Σ · Z`, set-identical to [`MatrixZonotope::mul_zono`] on
    /// [`ModelSet::sigma`].
    ///
    /// All generators `G⁽ⁱ⁾ z` produced by the generic product that stem from
    /// one noise direction `g` are parallel to `g`, so their Minkowski sum is
    /// the single segment `g · Σₜ |D†[t,:] z|` summed over the center and all
    /// generators of `Z`.
    pub fn mul_zono(&self, z: &Zonotope) -> Result<Zonotope> {
        check_dim("ModelSet::mul_zono", self.state_dim + self.input_dim, z.dim())?;
        let c = self.sigma.center();
        let projected_center = &self.pinv * z.center();
        let mut weight: f64 = projected_center.iter().map(|v| v.abs()).sum();
        if z.num_generators() > 0 {
            let projected = &self.pinv * z.generators();
            weight += projected.iter().map(|v| v.abs()).sum::<f64>();
        }
        let base = c * z.generators();
        let mut noise = DMatrix::zeros(self.state_dim, self.noise_dirs.len());
        for (j, g) in self.noise_dirs.iter().enumerate() {
            noise.set_column(j, &(g * weight));
        }
        Zonotope::new(c * z.center(), hcat(&base, &noise))
    }
}

/// `M_Σ = (Y₊ − M_w − M_v + M_Av) · [Y₋; U₋]†`.
///
/// Fails with [`Error::InsufficientExcitation`] when `[Y₋; U₋]` does not
/// have full row rank `n + m`.
pub fn compute_model_set(data: &DataSet, noise: &NoiseModel) -> Result<ModelSet> {
    let n = data.state_dim();
    let m = data.input_dim();
    let t = data.len();
    check_dim("compute_model_set", n, noise.dim())?;
    if t == 0 {
        return Err(Error::InvalidArgument("empty data set".into()));
    }
    let d = data.stacked();
    let (pinv, rank) = pseudo_inverse(&d);
    if rank < n + m {
        return Err(Error::InsufficientExcitation {
            rank,
            required: n + m,
        });
    }

    // centers: Y₊ − c_w 1ᵀ − c_v 1ᵀ + c_Av 1ᵀ
    let shift = noise.z_av.center() - noise.zw.center() - noise.zv.center();
    let mut lhs_center = data.y_plus.clone();
    for mut col in lhs_center.column_iter_mut() {
        col += &shift;
    }
    let center = &lhs_center * &pinv;

    // generators: each lifted generator g e_tᵀ (sign ±) times D† is the
    // outer product ±g · D†[t, :]
    let signed: [(&Zonotope, f64); 3] = [(&noise.zw, -1.0), (&noise.zv, -1.0), (&noise.z_av, 1.0)];
    let mut generators = Vec::new();
    let mut noise_dirs = Vec::new();
    for (z, sign) in signed {
        for g in z.generators().column_iter() {
            let g = g.into_owned();
            for row in 0..t {
                generators.push((&g * pinv.row(row)) * sign);
            }
            noise_dirs.push(g);
        }
    }
    let sigma = MatrixZonotope::new(center, generators)?;
    Ok(ModelSet {
        sigma,
        state_dim: n,
        input_dim: m,
        pinv,
        noise_dirs,
        rank,
    })
}

/// Default order-reduction cap for reachable sets: `5n`.
pub fn default_generator_cap(n: usize) -> usize {
    5 * n
}

/// One step `R̂ₜ₊₁ = M_Σ (R̂ₜ × Z_u) + Z_w + Z_v − Z_Av`, reduced to `5n`
/// generators.
pub fn reach_step(
    model: &ModelSet,
    r_t: &Zonotope,
    z_u: &Zonotope,
    noise: &NoiseModel,
) -> Result<Zonotope> {
    reach_step_capped(model, r_t, z_u, noise, default_generator_cap(model.state_dim))
}

/// [`reach_step`] with an explicit generator cap.
pub fn reach_step_capped(
    model: &ModelSet,
    r_t: &Zonotope,
    z_u: &Zonotope,
    noise: &NoiseModel,
    max_generators: usize,
) -> Result<Zonotope> {
    check_dim("reach_step(state)", model.state_dim, r_t.dim())?;
    check_dim("reach_step(input)", model.input_dim, z_u.dim())?;
    check_dim("reach_step(noise)", model.state_dim, noise.dim())?;
    let next = model
        .mul_zono(&r_t.cartesian_product(z_u))?
        .minkowski_sum(&noise.step_noise())?;
    next.reduce_order(max_generators)
}

/// Iterates [`reach_step`] over `inputs`, returning `[R̂₁, …, R̂_N]`.
pub fn reach_horizon(
    model: &ModelSet,
    r_0: &Zonotope,
    inputs: &[Zonotope],
    noise: &NoiseModel,
) -> Result<Vec<Zonotope>> {
    reach_horizon_capped(model, r_0, inputs, noise, default_generator_cap(model.state_dim))
}

pub fn reach_horizon_capped(
    model: &ModelSet,
    r_0: &Zonotope,
    inputs: &[Zonotope],
    noise: &NoiseModel,
    max_generators: usize,
) -> Result<Vec<Zonotope>> {
    let mut sets = Vec::with_capacity(inputs.len());
    let mut current = r_0.clone();
    for u in inputs {
        current = reach_step_capped(model, &current, u, noise, max_generators)?;
        sets.push(current.clone());
    }
    Ok(sets)
}
