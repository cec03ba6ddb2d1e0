use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::IntervalBox;
use crate::error::{check_dim, Error, Result};

/// `⟨c, G⟩ = { c + G β : β ∈ [-1, 1]^γ }`.
///
/// A zonotope with zero generators is a single point. Values are immutable
/// once built; every operation returns a fresh zonotope.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    center: DVector<f64>,
    generators: DMatrix<f64>,
}

impl Zonotope {
    pub fn new(center: DVector<f64>, generators: DMatrix<f64>) -> Result<Self> {
        check_dim("Zonotope::new", center.len(), generators.nrows())?;
        if center.iter().chain(generators.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "zonotope entries must be finite".into(),
            ));
        }
        Ok(Self { center, generators })
    }

    pub fn point(center: DVector<f64>) -> Self {
        let n = center.len();
        Self {
            center,
            generators: DMatrix::zeros(n, 0),
        }
    }

    /// Box zonotope with one axis-aligned generator per coordinate of
    /// non-zero width. The box must be bounded.
    pub fn from_box(b: &IntervalBox) -> Result<Self> {
        let center = b.center();
        let radius = b.radius();
        let cols: Vec<usize> = (0..b.dim()).filter(|&i| radius[i] > 0.0).collect();
        let mut generators = DMatrix::zeros(b.dim(), cols.len());
        for (j, &i) in cols.iter().enumerate() {
            generators[(i, j)] = radius[i];
        }
        Self::new(center, generators)
    }

    /// Centered axis-aligned box with the given per-coordinate radii.
    pub fn centered_box(radius: &[f64]) -> Result<Self> {
        let lo: Vec<f64> = radius.iter().map(|r| -r).collect();
        Self::from_box(&IntervalBox::from_slices(&lo, radius)?)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }

    /// `L Z = ⟨L c, L G⟩` (exact).
    pub fn linear_map(&self, l: &DMatrix<f64>) -> Result<Self> {
        check_dim("linear_map", self.dim(), l.ncols())?;
        Ok(Self {
            center: l * &self.center,
            generators: l * &self.generators,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            center: &self.center * s,
            generators: &self.generators * s,
        }
    }

    pub fn translate(&self, offset: &DVector<f64>) -> Result<Self> {
        check_dim("translate", self.dim(), offset.len())?;
        Ok(Self {
            center: &self.center + offset,
            generators: self.generators.clone(),
        })
    }

    /// `Z₁ + Z₂ = ⟨c₁ + c₂, [G₁, G₂]⟩`.
    pub fn minkowski_sum(&self, other: &Zonotope) -> Result<Self> {
        check_dim("minkowski_sum", self.dim(), other.dim())?;
        Ok(Self {
            center: &self.center + &other.center,
            generators: hcat(&self.generators, &other.generators),
        })
    }

    /// `Z₁ − Z₂ = Z₁ + (−1)·Z₂`.
    pub fn minkowski_difference(&self, other: &Zonotope) -> Result<Self> {
        check_dim("minkowski_difference", self.dim(), other.dim())?;
        Ok(Self {
            center: &self.center - &other.center,
            generators: hcat(&self.generators, &(-&other.generators)),
        })
    }

    /// Stacked center with block-diagonal generators.
    pub fn cartesian_product(&self, other: &Zonotope) -> Self {
        let (n1, n2) = (self.dim(), other.dim());
        let (g1, g2) = (self.num_generators(), other.num_generators());
        let mut center = DVector::zeros(n1 + n2);
        center.rows_mut(0, n1).copy_from(&self.center);
        center.rows_mut(n1, n2).copy_from(&other.center);
        let mut generators = DMatrix::zeros(n1 + n2, g1 + g2);
        generators
            .view_mut((0, 0), (n1, g1))
            .copy_from(&self.generators);
        generators
            .view_mut((n1, g1), (n2, g2))
            .copy_from(&other.generators);
        Self { center, generators }
    }

    /// Per-coordinate half-widths of the interval hull: `Σⱼ |Gᵢⱼ|`.
    pub fn hull_radius(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.generators.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()),
        )
    }

    /// Tightest axis-aligned box containing the zonotope.
    pub fn interval_hull(&self) -> IntervalBox {
        let r = self.hull_radius();
        IntervalBox::new(&self.center - &r, &self.center + &r)
            .expect("hull radius is non-negative")
    }

    /// Conservative intersection test through interval hulls: `false`
    /// guarantees disjointness, `true` only means the hulls touch.
    pub fn may_intersect(&self, other: &Zonotope) -> Result<bool> {
        check_dim("may_intersect", self.dim(), other.dim())?;
        self.interval_hull().intersects(&other.interval_hull())
    }

    /// Same as [`Zonotope::may_intersect`] against an axis-aligned box.
    pub fn may_intersect_box(&self, b: &IntervalBox) -> Result<bool> {
        check_dim("may_intersect_box", self.dim(), b.dim())?;
        self.interval_hull().intersects(b)
    }

    /// Box-method order reduction: keeps the `max_generators − n` largest
    /// generators (ℓ₂ norm) and replaces the rest by their interval hull.
    /// The result always contains `self`.
    pub fn reduce_order(&self, max_generators: usize) -> Result<Self> {
        let n = self.dim();
        if max_generators < n {
            return Err(Error::InvalidArgument(format!(
                "reduce_order: generator cap {max_generators} below dimension {n}"
            )));
        }
        let gamma = self.num_generators();
        if gamma <= max_generators {
            return Ok(self.clone());
        }
        let keep = max_generators - n;
        let norms: Vec<f64> = self.generators.column_iter().map(|c| c.norm()).collect();
        let mut order: Vec<usize> = (0..gamma).collect();
        // descending norm, ties by index so the result is deterministic
        order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
        let mut kept: Vec<usize> = order[..keep].to_vec();
        kept.sort_unstable();
        let mut boxed = DVector::<f64>::zeros(n);
        for &j in &order[keep..] {
            for i in 0..n {
                boxed[i] += self.generators[(i, j)].abs();
            }
        }
        let box_rows: Vec<usize> = (0..n).filter(|&i| boxed[i] > 0.0).collect();
        let mut generators = DMatrix::zeros(n, kept.len() + box_rows.len());
        for (k, &j) in kept.iter().enumerate() {
            generators.set_column(k, &self.generators.column(j));
        }
        for (k, &i) in box_rows.iter().enumerate() {
            generators[(i, kept.len() + k)] = boxed[i];
        }
        Ok(Self {
            center: self.center.clone(),
            generators,
        })
    }

    /// Point `c + G β` for the given factors.
    pub fn point_at(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("point_at", self.num_generators(), beta.len())?;
        Ok(&self.center + &self.generators * beta)
    }

    /// Draws β uniformly from `[-1, 1]^γ` and returns `c + G β`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let beta = DVector::from_fn(self.num_generators(), |_, _| rng.random_range(-1.0..=1.0));
        &self.center + &self.generators * beta
    }

    /// Drops all-zero generator columns.
    pub fn compact(&self) -> Self {
        let cols: Vec<usize> = (0..self.num_generators())
            .filter(|&j| self.generators.column(j).iter().any(|v| *v != 0.0))
            .collect();
        Self {
            center: self.center.clone(),
            generators: self.generators.select_columns(cols.iter()),
        }
    }
}

pub(crate) fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// `L Z`.
pub fn linear_map(l: &DMatrix<f64>, z: &Zonotope) -> Result<Zonotope> {
    z.linear_map(l)
}

/// `Z₁ + Z₂`.
pub fn minkowski_sum(z1: &Zonotope, z2: &Zonotope) -> Result<Zonotope> {
    z1.minkowski_sum(z2)
}

/// `Z₁ × Z₂`.
pub fn cartesian_product(z1: &Zonotope, z2: &Zonotope) -> Zonotope {
    z1.cartesian_product(z2)
}

/// Sufficient test for `Z ⊆ outer` (closed): compares the interval hull.
pub fn box_contains(outer: &IntervalBox, z: &Zonotope) -> Result<bool> {
    check_dim("box_contains", outer.dim(), z.dim())?;
    outer.contains_box(&z.interval_hull())
}
