use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Axis-aligned box `[lower, upper]`. Bounds may be infinite (an unbounded
/// coordinate), never NaN. All tests treat the box as a closed set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRecord", into = "BoxRecord")]
pub struct IntervalBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl IntervalBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_dim("IntervalBox::new", lower.len(), upper.len())?;
        for (l, u) in lower.iter().zip(upper.iter()) {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::InvalidArgument(format!(
                    "interval bounds must satisfy lower <= upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(
            DVector::from_column_slice(lower),
            DVector::from_column_slice(upper),
        )
    }

    /// Box with the same bounds `[lo, hi]` on every axis.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(dim, lo),
            DVector::from_element(dim, hi),
        )
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: DVector::from_element(dim, f64::NEG_INFINITY),
            upper: DVector::from_element(dim, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn radius(&self) -> DVector<f64> {
        (&self.upper - &self.lower) * 0.5
    }

    pub fn widths(&self) -> DVector<f64> {
        &self.upper - &self.lower
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower.iter().zip(self.upper.iter()).any(|(l, u)| l == u)
    }

    pub fn contains_point(&self, p: &DVector<f64>) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    /// Closed containment `other ⊆ self`.
    pub fn contains_box(&self, other: &IntervalBox) -> Result<bool> {
        check_dim("IntervalBox::contains_box", self.dim(), other.dim())?;
        Ok((0..self.dim())
            .all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i]))
    }

    /// Closed intersection test: touching boxes intersect.
    pub fn intersects(&self, other: &IntervalBox) -> Result<bool> {
        check_dim("IntervalBox::intersects", self.dim(), other.dim())?;
        Ok((0..self.dim())
            .all(|i| self.lower[i] <= other.upper[i] && other.lower[i] <= self.upper[i]))
    }

    /// Grows every face outward by `r` (shrinks when `r < 0`, failing if a
    /// side would invert).
    pub fn inflate(&self, r: f64) -> Result<Self> {
        Self::new(
            self.lower.map(|l| l - r),
            self.upper.map(|u| u + r),
        )
    }

    /// Embeds a box over a subset of coordinates into `dim` dimensions; the
    /// remaining coordinates are unbounded.
    pub fn lift(&self, dim: usize, dims: &[usize]) -> Result<Self> {
        check_dim("IntervalBox::lift", self.dim(), dims.len())?;
        let mut out = Self::unbounded(dim);
        for (k, &d) in dims.iter().enumerate() {
            if d >= dim {
                return Err(Error::InvalidArgument(format!(
                    "lift: coordinate {d} out of range for dimension {dim}"
                )));
            }
            out.lower[d] = self.lower[k];
            out.upper[d] = self.upper[k];
        }
        Ok(out)
    }

    /// Restriction to the listed coordinates.
    pub fn project(&self, dims: &[usize]) -> Self {
        Self {
            lower: DVector::from_iterator(dims.len(), dims.iter().map(|&d| self.lower[d])),
            upper: DVector::from_iterator(dims.len(), dims.iter().map(|&d| self.upper[d])),
        }
    }

    pub(crate) fn set_bounds(&mut self, i: usize, lo: f64, hi: f64) {
        debug_assert!(lo <= hi);
        self.lower[i] = lo;
        self.upper[i] = hi;
    }
}

#[derive(Serialize, Deserialize)]
struct BoxRecord {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<BoxRecord> for IntervalBox {
    type Error = Error;

    fn try_from(r: BoxRecord) -> Result<Self> {
        IntervalBox::from_slices(&r.lower, &r.upper)
    }
}

impl From<IntervalBox> for BoxRecord {
    fn from(b: IntervalBox) -> Self {
        BoxRecord {
            lower: b.lower.iter().copied().collect(),
            upper: b.upper.iter().copied().collect(),
        }
    }
}

/// Elementwise bounds on a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMatrix {
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

impl IntervalMatrix {
    pub fn contains(&self, x: &DMatrix<f64>, tol: f64) -> bool {
        x.shape() == self.lower.shape()
            && x
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (l, u))| *l - tol <= *v && *v <= *u + tol)
    }

    pub fn radius(&self) -> DMatrix<f64> {
        (&self.upper - &self.lower) * 0.5
    }
}
