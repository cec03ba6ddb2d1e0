use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{IntervalMatrix, Zonotope};
use crate::error::{check_dim, Error, Result};

/// Set of matrices `{ C + Σᵢ βᵢ Gᵢ : β ∈ [-1, 1]^γ }`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixZonotope {
    center: DMatrix<f64>,
    generators: Vec<DMatrix<f64>>,
}

impl MatrixZonotope {
    pub fn new(center: DMatrix<f64>, generators: Vec<DMatrix<f64>>) -> Result<Self> {
        for g in &generators {
            if g.shape() != center.shape() {
                return Err(Error::InvalidArgument(format!(
                    "matrix zonotope generator shape {:?} differs from center {:?}",
                    g.shape(),
                    center.shape()
                )));
            }
        }
        Ok(Self { center, generators })
    }

    pub fn point(center: DMatrix<f64>) -> Self {
        Self {
            center,
            generators: Vec::new(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.center.shape()
    }

    pub fn center(&self) -> &DMatrix<f64> {
        &self.center
    }

    pub fn generators(&self) -> &[DMatrix<f64>] {
        &self.generators
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    /// `M₁ + M₂`: centers add, generator lists concatenate.
    pub fn minkowski_sum(&self, other: &MatrixZonotope) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::InvalidArgument(format!(
                "matrix zonotope sum: shapes {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut generators = self.generators.clone();
        generators.extend(other.generators.iter().cloned());
        Ok(Self {
            center: &self.center + &other.center,
            generators,
        })
    }

    /// `−M`.
    pub fn negate(&self) -> Self {
        Self {
            center: -&self.center,
            generators: self.generators.iter().map(|g| -g).collect(),
        }
    }

    /// `X + M` for a plain matrix `X`.
    pub fn translate(&self, offset: &DMatrix<f64>) -> Result<Self> {
        if offset.shape() != self.shape() {
            return Err(Error::InvalidArgument(format!(
                "matrix zonotope translate: shapes {:?} and {:?}",
                offset.shape(),
                self.shape()
            )));
        }
        Ok(Self {
            center: &self.center + offset,
            generators: self.generators.clone(),
        })
    }

    /// `M · P = ⟨C P, {Gᵢ P}⟩` (exact).
    pub fn mul_matrix(&self, p: &DMatrix<f64>) -> Result<Self> {
        check_dim("matzono_mul_matrix", self.center.ncols(), p.nrows())?;
        Ok(Self {
            center: &self.center * p,
            generators: self.generators.iter().map(|g| g * p).collect(),
        })
    }

    /// Over-approximation of `{ X z : X ∈ M, z ∈ Z }`:
    /// `⟨C c, [C G_Z, G₁ c, …, G_γ c, G₁ G_Z, …, G_γ G_Z]⟩`.
    pub fn mul_zono(&self, z: &Zonotope) -> Result<Zonotope> {
        check_dim("matzono_mul_zono", self.center.ncols(), z.dim())?;
        let rows = self.center.nrows();
        let gz = z.generators();
        let gamma_z = gz.ncols();
        let total = gamma_z + self.generators.len() * (1 + gamma_z);
        let mut out = DMatrix::zeros(rows, total);
        out.columns_mut(0, gamma_z).copy_from(&(&self.center * gz));
        let mut col = gamma_z;
        for g in &self.generators {
            out.set_column(col, &(g * z.center()));
            col += 1;
        }
        for g in &self.generators {
            out.columns_mut(col, gamma_z).copy_from(&(g * gz));
            col += gamma_z;
        }
        Zonotope::new(&self.center * z.center(), out)
    }

    /// Elementwise bounds of the set.
    pub fn interval_hull(&self) -> IntervalMatrix {
        let mut radius = DMatrix::zeros(self.center.nrows(), self.center.ncols());
        for g in &self.generators {
            radius += g.abs();
        }
        IntervalMatrix {
            lower: &self.center - &radius,
            upper: &self.center + &radius,
        }
    }

    pub fn matrix_at(&self, beta: &[f64]) -> Result<DMatrix<f64>> {
        check_dim("MatrixZonotope::matrix_at", self.generators.len(), beta.len())?;
        let mut x = self.center.clone();
        for (g, b) in self.generators.iter().zip(beta) {
            x += g * *b;
        }
        Ok(x)
    }

    /// Member drawn with β uniform in `[-1, 1]^γ`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let beta: Vec<f64> = (0..self.generators.len())
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        self.matrix_at(&beta).expect("beta length matches")
    }

    /// Generator matrices flattened column-major into the columns of one
    /// `(rows·cols) × γ` matrix; the membership problem `C + Σ βᵢ Gᵢ = X`
    /// becomes `G β = vec(X − C)`.
    pub fn vectorized_generators(&self) -> DMatrix<f64> {
        let len = self.center.len();
        let mut out = DMatrix::zeros(len, self.generators.len());
        for (j, g) in self.generators.iter().enumerate() {
            out.set_column(j, &DVector::from_column_slice(g.as_slice()));
        }
        out
    }
}

/// `M z` over-approximation, see [`MatrixZonotope::mul_zono`].
pub fn matzono_mul_zono(m: &MatrixZonotope, z: &Zonotope) -> Result<Zonotope> {
    m.mul_zono(z)
}

/// `M P`, see [`MatrixZonotope::mul_matrix`].
pub fn matzono_mul_matrix(m: &MatrixZonotope, p: &DMatrix<f64>) -> Result<MatrixZonotope> {
    m.mul_matrix(p)
}
