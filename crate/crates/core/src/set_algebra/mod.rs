//! Zonotopes, matrix zonotopes and interval boxes.
//!
//! Containment and disjointness are decided on interval hulls, which makes
//! them sufficient-only tests: `box_contains == true` proves containment and
//! `may_intersect == false` proves disjointness. Boundary contact counts as
//! contained and as intersecting.

mod interval;
mod matrix_zonotope;
mod zonotope;

pub use interval::{IntervalBox, IntervalMatrix};
pub use matrix_zonotope::{matzono_mul_matrix, matzono_mul_zono, MatrixZonotope};
pub use zonotope::{box_contains, cartesian_product, linear_map, minkowski_sum, Zonotope};

pub(crate) use zonotope::hcat;
