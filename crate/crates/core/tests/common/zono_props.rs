//! Zonotope properties against vertex-enumeration, exact support-function
//! and Monte Carlo oracles in dimensions 1 to 3. Each property runs its own
//! deterministic proptest runner so the plain tests and the acceptance
//! harness share one definition.

use super::{bounding_box, in_zonotope, rng, sign_points, support_violation, uniform_matrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{RngAlgorithm, TestRng, TestRunner};
use rand::Rng;

use ddsafe::set_algebra::{box_contains, cartesian_product, linear_map, minkowski_sum, IntervalBox, MatrixZonotope, Zonotope};

/// Absolute tolerance for floating-point comparisons on O(10) quantities.
const TOL: f64 = 1e-9;

fn random_zonotope(n: usize, g: usize, r: &mut impl Rng) -> Zonotope {
    let c = DVector::from_fn(n, |_, _| r.random_range(-5.0..5.0));
    let gens = uniform_matrix(n, g, -2.0, 2.0, r);
    Zonotope::new(c, gens).unwrap()
}

fn random_beta(g: usize, r: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(g, |_, _| r.random_range(-1.0..=1.0))
}

fn hull_matches(z: &Zonotope) -> bool {
    let (lo, hi) = bounding_box(&sign_points(z.center(), z.generators()));
    let h = z.interval_hull();
    (h.lower() - lo).amax() <= TOL && (h.upper() - hi).amax() <= TOL
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

pub fn interval_hull_is_vertex_bounding_box(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=3, 0usize..=7, any::<u64>()), |(n, g, seed)| {
        let z = random_zonotope(n, g, &mut rng(seed));
        prop_assert!(hull_matches(&z));
        Ok(())
    })
}

pub fn monte_carlo_samples_stay_in_set_and_hull(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=3, 0usize..=6, any::<u64>()), |(n, g, seed)| {
        let mut r = rng(seed);
        let z = random_zonotope(n, g, &mut r);
        let h = z.interval_hull();
        for _ in 0..20 {
            let p = z.sample(&mut r);
            prop_assert!(in_zonotope(&z, &p, TOL));
            prop_assert!(h.contains_point(&p));
        }
        Ok(())
    })
}

pub fn linear_map_images_points_and_hull(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=3, 1usize..=3, 0usize..=6, any::<u64>()), |(n, k, g, seed)| {
        let mut r = rng(seed);
        let z = random_zonotope(n, g, &mut r);
        let l = uniform_matrix(k, n, -2.0, 2.0, &mut r);
        let lz = linear_map(&l, &z).unwrap();
        prop_assert_eq!(lz.dim(), k);
        let beta = random_beta(g, &mut r);
        let p = z.point_at(&beta).unwrap();
        prop_assert!(in_zonotope(&lz, &(&l * p), TOL));
        // image hull equals the bounding box of the mapped sign points
        let mapped: Vec<_> = sign_points(z.center(), z.generators()).iter().map(|v| &l * v).collect();
        let (lo, hi) = bounding_box(&mapped);
        let h = lz.interval_hull();
        prop_assert!((h.lower() - lo).amax() <= TOL && (h.upper() - hi).amax() <= TOL);
        Ok(())
    })
}

pub fn minkowski_sum_contains_pairwise_sums(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=3, 0usize..=4, 0usize..=4, any::<u64>()), |(n, g1, g2, seed)| {
        let mut r = rng(seed);
        let z1 = random_zonotope(n, g1, &mut r);
        let z2 = random_zonotope(n, g2, &mut r);
        let s = minkowski_sum(&z1, &z2).unwrap();
        for _ in 0..5 {
            let p = z1.sample(&mut r) + z2.sample(&mut r);
            prop_assert!(in_zonotope(&s, &p, TOL));
        }
        // extreme points of the sum are sums of extreme points
        let pts: Vec<_> = sign_points(z1.center(), z1.generators())
            .iter()
            .flat_map(|a| sign_points(z2.center(), z2.generators()).into_iter().map(move |b| a + b))
            .collect();
        let (lo, hi) = bounding_box(&pts);
        let h = s.interval_hull();
        prop_assert!((h.lower() - lo).amax() <= TOL && (h.upper() - hi).amax() <= TOL);
        Ok(())
    })
}

pub fn minkowski_difference_contains_pairwise_differences(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=3, 0usize..=4, 0usize..=4, any::<u64>()), |(n, g1, g2, seed)| {
        let mut r = rng(seed);
        let z1 = random_zonotope(n, g1, &mut r);
        let z2 = random_zonotope(n, g2, &mut r);
        let d = z1.minkowski_difference(&z2).unwrap();
        for _ in 0..5 {
            let p = z1.sample(&mut r) - z2.sample(&mut r);
            prop_assert!(in_zonotope(&d, &p, TOL));
        }
        Ok(())
    })
}

pub fn cartesian_product_contains_stacked_points(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=2, 1usize..=1, 0usize..=3, 0usize..=3, any::<u64>()), |(n1, n2, g1, g2, seed)| {
        let mut r = rng(seed);
        let z1 = random_zonotope(n1, g1, &mut r);
        let z2 = random_zonotope(n2, g2, &mut r);
        let c = cartesian_product(&z1, &z2);
        prop_assert_eq!(c.dim(), n1 + n2);
        let (p1, p2) = (z1.sample(&mut r), z2.sample(&mut r));
        let stacked = DVector::from_iterator(n1 + n2, p1.iter().chain(p2.iter()).copied());
        prop_assert!(in_zonotope(&c, &stacked, TOL));
        prop_assert!(hull_matches(&c));
        Ok(())
    })
}

pub fn order_reduction_encloses_every_vertex(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=3, 0usize..=9, 0usize..=6, any::<u64>()), |(n, g, extra, seed)| {
        let mut r = rng(seed);
        let z = random_zonotope(n, g, &mut r);
        let cap = n + extra;
        let red = z.reduce_order(cap).unwrap();
        prop_assert!(red.num_generators() <= cap);
        prop_assert_eq!(red.center(), z.center());
        let scale = 1.0 + z.hull_radius().amax();
        for v in sign_points(z.center(), z.generators()) {
            prop_assert!(support_violation(red.center(), red.generators(), &v) <= TOL * scale);
        }
        Ok(())
    })
}

pub fn box_containment_agrees_with_vertices(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=3, 0usize..=6, any::<u64>()), |(n, g, seed)| {
        let mut r = rng(seed);
        let z = random_zonotope(n, g, &mut r);
        let lo: Vec<f64> = (0..n).map(|_| r.random_range(-12.0..0.0)).collect();
        let hi: Vec<f64> = (0..n).map(|_| r.random_range(0.0..12.0)).collect();
        let b = IntervalBox::from_slices(&lo, &hi).unwrap();
        let all_in = sign_points(z.center(), z.generators()).iter().all(|v| b.contains_point(v));
        prop_assert_eq!(box_contains(&b, &z).unwrap(), all_in);
        Ok(())
    })
}

pub fn disjointness_verdict_is_sound(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=3, 0usize..=5, any::<u64>()), |(n, g, seed)| {
        let mut r = rng(seed);
        let z = random_zonotope(n, g, &mut r);
        let c: Vec<f64> = (0..n).map(|_| r.random_range(-8.0..8.0)).collect();
        let lo: Vec<f64> = c.iter().map(|v| v - r.random_range(0.1..3.0)).collect();
        let hi: Vec<f64> = c.iter().map(|v| v + r.random_range(0.1..3.0)).collect();
        let b = IntervalBox::from_slices(&lo, &hi).unwrap();
        let (vlo, vhi) = bounding_box(&sign_points(z.center(), z.generators()));
        let hulls_meet = (0..n).all(|i| vlo[i] <= b.upper()[i] && b.lower()[i] <= vhi[i]);
        let verdict = z.may_intersect_box(&b).unwrap();
        prop_assert_eq!(verdict, hulls_meet);
        if !verdict {
            for _ in 0..50 {
                prop_assert!(!b.contains_point(&z.sample(&mut r)));
            }
        }
        Ok(())
    })
}

pub fn matrix_zonotope_product_contains_products(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=3, 1usize..=3, 0usize..=3, 0usize..=3, any::<u64>()), |(k, n, gm, gz, seed)| {
        let mut r = rng(seed);
        let center = uniform_matrix(k, n, -2.0, 2.0, &mut r);
        let gens: Vec<DMatrix<f64>> = (0..gm).map(|_| uniform_matrix(k, n, -1.0, 1.0, &mut r)).collect();
        let mz = MatrixZonotope::new(center, gens).unwrap();
        let z = random_zonotope(n, gz, &mut r);
        let prod = mz.mul_zono(&z).unwrap();
        for _ in 0..5 {
            let x = mz.sample(&mut r);
            let p = z.sample(&mut r);
            prop_assert!(in_zonotope(&prod, &(&x * &p), TOL * 10.0));
        }
        // extreme matrices times extreme points stay inside too
        let mut stacked = DMatrix::zeros(k * n, gm);
        for (j, g) in mz.generators().iter().enumerate() {
            stacked.set_column(j, &super::vec_of(g));
        }
        for xv in sign_points(&super::vec_of(mz.center()), &stacked) {
            let x = DMatrix::from_column_slice(k, n, xv.as_slice());
            for p in sign_points(z.center(), z.generators()) {
                prop_assert!(in_zonotope(&prod, &(&x * &p), TOL * 10.0));
            }
        }
        Ok(())
    })
}

pub fn matrix_zonotope_hull_is_elementwise_extreme(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=3, 1usize..=3, 0usize..=5, any::<u64>()), |(k, n, gm, seed)| {
        let mut r = rng(seed);
        let center = uniform_matrix(k, n, -2.0, 2.0, &mut r);
        let gens: Vec<DMatrix<f64>> = (0..gm).map(|_| uniform_matrix(k, n, -1.0, 1.0, &mut r)).collect();
        let mz = MatrixZonotope::new(center.clone(), gens.clone()).unwrap();
        let hull = mz.interval_hull();
        for mask in 0..(1usize << gm) {
            let mut x = center.clone();
            for (j, g) in gens.iter().enumerate() {
                x += g * if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
            }
            prop_assert!(hull.contains(&x, TOL));
        }
        for i in 0..k {
            for j in 0..n {
                let best = (0..(1usize << gm)).map(|mask| {
                    center[(i, j)] + gens.iter().enumerate().map(|(q, g)| g[(i, j)] * if mask >> q & 1 == 1 { 1.0 } else { -1.0 }).sum::<f64>()
                }).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!((hull.upper[(i, j)] - best).abs() <= TOL);
            }
        }
        Ok(())
    })
}

pub fn matrix_zonotope_times_matrix(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=3, 1usize..=3, 1usize..=3, 0usize..=4, any::<u64>()), |(k, n, p, gm, seed)| {
        let mut r = rng(seed);
        let center = uniform_matrix(k, n, -2.0, 2.0, &mut r);
        let gens: Vec<DMatrix<f64>> = (0..gm).map(|_| uniform_matrix(k, n, -1.0, 1.0, &mut r)).collect();
        let mz = MatrixZonotope::new(center, gens).unwrap();
        let pm = uniform_matrix(n, p, -2.0, 2.0, &mut r);
        let prod = mz.mul_matrix(&pm).unwrap();
        let beta: Vec<f64> = (0..gm).map(|_| r.random_range(-1.0..=1.0)).collect();
        let expect = mz.matrix_at(&beta).unwrap() * &pm;
        let got = prod.matrix_at(&beta).unwrap();
        prop_assert!((expect - got).amax() <= TOL);
        Ok(())
    })
}

/// The support oracle itself: pushing an extreme point slightly outward
/// must register as a violation.
pub fn support_oracle_rejects_points_just_outside(cases: u32) -> Result<(), String> {
    check(cases, (1usize..=3, 1usize..=6, any::<u64>()), |(n, g, seed)| {
        let mut r = rng(seed);
        let z = random_zonotope(n, g, &mut r);
        let h = z.hull_radius();
        prop_assume!(h[0] > 1e-3);
        // vertex maximizing the first coordinate
        let signs = DVector::from_iterator(g, z.generators().row(0).iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }));
        let v = z.point_at(&signs).unwrap();
        let out = z.center() + (v - z.center()) * 1.001;
        prop_assert!(support_violation(z.center(), z.generators(), &out) > 0.0);
        Ok(())
    })
}

/// Every property with its name, in a fixed order.
pub const ALL: &[(&str, fn(u32) -> Result<(), String>)] = &[
    ("interval_hull_is_vertex_bounding_box", interval_hull_is_vertex_bounding_box),
    ("monte_carlo_samples_stay_in_set_and_hull", monte_carlo_samples_stay_in_set_and_hull),
    ("linear_map_images_points_and_hull", linear_map_images_points_and_hull),
    ("minkowski_sum_contains_pairwise_sums", minkowski_sum_contains_pairwise_sums),
    ("minkowski_difference_contains_pairwise_differences", minkowski_difference_contains_pairwise_differences),
    ("cartesian_product_contains_stacked_points", cartesian_product_contains_stacked_points),
    ("order_reduction_encloses_every_vertex", order_reduction_encloses_every_vertex),
    ("box_containment_agrees_with_vertices", box_containment_agrees_with_vertices),
    ("disjointness_verdict_is_sound", disjointness_verdict_is_sound),
    ("matrix_zonotope_product_contains_products", matrix_zonotope_product_contains_products),
    ("matrix_zonotope_hull_is_elementwise_extreme", matrix_zonotope_hull_is_elementwise_extreme),
    ("matrix_zonotope_times_matrix", matrix_zonotope_times_matrix),
    ("support_oracle_rejects_points_just_outside", support_oracle_rejects_points_just_outside),
];
