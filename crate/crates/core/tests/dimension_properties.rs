mod common;

use common::*;
use equidim::dimension::{
    aggregate_dimension, local_dimension_at, theorem_bounds, verify_theorem, DimensionMethod, RadiiSchedule,
};
use equidim::lyapunov::cocycle_spectrum;
use equidim::sampler::{sample_backward_cloud, SampleCloud};
use equidim::{catalog, Error, ProjectivePoint};
use num_complex::Complex64;
use proptest::prelude::*;

fn cloud(id: &str, count: usize) -> SampleCloud {
    let map = catalog::load(id).unwrap();
    sample_backward_cloud(&map, &map.default_seed().unwrap(), 30, count, SEED).unwrap()
}

#[test]
fn young_defect_shrinks_to_zero_along_the_schedule() {
    let s = RadiiSchedule::for_diameter(1.0);
    let y = s.young_ratios();
    assert!(y.windows(2).all(|w| w[1] < w[0]));
    assert!(*y.last().unwrap() <= 0.05);
    let long = RadiiSchedule::new(s.rho0, s.h, 64).unwrap();
    assert!(*long.young_ratios().last().unwrap() < 0.02);
}

/// Enlarging the cloud 4x moves the estimate by less than its interval.
#[test]
fn estimate_is_stable_under_enlarging_the_cloud() {
    for id in KNOWN_ANSWER_MAPS {
        let large = cloud(id, 40_000);
        let mut small = large.clone();
        small.points.truncate(10_000);
        let schedule = RadiiSchedule::for_cloud(&small);
        let a = aggregate_dimension(&small, 500, &schedule, DimensionMethod::LocalSlope).unwrap();
        let b = aggregate_dimension(&large, 500, &schedule, DimensionMethod::LocalSlope).unwrap();
        let change = (a.dim_hat - b.dim_hat).abs();
        assert!(
            change < a.ci_half_width(),
            "{id}: {:.4} -> {:.4}, half-width {:.4}",
            a.dim_hat,
            b.dim_hat,
            a.ci_half_width()
        );
    }
}

#[test]
fn interval_contains_the_estimate() {
    let c = cloud("perturbed_quadratic", 4000);
    let schedule = RadiiSchedule::for_cloud(&c);
    for m in DimensionMethod::ALL {
        let d = aggregate_dimension(&c, 200, &schedule, m).unwrap();
        assert!(d.ci.0 <= d.dim_hat && d.dim_hat <= d.ci.1, "{m}: {:?} {}", d.ci, d.dim_hat);
        assert_eq!(d.method, m);
    }
}

#[test]
fn corrupted_dimension_fails_the_lower_bound() {
    let map = catalog::load("z2").unwrap();
    let c = cloud("z2", 4000);
    let lyap = cocycle_spectrum(&map, &c, 20).unwrap();
    let schedule = RadiiSchedule::for_cloud(&c);
    let mut d = aggregate_dimension(&c, 200, &schedule, DimensionMethod::LocalSlope).unwrap();
    assert!(verify_theorem(&map, &lyap, &d, None).unwrap().pass());
    d.dim_hat = 0.4;
    d.ci = (0.39, 0.41);
    let v = verify_theorem(&map, &lyap, &d, None).unwrap();
    assert!(!v.pass_lower && v.pass_upper);
}

#[test]
fn doubled_exponent_widens_the_bounds() {
    let b = theorem_bounds(1, 2, std::f64::consts::LN_2 * 2.0, std::f64::consts::LN_2 * 2.0, 0.0).unwrap();
    assert!((b.lower - 0.5).abs() < 1e-12 && (b.upper - 0.5).abs() < 1e-12);
    let b = theorem_bounds(2, 4, 2.0 * std::f64::consts::LN_2, 2.0 * std::f64::consts::LN_2, 0.0).unwrap();
    assert!((b.lower - 1.0).abs() < 1e-12 && (b.upper - 3.0).abs() < 1e-12);
}

#[test]
fn estimate_from_another_map_is_rejected() {
    let z2 = catalog::load("z2").unwrap();
    let cheb = cloud("chebyshev", 2000);
    let lyap = cocycle_spectrum(&catalog::load("chebyshev").unwrap(), &cheb, 20).unwrap();
    let schedule = RadiiSchedule::for_cloud(&cheb);
    let d = aggregate_dimension(&cheb, 100, &schedule, DimensionMethod::LocalSlope).unwrap();
    assert!(matches!(verify_theorem(&z2, &lyap, &d, None), Err(Error::InvalidArgument(_))));
}

fn circle_cloud(n: usize) -> SampleCloud {
    let points = (0..n)
        .map(|i| {
            let t = std::f64::consts::TAU * (i as f64 + 0.5) / n as f64;
            ProjectivePoint::p1(Complex64::from_polar(1.0, t))
        })
        .collect();
    SampleCloud {
        map_id: "circle".into(),
        points,
        depth: 0,
        seed_point: ProjectivePoint::p1(Complex64::new(1.0, 0.0)),
        rng_seed: 0,
        discarded: 0,
        attempted: n,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Arc length on the unit circle has local dimension 1 everywhere.
    #[test]
    fn circle_has_unit_local_dimension(t in 0.0..std::f64::consts::TAU) {
        let c = circle_cloud(4000);
        let x = ProjectivePoint::p1(Complex64::from_polar(1.0, t));
        let fit = local_dimension_at(&c, &x, &RadiiSchedule::for_cloud(&c)).unwrap();
        prop_assert!((fit.slope - 1.0).abs() < 0.02, "slope {}", fit.slope);
    }
}
