mod common;

use common::*;
use equidim::map_model::RESIDUAL_TOL;
use equidim::sampler::{ball_mass, orbits_from_cloud, push_forward, sample_backward_cloud, SampleCloud};
use equidim::{catalog, MapModel, ProjectivePoint};
use rand::Rng;

const DEPTH: usize = 30;
const COUNT: usize = 10_000;

fn cloud(map: &MapModel, seed: &ProjectivePoint, rng_seed: u64) -> SampleCloud {
    sample_backward_cloud(map, seed, DEPTH, COUNT, rng_seed).unwrap()
}

/// Difference of two ball masses in units of their combined binomial stderr.
fn z_score(p: f64, q: f64, n: usize) -> f64 {
    let se = ((p * (1.0 - p) + q * (1.0 - q)) / n as f64).sqrt();
    if se == 0.0 {
        if p == q {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (p - q).abs() / se
    }
}

/// Worst z-score over 20 balls centred at points of `a` with random radii.
fn worst_ball_z(a: &SampleCloud, b: &SampleCloud, tag: u64) -> f64 {
    let mut r = rng(tag);
    (0..20)
        .map(|_| {
            let center = a.points[r.random_range(0..a.count())];
            let radius = r.random_range(0.05..0.4);
            z_score(ball_mass(a, &center, radius), ball_mass(b, &center, radius), COUNT)
        })
        .fold(0.0, f64::max)
}

#[test]
fn cloud_is_invariant_under_push_forward() {
    for (i, id) in catalog::ids().enumerate() {
        let map = catalog::load(id).unwrap();
        let c = cloud(&map, &map.default_seed().unwrap(), SEED);
        let pushed = push_forward(&map, &c).unwrap();
        let z = worst_ball_z(&c, &pushed, 100 + i as u64);
        assert!(z <= 4.0, "{id}: ball masses differ by {z:.2} stderr");
    }
}

#[test]
fn cloud_does_not_depend_on_seed_point() {
    for (i, id) in catalog::ids().enumerate() {
        let map = catalog::load(id).unwrap();
        let a = cloud(&map, &map.default_seed().unwrap(), SEED);
        let other = ProjectivePoint::random(map.dim(), &mut rng(200 + i as u64));
        let b = cloud(&map, &other, SEED + 1);
        let z = worst_ball_z(&a, &b, 300 + i as u64);
        assert!(z <= 4.0, "{id}: ball masses differ by {z:.2} stderr");
    }
}

/// Cloud points whose image lands in a small ball away from 𝒥 split evenly
/// among the `d_t` preimage branches of the ball.
#[test]
fn preimage_branches_carry_equal_mass() {
    for (i, id) in catalog::ids().enumerate() {
        let map = catalog::load(id).unwrap();
        let d_t = map.topological_degree() as usize;
        let c = cloud(&map, &map.default_seed().unwrap(), SEED);
        let images: Vec<ProjectivePoint> = c.points.iter().map(|p| map.evaluate(p).unwrap()).collect();
        let mut r = rng(400 + i as u64);
        let mut tested = 0;
        for _ in 0..1000 {
            if tested == 5 {
                break;
            }
            let y = c.points[r.random_range(0..c.count())];
            let clearance = map.distance_to_j(&y);
            if clearance < 0.04 {
                continue;
            }
            let radius = 0.5 * clearance.min(0.3);
            let pre = map.preimages(&y).unwrap();
            assert!(pre.len() == d_t, "{id}: branches not distinct");
            let mut branch_counts = vec![0usize; d_t];
            for (x, fx) in c.points.iter().zip(&images) {
                if fx.chordal(&y) < radius {
                    let nearest = (0..d_t)
                        .min_by(|&a, &b| pre[a].0.chordal(x).total_cmp(&pre[b].0.chordal(x)))
                        .unwrap();
                    branch_counts[nearest] += 1;
                }
            }
            let inside: usize = branch_counts.iter().sum();
            if inside < 8 * d_t {
                continue;
            }
            let p = 1.0 / d_t as f64;
            let expected = inside as f64 * p;
            let se = (inside as f64 * p * (1.0 - p)).sqrt();
            for &k in &branch_counts {
                let z = (k as f64 - expected).abs() / se;
                assert!(z <= 4.0, "{id}: branch counts {branch_counts:?} ({z:.2} stderr)");
            }
            tested += 1;
        }
        assert_eq!(tested, 5, "{id}: too few well-populated balls away from the exceptional set");
    }
}

#[test]
fn orbit_residuals_are_small() {
    for id in catalog::ids() {
        let map = catalog::load(id).unwrap();
        let c = sample_backward_cloud(&map, &map.default_seed().unwrap(), DEPTH, 200, SEED).unwrap();
        let (orbits, _) = orbits_from_cloud(&map, &c, 50, 20, SEED).unwrap();
        assert!(!orbits.is_empty());
        for o in &orbits {
            assert_eq!(o.residuals.len(), o.depth());
            assert!(o.residuals.iter().all(|&r| r <= RESIDUAL_TOL), "{id}: residual above tolerance");
            for j in 0..o.depth() {
                let fx = map.evaluate(o.at(j + 1)).unwrap();
                assert!(fx.chordal(o.at(j)) <= RESIDUAL_TOL);
            }
        }
    }
}

#[test]
fn square_map_cloud_hugs_the_circle() {
    let map = catalog::load("z2").unwrap();
    let c = cloud(&map, &map.default_seed().unwrap(), SEED);
    let worst = c
        .points
        .iter()
        .map(|p| (p.p1_value().unwrap().norm() - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.01, "max ||z| - 1| = {worst:e}");
}

#[test]
fn chebyshev_cloud_follows_the_arcsine_law() {
    let map = catalog::load("chebyshev").unwrap();
    let seed = ProjectivePoint::p1(num_complex::Complex64::new(5.0, 0.0));
    let c = cloud(&map, &seed, SEED);
    let zs: Vec<_> = c.points.iter().map(|p| p.p1_value().unwrap()).collect();
    assert!(zs.iter().all(|z| z.im.abs() < 1e-3 && z.re.abs() < 2.0 + 1e-3));
    let xs: Vec<f64> = zs.iter().map(|z| z.re).collect();
    let p = arcsine_p_value(&xs, 20);
    assert!(p > 0.01, "chi-square p-value {p:.4}");
}
