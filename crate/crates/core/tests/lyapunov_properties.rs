mod common;

use common::*;
use equidim::lyapunov::{cocycle_spectrum, log_integrability, sum_exponents_from_jacobian, LyapunovEstimate};
use equidim::sampler::{sample_backward_cloud, SampleCloud};
use equidim::{catalog, MapModel};

const COUNT: usize = 4000;

fn setup(id: &str) -> (MapModel, SampleCloud) {
    let map = catalog::load(id).unwrap();
    let cloud = sample_backward_cloud(&map, &map.default_seed().unwrap(), 30, COUNT, SEED).unwrap();
    (map, cloud)
}

fn z(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    (a - b).abs() / (se_a * se_a + se_b * se_b).sqrt().max(STDERR_FLOOR)
}

#[test]
fn second_iterate_doubles_the_spectrum() {
    for id in catalog::ids() {
        let (map, cloud) = setup(id);
        let f2 = map.iterate(2).unwrap();
        let e2 = cocycle_spectrum(&f2, &cloud, 10).unwrap();
        let e1 = cocycle_spectrum(&map, &cloud, 20).unwrap();
        for i in 0..map.dim() {
            let s = z(e2.chi[i], e2.stderr[i], 2.0 * e1.chi[i], 2.0 * e1.stderr[i]);
            assert!(s <= 3.0, "{id}: chi_{i} of f^2 {:.5} vs 2 x {:.5} ({s:.2} sigma)", e2.chi[i], e1.chi[i]);
        }
    }
}

#[test]
fn exponent_sum_matches_jacobian_average() {
    for id in catalog::ids() {
        let (map, cloud) = setup(id);
        let est = cocycle_spectrum(&map, &cloud, 20).unwrap();
        let jac = sum_exponents_from_jacobian(&map, &cloud).unwrap();
        let sum: f64 = est.chi.iter().sum();
        let s = z(sum, est.sigma_stderr, jac.sigma, jac.stderr);
        assert!(s <= 3.0, "{id}: sum {sum:.5} vs jacobian {:.5} ({s:.2} sigma)", jac.sigma);
    }
}

fn agree(a: &LyapunovEstimate, b: &LyapunovEstimate) -> f64 {
    (0..a.chi.len())
        .map(|i| z(a.chi[i], a.stderr[i], b.chi[i], b.stderr[i]))
        .fold(0.0, f64::max)
}

#[test]
fn block_length_doubling_agrees() {
    for id in catalog::ids() {
        let (map, cloud) = setup(id);
        let short = cocycle_spectrum(&map, &cloud, 10).unwrap();
        let long = cocycle_spectrum(&map, &cloud, 20).unwrap();
        let s = agree(&short, &long);
        assert!(s <= 3.0, "{id}: N=10 {:?} vs N=20 {:?} ({s:.2} sigma)", short.chi, long.chi);
    }
}

#[test]
fn log_distance_to_exceptional_set_is_integrable() {
    for id in catalog::ids() {
        let (map, cloud) = setup(id);
        let check = log_integrability(&map, &cloud);
        assert!(check.finite && check.stable, "{id}: {check:?}");
    }
}

#[test]
fn exponents_are_independent_of_worker_count() {
    let (map, cloud) = setup("lattes4");
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let parallel = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = serial.install(|| cocycle_spectrum(&map, &cloud, 20).unwrap());
    let b = parallel.install(|| cocycle_spectrum(&map, &cloud, 20).unwrap());
    for (x, y) in a.chi.iter().zip(&b.chi) {
        assert!((x - y).abs() <= 1e-12);
    }
}
