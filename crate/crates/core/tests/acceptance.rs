//! One line per acceptance criterion. Run with `--nocapture` to see the
//! table when everything passes.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use equidim::branches::{certify_orbits, summarize_certificates, Exponents};
use equidim::dimension::{
    aggregate_dimension, minoration_check, verify_theorem, BoundsVerdict, DimensionEstimate, DimensionMethod,
    RadiiSchedule,
};
use equidim::lyapunov::{cocycle_spectrum, exponent_inequality_check, LyapunovEstimate};
use equidim::report::{read_cloud_csv, run_experiment, ExperimentConfig, StageName, CLOUD_CSV, TIMINGS_JSON};
use equidim::sampler::{orbits_from_cloud, sample_backward_cloud, sample_backward_orbit, SampleCloud};
use equidim::{catalog, MapModel, ProjectivePoint, Result};

const DEPTH: usize = 30;
const COUNT: usize = 10_000;
const BLOCK: usize = 20;
const CENTERS: usize = 500;
const EPS: f64 = 0.05;
const LN2: f64 = std::f64::consts::LN_2;

struct Run {
    map: MapModel,
    cloud: SampleCloud,
    lyap: LyapunovEstimate,
    dims: Vec<Result<DimensionEstimate>>,
    verdict: Result<BoundsVerdict>,
    elapsed: Duration,
}

impl Run {
    fn local(&self) -> &DimensionEstimate {
        self.dims[0].as_ref().expect("local slope estimate")
    }

    fn verdict_pass(&self) -> bool {
        self.verdict.as_ref().is_ok_and(|v| v.pass())
    }

    fn verdict_text(&self) -> String {
        match &self.verdict {
            Ok(v) => format!(
                "bounds ({:.4}, {:.4}) slack {:.4} {}",
                v.lower,
                v.upper,
                v.slack,
                if v.pass() { "pass" } else { "fail" }
            ),
            Err(e) => format!("verdict error: {e}"),
        }
    }
}

fn run_map(id: &str, with_dimension: bool) -> Run {
    let start = Instant::now();
    let map = catalog::load(id).unwrap();
    let seed = map.default_seed().unwrap();
    let cloud = sample_backward_cloud(&map, &seed, DEPTH, COUNT, SEED).unwrap();
    let lyap = cocycle_spectrum(&map, &cloud, BLOCK).unwrap();
    let (dims, verdict) = if with_dimension {
        let schedule = RadiiSchedule::for_cloud(&cloud);
        let dims: Vec<_> = DimensionMethod::ALL
            .iter()
            .map(|&m| aggregate_dimension(&cloud, CENTERS, &schedule, m))
            .collect();
        let verdict = match &dims[0] {
            Ok(d) => verify_theorem(&map, &lyap, d, None),
            Err(e) => Err(equidim::Error::InvalidArgument(e.to_string())),
        };
        (dims, verdict)
    } else {
        (Vec::new(), Err(equidim::Error::InvalidArgument("not run".into())))
    };
    Run {
        map,
        cloud,
        lyap,
        dims,
        verdict,
        elapsed: start.elapsed(),
    }
}

fn rel_err(value: f64, target: f64) -> f64 {
    (value - target).abs() / target.abs()
}

/// Range of the bounds over the box where every exponent is within `rel` of
/// its exact value `chi_exact` (with `Σ = χ` on P^1).
fn bounds_range(k: usize, d_t: u64, chi_exact: f64, rel: f64) -> ((f64, f64), (f64, f64)) {
    let log_d = (d_t as f64).ln();
    let sigma_exact = k as f64 * chi_exact;
    let mut lower = (f64::INFINITY, f64::NEG_INFINITY);
    let mut upper = (f64::INFINITY, f64::NEG_INFINITY);
    for sc in [-1.0, 1.0] {
        for ss in [-1.0, 1.0] {
            let chi = chi_exact * (1.0 + sc * rel);
            let sigma = if k == 1 { chi } else { sigma_exact * (1.0 + ss * rel) };
            let lo = log_d / chi;
            let up = 2.0 * k as f64 - (2.0 * sigma - log_d) / chi;
            lower = (lower.0.min(lo), lower.1.max(lo));
            upper = (upper.0.min(up), upper.1.max(up));
        }
    }
    (lower, upper)
}

fn bounds_within(v: &Result<BoundsVerdict>, range: ((f64, f64), (f64, f64))) -> bool {
    v.as_ref().is_ok_and(|v| {
        let ((l0, l1), (u0, u1)) = range;
        (l0..=l1).contains(&v.lower) && (u0..=u1).contains(&v.upper)
    })
}

fn dim_text(d: &Result<DimensionEstimate>) -> String {
    match d {
        Ok(d) => format!("{:.4} [{:.4}, {:.4}]", d.dim_hat, d.ci.0, d.ci.1),
        Err(e) => format!("error: {e}"),
    }
}

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

fn criterion_1(run: &Run) -> Outcome {
    let chi = run.lyap.chi[0];
    let sigma = run.lyap.sigma;
    let dim = run.local().dim_hat;
    let range = bounds_range(1, 2, LN2, 0.02);
    let pass = rel_err(chi, LN2) <= 0.02
        && rel_err(sigma, LN2) <= 0.02
        && (dim - 1.0).abs() <= 0.10
        && bounds_within(&run.verdict, range)
        && run.verdict_pass()
        && run.elapsed < Duration::from_secs(60);
    Outcome {
        id: 1,
        pass,
        detail: format!(
            "z2: chi {chi:.5} sigma {sigma:.5} dim {} {} runtime {:.1}s",
            dim_text(&run.dims[0]),
            run.verdict_text(),
            run.elapsed.as_secs_f64()
        ),
    }
}

fn criterion_2(run: &Run) -> Outcome {
    let chi = run.lyap.chi[0];
    let dim = run.local().dim_hat;
    let xs: Vec<f64> = run
        .cloud
        .points
        .iter()
        .map(|p| p.p1_value().expect("finite point").re)
        .collect();
    let p = arcsine_p_value(&xs, 20);
    let range = bounds_range(1, 2, LN2, 0.02);
    let pass = rel_err(chi, LN2) <= 0.02
        && (dim - 1.0).abs() <= 0.10
        && bounds_within(&run.verdict, range)
        && run.verdict_pass()
        && p > 0.01;
    Outcome {
        id: 2,
        pass,
        detail: format!(
            "chebyshev: chi {chi:.5} dim {} {} arcsine chi2 p {p:.3}",
            dim_text(&run.dims[0]),
            run.verdict_text()
        ),
    }
}

fn criterion_3(run: &Run) -> Outcome {
    let chi = run.lyap.chi[0];
    let dim = run.local().dim_hat;
    let target = 0.5 * 4f64.ln();
    let range = bounds_range(1, 4, target, 0.03);
    let pass =
        rel_err(chi, target) <= 0.03 && (dim - 2.0).abs() <= 0.15 && bounds_within(&run.verdict, range) && run.verdict_pass();
    Outcome {
        id: 3,
        pass,
        detail: format!("lattes4: chi {chi:.5} dim {} {}", dim_text(&run.dims[0]), run.verdict_text()),
    }
}

fn criterion_4(run: &Run) -> Outcome {
    let chi = &run.lyap.chi;
    let sigma = run.lyap.sigma;
    let dim = run.local().dim_hat;
    let d_t_numeric = run.map.check_degrees().map(|r| r.d_t_numeric).unwrap_or(0);
    let range = bounds_range(2, 4, LN2, 0.03);
    let pass = chi.iter().all(|&c| rel_err(c, LN2) <= 0.03)
        && rel_err(sigma, 2.0 * LN2) <= 0.03
        && (dim - 2.0).abs() <= 0.2
        && bounds_within(&run.verdict, range)
        && run.verdict_pass()
        && d_t_numeric == 4;
    Outcome {
        id: 4,
        pass,
        detail: format!(
            "power_p2: chi ({:.5}, {:.5}) sigma {sigma:.5} dim {} {} d_t_numeric {d_t_numeric}",
            chi[0],
            chi[1],
            dim_text(&run.dims[0]),
            run.verdict_text()
        ),
    }
}

fn criterion_5(run: &Run) -> Outcome {
    let chi = run.lyap.chi[0];
    let dim = run.local().dim_hat;
    let predicted = LN2 / chi;
    Outcome {
        id: 5,
        pass: (dim - predicted).abs() <= 0.1,
        detail: format!("perturbed_quadratic: dim {dim:.4} vs log 2 / chi = {predicted:.4}"),
    }
}

fn criterion_6(runs: &BTreeMap<&str, Run>) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (id, run) in runs {
        let r = exponent_inequality_check(&run.map, &run.lyap);
        pass &= r.chi1_ok && r.two_sigma_ok;
        parts.push(format!("{id} {:+.4}/{:+.4}", r.two_sigma_margin, r.chi1_margin));
    }
    Outcome {
        id: 6,
        pass,
        detail: format!("2Sigma - log d_t / chi_1 - bound: {}", parts.join(", ")),
    }
}

fn criterion_7(run: &Run) -> Outcome {
    const ORBITS: usize = 100;
    const TARGET: usize = 20;
    let (orbits, skipped) = orbits_from_cloud(&run.map, &run.cloud, ORBITS, TARGET, SEED).unwrap();
    let results = certify_orbits(&run.map, &orbits, EPS, &Exponents::from(&run.lyap));
    let s = summarize_certificates(run.map.id(), EPS, TARGET, &results);
    let fraction = s.certified as f64 / ORBITS as f64;
    let pass = fraction >= 0.95 && s.slow_decay_violations == 0 && s.max_identity_error <= 1e-7;
    Outcome {
        id: 7,
        pass,
        detail: format!(
            "lattes4: {}/{ORBITS} certified to depth {TARGET} (skipped {skipped}, rejected {}), slow-decay violations {}, max identity error {:.1e}",
            s.certified, s.rejected, s.slow_decay_violations, s.max_identity_error
        ),
    }
}

fn criterion_8(run: &Run) -> Outcome {
    const WANTED: usize = 50;
    const N_MAX: usize = 10;
    let exps = Exponents::from(&run.lyap);
    let (orbits, _) = orbits_from_cloud(&run.map, &run.cloud, 2 * WANTED, 20, SEED).unwrap();
    let results = certify_orbits(&run.map, &orbits, EPS, &exps);
    let s = summarize_certificates(run.map.id(), EPS, 20, &results);
    let certified: Vec<_> = orbits
        .iter()
        .zip(&results)
        .filter(|(_, r)| r.as_ref().is_ok_and(|c| c.certified_to(20)))
        .map(|(o, _)| o.clone())
        .take(WANTED)
        .collect();
    // masses come from a cloud that does not contain the orbit base points
    let seed = run.map.default_seed().unwrap();
    let mass_cloud = sample_backward_cloud(&run.map, &seed, DEPTH, COUNT, SEED + 1).unwrap();
    let check = minoration_check(&run.map, &mass_cloud, &certified, &exps, EPS, s.rho_hat_median, N_MAX);
    match check {
        Ok(c) => {
            let worst = c
                .rows
                .iter()
                .map(|r| r.max_mass / r.tolerance)
                .fold(0.0, f64::max);
            Outcome {
                id: 8,
                pass: certified.len() == WANTED && c.pass,
                detail: format!(
                    "z2: {} certified orbits, sigma_hat {:.3e}, n <= {N_MAX}, worst mass/tolerance {worst:.3}",
                    certified.len(),
                    c.sigma_hat
                ),
            }
        }
        Err(e) => Outcome {
            id: 8,
            pass: false,
            detail: format!("z2: minoration error: {e}"),
        },
    }
}

fn property_preimages(runs: &BTreeMap<&str, Run>) -> (bool, String) {
    let mut rng = rng(1);
    let mut worst = 0.0f64;
    let mut counts_ok = true;
    for run in runs.values() {
        for _ in 0..100 {
            let y = ProjectivePoint::random(run.map.dim(), &mut rng);
            let (count, residual) = preimage_exactness(&run.map, &y);
            counts_ok &= count == run.map.topological_degree();
            worst = worst.max(residual);
        }
    }
    (counts_ok && worst <= 1e-9, format!("preimages counts ok {counts_ok} residual {worst:.1e}"))
}

fn property_derivative(runs: &BTreeMap<&str, Run>) -> (bool, String) {
    let mut rng = rng(2);
    let mut worst = 0.0f64;
    for run in runs.values() {
        for _ in 0..200 {
            let x = ProjectivePoint::random(run.map.dim(), &mut rng);
            worst = worst.max(finite_difference_error(&run.map, &x, 1e-6, &mut rng));
        }
    }
    (worst <= 1e-5, format!("finite difference {worst:.1e}"))
}

fn property_chain_rule(runs: &BTreeMap<&str, Run>) -> (bool, String) {
    let mut rng = rng(3);
    let mut worst = 0.0f64;
    for run in runs.values() {
        let f2 = run.map.iterate(2).unwrap();
        for _ in 0..100 {
            let x = ProjectivePoint::random(run.map.dim(), &mut rng);
            worst = worst.max(chain_rule_error(&run.map, &f2, &x));
        }
    }
    (worst <= 1e-8, format!("chain rule {worst:.1e}"))
}

/// `f²` at block length `N` against `f` at `2N`, which cover the same orbit
/// segments.
fn property_doubling(runs: &BTreeMap<&str, Run>) -> (bool, String) {
    let mut worst = 0.0f64;
    for run in runs.values() {
        let f2 = run.map.iterate(2).unwrap();
        let e2 = cocycle_spectrum(&f2, &run.cloud, BLOCK / 2).unwrap();
        let e1 = &run.lyap;
        for i in 0..e1.chi.len() {
            let se = (e2.stderr[i].powi(2) + (2.0 * e1.stderr[i]).powi(2)).sqrt();
            let z = (e2.chi[i] - 2.0 * e1.chi[i]).abs() / se.max(STDERR_FLOOR);
            worst = worst.max(z);
        }
    }
    (worst <= 3.0, format!("doubling {worst:.2} sigma"))
}

fn property_cross_method(runs: &BTreeMap<&str, Run>) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for id in KNOWN_ANSWER_MAPS {
        let run = &runs[id];
        let dims: Vec<f64> = run.dims.iter().filter_map(|d| d.as_ref().ok().map(|d| d.dim_hat)).collect();
        let spread = if dims.len() == DimensionMethod::ALL.len() {
            dims.iter().copied().fold(f64::NEG_INFINITY, f64::max) - dims.iter().copied().fold(f64::INFINITY, f64::min)
        } else {
            f64::INFINITY
        };
        pass &= spread <= 0.25;
        parts.push(format!(
            "{id} {spread:.3} ({})",
            run.dims.iter().map(dim_text).collect::<Vec<_>>().join(" / ")
        ));
    }
    (pass, format!("cross-method spread {}", parts.join(", ")))
}

fn artifact_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().is_some_and(|n| n != TIMINGS_JSON))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn property_determinism() -> (bool, String) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let mut a = ExperimentConfig::new("z2", SEED, tmp.path().join("run"));
    a.count = 2000;
    a.n_orbits = 10;
    a.n_centers = 100;
    let fa = pool.install(|| {
        run_experiment(&a).unwrap();
        artifact_bytes(&a.output_dir)
    });
    let fb = pool.install(|| {
        run_experiment(&a).unwrap();
        artifact_bytes(&a.output_dir)
    });
    let identical = !fa.is_empty() && fa == fb;

    let map = catalog::load("z2").unwrap();
    let seed = map.default_seed().unwrap();
    let stored = read_cloud_csv(&a.output_dir.join(CLOUD_CSV)).unwrap();
    let replayed = sample_backward_cloud(&map, &seed, a.depth, a.count, a.rng_seed).unwrap();
    let cloud_err = stored
        .iter()
        .zip(&replayed.points)
        .map(|(p, q)| p.chordal(q))
        .fold(0.0, f64::max);
    let (orbits, _) = orbits_from_cloud(&map, &replayed, a.n_orbits, a.orbit_depth, a.rng_seed).unwrap();
    let orbit_err = orbits
        .iter()
        .map(|o| {
            let r = sample_backward_orbit(&map, &o.points[0], o.depth(), o.rng_seed, o.index).unwrap();
            o.points.iter().zip(&r.points).map(|(p, q)| p.chordal(q)).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let stages_ok = a.stages.contains(&StageName::Verify);
    let pass = identical && stored.len() == a.count && cloud_err <= 1e-12 && orbit_err <= 1e-12 && stages_ok;
    (
        pass,
        format!(
            "determinism {} artifacts identical {identical}, replay cloud {cloud_err:.1e} orbits {orbit_err:.1e}",
            fa.len()
        ),
    )
}

fn criterion_9(runs: &BTreeMap<&str, Run>) -> Outcome {
    let checks = [
        property_preimages(runs),
        property_derivative(runs),
        property_chain_rule(runs),
        property_doubling(runs),
        property_cross_method(runs),
        property_determinism(),
    ];
    let pass = checks.iter().all(|(ok, _)| *ok);
    let detail = checks
        .iter()
        .map(|(ok, text)| format!("[{}] {text}", if *ok { "ok" } else { "FAIL" }))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { id: 9, pass, detail }
}

#[test]
fn acceptance() {
    let mut runs = BTreeMap::new();
    for id in catalog::ids() {
        runs.insert(id, run_map(id, KNOWN_ANSWER_MAPS.contains(&id)));
    }
    let outcomes = [
        criterion_1(&runs["z2"]),
        criterion_2(&runs["chebyshev"]),
        criterion_3(&runs["lattes4"]),
        criterion_4(&runs["power_p2"]),
        criterion_5(&runs["perturbed_quadratic"]),
        criterion_6(&runs),
        criterion_7(&runs["lattes4"]),
        criterion_8(&runs["z2"]),
        criterion_9(&runs),
    ];
    for o in &outcomes {
        println!("criterion {} {}: {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
