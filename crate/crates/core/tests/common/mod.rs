#![allow(dead_code)]

use equidim::map_model::MapModel;
use equidim::projective::{vec_norm, ProjectivePoint};
use equidim::tangent::complement_basis;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Seed shared by every statistical test, fixed before any result was seen.
pub const SEED: u64 = 20260101;

pub const KNOWN_ANSWER_MAPS: [&str; 5] = ["z2", "chebyshev", "lattes4", "power_p2", "perturbed_quadratic"];

/// Batch-means errors vanish on maps with constant expansion; below this the
/// comparison is against rounding rather than sampling noise.
pub const STDERR_FLOOR: f64 = 1e-6;

pub fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(SEED ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Relative disagreement between the chordal stretch of a central step of
/// size `h` along a random unit tangent direction and the norm of the
/// differential applied to that direction.
pub fn finite_difference_error<R: Rng>(map: &MapModel, x: &ProjectivePoint, h: f64, rng: &mut R) -> f64 {
    let k = x.dim();
    let u = x.unit();
    let basis = complement_basis(&u[..=k]);
    let mut dir: Vec<Complex64> = (0..k).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let n = vec_norm(&dir);
    dir.iter_mut().for_each(|c| *c /= n);
    let step = |s: f64| {
        let mut moved = u;
        for (b, c) in basis.iter().zip(&dir) {
            for i in 0..=k {
                moved[i] += b[i] * c * s;
            }
        }
        ProjectivePoint::new(&moved[..=k]).unwrap()
    };
    let (plus, minus) = (step(h), step(-h));
    let stretch = map.evaluate(&plus).unwrap().chordal(&map.evaluate(&minus).unwrap()) / plus.chordal(&minus);
    let d = map.differential(x).unwrap();
    let predicted = (0..k)
        .map(|i| (0..k).map(|j| d.at(i, j) * dir[j]).sum::<Complex64>().norm_sqr())
        .sum::<f64>()
        .sqrt();
    (stretch - predicted).abs() / predicted
}

/// Sum of multiplicities and largest chordal residual `dist(f(p), y)`.
pub fn preimage_exactness(map: &MapModel, y: &ProjectivePoint) -> (u64, f64) {
    let pre = map.preimages(y).unwrap();
    let count = pre.iter().map(|(_, m)| *m as u64).sum();
    let residual = pre
        .iter()
        .map(|(p, _)| map.evaluate(p).unwrap().chordal(y))
        .fold(0.0, f64::max);
    (count, residual)
}

/// Relative error of `Jac f²(x) = Jac f(x) · Jac f(f(x))`.
pub fn chain_rule_error(map: &MapModel, f2: &MapModel, x: &ProjectivePoint) -> f64 {
    let fx = map.evaluate(x).unwrap();
    let lhs = f2.fs_jacobian(x);
    let rhs = map.fs_jacobian(x) * map.fs_jacobian(&fx);
    (lhs - rhs).abs() / rhs
}

/// p-value of Pearson's χ² test of real points in [-2, 2] against the arcsine
/// law `1 / (π √(4 - x²))`, using `bins` equiprobable bins.
pub fn arcsine_p_value(xs: &[f64], bins: usize) -> f64 {
    let cdf = |x: f64| 0.5 + (x / 2.0).clamp(-1.0, 1.0).asin() / std::f64::consts::PI;
    let mut observed = vec![0usize; bins];
    for &x in xs {
        let b = ((cdf(x) * bins as f64) as usize).min(bins - 1);
        observed[b] += 1;
    }
    let expected = xs.len() as f64 / bins as f64;
    let stat: f64 = observed.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(stat)
}

/// Ranks with ties averaged.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64;
        for &t in &idx[i..=j] {
            r[t] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
