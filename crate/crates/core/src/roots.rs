//! Univariate root finding: companion-matrix eigenvalues followed by a Newton
//! polish, and roots of binary forms on P^1 with multiplicities.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::projective::chordal_raw;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Roots closer than this (chordal) are merged into one root with multiplicity.
pub const CLUSTER_TOL: f64 = 1e-7;

/// Leading coefficients below this fraction of the largest one are treated as zero.
const LEADING_TOL: f64 = 1e-13;

/// QR sweeps per unit of degree before falling back to Aberth iteration.
const SCHUR_ITER_PER_DEGREE: usize = 10;

/// Evaluates `Σ c_i x^i` and its derivative by Horner's rule.
pub fn horner(coeffs: &[Complex64], x: Complex64) -> (Complex64, Complex64) {
    let mut p = ZERO;
    let mut dp = ZERO;
    for c in coeffs.iter().rev() {
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp)
}

/// All roots (with repetition) of `Σ coeffs[i] x^i`.
pub fn poly_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let scale = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::InvalidArgument("zero polynomial".into()));
    }
    let mut hi = coeffs.len() - 1;
    while hi > 0 && coeffs[hi].norm() <= LEADING_TOL * scale {
        hi -= 1;
    }
    let mut lo = 0;
    while lo < hi && coeffs[lo] == ZERO {
        lo += 1;
    }
    let mut roots = vec![ZERO; lo];
    let core = &coeffs[lo..=hi];
    let n = core.len() - 1;
    match n {
        0 => {}
        1 => roots.push(-core[0] / core[1]),
        2 => {
            let (a, b, c) = (core[2], core[1], core[0]);
            let disc = (b * b - a * c * 4.0).sqrt();
            // pick the sign that avoids cancellation
            let q = if (b.conj() * disc).re >= 0.0 {
                -(b + disc) * 0.5
            } else {
                -(b - disc) * 0.5
            };
            if q == ZERO {
                roots.push(ZERO);
                roots.push(ZERO);
            } else {
                roots.push(q / a);
                roots.push(c / q);
            }
        }
        _ => {
            let lead = core[n];
            let mut m = DMatrix::<Complex64>::zeros(n, n);
            for i in 1..n {
                m[(i, i - 1)] = ONE;
            }
            for i in 0..n {
                m[(i, n - 1)] = -core[i] / lead;
            }
            // QR stalls on the cyclic companion matrices of x^n - c; a fixed
            // unitary similarity removes that structure
            let q = householder(n);
            let m = &q * m * &q;
            match m.try_schur(f64::EPSILON, SCHUR_ITER_PER_DEGREE * n).and_then(|s| s.eigenvalues()) {
                Some(eig) => roots.extend(eig.iter().copied()),
                None => roots.extend(aberth(core)?),
            }
        }
    }
    for r in roots.iter_mut().skip(lo) {
        *r = newton_polish(core, *r);
    }
    Ok(roots)
}

/// The reflector `I - 2 v v* / |v|^2` for a fixed generic `v`.
fn householder(n: usize) -> DMatrix<Complex64> {
    let v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 / (1.0 + i as f64), 0.3 * i as f64))
        .collect();
    let vn: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { ONE } else { ZERO };
        id - v[i] * v[j].conj() * (2.0 / vn)
    })
}

/// Aberth–Ehrlich simultaneous iteration, started on a circle of the Cauchy
/// root-bound radius.
fn aberth(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = coeffs.len() - 1;
    let lead = coeffs[n].norm();
    let radius = 1.0 + coeffs[..n].iter().map(|c| c.norm() / lead).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(0.5 * radius, 0.4 + std::f64::consts::TAU * j as f64 / n as f64))
        .collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let (p, dp) = horner(coeffs, z[i]);
            if p == ZERO {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..n).filter(|&j| j != i).map(|j| ONE / (z[i] - z[j])).sum();
            let step = ratio / (ONE - ratio * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                z[i] -= step;
                moved = moved.max(step.norm() / (1.0 + z[i].norm()));
            }
        }
        if moved < 1e-12 {
            break;
        }
    }
    if z.iter().any(|r| !r.re.is_finite() || !r.im.is_finite()) {
        return Err(Error::RootSolverFailure { residual: f64::INFINITY });
    }
    Ok(z)
}

fn newton_polish(coeffs: &[Complex64], x0: Complex64) -> Complex64 {
    let mut x = x0;
    let (mut p, _) = horner(coeffs, x);
    for _ in 0..3 {
        let (_, dp) = horner(coeffs, x);
        if dp == ZERO {
            break;
        }
        let cand = x - p / dp;
        let (pc, _) = horner(coeffs, cand);
        if pc.norm() < p.norm() {
            x = cand;
            p = pc;
        } else {
            break;
        }
    }
    x
}

/// A root of a binary form, as homogeneous coordinates `[z : t]`.
#[derive(Clone, Copy, Debug)]
pub struct ProjectiveRoot {
    pub coords: [Complex64; 2],
    pub multiplicity: u32,
}

/// Roots on P^1 of the binary form `Σ a_i z^i t^(d-i)`, with multiplicities
/// summing to `d`. Small roots are taken from the chart `t = 1`, large ones
/// from `z = 1`, so both ends stay well conditioned.
pub fn binary_form_roots(a: &[Complex64]) -> Result<Vec<ProjectiveRoot>> {
    let d = a.len() - 1;
    let finite = poly_roots(a)?;
    let reversed: Vec<Complex64> = a.iter().rev().copied().collect();
    let inverted = poly_roots(&reversed)?;

    let mut pts: Vec<[Complex64; 2]> = finite
        .iter()
        .filter(|w| w.norm() <= 1.0)
        .map(|w| [*w, ONE])
        .collect();
    let need = d.saturating_sub(pts.len());
    let mut inv_sorted = inverted.clone();
    inv_sorted.sort_by(|x, y| x.norm().total_cmp(&y.norm()));
    pts.extend(inv_sorted.iter().take(need).map(|s| [ONE, *s]));
    if pts.len() < d {
        return Err(Error::RootSolverFailure { residual: f64::INFINITY });
    }

    // cluster
    let mut out: Vec<(Vec<[Complex64; 2]>, u32)> = Vec::new();
    for p in pts {
        match out
            .iter_mut()
            .find(|(members, _)| chordal_raw(&members[0], &p) < CLUSTER_TOL)
        {
            Some((members, m)) => {
                members.push(p);
                *m += 1;
            }
            None => out.push((vec![p], 1)),
        }
    }
    Ok(out
        .into_iter()
        .map(|(members, m)| ProjectiveRoot {
            coords: average_in_chart(&members),
            multiplicity: m,
        })
        .collect())
}

fn average_in_chart(members: &[[Complex64; 2]]) -> [Complex64; 2] {
    if members.len() == 1 {
        return members[0];
    }
    let first = members[0];
    if first[1].norm() >= first[0].norm() {
        let s: Complex64 = members.iter().map(|m| m[0] / m[1]).sum();
        [s / members.len() as f64, ONE]
    } else {
        let s: Complex64 = members.iter().map(|m| m[1] / m[0]).sum();
        [ONE, s / members.len() as f64]
    }
}
