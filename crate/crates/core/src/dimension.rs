//! Dimension of the equilibrium measure from sample clouds: local ball-mass
//! slopes, the pair-correlation integral and a covering count, plus
//! the bounds `log d_t/χ_k ≤ dim μ ≤ 2k − (2Σ − log d_t)/χ_k` and a verdict.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::branches::{certify_branches, radius_schedule, Exponents};
use crate::error::{Error, Result};
use crate::lyapunov::LyapunovEstimate;
use crate::map_model::MapModel;
use crate::rng::{stream, Stage};
use crate::sampler::{BackwardOrbit, SampleCloud};
use crate::stats::{linear_fit, median, quantile_sorted, LinearFit};
use crate::ProjectivePoint;

pub const DEFAULT_RHO0_FRACTION: f64 = 0.2;
pub const DEFAULT_H: f64 = 0.25;
pub const DEFAULT_N_RADII: usize = 16;
/// Largest admissible `ρ_0` as a fraction of the support diameter.
pub const MAX_RHO0_FRACTION: f64 = 0.3;
/// A radius enters a fit only if its ball holds at least this many points.
pub const MIN_BALL_POINTS: usize = 10;
pub const MIN_RADII: usize = 3;
pub const MIN_CENTERS: usize = 50;
pub const BOOTSTRAP_RESAMPLES: usize = 500;
pub const CI_LEVEL: f64 = 0.9;
pub const MAX_DROPPED_FRACTION: f64 = 0.5;
/// Covering scales are kept while each net ball holds this many points on average.
pub const MIN_BOX_OCCUPANCY: f64 = 10.0;
/// Points used as first endpoints when estimating the support diameter.
const DIAMETER_PROBES: usize = 256;
/// Two-sided normal quantile for the 90% interval.
const Z90: f64 = 1.6448536269514722;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionMethod {
    LocalSlope,
    Correlation,
    BoxCount,
}

impl DimensionMethod {
    pub const ALL: [DimensionMethod; 3] = [Self::LocalSlope, Self::Correlation, Self::BoxCount];

    pub fn name(self) -> &'static str {
        match self {
            Self::LocalSlope => "local_slope",
            Self::Correlation => "correlation",
            Self::BoxCount => "box_count",
        }
    }
}

impl fmt::Display for DimensionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DimensionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown dimension method `{s}`")))
    }
}

/// Geometric radii `ρ_n = ρ_0 e^{-nh}`, `n = 0, …, n_radii − 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiiSchedule {
    pub rho0: f64,
    pub h: f64,
    pub n_radii: usize,
}

impl RadiiSchedule {
    pub fn new(rho0: f64, h: f64, n_radii: usize) -> Result<Self> {
        if !(rho0 > 0.0 && rho0 < 1.0) || !(h > 0.0) || n_radii < MIN_RADII {
            return Err(Error::InvalidArgument(format!(
                "radii schedule needs 0 < rho0 < 1, h > 0 and at least {MIN_RADII} radii"
            )));
        }
        Ok(RadiiSchedule { rho0, h, n_radii })
    }

    /// `ρ_0 = 0.2 · diameter`, `h = 0.25`, 16 radii.
    pub fn for_diameter(diameter: f64) -> Self {
        RadiiSchedule {
            rho0: DEFAULT_RHO0_FRACTION * diameter,
            h: DEFAULT_H,
            n_radii: DEFAULT_N_RADII,
        }
    }

    pub fn for_cloud(cloud: &SampleCloud) -> Self {
        Self::for_diameter(support_diameter(cloud))
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.n_radii).map(|n| self.rho0 * (-(n as f64) * self.h).exp()).collect()
    }

    /// `|log ρ_{n+1} / log ρ_n − 1|` for consecutive radii.
    pub fn young_ratios(&self) -> Vec<f64> {
        let r = self.radii();
        r.windows(2).map(|w| (w[1].ln() / w[0].ln() - 1.0).abs()).collect()
    }

    pub fn young_defect(&self) -> f64 {
        self.young_ratios().into_iter().fold(0.0, f64::max)
    }
}

/// Cloud points embedded isometrically (chordal = Euclidean) in a flat buffer.
struct Embedded {
    stride: usize,
    data: Vec<f64>,
}

impl Embedded {
    fn new(points: &[ProjectivePoint]) -> Self {
        let stride = points.first().map_or(0, |p| (p.dim() + 1) * (p.dim() + 1));
        let data = points.iter().flat_map(|p| p.embed()).collect();
        Embedded { stride, data }
    }

    fn len(&self) -> usize {
        self.data.len() / self.stride.max(1)
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.stride..(i + 1) * self.stride]
    }

    fn dist(&self, i: usize, y: &[f64]) -> f64 {
        self.row(i).iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// Points inside the largest ball around `y`, leaving out index `skip`,
    /// each with the number of schedule balls (strict inequality) holding it.
    fn neighbors(&self, y: &[f64], radii: &[f64], skip: Option<usize>) -> Vec<(u32, u8)> {
        let r0 = radii.first().copied().unwrap_or(0.0);
        (0..self.len())
            .filter(|&i| Some(i) != skip)
            .filter_map(|i| {
                let d = self.dist(i, y);
                (d < r0).then(|| (i as u32, radii.iter().take_while(|&&r| d < r).count() as u8))
            })
            .collect()
    }

    fn counts(&self, y: &[f64], radii: &[f64], skip: Option<usize>) -> Vec<f64> {
        ball_counts(&self.neighbors(y, radii, skip), radii.len(), |_| 1.0)
    }
}

/// Weighted number of neighbors inside each ball.
fn ball_counts(neighbors: &[(u32, u8)], n_radii: usize, weight: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut hist = vec![0.0; n_radii + 1];
    for &(j, m) in neighbors {
        hist[m as usize] += weight(j as usize);
    }
    let mut out = vec![0.0; n_radii];
    let mut acc = 0.0;
    for r in (0..n_radii).rev() {
        acc += hist[r + 1];
        out[r] = acc;
    }
    out
}

/// Largest chordal distance from the first few points to the whole cloud.
pub fn support_diameter(cloud: &SampleCloud) -> f64 {
    let emb = Embedded::new(&cloud.points);
    (0..emb.len().min(DIAMETER_PROBES))
        .into_par_iter()
        .map(|i| (0..emb.len()).map(|j| emb.dist(j, emb.row(i))).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max)
        .min(1.0)
}

/// Slope of `log μ̂(B(x, ρ_n))` against `log ρ_n` with fit diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub slope_stderr: f64,
    pub radii_used: usize,
    /// Smallest and largest `log μ̂(B) / log ρ` over the radii used.
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub log_rho: Vec<f64>,
    pub log_mass: Vec<f64>,
}

fn fit_profile(radii: &[f64], counts: &[f64], total: f64) -> Result<LocalFit> {
    let used: Vec<usize> = (0..radii.len()).filter(|&i| counts[i] >= MIN_BALL_POINTS as f64).collect();
    if used.len() < MIN_RADII {
        return Err(Error::InsufficientMass { usable: used.len() });
    }
    let log_rho: Vec<f64> = used.iter().map(|&i| radii[i].ln()).collect();
    let log_mass: Vec<f64> = used.iter().map(|&i| (counts[i] / total).ln()).collect();
    let fit = linear_fit(&log_rho, &log_mass);
    let ratios: Vec<f64> = log_mass.iter().zip(&log_rho).map(|(m, r)| m / r).collect();
    Ok(LocalFit {
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        slope_stderr: fit.slope_stderr,
        radii_used: used.len(),
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        log_rho,
        log_mass,
    })
}

/// Local slope at a point `x` independent of the cloud.
pub fn local_dimension_at(cloud: &SampleCloud, x: &ProjectivePoint, schedule: &RadiiSchedule) -> Result<LocalFit> {
    let emb = Embedded::new(&cloud.points);
    let counts = emb.counts(&x.embed(), &schedule.radii(), None);
    fit_profile(&schedule.radii(), &counts, emb.len() as f64)
}

/// Local slope at cloud point `index`, with that point left out.
pub fn local_dimension_leave_one_out(cloud: &SampleCloud, index: usize, schedule: &RadiiSchedule) -> Result<LocalFit> {
    if index >= cloud.count() {
        return Err(Error::InvalidArgument(format!("center index {index} outside the cloud")));
    }
    let emb = Embedded::new(&cloud.points);
    let counts = emb.counts(emb.row(index), &schedule.radii(), Some(index));
    fit_profile(&schedule.radii(), &counts, (emb.len() - 1) as f64)
}

/// `(log ρ, log μ̂)` pairs of one center, for plotting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MassProfile {
    pub center: usize,
    pub log_rho: Vec<f64>,
    pub log_mass: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub map_id: String,
    pub method: DimensionMethod,
    /// Per-center slopes (local_slope and correlation).
    pub local_dims: Vec<f64>,
    pub dim_hat: f64,
    pub ci: (f64, f64),
    pub radii_schedule: RadiiSchedule,
    pub reference_count: usize,
    pub n_centers: usize,
    pub dropped: usize,
    /// Pooled regression (correlation and box_count).
    pub fit: Option<LinearFit>,
    /// `(log r, log C(r))` or `(−log δ, log N(δ))` pairs entering the pooled fit.
    pub scale_points: Vec<(f64, f64)>,
    pub profiles: Vec<MassProfile>,
}

impl DimensionEstimate {
    pub fn ci_half_width(&self) -> f64 {
        0.5 * (self.ci.1 - self.ci.0)
    }

    /// Counts of `local_dims` in `bins` equal bins over `[lo, hi)`.
    pub fn histogram(&self, lo: f64, hi: f64, bins: usize) -> Vec<usize> {
        let mut h = vec![0; bins];
        for &v in &self.local_dims {
            let t = ((v - lo) / (hi - lo) * bins as f64).floor();
            if t >= 0.0 && (t as usize) < bins {
                h[t as usize] += 1;
            }
        }
        h
    }
}

/// Centers drawn without replacement from the cloud's dimension stream.
fn pick_centers(cloud: &SampleCloud, n_centers: usize) -> Vec<usize> {
    let mut rng = stream(cloud.rng_seed, Stage::Dimension, 0);
    let mut idx = sample(&mut rng, cloud.count(), n_centers.min(cloud.count())).into_vec();
    idx.sort_unstable();
    idx
}

/// Percentile interval of `stat` over resamples of `0..n`, widened to contain `point`.
fn bootstrap_ci<F>(seed: u64, n: usize, point: f64, stat: F) -> (f64, f64)
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    let mut reps: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, Stage::Dimension, 1 + b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            stat(&idx)
        })
        .filter(|v| v.is_finite())
        .collect();
    percentile_interval(&mut reps, point)
}

pub fn aggregate_dimension(
    cloud: &SampleCloud,
    n_centers: usize,
    schedule: &RadiiSchedule,
    method: DimensionMethod,
) -> Result<DimensionEstimate> {
    if n_centers < MIN_CENTERS {
        return Err(Error::InvalidArgument(format!("at least {MIN_CENTERS} centers are needed")));
    }
    if cloud.count() <= n_centers {
        return Err(Error::TooFewSamples {
            needed: n_centers + 1,
            got: cloud.count(),
        });
    }
    let max_dim = 2.0 * cloud.dim() as f64;
    let mut est = match method {
        DimensionMethod::LocalSlope => local_slope_estimate(cloud, n_centers, schedule)?,
        DimensionMethod::Correlation => correlation_estimate(cloud, schedule)?,
        DimensionMethod::BoxCount => box_count_estimate(cloud, schedule)?,
    };
    est.dim_hat = est.dim_hat.clamp(0.0, max_dim);
    est.ci = (est.ci.0.min(est.dim_hat), est.ci.1.max(est.dim_hat));
    Ok(est)
}

fn empty_estimate(cloud: &SampleCloud, method: DimensionMethod, schedule: &RadiiSchedule) -> DimensionEstimate {
    DimensionEstimate {
        map_id: cloud.map_id.clone(),
        method,
        local_dims: Vec::new(),
        dim_hat: f64::NAN,
        ci: (f64::NAN, f64::NAN),
        radii_schedule: *schedule,
        reference_count: cloud.count(),
        n_centers: 0,
        dropped: 0,
        fit: None,
        scale_points: Vec::new(),
        profiles: Vec::new(),
    }
}

fn check_dropped(dropped: usize, total: usize) -> Result<()> {
    if dropped as f64 > MAX_DROPPED_FRACTION * total as f64 {
        return Err(Error::TooManyDropped { dropped, total });
    }
    Ok(())
}

fn local_slope_estimate(cloud: &SampleCloud, n_centers: usize, schedule: &RadiiSchedule) -> Result<DimensionEstimate> {
    let emb = Embedded::new(&cloud.points);
    let radii = schedule.radii();
    let centers = pick_centers(cloud, n_centers);
    let total = (emb.len() - 1) as f64;
    let fits: Vec<(usize, Vec<(u32, u8)>, Result<LocalFit>)> = centers
        .par_iter()
        .map(|&c| {
            let nb = emb.neighbors(emb.row(c), &radii, Some(c));
            let fit = fit_profile(&radii, &ball_counts(&nb, radii.len(), |_| 1.0), total);
            (c, nb, fit)
        })
        .collect();
    let mut profiles = Vec::new();
    let mut dims = Vec::new();
    let mut kept = Vec::new();
    for (c, nb, f) in fits {
        match f {
            Ok(f) => {
                dims.push(f.slope);
                kept.push((c, nb));
                profiles.push(MassProfile {
                    center: c,
                    log_rho: f.log_rho,
                    log_mass: f.log_mass,
                });
            }
            Err(Error::InsufficientMass { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let dropped = centers.len() - dims.len();
    check_dropped(dropped, centers.len())?;
    let dim_hat = median(&dims);
    let ci = two_level_bootstrap_ci(cloud.rng_seed, emb.len(), &radii, &kept, dim_hat);
    Ok(DimensionEstimate {
        local_dims: dims,
        dim_hat,
        ci,
        n_centers: centers.len(),
        dropped,
        profiles,
        ..empty_estimate(cloud, DimensionMethod::LocalSlope, schedule)
    })
}

/// Percentile interval of the median local slope when both the centers
/// (resampled with replacement) and the reference cloud (Poisson(1) weights)
/// are bootstrapped. Centers whose replicate profile is too thin are skipped.
fn two_level_bootstrap_ci(seed: u64, n_ref: usize, radii: &[f64], kept: &[(usize, Vec<(u32, u8)>)], point: f64) -> (f64, f64) {
    let poisson = Poisson::new(1.0).expect("unit rate");
    let mut reps: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, Stage::Dimension, 1 + b as u64);
            let w: Vec<f64> = (0..n_ref).map(|_| poisson.sample(&mut rng)).collect();
            let w_total: f64 = w.iter().sum();
            let slopes: Vec<f64> = (0..kept.len())
                .filter_map(|_| {
                    let (c, nb) = &kept[rng.random_range(0..kept.len())];
                    let counts = ball_counts(nb, radii.len(), |j| w[j]);
                    fit_profile(radii, &counts, w_total - w[*c]).ok().map(|f| f.slope)
                })
                .collect();
            if slopes.is_empty() {
                f64::NAN
            } else {
                median(&slopes)
            }
        })
        .filter(|v| v.is_finite())
        .collect();
    percentile_interval(&mut reps, point)
}

fn percentile_interval(reps: &mut [f64], point: f64) -> (f64, f64) {
    reps.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - CI_LEVEL);
    let lo = quantile_sorted(reps, tail);
    let hi = quantile_sorted(reps, 1.0 - tail);
    (lo.min(point), hi.max(point))
}

/// Slope of `log C(r)` over the radii where the pooled counts reach
/// [`MIN_BALL_POINTS`] per center on average.
fn correlation_fit(radii: &[f64], rows: &[&Vec<usize>], per_center: usize) -> Option<(LinearFit, Vec<(f64, f64)>)> {
    let n = rows.len();
    let pts: Vec<(f64, f64)> = (0..radii.len())
        .filter_map(|j| {
            let total: usize = rows.iter().map(|r| r[j]).sum();
            (total >= MIN_BALL_POINTS * n).then(|| (radii[j].ln(), (total as f64 / (n * per_center) as f64).ln()))
        })
        .collect();
    if pts.len() < MIN_RADII {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    Some((linear_fit(&x, &y), pts))
}

/// For every point, the number of other points within each radius.
fn neighbor_counts(emb: &Embedded, schedule: &RadiiSchedule) -> Vec<Vec<usize>> {
    let n_radii = schedule.n_radii;
    (0..emb.len())
        .into_par_iter()
        .map(|i| {
            let y = emb.row(i);
            // hist[m]: points inside exactly the m largest balls
            let mut hist = vec![0usize; n_radii + 1];
            for j in 0..emb.len() {
                if j == i {
                    continue;
                }
                let d = emb.dist(j, y);
                if d >= schedule.rho0 {
                    continue;
                }
                let m = ((schedule.rho0 / d).ln() / schedule.h).ceil();
                hist[(m as usize).min(n_radii)] += 1;
            }
            let mut row = vec![0; n_radii];
            let mut acc = 0;
            for j in (0..n_radii).rev() {
                acc += hist[j + 1];
                row[j] = acc;
            }
            row
        })
        .collect()
}

fn correlation_estimate(cloud: &SampleCloud, schedule: &RadiiSchedule) -> Result<DimensionEstimate> {
    let emb = Embedded::new(&cloud.points);
    let radii = schedule.radii();
    let counts = neighbor_counts(&emb, schedule);
    let per_center = emb.len() - 1;
    let rows: Vec<&Vec<usize>> = counts.iter().collect();
    let (fit, scale_points) = correlation_fit(&radii, &rows, per_center).ok_or(Error::InsufficientMass { usable: 0 })?;
    let local_dims: Vec<f64> = counts
        .iter()
        .filter_map(|c| {
            let c: Vec<f64> = c.iter().map(|&v| v as f64).collect();
            fit_profile(&radii, &c, per_center as f64).ok()
        })
        .map(|f| f.slope)
        .collect();
    let ci = bootstrap_ci(cloud.rng_seed, counts.len(), fit.slope, |idx| {
        let rows: Vec<&Vec<usize>> = idx.iter().map(|&i| &counts[i]).collect();
        correlation_fit(&radii, &rows, per_center).map_or(f64::NAN, |f| f.0.slope)
    });
    Ok(DimensionEstimate {
        local_dims,
        dim_hat: fit.slope,
        ci,
        n_centers: counts.len(),
        fit: Some(fit),
        scale_points,
        ..empty_estimate(cloud, DimensionMethod::Correlation, schedule)
    })
}

/// Size of a greedy `delta`-net of the cloud: points are taken in order and
/// kept when no kept point lies within `delta`. Stops once the net exceeds `cap`.
fn greedy_net_size(emb: &Embedded, delta: f64, cap: usize) -> usize {
    let mut net: Vec<usize> = Vec::new();
    for i in 0..emb.len() {
        let y = emb.row(i);
        if !net.iter().any(|&c| emb.dist(c, y) < delta) {
            net.push(i);
            if net.len() > cap {
                break;
            }
        }
    }
    net.len()
}

fn box_count_estimate(cloud: &SampleCloud, schedule: &RadiiSchedule) -> Result<DimensionEstimate> {
    let emb = Embedded::new(&cloud.points);
    let radii = schedule.radii();
    let cap = (emb.len() as f64 / MIN_BOX_OCCUPANCY) as usize;
    let counts: Vec<usize> = radii.par_iter().map(|&d| greedy_net_size(&emb, d, cap)).collect();
    let scale_points: Vec<(f64, f64)> = radii
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c <= cap)
        .map(|(d, &c)| (-d.ln(), (c as f64).ln()))
        .collect();
    if scale_points.len() < MIN_RADII {
        return Err(Error::InsufficientMass {
            usable: scale_points.len(),
        });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = scale_points.iter().copied().unzip();
    let fit = linear_fit(&x, &y);
    let half = Z90 * fit.slope_stderr;
    Ok(DimensionEstimate {
        dim_hat: fit.slope,
        ci: (fit.slope - half, fit.slope + half),
        fit: Some(fit),
        scale_points,
        ..empty_estimate(cloud, DimensionMethod::BoxCount, schedule)
    })
}

/// The two sides of `log d_t/χ_k ≤ dim μ ≤ 2k − (2Σ − log d_t)/χ_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Bounds from `(k, d_t, Σ, χ_k)`. `sigma_stderr` is the standard error of
/// `Σ`, used to decide whether `2Σ < log d_t` is a real violation.
pub fn theorem_bounds(k: usize, d_t: u64, sigma: f64, chi_k: f64, sigma_stderr: f64) -> Result<TheoremBounds> {
    if !(chi_k > 0.0) || d_t < 2 || k == 0 {
        return Err(Error::InvalidArgument("bounds need chi_k > 0, d_t >= 2 and k >= 1".into()));
    }
    let log_d = (d_t as f64).ln();
    if 2.0 * sigma < log_d - 3.0 * 2.0 * sigma_stderr.max(0.0) {
        return Err(Error::HypothesisViolation(format!(
            "2Σ = {} is below log d_t = {log_d}",
            2.0 * sigma
        )));
    }
    Ok(TheoremBounds {
        lower: log_d / chi_k,
        upper: 2.0 * k as f64 - (2.0 * sigma - log_d) / chi_k,
    })
}

/// `α_ε = 2k − (2Σ − log d_t − 2kρε)/(χ_k + (ρ+2)ε)` at each `ε`.
pub fn alpha_eps_curve(k: usize, d_t: u64, sigma: f64, chi_k: f64, rho: f64, eps: &[f64]) -> Vec<(f64, f64)> {
    let log_d = (d_t as f64).ln();
    let kk = 2.0 * k as f64;
    eps.iter()
        .map(|&e| (e, kk - (2.0 * sigma - log_d - kk * rho * e) / (chi_k + (rho + 2.0) * e)))
        .collect()
}

/// Default `ε` grid of the reported `α_ε` curve.
pub const ALPHA_EPS_GRID: [f64; 6] = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundsVerdict {
    pub map_id: String,
    pub k: usize,
    pub d_t: u64,
    pub sigma: f64,
    pub sigma_stderr: f64,
    pub chi_k: f64,
    pub chi_k_stderr: f64,
    pub lower: f64,
    pub upper: f64,
    pub method: DimensionMethod,
    pub dim_hat: f64,
    pub ci: (f64, f64),
    /// Propagated standard error of the bounds (larger of the two).
    pub bounds_stderr: f64,
    pub slack: f64,
    pub pass_lower: bool,
    pub pass_upper: bool,
    pub rho_hat: f64,
    pub alpha_eps_curve: Vec<(f64, f64)>,
    pub n_samples: usize,
    pub n_cocycle: usize,
}

impl BoundsVerdict {
    pub fn pass(&self) -> bool {
        self.pass_lower && self.pass_upper
    }
}

/// Compares `dim.dim_hat` with the bounds built from `lyap`, with slack
/// `max(ci half-width, 3 · propagated stderr)`. `rho_hat` shapes the `α_ε`
/// curve and defaults to zero when no certificates are available.
pub fn verify_theorem(
    map: &MapModel,
    lyap: &LyapunovEstimate,
    dim: &DimensionEstimate,
    rho_hat: Option<f64>,
) -> Result<BoundsVerdict> {
    if lyap.map_id != map.id() || dim.map_id != map.id() {
        return Err(Error::InvalidArgument(format!(
            "estimates for `{}` and `{}` cannot verify `{}`",
            lyap.map_id,
            dim.map_id,
            map.id()
        )));
    }
    let k = map.dim();
    let d_t = map.topological_degree();
    let chi_k = lyap.chi_max();
    let chi_se = lyap.chi_max_stderr();
    let b = theorem_bounds(k, d_t, lyap.sigma, chi_k, lyap.sigma_stderr)?;
    let log_d = (d_t as f64).ln();
    let se_lower = log_d * chi_se / (chi_k * chi_k);
    let se_upper = ((2.0 * lyap.sigma_stderr / chi_k).powi(2)
        + ((2.0 * lyap.sigma - log_d) * chi_se / (chi_k * chi_k)).powi(2))
    .sqrt();
    let bounds_stderr = se_lower.max(se_upper);
    let slack = dim.ci_half_width().max(3.0 * bounds_stderr);
    let rho = rho_hat.filter(|r| r.is_finite()).unwrap_or(0.0);
    Ok(BoundsVerdict {
        map_id: map.id().to_string(),
        k,
        d_t,
        sigma: lyap.sigma,
        sigma_stderr: lyap.sigma_stderr,
        chi_k,
        chi_k_stderr: chi_se,
        lower: b.lower,
        upper: b.upper,
        method: dim.method,
        dim_hat: dim.dim_hat,
        ci: dim.ci,
        bounds_stderr,
        slack,
        pass_lower: dim.dim_hat >= b.lower - slack,
        pass_upper: dim.dim_hat <= b.upper + slack,
        rho_hat: rho,
        alpha_eps_curve: alpha_eps_curve(k, d_t, lyap.sigma, chi_k, rho, &ALPHA_EPS_GRID),
        n_samples: lyap.n_samples,
        n_cocycle: lyap.n_cocycle,
    })
}

/// One depth of the minoration check on held-out orbits.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinorationRow {
    pub n: usize,
    pub delta_n: f64,
    /// Largest `μ̂(B(x_0, σ̂ δ_n))` over test orbits.
    pub max_mass: f64,
    /// `d_t^{-n}`.
    pub bound: f64,
    /// `d_t^{-n} (1 + 5 · relative stderr)`.
    pub tolerance: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinorationCheck {
    pub map_id: String,
    pub eps: f64,
    pub rho_hat: f64,
    /// `σ̂`, the smallest `min_n ζ(f̂^n x̂) e^{n(ρ̂+1)ε}` over training orbits.
    pub sigma_hat: f64,
    pub training_orbits: usize,
    pub test_orbits: usize,
    pub rows: Vec<MinorationRow>,
    pub pass: bool,
}

/// `(x_n, …, x_1, x_0, x_-1, …)` trimmed to the depth of `orbit`.
fn shifted_orbit(map: &MapModel, orbit: &BackwardOrbit, n: usize) -> Result<BackwardOrbit> {
    let mut forward = vec![orbit.points[0]];
    for _ in 0..n {
        forward.push(map.evaluate(forward.last().unwrap())?);
    }
    forward.reverse();
    let mut points = forward;
    points.extend(orbit.points[1..].iter().copied());
    points.truncate(orbit.points.len());
    let residuals = points
        .windows(2)
        .map(|w| map.evaluate(&w[1]).map(|y| y.chordal(&w[0])))
        .collect::<Result<_>>()?;
    Ok(BackwardOrbit {
        points,
        residuals,
        ..orbit.clone()
    })
}

/// `ζ = r̂/Ĉ` of the composed branch along `orbit`, or `None` if uncertified.
fn zeta(map: &MapModel, orbit: &BackwardOrbit, eps: f64, exps: &Exponents) -> Result<Option<f64>> {
    let sched = match radius_schedule(map, orbit, eps, exps) {
        Ok(s) => s,
        Err(Error::OrbitTooCloseToJ { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let cert = certify_branches(map, orbit, &sched)?;
    Ok(cert
        .composed
        .filter(|c| c.pass && cert.max_certified_depth == orbit.depth())
        .map(|c| c.radius / c.c_hat))
}

/// `σ(x̂) = min(1, min_{n ≤ n_max} ζ(f̂^n x̂) e^{n(ρ+1)ε})`.
fn orbit_sigma(map: &MapModel, orbit: &BackwardOrbit, eps: f64, exps: &Exponents, rho: f64, n_max: usize) -> Result<Option<f64>> {
    let mut s: f64 = 1.0;
    for n in 0..=n_max {
        let shifted = shifted_orbit(map, orbit, n)?;
        match zeta(map, &shifted, eps, exps)? {
            Some(z) => s = s.min(z * (n as f64 * (rho + 1.0) * eps).exp()),
            None => return Ok(None),
        }
    }
    Ok(Some(s))
}

/// Checks `μ̂(B(x_0, σ̂ δ_n)) ≤ d_t^{-n}` for `n ≤ n_max` with
/// `δ_n = e^{-n(χ_k+ε)} e^{-n(ρ+1)ε}`. The first half of `orbits` calibrates
/// `σ̂`; masses are measured at the base points of the second half.
pub fn minoration_check(
    map: &MapModel,
    cloud: &SampleCloud,
    orbits: &[BackwardOrbit],
    exps: &Exponents,
    eps: f64,
    rho_hat: f64,
    n_max: usize,
) -> Result<MinorationCheck> {
    if orbits.len() < 2 {
        return Err(Error::InvalidArgument("minoration needs at least two orbits".into()));
    }
    let half = orbits.len() / 2;
    let (train, test) = orbits.split_at(half);
    let sigmas: Vec<Option<f64>> = train
        .par_iter()
        .map(|o| orbit_sigma(map, o, eps, exps, rho_hat, n_max))
        .collect::<Result<_>>()?;
    let usable: Vec<f64> = sigmas.into_iter().flatten().collect();
    if usable.is_empty() {
        return Err(Error::InsufficientMass { usable: 0 });
    }
    let sigma_hat = usable.iter().copied().fold(1.0, f64::min);
    let d_t = map.topological_degree() as f64;
    let emb = Embedded::new(&cloud.points);
    let total = emb.len() as f64;
    let chi_k = exps.chi_max();
    let rows: Vec<MinorationRow> = (0..=n_max)
        .map(|n| {
            let nf = n as f64;
            let delta_n = (-nf * (chi_k + eps)).exp() * (-nf * (rho_hat + 1.0) * eps).exp();
            let r = sigma_hat * delta_n;
            let max_mass = test
                .iter()
                .map(|o| emb.counts(&o.points[0].embed(), &[r], None)[0] / total)
                .fold(0.0, f64::max);
            let bound = d_t.powi(-(n as i32));
            let rel_se = ((1.0 - bound) / (bound * total)).sqrt();
            let tolerance = bound * (1.0 + 5.0 * rel_se);
            MinorationRow {
                n,
                delta_n,
                max_mass,
                bound,
                tolerance,
                ok: max_mass <= tolerance,
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.ok);
    Ok(MinorationCheck {
        map_id: map.id().to_string(),
        eps,
        rho_hat,
        sigma_hat,
        training_orbits: usable.len(),
        test_orbits: test.len(),
        rows,
        pass,
    })
}
