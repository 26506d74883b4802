//! Lyapunov spectrum of the equilibrium measure from orthogonalized products of
//! differentials along forward orbit segments of cloud points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map_model::MapModel;
use crate::projective::{inner, vec_norm};
use crate::sampler::SampleCloud;
use crate::stats::batch_means;
use crate::tangent::{complement_basis, CVec};

/// Segments whose one-step Jacobian falls below this are discarded.
pub const JACOBIAN_FLOOR: f64 = 1e-300;

/// Largest tolerated fraction of discarded segments.
pub const MAX_DISCARD_FRACTION: f64 = 0.1;

pub const MIN_SAMPLES: usize = 100;

pub const BATCHES: usize = 20;

/// Block lengths reported alongside the main estimate.
pub const REPORTED_BLOCK_LENGTHS: [usize; 3] = [5, 10, 20];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub map_id: String,
    /// `χ_1 ≤ … ≤ χ_k`.
    pub chi: Vec<f64>,
    pub sigma: f64,
    pub stderr: Vec<f64>,
    pub sigma_stderr: f64,
    /// `Σ` from the cloud average of `½ log Jac f`.
    pub jacobian_sigma: f64,
    pub jacobian_sigma_stderr: f64,
    pub n_cocycle: usize,
    pub n_samples: usize,
    pub discards: usize,
    /// Recorded only; block lengths are reported directly instead.
    pub eps0: f64,
}

impl LyapunovEstimate {
    pub fn chi_min(&self) -> f64 {
        self.chi[0]
    }

    pub fn chi_max(&self) -> f64 {
        *self.chi.last().unwrap()
    }

    pub fn chi_max_stderr(&self) -> f64 {
        *self.stderr.last().unwrap()
    }
}

/// Per-segment logarithmic stretching of an orthonormal frame, or `None`
/// when the segment passes through a near-critical point.
fn segment_logs(map: &MapModel, x: &crate::ProjectivePoint, n: usize) -> Result<Option<Vec<f64>>> {
    let k = map.dim();
    let f = map.poly_map();
    let mut u: CVec = x.unit();
    let mut vs = complement_basis(&u[..=k]);
    let mut logs = vec![0.0; k];
    for _ in 0..n {
        let y = match f.push_tangent(&u, &mut vs) {
            Ok(y) => y,
            Err(Error::AllComponentsVanish) => return Ok(None),
            Err(e) => return Err(e),
        };
        // modified Gram–Schmidt; the diagonal of R collects the stretching
        let mut jac = 1.0;
        for i in 0..k {
            for j in 0..i {
                let (head, tail) = vs.split_at_mut(i);
                let c = inner(&head[j][..=k], &tail[0][..=k]);
                for a in 0..=k {
                    tail[0][a] -= c * head[j][a];
                }
            }
            let r = vec_norm(&vs[i][..=k]);
            jac *= r * r;
            if r == 0.0 {
                return Ok(None);
            }
            for a in 0..=k {
                vs[i][a] /= r;
            }
            logs[i] += r.ln();
        }
        if jac < JACOBIAN_FLOOR {
            return Ok(None);
        }
        u = y;
    }
    Ok(Some(logs.iter().map(|l| l / n as f64).collect()))
}

/// Spectrum from segments of length `block_len` started at every cloud point.
pub fn cocycle_spectrum(map: &MapModel, cloud: &SampleCloud, block_len: usize) -> Result<LyapunovEstimate> {
    if block_len == 0 {
        return Err(Error::InvalidArgument("block length must be at least 1".into()));
    }
    if cloud.count() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: cloud.count(),
        });
    }
    let k = map.dim();
    let per_sample: Vec<Option<Vec<f64>>> = cloud
        .points
        .par_iter()
        .map(|x| segment_logs(map, x, block_len))
        .collect::<Result<_>>()?;
    let kept: Vec<&Vec<f64>> = per_sample.iter().flatten().collect();
    let discards = per_sample.len() - kept.len();
    if discards as f64 > MAX_DISCARD_FRACTION * per_sample.len() as f64 {
        return Err(Error::TooManyDiscards {
            discarded: discards,
            total: per_sample.len(),
        });
    }
    let mut columns: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let vals: Vec<f64> = kept.iter().map(|v| v[i]).collect();
            batch_means(&vals, BATCHES)
        })
        .collect();
    columns.sort_by(|a, b| a.0.total_cmp(&b.0));
    let sums: Vec<f64> = kept.iter().map(|v| v.iter().sum()).collect();
    let (sigma, sigma_stderr) = batch_means(&sums, BATCHES);
    let jac = sum_exponents_from_jacobian(map, cloud)?;
    Ok(LyapunovEstimate {
        map_id: map.id().to_string(),
        chi: columns.iter().map(|c| c.0).collect(),
        sigma,
        stderr: columns.iter().map(|c| c.1).collect(),
        sigma_stderr,
        jacobian_sigma: jac.sigma,
        jacobian_sigma_stderr: jac.stderr,
        n_cocycle: block_len,
        n_samples: kept.len(),
        discards,
        eps0: 0.0,
    })
}

/// Estimates at each of `lengths`.
pub fn spectrum_by_block_length(
    map: &MapModel,
    cloud: &SampleCloud,
    lengths: &[usize],
) -> Result<Vec<LyapunovEstimate>> {
    lengths.iter().map(|&n| cocycle_spectrum(map, cloud, n)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JacobianSum {
    pub sigma: f64,
    pub stderr: f64,
    pub n_samples: usize,
    /// Points with `Jac f = 0` exactly.
    pub discarded: usize,
}

/// `Σ ≈ ½ · mean log Jac f` over the cloud.
pub fn sum_exponents_from_jacobian(map: &MapModel, cloud: &SampleCloud) -> Result<JacobianSum> {
    if cloud.count() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: cloud.count(),
        });
    }
    let vals: Vec<f64> = cloud
        .points
        .par_iter()
        .map(|x| 0.5 * map.fs_jacobian(x).ln())
        .collect();
    let finite: Vec<f64> = vals.into_iter().filter(|v| v.is_finite()).collect();
    let discarded = cloud.count() - finite.len();
    let (sigma, stderr) = batch_means(&finite, BATCHES);
    Ok(JacobianSum {
        sigma,
        stderr,
        n_samples: finite.len(),
        discarded,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InequalityReport {
    /// `½ log(d_t / λ_{k-1})`
    pub chi1_bound: f64,
    pub chi1_margin: f64,
    pub chi1_ok: bool,
    /// `log d_t`
    pub two_sigma_bound: f64,
    pub two_sigma_margin: f64,
    pub two_sigma_ok: bool,
}

/// `χ_1 ≥ ½ log(d_t/λ_{k-1})` and `2Σ ≥ log d_t`, each up to three standard errors.
pub fn exponent_inequality_check(map: &MapModel, est: &LyapunovEstimate) -> InequalityReport {
    let d_t = map.topological_degree() as f64;
    let chi1_bound = 0.5 * (d_t / map.lambda_below_top() as f64).ln();
    let two_sigma_bound = d_t.ln();
    let chi1_margin = est.chi_min() - chi1_bound;
    let two_sigma_margin = 2.0 * est.sigma - two_sigma_bound;
    InequalityReport {
        chi1_bound,
        chi1_margin,
        chi1_ok: chi1_margin >= -3.0 * est.stderr[0],
        two_sigma_bound,
        two_sigma_margin,
        two_sigma_ok: two_sigma_margin >= -3.0 * 2.0 * est.sigma_stderr,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegrabilityCheck {
    pub mean_abs_log_dist: f64,
    pub half_cloud_mean: f64,
    pub relative_change: f64,
    pub finite: bool,
    pub stable: bool,
}

/// Mean of `|log dist(x, 𝒥)|` over the cloud, compared with the first half.
pub fn log_integrability(map: &MapModel, cloud: &SampleCloud) -> IntegrabilityCheck {
    let vals: Vec<f64> = cloud
        .points
        .par_iter()
        .map(|x| map.distance_to_j(x).ln().abs())
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let full = mean(&vals);
    let half = mean(&vals[..vals.len().div_ceil(2)]);
    let relative_change = (full - half).abs() / half.abs().max(f64::MIN_POSITIVE);
    IntegrabilityCheck {
        mean_abs_log_dist: full,
        half_cloud_mean: half,
        relative_change,
        finite: full.is_finite(),
        stable: full.is_finite() && relative_change < 0.1,
    }
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;

    use super::*;
    use crate::catalog;
    use crate::sampler::sample_backward_cloud;
    use crate::ProjectivePoint;

    #[test]
    fn square_map_exponent_is_log_two() {
        let m = catalog::load("z2").unwrap();
        let cloud = sample_backward_cloud(&m, &ProjectivePoint::p1(Complex64::new(2.0, 0.0)), 30, 500, 1).unwrap();
        let est = cocycle_spectrum(&m, &cloud, 20).unwrap();
        assert!((est.chi[0] - 2f64.ln()).abs() < 0.01 * 2f64.ln());
        assert!((est.jacobian_sigma - 2f64.ln()).abs() < 0.01 * 2f64.ln());
        let rep = exponent_inequality_check(&m, &est);
        assert!(rep.chi1_ok && rep.two_sigma_ok);
    }

    #[test]
    fn too_few_samples() {
        let m = catalog::load("z2").unwrap();
        let cloud = sample_backward_cloud(&m, &ProjectivePoint::p1(Complex64::new(2.0, 0.0)), 5, 10, 1).unwrap();
        assert!(matches!(cocycle_spectrum(&m, &cloud, 5), Err(Error::TooFewSamples { .. })));
    }
}
