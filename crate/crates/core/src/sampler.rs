//! Randomized backward iteration: point clouds approximating the equilibrium
//! measure, single backward orbits, and empirical ball masses.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map_model::{MapModel, RESIDUAL_TOL};
use crate::projective::ProjectivePoint;
use crate::rng::{stream, Stage};

/// Backward points closer than this to the exceptional set end the walk.
pub const J_EXCLUSION: f64 = 1e-12;

/// Attempts per cloud point before the point is given up.
const MAX_ATTEMPTS: u64 = 8;

/// Offset between the stream indices of successive attempts for one point.
const ATTEMPT_STRIDE: u64 = 1 << 32;

/// Backward walks from one seed; each point is an independent `depth`-fold
/// backward image of `seed_point`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleCloud {
    pub map_id: String,
    pub points: Vec<ProjectivePoint>,
    pub depth: usize,
    pub seed_point: ProjectivePoint,
    pub rng_seed: u64,
    /// Walks abandoned because they came within [`J_EXCLUSION`] of 𝒥.
    pub discarded: usize,
    pub attempted: usize,
}

impl SampleCloud {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.seed_point.dim()
    }
}

/// A finite piece `(x_0, x_-1, …, x_-N)` of a point of the natural extension.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BackwardOrbit {
    pub map_id: String,
    /// `points[j] = x_-j`.
    pub points: Vec<ProjectivePoint>,
    /// `residuals[j] = dist(f(x_-(j+1)), x_-j)`.
    pub residuals: Vec<f64>,
    pub rng_seed: u64,
    /// Stream index within [`Stage::Orbit`].
    pub index: u64,
}

impl BackwardOrbit {
    pub fn depth(&self) -> usize {
        self.points.len() - 1
    }

    /// `x_-n`.
    pub fn at(&self, n: usize) -> &ProjectivePoint {
        &self.points[n]
    }

    /// An orbit that stays at a fixed point.
    pub fn constant(map: &MapModel, x: ProjectivePoint, depth: usize) -> Result<Self> {
        let res = map.evaluate(&x)?.chordal(&x);
        if res > RESIDUAL_TOL {
            return Err(Error::InvalidArgument("point is not fixed".into()));
        }
        Ok(BackwardOrbit {
            map_id: map.id().to_string(),
            points: vec![x; depth + 1],
            residuals: vec![res; depth],
            rng_seed: 0,
            index: 0,
        })
    }
}

enum WalkEnd {
    Done(Vec<ProjectivePoint>, Vec<f64>),
    HitJ { depth: usize, distance: f64 },
}

/// Picks a preimage uniformly among the `d_t` counted with multiplicity.
fn pick<R: Rng + ?Sized>(pre: &[(ProjectivePoint, u32)], rng: &mut R) -> ProjectivePoint {
    let total: u32 = pre.iter().map(|(_, m)| *m).sum();
    let mut u = rng.random_range(0..total);
    for (p, m) in pre {
        if u < *m {
            return *p;
        }
        u -= m;
    }
    pre[pre.len() - 1].0
}

fn walk<R: Rng + ?Sized>(
    map: &MapModel,
    start: &ProjectivePoint,
    depth: usize,
    keep_all: bool,
    rng: &mut R,
) -> Result<WalkEnd> {
    let d0 = map.distance_to_j(start);
    if d0 < J_EXCLUSION {
        return Ok(WalkEnd::HitJ { depth: 0, distance: d0 });
    }
    let mut points = vec![*start];
    let mut residuals = Vec::new();
    let mut x = *start;
    for j in 1..=depth {
        let pre = map.preimages(&x)?;
        let next = pick(&pre, rng);
        let dist = map.distance_to_j(&next);
        if dist < J_EXCLUSION {
            return Ok(WalkEnd::HitJ { depth: j, distance: dist });
        }
        if keep_all {
            residuals.push(map.evaluate(&next)?.chordal(&x));
            points.push(next);
        }
        x = next;
    }
    if !keep_all {
        points = vec![x];
    }
    Ok(WalkEnd::Done(points, residuals))
}

/// `count` independent backward walks of length `depth` from `seed`. Walk `i`
/// draws from stream `(rng_seed, Sample, i)`; a walk that meets 𝒥 is redrawn
/// from the next attempt stream.
pub fn sample_backward_cloud(
    map: &MapModel,
    seed: &ProjectivePoint,
    depth: usize,
    count: usize,
    rng_seed: u64,
) -> Result<SampleCloud> {
    if count == 0 {
        return Err(Error::InvalidArgument("cloud count must be positive".into()));
    }
    if seed.dim() != map.dim() {
        return Err(Error::InvalidArgument("seed dimension does not match the map".into()));
    }
    let results: Vec<Result<(Option<ProjectivePoint>, usize)>> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut discards = 0;
            for attempt in 0..MAX_ATTEMPTS {
                let mut rng = stream(rng_seed, Stage::Sample, i + attempt * ATTEMPT_STRIDE);
                match walk(map, seed, depth, false, &mut rng) {
                    Ok(WalkEnd::Done(points, _)) => return Ok((Some(points[0]), discards)),
                    Ok(WalkEnd::HitJ { .. }) | Err(Error::RootSolverFailure { .. }) => discards += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok((None, discards))
        })
        .collect();
    let mut points = Vec::with_capacity(count);
    let mut discarded = 0;
    let mut lost = 0;
    for r in results {
        let (p, dis) = r?;
        discarded += dis;
        match p {
            Some(p) => points.push(p),
            None => lost += 1,
        }
    }
    let attempted = discarded + points.len();
    if lost > 0 || 2 * discarded > attempted {
        return Err(Error::ExceptionalSeed { discarded, attempted });
    }
    Ok(SampleCloud {
        map_id: map.id().to_string(),
        points,
        depth,
        seed_point: *seed,
        rng_seed,
        discarded,
        attempted,
    })
}

/// One backward walk of length `depth` from `start`, drawing from stream
/// `(rng_seed, Orbit, index)`.
pub fn sample_backward_orbit(
    map: &MapModel,
    start: &ProjectivePoint,
    depth: usize,
    rng_seed: u64,
    index: u64,
) -> Result<BackwardOrbit> {
    let mut rng = stream(rng_seed, Stage::Orbit, index);
    let mut orbit = backward_orbit_with(map, start, depth, &mut rng)?;
    orbit.rng_seed = rng_seed;
    orbit.index = index;
    Ok(orbit)
}

/// One backward walk drawing from a caller-supplied generator.
pub fn backward_orbit_with<R: Rng + ?Sized>(
    map: &MapModel,
    start: &ProjectivePoint,
    depth: usize,
    rng: &mut R,
) -> Result<BackwardOrbit> {
    match walk(map, start, depth, true, rng)? {
        WalkEnd::Done(points, residuals) => {
            assert!(
                residuals.iter().all(|r| *r <= RESIDUAL_TOL),
                "backward orbit residual above tolerance"
            );
            Ok(BackwardOrbit {
                map_id: map.id().to_string(),
                points,
                residuals,
                rng_seed: 0,
                index: 0,
            })
        }
        WalkEnd::HitJ { depth, distance } => Err(Error::OrbitHitsJ { depth, distance }),
    }
}

/// Orbits `0..n` (stream indices) started at cloud points, skipping walks
/// that meet 𝒥; returns at most `n` orbits together with the number skipped.
pub fn orbits_from_cloud(
    map: &MapModel,
    cloud: &SampleCloud,
    n: usize,
    depth: usize,
    rng_seed: u64,
) -> Result<(Vec<BackwardOrbit>, usize)> {
    let results: Vec<Result<Option<BackwardOrbit>>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let start = cloud.points[i as usize % cloud.count()];
            match sample_backward_orbit(map, &start, depth, rng_seed, i) {
                Ok(o) => Ok(Some(o)),
                Err(Error::OrbitHitsJ { .. }) | Err(Error::RootSolverFailure { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut orbits = Vec::with_capacity(n);
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(o) => orbits.push(o),
            None => skipped += 1,
        }
    }
    Ok((orbits, skipped))
}

/// Fraction of cloud points at chordal distance `< radius` from `center`.
pub fn ball_mass(cloud: &SampleCloud, center: &ProjectivePoint, radius: f64) -> f64 {
    if radius >= 1.0 {
        return 1.0;
    }
    if radius <= 0.0 {
        return 0.0;
    }
    let inside = cloud.points.iter().filter(|p| p.chordal(center) < radius).count();
    inside as f64 / cloud.count() as f64
}

/// Images of the cloud points under one application of `f`.
pub fn push_forward(map: &MapModel, cloud: &SampleCloud) -> Result<SampleCloud> {
    let points = cloud
        .points
        .par_iter()
        .map(|p| map.evaluate(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleCloud {
        points,
        depth: cloud.depth.saturating_sub(1),
        ..cloud.clone()
    })
}
