//! Explicit holomorphic endomorphisms of P^1 and P^2.

mod definition;
mod exceptional;
mod polymap;
mod preimage;

use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use definition::{ExceptionalDefinition, MapDefinition, MapKind};
pub use exceptional::{critical_polynomial, DefiningPoly, ExceptionalSet, G_FLOOR};
pub use polymap::{ChartDerivatives, NewtonSolution, PolyMap, VANISH_TOL};
pub use preimage::{PreimageSolver, RESIDUAL_TOL};

use crate::error::{Error, Result};
use crate::poly::HomPoly;
use crate::projective::ProjectivePoint;
use crate::roots::binary_form_roots;
use crate::tangent::{solve_small, TangentMatrix};

/// Seed of the random targets used by [`MapModel::check_degrees`].
const DEGREE_CHECK_SEED: u64 = 0x00de_9ee5;

/// Number of random targets counted by [`MapModel::check_degrees`].
const DEGREE_CHECK_POINTS: usize = 3;

#[derive(Clone, Debug, Serialize)]
pub struct DegreeReport {
    pub d_t_declared: u64,
    pub d_t_numeric: u64,
    /// Preimage counts (with multiplicity) at each random target.
    pub counts: Vec<u64>,
    /// `λ_{k-1}`, with `λ_0 = 1`.
    pub lambda_below_top: u64,
    pub hypothesis_ok: bool,
}

/// An endomorphism of P^k together with its degrees, critical set and
/// exceptional set. Immutable after construction.
#[derive(Clone, Debug)]
pub struct MapModel {
    definition: MapDefinition,
    map: PolyMap,
    top_degree: u64,
    dyn_degrees: Vec<u64>,
    critical: HomPoly,
    solver: PreimageSolver,
    exceptional: ExceptionalSet,
}

impl MapModel {
    /// Validates a definition and precomputes the critical and exceptional sets.
    ///
    /// Checks, in order: shape and homogeneity, the degree hypothesis
    /// `d_t > λ_{k-1}`, the numeric preimage count against `d_t`, and the
    /// absence of common zeros of the components.
    pub fn new(definition: MapDefinition) -> Result<Self> {
        let k = definition.dimension;
        if !(1..=2).contains(&k) {
            return Err(Error::InvalidDefinition(format!("dimension {k} not in {{1, 2}}")));
        }
        match (definition.kind, k) {
            (MapKind::RationalP1, 1) | (MapKind::HomogeneousPk, _) | (MapKind::PolynomialSkewProduct, 2) => {}
            (kind, k) => {
                return Err(Error::InvalidDefinition(format!("kind {kind:?} cannot have dimension {k}")))
            }
        }
        if definition.components.len() != k + 1 {
            return Err(Error::InvalidDefinition(format!(
                "expected {} components, got {}",
                k + 1,
                definition.components.len()
            )));
        }
        let comps = definition
            .components
            .iter()
            .map(|terms| HomPoly::from_terms(k + 1, terms))
            .collect::<Result<Vec<_>>>()?;
        for (i, c) in comps.iter().enumerate() {
            if c.degree() != definition.degree {
                return Err(Error::InvalidDefinition(format!(
                    "component {i} has degree {}, declared degree is {}",
                    c.degree(),
                    definition.degree
                )));
            }
        }
        let map = PolyMap::new(comps)?;

        let d = definition.degree as u64;
        let top_degree = d.pow(k as u32);
        let dyn_degrees: Vec<u64> = (1..=k as u32).map(|l| d.pow(l)).collect();
        if let Some(t) = definition.topological_degree {
            if t != top_degree {
                return Err(Error::InvalidDefinition(format!(
                    "topological degree of a degree-{d} map of P^{k} is {top_degree}, not {t}"
                )));
            }
        }
        if let Some(l) = &definition.dynamical_degrees {
            if *l != dyn_degrees {
                return Err(Error::InvalidDefinition(format!(
                    "dynamical degrees of a degree-{d} map of P^{k} are {dyn_degrees:?}, not {l:?}"
                )));
            }
        }
        let lambda_below = if k == 1 { 1 } else { dyn_degrees[k - 2] };
        if top_degree <= lambda_below {
            return Err(Error::HypothesisViolation(format!(
                "d_t = {top_degree} is not larger than lambda_{} = {lambda_below}",
                k - 1
            )));
        }

        let solver = PreimageSolver::detect(definition.kind, &map)?;
        if solver.is_supported() {
            let report = count_degree(&map, &solver, top_degree, lambda_below)?;
            if report.d_t_numeric != top_degree {
                return Err(Error::DegreeMismatch {
                    declared: top_degree,
                    numeric: report.d_t_numeric,
                });
            }
        }
        check_holomorphic(&map, &solver)?;

        let critical = critical_polynomial(&map);
        let exceptional = if k == 1 {
            ExceptionalSet::for_p1(&map, &solver)?
        } else if let Some(e) = &definition.exceptional {
            let base = e
                .polynomials
                .iter()
                .map(|terms| HomPoly::from_terms(3, terms))
                .collect::<Result<Vec<_>>>()?;
            ExceptionalSet::for_p2(base, (!e.totally_invariant).then_some(&map))
        } else if matches!(solver, PreimageSolver::Diagonal { .. }) {
            // the coordinate triangle is totally invariant
            ExceptionalSet::for_p2(vec![critical.clone()], None)
        } else {
            return Err(Error::InvalidDefinition(
                "maps of P^2 other than diagonal power maps need an `exceptional` block".into(),
            ));
        };

        Ok(MapModel {
            definition,
            map,
            top_degree,
            dyn_degrees,
            critical,
            solver,
            exceptional,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::new(MapDefinition::from_file(path)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::new(MapDefinition::from_json_str(s)?)
    }

    pub fn id(&self) -> &str {
        &self.definition.id
    }

    pub fn kind(&self) -> MapKind {
        self.definition.kind
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn degree(&self) -> u32 {
        self.map.degree()
    }

    pub fn topological_degree(&self) -> u64 {
        self.top_degree
    }

    /// `λ_1, …, λ_k`.
    pub fn dynamical_degrees(&self) -> &[u64] {
        &self.dyn_degrees
    }

    /// `λ_{k-1}`, with `λ_0 = 1`.
    pub fn lambda_below_top(&self) -> u64 {
        if self.dim() == 1 {
            1
        } else {
            self.dyn_degrees[self.dim() - 2]
        }
    }

    pub fn definition(&self) -> &MapDefinition {
        &self.definition
    }

    pub fn default_seed(&self) -> Option<ProjectivePoint> {
        self.definition.default_seed
    }

    pub fn poly_map(&self) -> &PolyMap {
        &self.map
    }

    /// `det DF`, whose zero set is the critical set.
    pub fn critical_poly(&self) -> &HomPoly {
        &self.critical
    }

    pub fn exceptional(&self) -> &ExceptionalSet {
        &self.exceptional
    }

    pub fn evaluate(&self, x: &ProjectivePoint) -> Result<ProjectivePoint> {
        self.map.evaluate(x)
    }

    pub fn differential(&self, x: &ProjectivePoint) -> Result<TangentMatrix> {
        self.map.differential(x)
    }

    pub fn fs_jacobian(&self, x: &ProjectivePoint) -> f64 {
        self.map.fs_jacobian(x)
    }

    pub fn chart_derivatives(&self, x: &ProjectivePoint) -> Result<ChartDerivatives> {
        self.map.chart_derivatives(x)
    }

    pub fn newton_inverse(
        &self,
        target: &ProjectivePoint,
        start: &ProjectivePoint,
        max_iter: usize,
    ) -> Result<NewtonSolution> {
        self.map.newton_inverse(target, start, max_iter)
    }

    /// All preimages of `y` with multiplicities summing to `d_t`.
    pub fn preimages(&self, y: &ProjectivePoint) -> Result<Vec<(ProjectivePoint, u32)>> {
        self.solver.solve(&self.map, y)
    }

    pub fn supports_preimages(&self) -> bool {
        self.solver.is_supported()
    }

    pub fn distance_to_j(&self, x: &ProjectivePoint) -> f64 {
        self.exceptional.distance(x)
    }

    /// Counts preimages of a few random targets and compares with `d_t`.
    pub fn check_degrees(&self) -> Result<DegreeReport> {
        let report = count_degree(&self.map, &self.solver, self.top_degree, self.lambda_below_top())?;
        if report.d_t_numeric != self.top_degree {
            return Err(Error::DegreeMismatch {
                declared: self.top_degree,
                numeric: report.d_t_numeric,
            });
        }
        Ok(report)
    }

    /// The iterate `f^n` as a map of degree `d^n`. On P^2 the exceptional
    /// curves of `f` are kept as given.
    pub fn iterate(&self, n: u32) -> Result<MapModel> {
        if n == 0 {
            return Err(Error::InvalidArgument("iterate count must be positive".into()));
        }
        let mut acc = self.map.clone();
        for _ in 1..n {
            acc = self.map.compose(&acc)?;
        }
        let mut def = self.definition.clone();
        def.id = format!("{}^{n}", self.definition.id);
        def.degree = acc.degree();
        def.components = acc.components().iter().map(|c| c.to_terms()).collect();
        def.topological_degree = None;
        def.dynamical_degrees = None;
        MapModel::new(def)
    }
}

fn count_degree(map: &PolyMap, solver: &PreimageSolver, declared: u64, lambda_below: u64) -> Result<DegreeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(DEGREE_CHECK_SEED);
    let mut counts = Vec::with_capacity(DEGREE_CHECK_POINTS);
    for _ in 0..DEGREE_CHECK_POINTS {
        let y = ProjectivePoint::random(map.dim(), &mut rng);
        let pre = solver.solve(map, &y)?;
        counts.push(pre.iter().map(|(_, m)| *m as u64).sum());
    }
    let d_t_numeric = if counts.iter().all(|c| *c == counts[0]) {
        counts[0]
    } else {
        *counts.iter().min().unwrap()
    };
    Ok(DegreeReport {
        d_t_declared: declared,
        d_t_numeric,
        counts,
        lambda_below_top: lambda_below,
        hypothesis_ok: declared > lambda_below,
    })
}

/// Looks for a common zero of the components away from the origin.
fn check_holomorphic(map: &PolyMap, solver: &PreimageSolver) -> Result<()> {
    let scale = map.coefficient_scale();
    match solver {
        // nonzero leading coefficients already rule out common zeros
        PreimageSolver::Diagonal { .. } | PreimageSolver::Skew { .. } => Ok(()),
        _ if map.dim() == 1 => {
            let p = &map.components()[0];
            if p.is_zero() {
                return Err(Error::NotHolomorphic);
            }
            for r in binary_form_roots(&p.binary_coefficients())? {
                let x = ProjectivePoint::new(&r.coords)?;
                let u = x.unit();
                if map.components()[1].eval(&u[..2]).norm() < 1e-10 * scale {
                    return Err(Error::NotHolomorphic);
                }
            }
            Ok(())
        }
        _ => {
            // sample, then refine the smallest values by Gauss–Newton
            let mut rng = ChaCha8Rng::seed_from_u64(DEGREE_CHECK_SEED);
            let mut samples: Vec<(f64, ProjectivePoint)> = (0..4000)
                .map(|_| {
                    let x = ProjectivePoint::random(2, &mut rng);
                    (size_at(map, &x), x)
                })
                .collect();
            samples.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (_, x) in samples.iter().take(10) {
                if size_at(map, &gauss_newton_zero(map, x)) < 1e-10 * scale {
                    return Err(Error::NotHolomorphic);
                }
            }
            Ok(())
        }
    }
}

fn size_at(map: &PolyMap, x: &ProjectivePoint) -> f64 {
    let u = x.unit();
    let f = map.eval_raw(&u[..=map.dim()]);
    f[..=map.dim()].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn gauss_newton_zero(map: &PolyMap, start: &ProjectivePoint) -> ProjectivePoint {
    let m = start.chart();
    let src: Vec<usize> = (0..3).filter(|&a| a != m).collect();
    let mut x = *start;
    for _ in 0..30 {
        let xs = x.coords();
        let f = map.eval_raw(xs);
        let j = map.jacobian_raw(xs);
        // normal equations (J^H J) δ = -J^H F over the two free coordinates
        let mut a = [Complex64::new(0.0, 0.0); 4];
        let mut b = [Complex64::new(0.0, 0.0); 2];
        for (r, &p) in src.iter().enumerate() {
            for i in 0..3 {
                b[r] -= j[i][p].conj() * f[i];
                for (c, &q) in src.iter().enumerate() {
                    a[r * 2 + c] += j[i][p].conj() * j[i][q];
                }
            }
        }
        let Some(step) = solve_small(2, &a, &b) else {
            break;
        };
        let mut coords = [xs[0], xs[1], xs[2]];
        for (r, &p) in src.iter().enumerate() {
            coords[p] += step[r];
        }
        match ProjectivePoint::new(&coords) {
            Ok(next) => x = next,
            Err(_) => break,
        }
    }
    x
}

#[cfg(test)]
mod tests;
