//! The exceptional set 𝒥 = 𝒥′ ∪ f⁻¹(𝒥′), where 𝒥′ is the critical-value set,
//! and the distance to it.

use super::polymap::PolyMap;
use super::preimage::PreimageSolver;
use crate::error::{Error, Result};
use crate::poly::{poly_det, HomPoly};
use crate::projective::ProjectivePoint;
use crate::roots::binary_form_roots;

/// Floor on the gradient norm in the first-order distance proxy.
pub const G_FLOOR: f64 = 1e-8;

/// Points of 𝒥 closer than this are merged.
const DEDUP_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct DefiningPoly {
    pub poly: HomPoly,
    grad: Vec<HomPoly>,
}

impl DefiningPoly {
    pub fn new(poly: HomPoly) -> Self {
        let grad = (0..poly.nvars()).map(|a| poly.derivative(a)).collect();
        DefiningPoly { poly, grad }
    }

    /// `|v(u)| / max(|∇v(u)|, G_FLOOR)` at the unit representative `u` of `x`.
    pub fn proxy(&self, x: &ProjectivePoint) -> f64 {
        let u = x.unit();
        let u = &u[..=x.dim()];
        let val = self.poly.eval(u).norm();
        let g: f64 = self.grad.iter().map(|p| p.eval(u).norm_sqr()).sum::<f64>().sqrt();
        val / g.max(G_FLOOR)
    }
}

#[derive(Clone, Debug)]
pub enum ExceptionalSet {
    /// Finite set on P^1.
    Points(Vec<ProjectivePoint>),
    /// Union of zero sets of homogeneous polynomials on P^2.
    Hypersurfaces(Vec<DefiningPoly>),
}

impl ExceptionalSet {
    /// Exact chordal distance on P^1; first-order proxy clamped to 1 on P^2.
    pub fn distance(&self, x: &ProjectivePoint) -> f64 {
        match self {
            ExceptionalSet::Points(pts) => pts.iter().map(|p| p.chordal(x)).fold(1.0, f64::min),
            ExceptionalSet::Hypersurfaces(polys) => polys.iter().map(|v| v.proxy(x)).fold(1.0, f64::min),
        }
    }

    pub fn points(&self) -> Option<&[ProjectivePoint]> {
        match self {
            ExceptionalSet::Points(p) => Some(p),
            ExceptionalSet::Hypersurfaces(_) => None,
        }
    }

    pub fn polynomials(&self) -> Vec<&HomPoly> {
        match self {
            ExceptionalSet::Points(_) => Vec::new(),
            ExceptionalSet::Hypersurfaces(v) => v.iter().map(|d| &d.poly).collect(),
        }
    }

    /// Critical points from the Wronskian `p_z q_t - p_t q_z`, their images,
    /// and the preimages of those images.
    pub fn for_p1(map: &PolyMap, solver: &PreimageSolver) -> Result<Self> {
        let w = critical_polynomial(map);
        if w.is_zero() {
            return Err(Error::InvalidDefinition("map has vanishing Jacobian determinant".into()));
        }
        let mut values: Vec<ProjectivePoint> = Vec::new();
        for r in binary_form_roots(&w.binary_coefficients())? {
            let c = ProjectivePoint::new(&r.coords)?;
            push_unique(&mut values, map.evaluate(&c)?);
        }
        let mut all = values.clone();
        for v in &values {
            for (p, _) in solver.solve(map, v)? {
                push_unique(&mut all, p);
            }
        }
        Ok(ExceptionalSet::Points(all))
    }

    /// The listed curves, plus their pullbacks `v ∘ F` unless they are
    /// already totally invariant.
    pub fn for_p2(base: Vec<HomPoly>, pullback_through: Option<&PolyMap>) -> Self {
        let mut polys: Vec<DefiningPoly> = base.iter().cloned().map(DefiningPoly::new).collect();
        if let Some(f) = pullback_through {
            for v in &base {
                polys.push(DefiningPoly::new(v.compose(f.components())));
            }
        }
        ExceptionalSet::Hypersurfaces(polys)
    }
}

/// `det DF`, homogeneous of degree `(k+1)(d-1)`; its zero set is the critical set.
pub fn critical_polynomial(map: &PolyMap) -> HomPoly {
    poly_det(map.jacobian_polys())
}

fn push_unique(set: &mut Vec<ProjectivePoint>, p: ProjectivePoint) {
    if !set.iter().any(|q| q.chordal(&p) < DEDUP_TOL) {
        set.push(p);
    }
}
