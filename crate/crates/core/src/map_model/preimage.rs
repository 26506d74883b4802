//! Algebraic preimage solvers for the supported map shapes.

use num_complex::Complex64;

use super::definition::MapKind;
use super::polymap::PolyMap;
use crate::error::{Error, Result};
use crate::projective::{chordal_raw, ProjectivePoint};
use crate::roots::binary_form_roots;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Largest accepted chordal residual `dist(f(w), y)` for a returned preimage.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Newton iterations spent polishing each simple preimage.
const POLISH_ITERS: usize = 3;

#[derive(Clone, Debug)]
pub enum PreimageSolver {
    /// Roots of the binary form `b p - a q` on P^1.
    Binary,
    /// `[c_0 z^d : c_1 w^d : c_2 t^d]`: coordinatewise roots.
    Diagonal { coefs: [Complex64; 3] },
    /// `[p(z,t) : q(z,w,t) : c t^d]`: solve for `[z : t]`, then for `w`.
    Skew { ct: Complex64, p_top: Complex64 },
    Unsupported(String),
}

impl PreimageSolver {
    pub fn detect(kind: MapKind, map: &PolyMap) -> Result<Self> {
        let d = map.degree();
        let comps = map.components();
        match kind {
            MapKind::RationalP1 => Ok(PreimageSolver::Binary),
            MapKind::HomogeneousPk if map.dim() == 1 => Ok(PreimageSolver::Binary),
            MapKind::HomogeneousPk => {
                let mut coefs = [ZERO; 3];
                for (i, c) in comps.iter().enumerate() {
                    let mut m = [0u32; 3];
                    m[i] = d;
                    match c.terms() {
                        [(a, mm)] if *mm == m => coefs[i] = *a,
                        _ => {
                            return Ok(PreimageSolver::Unsupported(
                                "only diagonal power maps are solved on P^2".into(),
                            ))
                        }
                    }
                }
                Ok(PreimageSolver::Diagonal { coefs })
            }
            MapKind::PolynomialSkewProduct => {
                if map.dim() != 2 {
                    return Err(Error::InvalidDefinition("skew products live on P^2".into()));
                }
                let ct = match comps[2].terms() {
                    [(a, [0, 0, e])] if *e == d => *a,
                    _ => {
                        return Err(Error::InvalidDefinition(
                            "third component of a skew product must be c t^d".into(),
                        ))
                    }
                };
                if comps[0].terms().iter().any(|(_, m)| m[1] != 0) {
                    return Err(Error::InvalidDefinition(
                        "first component of a skew product must not involve w".into(),
                    ));
                }
                let p_top = comps[0].coefficient(&[d, 0, 0]);
                let q_top = comps[1].coefficient(&[0, d, 0]);
                if p_top == ZERO || q_top == ZERO {
                    return Err(Error::InvalidDefinition(
                        "skew product needs nonzero z^d and w^d leading coefficients".into(),
                    ));
                }
                Ok(PreimageSolver::Skew { ct, p_top })
            }
        }
    }

    pub fn is_supported(&self) -> bool {
        !matches!(self, PreimageSolver::Unsupported(_))
    }

    pub fn solve(&self, map: &PolyMap, y: &ProjectivePoint) -> Result<Vec<(ProjectivePoint, u32)>> {
        let raw = match self {
            PreimageSolver::Binary => solve_binary(map, y)?,
            PreimageSolver::Diagonal { coefs } => solve_diagonal(map.degree(), coefs, y)?,
            PreimageSolver::Skew { ct, p_top } => solve_skew(map, *ct, *p_top, y)?,
            PreimageSolver::Unsupported(why) => return Err(Error::UnsupportedPreimages(why.clone())),
        };
        let mut out = Vec::with_capacity(raw.len());
        for (p, m) in raw {
            if map.vanishes_at(&p) {
                // a common zero of the components, not a genuine preimage
                continue;
            }
            out.push((polish(map, y, p, m)?, m));
        }
        Ok(out)
    }
}

fn residual(map: &PolyMap, w: &ProjectivePoint, y: &ProjectivePoint) -> f64 {
    let k = map.dim();
    let fw = map.eval_raw(w.coords());
    chordal_raw(&fw[..=k], y.coords())
}

fn polish(map: &PolyMap, y: &ProjectivePoint, w: ProjectivePoint, mult: u32) -> Result<ProjectivePoint> {
    let mut best = w;
    let mut res = residual(map, &w, y);
    if mult == 1 && res > 0.0 {
        if let Ok(sol) = map.newton_inverse(y, &w, POLISH_ITERS) {
            if sol.residual < res && sol.point.chordal(&w) < 1e-6 {
                best = sol.point;
                res = sol.residual;
            }
        }
    }
    if res > RESIDUAL_TOL {
        return Err(Error::RootSolverFailure { residual: res });
    }
    Ok(best)
}

fn solve_binary(map: &PolyMap, y: &ProjectivePoint) -> Result<Vec<(ProjectivePoint, u32)>> {
    let [a, b] = [y.coords()[0], y.coords()[1]];
    let pc = map.components()[0].binary_coefficients();
    let qc = map.components()[1].binary_coefficients();
    let h: Vec<Complex64> = pc.iter().zip(&qc).map(|(p, q)| b * p - a * q).collect();
    if h.iter().all(|c| *c == ZERO) {
        return Err(Error::RootSolverFailure { residual: f64::INFINITY });
    }
    binary_form_roots(&h)?
        .into_iter()
        .map(|r| Ok((ProjectivePoint::new(&r.coords)?, r.multiplicity)))
        .collect()
}

/// All `d`-th roots of `r`, or `0` with multiplicity `d` when `r = 0`.
fn dth_roots(r: Complex64, d: u32) -> Vec<(Complex64, u32)> {
    if r == ZERO {
        return vec![(ZERO, d)];
    }
    let base = r.powf(1.0 / d as f64);
    (0..d)
        .map(|j| {
            let angle = std::f64::consts::TAU * j as f64 / d as f64;
            (base * Complex64::from_polar(1.0, angle), 1)
        })
        .collect()
}

fn solve_diagonal(d: u32, coefs: &[Complex64; 3], y: &ProjectivePoint) -> Result<Vec<(ProjectivePoint, u32)>> {
    let n = y.coords().len();
    let r: Vec<Complex64> = (0..n).map(|i| y.coords()[i] / coefs[i]).collect();
    let m = (0..n).max_by(|&i, &j| r[i].norm().total_cmp(&r[j].norm())).unwrap();
    let mut partial: Vec<(Vec<Complex64>, u32)> = vec![(Vec::new(), 1)];
    for i in 0..n {
        let choices = if i == m {
            vec![(ONE, 1)]
        } else {
            dth_roots(r[i] / r[m], d)
        };
        partial = partial
            .into_iter()
            .flat_map(|(coords, mult)| {
                choices.iter().map(move |(c, cm)| {
                    let mut next = coords.clone();
                    next.push(*c);
                    (next, mult * cm)
                })
            })
            .collect();
    }
    partial
        .into_iter()
        .map(|(c, m)| Ok((ProjectivePoint::new(&c)?, m)))
        .collect()
}

fn solve_skew(
    map: &PolyMap,
    ct: Complex64,
    p_top: Complex64,
    y: &ProjectivePoint,
) -> Result<Vec<(ProjectivePoint, u32)>> {
    let d = map.degree();
    let [a, b, c] = [y.coords()[0], y.coords()[1], y.coords()[2]];
    let p = &map.components()[0];
    let q = &map.components()[1];
    let mut out = Vec::new();
    if c == ZERO {
        // t = 0 with multiplicity d; then [p_top z^d : q(z, w, 0)] = [a : b]
        let mut form = vec![ZERO; d as usize + 1];
        for (coef, mm) in q.terms() {
            if mm[2] == 0 {
                form[mm[0] as usize] -= a * coef;
            }
        }
        form[d as usize] += b * p_top;
        if form.iter().all(|x| *x == ZERO) {
            return Err(Error::RootSolverFailure { residual: f64::INFINITY });
        }
        for r in binary_form_roots(&form)? {
            let pt = ProjectivePoint::new(&[r.coords[0], r.coords[1], ZERO])?;
            out.push((pt, r.multiplicity * d));
        }
        return Ok(out);
    }
    // c p(z, t) - a ct t^d = 0 as a binary form in (z, t)
    let mut zt_form: Vec<Complex64> = p.binary_coefficients_of(0, 2).iter().map(|x| x * c).collect();
    zt_form[0] -= a * ct;
    for zr in binary_form_roots(&zt_form)? {
        let [z0, t0] = zr.coords;
        // c q(z0, w, t0) - b ct t0^d = 0 in w
        let mut wc: Vec<Complex64> = q
            .coefficients_in(1, &[z0, ZERO, t0])
            .iter()
            .map(|x| x * c)
            .collect();
        wc[0] -= b * ct * t0.powu(d);
        for wr in binary_form_roots(&wc)? {
            if wr.coords[1] == ZERO {
                return Err(Error::RootSolverFailure { residual: f64::INFINITY });
            }
            let w0 = wr.coords[0] / wr.coords[1];
            let pt = ProjectivePoint::new(&[z0, w0, t0])?;
            out.push((pt, zr.multiplicity * wr.multiplicity));
        }
    }
    Ok(out)
}
