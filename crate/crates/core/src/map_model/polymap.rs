//! A tuple of homogeneous polynomials of a common degree, viewed as a map
//! C^(k+1) -> C^(k+1), with the derivative data needed on P^k.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::poly::HomPoly;
use crate::projective::{chordal_raw, vec_norm, ProjectivePoint, MAX_DIM};
use crate::tangent::{complement_basis, project_out, singular_values, solve_small, CVec, TangentMatrix};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Components below this (relative to the largest coefficient) count as vanishing.
pub const VANISH_TOL: f64 = 1e-14;

/// Increments larger than this are evaluated directly.
const INCREMENT_TAYLOR_MAX: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct PolyMap {
    k: usize,
    degree: u32,
    comps: Vec<HomPoly>,
    /// `jac[i][a] = ∂F_i / ∂x_a`
    jac: Vec<Vec<HomPoly>>,
    /// `hess[i][a][b] = ∂²F_i / ∂x_a ∂x_b`
    hess: Vec<Vec<Vec<HomPoly>>>,
    scale: f64,
}

/// Derivative norms of `f` in the affine charts of the largest coordinate at
/// `x` and `f(x)`.
#[derive(Clone, Copy, Debug)]
pub struct ChartDerivatives {
    pub first: f64,
    pub first_inv: f64,
    pub second: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonSolution {
    pub point: ProjectivePoint,
    pub residual: f64,
    pub iterations: usize,
}

impl PolyMap {
    pub fn new(comps: Vec<HomPoly>) -> Result<Self> {
        let n = comps.len();
        if !(2..=MAX_DIM + 1).contains(&n) {
            return Err(Error::InvalidDefinition(format!("{n} components")));
        }
        let degree = comps[0].degree();
        for (i, c) in comps.iter().enumerate() {
            if c.nvars() != n {
                return Err(Error::InvalidDefinition(format!(
                    "component {i} uses {} variables, expected {n}",
                    c.nvars()
                )));
            }
            if c.degree() != degree && !c.is_zero() {
                return Err(Error::InvalidDefinition(format!(
                    "component {i} has degree {}, expected {degree}",
                    c.degree()
                )));
            }
        }
        if degree == 0 {
            return Err(Error::InvalidDefinition("constant map".into()));
        }
        let scale = comps.iter().map(|c| c.max_coefficient()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(Error::InvalidDefinition("all components are zero".into()));
        }
        let jac: Vec<Vec<HomPoly>> = comps
            .iter()
            .map(|c| (0..n).map(|a| c.derivative(a)).collect())
            .collect();
        let hess = jac
            .iter()
            .map(|row| row.iter().map(|p| (0..n).map(|b| p.derivative(b)).collect()).collect())
            .collect();
        Ok(PolyMap {
            k: n - 1,
            degree,
            comps,
            jac,
            hess,
            scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn components(&self) -> &[HomPoly] {
        &self.comps
    }

    pub fn jacobian_polys(&self) -> &[Vec<HomPoly>] {
        &self.jac
    }

    pub fn coefficient_scale(&self) -> f64 {
        self.scale
    }

    pub fn eval_raw(&self, x: &[Complex64]) -> CVec {
        let mut out = [ZERO; MAX_DIM + 1];
        for (o, c) in out.iter_mut().zip(&self.comps) {
            *o = c.eval(x);
        }
        out
    }

    pub fn jacobian_raw(&self, x: &[Complex64]) -> [CVec; MAX_DIM + 1] {
        let mut out = [[ZERO; MAX_DIM + 1]; MAX_DIM + 1];
        for (i, row) in self.jac.iter().enumerate() {
            for (a, p) in row.iter().enumerate() {
                out[i][a] = p.eval(x);
            }
        }
        out
    }

    /// True when every component vanishes at the unit representative of `x`.
    pub fn vanishes_at(&self, x: &ProjectivePoint) -> bool {
        let u = x.unit();
        let fx = self.eval_raw(&u[..=self.k]);
        fx[..=self.k].iter().all(|c| c.norm() < VANISH_TOL * self.scale)
    }

    pub fn evaluate(&self, x: &ProjectivePoint) -> Result<ProjectivePoint> {
        let fx = self.eval_raw(x.coords());
        let fx = &fx[..=self.k];
        if fx.iter().all(|c| c.norm() < VANISH_TOL * self.scale) {
            return Err(Error::AllComponentsVanish);
        }
        ProjectivePoint::new(fx)
    }

    /// `f^n(x)`.
    pub fn orbit_point(&self, x: &ProjectivePoint, n: usize) -> Result<ProjectivePoint> {
        let mut p = *x;
        for _ in 0..n {
            p = self.evaluate(&p)?;
        }
        Ok(p)
    }

    /// Differential in orthonormal frames of the tangent spaces at `x` and
    /// `f(x)`: for unit `u` and `v ⊥ u`, `v ↦ P(DF(u) v) / |F(u)|`, with `P`
    /// the orthogonal projection onto `F(u)^⊥`.
    pub fn differential(&self, x: &ProjectivePoint) -> Result<TangentMatrix> {
        let k = self.k;
        let u = x.unit();
        let u = &u[..=k];
        let fu = self.eval_raw(u);
        let nf = vec_norm(&fu[..=k]);
        if nf < VANISH_TOL * self.scale {
            return Err(Error::AllComponentsVanish);
        }
        let y: Vec<Complex64> = fu[..=k].iter().map(|c| c / nf).collect();
        let bu = complement_basis(u);
        let by = complement_basis(&y);
        let j = self.jacobian_raw(u);
        let mut entries = vec![ZERO; k * k];
        for (col, v) in bu.iter().enumerate() {
            let mut img = [ZERO; MAX_DIM + 1];
            for i in 0..=k {
                img[i] = (0..=k).map(|a| j[i][a] * v[a]).sum();
            }
            for (row, w) in by.iter().enumerate() {
                let c: Complex64 = (0..=k).map(|i| w[i].conj() * img[i]).sum();
                entries[row * k + col] = c / nf;
            }
        }
        Ok(TangentMatrix::from_entries(k, entries))
    }

    /// Pushes tangent vectors at the unit vector `u` (each orthogonal to `u`)
    /// forward to the unit vector `y ∝ F(u)`. Returns `y` and the images, which
    /// are orthogonal to `y`.
    pub fn push_tangent(&self, u: &CVec, vs: &mut [CVec]) -> Result<CVec> {
        let k = self.k;
        let fu = self.eval_raw(&u[..=k]);
        let nf = vec_norm(&fu[..=k]);
        if nf < VANISH_TOL * self.scale {
            return Err(Error::AllComponentsVanish);
        }
        let mut y = [ZERO; MAX_DIM + 1];
        for i in 0..=k {
            y[i] = fu[i] / nf;
        }
        let j = self.jacobian_raw(&u[..=k]);
        for v in vs.iter_mut() {
            let mut img = [ZERO; MAX_DIM + 1];
            for i in 0..=k {
                img[i] = (0..=k).map(|a| j[i][a] * v[a]).sum::<Complex64>() / nf;
            }
            project_out(&mut img[..=k], &y[..=k]);
            *v = img;
        }
        Ok(y)
    }

    /// `F(u + η) − F(u)`. Small increments use the second-order Taylor
    /// expansion so that the result keeps its relative precision when `η`
    /// is far below the rounding level of `u`.
    pub fn increment(&self, u: &[Complex64], eta: &[Complex64]) -> CVec {
        let k = self.k;
        let mut out = [ZERO; MAX_DIM + 1];
        if vec_norm(eta) > INCREMENT_TAYLOR_MAX {
            let mut v = [ZERO; MAX_DIM + 1];
            for a in 0..=k {
                v[a] = u[a] + eta[a];
            }
            let f1 = self.eval_raw(&v[..=k]);
            let f0 = self.eval_raw(u);
            for i in 0..=k {
                out[i] = f1[i] - f0[i];
            }
            return out;
        }
        let j = self.jacobian_raw(u);
        for i in 0..=k {
            let mut s: Complex64 = (0..=k).map(|a| j[i][a] * eta[a]).sum();
            for a in 0..=k {
                for b in 0..=k {
                    s += self.hess[i][a][b].eval(u) * eta[a] * eta[b] * 0.5;
                }
            }
            out[i] = s;
        }
        out
    }

    /// Fubini–Study Jacobian from the homogeneous determinant:
    /// `|det DF(x)|² |x|^(2(k+1)) / (d² |F(x)|^(2(k+1)))`.
    pub fn fs_jacobian(&self, x: &ProjectivePoint) -> f64 {
        let k = self.k;
        let u = x.unit();
        let u = &u[..=k];
        let fu = self.eval_raw(u);
        let nf2: f64 = fu[..=k].iter().map(|c| c.norm_sqr()).sum();
        if nf2 == 0.0 {
            return 0.0;
        }
        let j = self.jacobian_raw(u);
        let det = match k {
            1 => j[0][0] * j[1][1] - j[0][1] * j[1][0],
            _ => {
                j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
                    - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                    + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
            }
        };
        let d = self.degree as f64;
        det.norm_sqr() / (d * d * nf2.powi(k as i32 + 1))
    }

    /// First and second derivative norms of `f` between affine charts
    /// (chart of the largest coordinate at `x` and at `f(x)`).
    pub fn chart_derivatives(&self, x: &ProjectivePoint) -> Result<ChartDerivatives> {
        let k = self.k;
        let m = x.chart();
        let xs = x.coords();
        let fx = self.evaluate(x)?;
        let t = fx.chart();
        let vals = self.eval_raw(xs);
        let grads = self.jacobian_raw(xs);
        let src: Vec<usize> = (0..=k).filter(|&a| a != m).collect();
        let dst: Vec<usize> = (0..=k).filter(|&i| i != t).collect();
        let v = vals[t];
        let mut first = vec![ZERO; k * k];
        let mut second2 = 0.0;
        for (r, &i) in dst.iter().enumerate() {
            let u = vals[i];
            for (c, &a) in src.iter().enumerate() {
                let ua = grads[i][a];
                let va = grads[t][a];
                first[r * k + c] = (ua * v - u * va) / (v * v);
                for &b in &src {
                    let ub = grads[i][b];
                    let vb = grads[t][b];
                    let uab = self.hess[i][a][b].eval(xs);
                    let vab = self.hess[t][a][b].eval(xs);
                    let g = uab / v - (ua * vb + ub * va) / (v * v) - u * vab / (v * v)
                        + u * va * vb * 2.0 / (v * v * v);
                    second2 += g.norm_sqr();
                }
            }
        }
        let (smax, smin, _) = singular_values(k, &first);
        Ok(ChartDerivatives {
            first: smax,
            first_inv: if smin > 0.0 { 1.0 / smin } else { f64::INFINITY },
            second: second2.sqrt(),
        })
    }

    /// Newton's method for `f(w) = target` started at `start`, working in the
    /// affine chart of `start` and clearing denominators in the chart of
    /// `target`. Steps are halved while they increase the residual.
    pub fn newton_inverse(
        &self,
        target: &ProjectivePoint,
        start: &ProjectivePoint,
        max_iter: usize,
    ) -> Result<NewtonSolution> {
        let k = self.k;
        let m = start.chart();
        let tj = target.chart();
        let y = target.coords();
        let src: Vec<usize> = (0..=k).filter(|&a| a != m).collect();
        let rows: Vec<usize> = (0..=k).filter(|&i| i != tj).collect();

        let system = |w: &[Complex64]| -> Vec<Complex64> {
            let f = self.eval_raw(w);
            rows.iter().map(|&i| f[i] - y[i] * f[tj]).collect()
        };
        let size = |g: &[Complex64]| vec_norm(g);

        let mut w: CVec = [ZERO; MAX_DIM + 1];
        w[..=k].copy_from_slice(start.coords());
        let mut g = system(&w[..=k]);
        let mut gn = size(&g);
        let mut iterations = 0;
        for it in 0..max_iter {
            iterations = it + 1;
            if gn == 0.0 {
                break;
            }
            let jr = self.jacobian_raw(&w[..=k]);
            let mut a = vec![ZERO; k * k];
            for (r, &i) in rows.iter().enumerate() {
                for (c, &l) in src.iter().enumerate() {
                    a[r * k + c] = jr[i][l] - y[i] * jr[tj][l];
                }
            }
            let rhs: Vec<Complex64> = g.iter().map(|c| -c).collect();
            let Some(step) = solve_small(k, &a, &rhs) else {
                break;
            };
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                let mut cand = w;
                for (c, &l) in src.iter().enumerate() {
                    cand[l] += step[c] * lambda;
                }
                let gc = system(&cand[..=k]);
                let gcn = size(&gc);
                if gcn.is_finite() && gcn <= gn {
                    w = cand;
                    g = gc;
                    gn = gcn;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            let step_norm = vec_norm(&step) * lambda;
            if !accepted || step_norm <= 1e-16 * (1.0 + vec_norm(&w[..=k])) {
                break;
            }
        }
        let point = ProjectivePoint::new(&w[..=k])?;
        let fw = self.eval_raw(point.coords());
        if fw[..=k].iter().all(|c| c.norm() < VANISH_TOL * self.scale) {
            return Err(Error::AllComponentsVanish);
        }
        let residual = chordal_raw(&fw[..=k], y);
        Ok(NewtonSolution {
            point,
            residual,
            iterations,
        })
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &PolyMap) -> Result<PolyMap> {
        let comps = self.comps.iter().map(|c| c.compose(&inner.comps)).collect();
        PolyMap::new(comps)
    }
}
