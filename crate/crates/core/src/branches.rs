//! Quantitative inverse branches along backward orbits: radius schedules,
//! probe-based certification of the one-step and composed branches, and
//! slow-variation envelopes of orbit products.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::LyapunovEstimate;
use crate::map_model::MapModel;
use crate::projective::{inner, vec_norm, ProjectivePoint, MAX_DIM};
use crate::sampler::BackwardOrbit;
use crate::stats::linear_fit;
use crate::tangent::{complement_basis, solve_small, CVec};

pub const DEFAULT_EPS: f64 = 0.05;

/// Relative slack on the Lipschitz and Jacobian bounds.
pub const BOUND_TOL: f64 = 0.05;

/// Safety factor on the lower bound for `C`.
pub const C_FACTOR: f64 = 1.01;

pub const A1_FLOOR: f64 = 1e-13;
pub const DERIVATIVE_PROBES: usize = 20;
pub const BRANCH_PROBES: usize = 50;
pub const INCLUSION_PROBES: usize = 10;
pub const VOLUME_POINTS: usize = 1000;
pub const IDENTITY_PROBES: usize = 50;
pub const NEWTON_ITER: usize = 30;
pub const NEWTON_RESIDUAL: f64 = 1e-9;
pub const IDENTITY_TOL: f64 = 1e-7;

const ZERO_VEC: CVec = [Complex64::new(0.0, 0.0); MAX_DIM + 1];

/// Probes with a smaller Jacobian are treated as critical.
const CRITICAL_JAC: f64 = 1e-300;

/// Exponent data an inverse-branch schedule is calibrated against.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Exponents {
    /// `χ_1 ≤ … ≤ χ_k`.
    pub chi: Vec<f64>,
    pub sigma: f64,
}

impl Exponents {
    pub fn new(chi: Vec<f64>) -> Self {
        let sigma = chi.iter().sum();
        Exponents { chi, sigma }
    }

    pub fn chi_min(&self) -> f64 {
        self.chi[0]
    }

    pub fn chi_max(&self) -> f64 {
        *self.chi.last().unwrap()
    }
}

impl From<&LyapunovEstimate> for Exponents {
    fn from(est: &LyapunovEstimate) -> Self {
        Exponents {
            chi: est.chi.clone(),
            sigma: est.sigma,
        }
    }
}

/// `C = 1.01 · max{e^{ε/2}, (1 − e^{−ε/2})^{-1}}`.
pub fn schedule_constant(eps: f64) -> f64 {
    C_FACTOR * (eps / 2.0).exp().max(1.0 / (1.0 - (-eps / 2.0).exp()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub n: usize,
    pub r_n: f64,
    pub m_n_hat: f64,
    pub alpha_n: f64,
    /// `‖df(x_-n-1)‖`.
    pub op_norm: f64,
    /// `‖df(x_-n-1)^{-1}‖`.
    pub inv_norm: f64,
    /// `Jac f(x_-n-1)`.
    pub jacobian: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadiusSchedule {
    pub map_id: String,
    pub orbit_seed: u64,
    pub orbit_index: u64,
    pub eps: f64,
    pub c: f64,
    pub a1_hat: f64,
    /// Depth at which `½ dist(x_-n, 𝒥) e^{nε}` is smallest.
    pub a1_argmin: usize,
    pub exponents: Exponents,
    /// Multiplier applied to every `r_n` (1 for the schedule proper).
    pub radius_factor: f64,
    pub entries: Vec<ScheduleEntry>,
}

impl RadiusSchedule {
    /// The same schedule with every radius multiplied by `factor`.
    pub fn with_radius_factor(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.radius_factor *= factor;
        for e in &mut s.entries {
            e.r_n *= factor;
        }
        s
    }
}

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: usize, b: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

const HALTON_BASES: [usize; 4] = [2, 3, 5, 7];

/// Quasi-uniform point `i ≥ 1` of the unit ball of C^k.
fn halton_ball(i: usize, k: usize) -> [Complex64; MAX_DIM] {
    let h: Vec<f64> = HALTON_BASES.iter().map(|&b| radical_inverse(i, b)).collect();
    let tau = std::f64::consts::TAU;
    let mut z = [Complex64::new(0.0, 0.0); MAX_DIM];
    if k == 1 {
        z[0] = Complex64::from_polar(h[0].sqrt(), tau * h[1]);
    } else {
        // (|z1|², |z2|²) is uniform on the simplex for the uniform ball measure
        let (mut a, mut b) = (h[0], h[1]);
        if a + b > 1.0 {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        z[0] = Complex64::from_polar(a.sqrt(), tau * h[2]);
        z[1] = Complex64::from_polar(b.sqrt(), tau * h[3]);
    }
    z
}

/// Offsets `η ⊥ u` standing for quasi-uniform points `[u + η]` of the ball
/// of chordal radius `s` about `[u]`; the first offset is zero.
fn ball_offsets(k: usize, u: &CVec, s: f64, count: usize) -> Vec<CVec> {
    let basis = complement_basis(&u[..=k]);
    let s = s.min(0.999);
    let t = s / (1.0 - s * s).sqrt();
    let mut out = Vec::with_capacity(count);
    out.push(ZERO_VEC);
    for i in 1..count {
        let z = halton_ball(i, k);
        let mut eta = ZERO_VEC;
        for (zi, b) in z.iter().zip(&basis) {
            for a in 0..=k {
                eta[a] += zi * t * b[a];
            }
        }
        out.push(eta);
    }
    out
}

fn offset_point(k: usize, u: &CVec, eta: &CVec) -> Result<ProjectivePoint> {
    let mut p = *u;
    for a in 0..=k {
        p[a] += eta[a];
    }
    ProjectivePoint::new(&p[..=k])
}

/// `count` probe points in `B(x, s)`, the first being `x` itself.
fn ball_probes(x: &ProjectivePoint, s: f64, count: usize) -> Result<Vec<ProjectivePoint>> {
    let k = x.dim();
    let u = x.unit();
    let mut out: Vec<ProjectivePoint> = ball_offsets(k, &u, s, count)
        .iter()
        .map(|eta| offset_point(k, &u, eta))
        .collect::<Result<_>>()?;
    out[0] = *x;
    Ok(out)
}

/// Chordal distance between `[u + a]` and `[u + b]`, keeping full relative
/// precision when the offsets are far below the size of `u`.
fn offset_chordal(k: usize, u: &CVec, a: &CVec, b: &CVec) -> f64 {
    let mut wedge = 0.0;
    for i in 0..=k {
        for j in i + 1..=k {
            let di = b[i] - a[i];
            let dj = b[j] - a[j];
            let w = u[i] * dj - u[j] * di + a[i] * b[j] - a[j] * b[i];
            wedge += w.norm_sqr();
        }
    }
    let na: f64 = (0..=k).map(|i| (u[i] + a[i]).norm_sqr()).sum();
    let nb: f64 = (0..=k).map(|i| (u[i] + b[i]).norm_sqr()).sum();
    (wedge / (na * nb)).sqrt()
}

/// Rewrites `[u + η]` as `[w + η']` with `η' ⊥ w`, for unit `w` projectively
/// equal to `u` up to rounding.
fn transfer(k: usize, u: &CVec, w: &CVec, eta: &CVec) -> CVec {
    let c = inner(&u[..=k], &w[..=k]);
    let c = c / c.norm();
    let mut e = ZERO_VEC;
    for a in 0..=k {
        e[a] = c * eta[a];
    }
    let s = inner(&w[..=k], &e[..=k]);
    let mut out = ZERO_VEC;
    for a in 0..=k {
        out[a] = (e[a] - s * w[a]) / (Complex64::new(1.0, 0.0) + s);
    }
    out
}

/// The unit vector `w ∝ F(u)` and the offset of `f([u + η])` from `[w]`.
fn push_offset(map: &MapModel, u: &CVec, eta: &CVec) -> Result<(CVec, CVec)> {
    let k = map.dim();
    let f = map.poly_map();
    let fu = f.eval_raw(&u[..=k]);
    let nf = vec_norm(&fu[..=k]);
    if !(nf > 0.0) {
        return Err(Error::AllComponentsVanish);
    }
    let mut w = ZERO_VEC;
    for i in 0..=k {
        w[i] = fu[i] / nf;
    }
    let d = f.increment(&u[..=k], &eta[..=k]);
    let mut e = ZERO_VEC;
    for i in 0..=k {
        e[i] = d[i] / nf;
    }
    let s = inner(&w[..=k], &e[..=k]);
    let mut out = ZERO_VEC;
    for i in 0..=k {
        out[i] = (e[i] - s * w[i]) / (Complex64::new(1.0, 0.0) + s);
    }
    Ok((w, out))
}

/// Offset at `src` of the point of the branch through `[src]` mapping to
/// `[tgt + delta]`, by damped Newton iteration; `None` if it does not
/// converge to a relative residual of [`NEWTON_RESIDUAL`].
fn pull_offset(map: &MapModel, src: &CVec, tgt: &CVec, delta: &CVec) -> Option<CVec> {
    let k = map.dim();
    let f = map.poly_map();
    let (w, _) = push_offset(map, src, &ZERO_VEC).ok()?;
    let target = transfer(k, tgt, &w, delta);
    let scale = vec_norm(&target[..=k]);
    if scale == 0.0 {
        return Some(ZERO_VEC);
    }
    let nf = vec_norm(&f.eval_raw(&src[..=k])[..=k]);
    let bu = complement_basis(&src[..=k]);
    let bw = complement_basis(&w[..=k]);
    let residual = |eta: &CVec| -> Option<(CVec, f64)> {
        let (_, img) = push_offset(map, src, eta).ok()?;
        let mut r = ZERO_VEC;
        for a in 0..=k {
            r[a] = target[a] - img[a];
        }
        let n = vec_norm(&r[..=k]);
        n.is_finite().then_some((r, n))
    };
    let mut eta = ZERO_VEC;
    let (mut r, mut rn) = residual(&eta)?;
    for _ in 0..NEWTON_ITER {
        if rn <= 1e-15 * scale {
            break;
        }
        let mut x = *src;
        for a in 0..=k {
            x[a] += eta[a];
        }
        let jr = f.jacobian_raw(&x[..=k]);
        let mut mat = vec![Complex64::new(0.0, 0.0); k * k];
        for (c, v) in bu.iter().enumerate() {
            for (row, b) in bw.iter().enumerate() {
                let mut s = Complex64::new(0.0, 0.0);
                for i in 0..=k {
                    let img: Complex64 = (0..=k).map(|a| jr[i][a] * v[a]).sum();
                    s += b[i].conj() * img;
                }
                mat[row * k + c] = s / nf;
            }
        }
        let rhs: Vec<Complex64> = bw.iter().map(|b| inner(&b[..=k], &r[..=k])).collect();
        let xi = solve_small(k, &mat, &rhs)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let mut cand = eta;
            for (c, v) in bu.iter().enumerate() {
                for a in 0..=k {
                    cand[a] += xi[c] * lambda * v[a];
                }
            }
            if let Some((rc, rcn)) = residual(&cand) {
                if rcn < rn {
                    eta = cand;
                    r = rc;
                    rn = rcn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (rn <= NEWTON_RESIDUAL * scale).then_some(eta)
}

/// `sup (‖df‖ + ‖d²f‖ + ‖df^{-1}‖ + ‖df^{-1}‖³‖d²f‖)` over probes, plus one.
fn probe_m(map: &MapModel, x: &ProjectivePoint, radius: f64) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for p in ball_probes(x, radius, DERIVATIVE_PROBES)? {
        let d = map.chart_derivatives(&p)?;
        let v = d.first + d.second + d.first_inv + d.first_inv.powi(3) * d.second;
        sup = sup.max(v);
    }
    Ok(1.0 + sup)
}

/// `r_n = α_n A_1 e^{-(n+1)ε} / (C M_n^{2k+1})` along `orbit`, for
/// `n = 0 … N−1`.
pub fn radius_schedule(map: &MapModel, orbit: &BackwardOrbit, eps: f64, exps: &Exponents) -> Result<RadiusSchedule> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    if orbit.depth() == 0 {
        return Err(Error::InvalidArgument("orbit has depth 0".into()));
    }
    let chi1 = exps.chi_min();
    if !(eps < chi1 / 10.0) {
        return Err(Error::EpsTooLarge { eps, chi1 });
    }
    let k = map.dim() as i32;
    let c = schedule_constant(eps);

    let mut a1 = f64::INFINITY;
    let mut a1_argmin = 0;
    for (n, x) in orbit.points.iter().enumerate() {
        let v = 0.5 * map.distance_to_j(x) * (n as f64 * eps).exp();
        if v < a1 {
            a1 = v;
            a1_argmin = n;
        }
    }
    let a1 = a1.min(1.0);
    if !(a1 >= A1_FLOOR) {
        return Err(Error::OrbitTooCloseToJ { a1 });
    }

    let entries = (0..orbit.depth())
        .map(|n| {
            let x = orbit.at(n + 1);
            let t = map.differential(x)?;
            let alpha = 1f64.min(t.op_norm).min(t.inv_norm).min(t.fs_jacobian);
            let candidate = alpha * a1 * (-((n + 1) as f64) * eps).exp() / c;
            let m = probe_m(map, x, 2.0 * candidate)?;
            let r = candidate / m.powi(2 * k + 1);
            Ok(ScheduleEntry {
                n,
                r_n: if r.is_finite() { r } else { 0.0 },
                m_n_hat: m,
                alpha_n: alpha,
                op_norm: t.op_norm,
                inv_norm: t.inv_norm,
                jacobian: t.fs_jacobian,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RadiusSchedule {
        map_id: map.id().to_string(),
        orbit_seed: orbit.rng_seed,
        orbit_index: orbit.index,
        eps,
        c,
        a1_hat: a1,
        a1_argmin,
        exponents: exps.clone(),
        radius_factor: 1.0,
        entries,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DepthRecord {
    pub n: usize,
    pub r_n: f64,
    pub m_n_hat: f64,
    pub alpha_n: f64,
    pub lip_g: f64,
    pub lip_g_bound: f64,
    pub lip_f: f64,
    pub lip_f_bound: f64,
    pub jac_min: f64,
    pub jac_bound: f64,
    pub probes_ok: usize,
    pub pass: bool,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VolumeRecord {
    pub n: usize,
    pub volume: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Checks on the composed branch `f^{-n}` over `B(x_0, r̂)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComposedCheck {
    pub depth: usize,
    /// `r̂ = min_j r_j / ∏_{i<j} ‖df(x_-i-1)^{-1}‖ e^{ε/2}`.
    pub radius: f64,
    /// Constant in the inclusion `B(x_-n, s/Ĉ e^{-n(χ_k+ε)}) ⊂ f^{-n} B(x_0, s)`.
    pub c_hat: f64,
    /// Constant in the volume bound `κ̂ vol B e^{-n(2Σ−ε)}`.
    pub kappa_hat: f64,
    /// Largest `dist(f^n(g_n(p)), p)` over identity probes and depths.
    pub identity_error: f64,
    pub newton_failures: usize,
    pub inclusion_failures: usize,
    pub volumes: Vec<VolumeRecord>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InverseBranchCertificate {
    pub map_id: String,
    pub orbit_seed: u64,
    pub orbit_index: u64,
    pub eps: f64,
    pub a1_hat: f64,
    pub c: f64,
    pub schedule: Vec<DepthRecord>,
    /// Number of leading depths whose one-step branch passed.
    pub max_certified_depth: usize,
    /// Stopped early on a Newton failure.
    pub truncated: bool,
    pub rho_hat: f64,
    pub eta_hat: f64,
    /// Least-squares slope of `log r_n` against `n`.
    pub decay_slope: f64,
    pub composed: Option<ComposedCheck>,
}

impl InverseBranchCertificate {
    /// The composed branch is certified through `depth` steps.
    pub fn certified_to(&self, depth: usize) -> bool {
        self.max_certified_depth >= depth && self.composed.as_ref().is_some_and(|c| c.pass && c.depth >= depth)
    }

    /// `slope ≥ −3 ρ ε (1 + 0.1)` for a decay exponent `ρ` shared by orbits.
    pub fn slow_decay_ok(&self, rho: f64) -> bool {
        self.decay_slope >= -3.0 * rho * self.eps * 1.1
    }
}

/// Largest pairwise distance ratios `(dst/src, src/dst)` over the probes.
fn pair_lipschitz(k: usize, us: &CVec, src: &[CVec], ud: &CVec, dst: &[CVec]) -> (f64, f64) {
    let mut lip_g: f64 = 0.0;
    let mut lip_f: f64 = 0.0;
    for a in 0..src.len() {
        for b in a + 1..src.len() {
            let ds = offset_chordal(k, us, &src[a], &src[b]);
            let dd = offset_chordal(k, ud, &dst[a], &dst[b]);
            if ds > 0.0 && dd > 0.0 {
                lip_g = lip_g.max(dd / ds);
                lip_f = lip_f.max(ds / dd);
            }
        }
    }
    (lip_g, lip_f)
}

fn certify_depth(map: &MapModel, frames: &[CVec], eps: f64, e: &ScheduleEntry) -> Result<(DepthRecord, bool)> {
    let k = map.dim();
    let n = e.n;
    let grow = (eps / 2.0).exp();
    let mut rec = DepthRecord {
        n,
        r_n: e.r_n,
        m_n_hat: e.m_n_hat,
        alpha_n: e.alpha_n,
        lip_g: f64::NAN,
        lip_g_bound: e.inv_norm * grow,
        lip_f: f64::NAN,
        lip_f_bound: e.op_norm * grow,
        jac_min: f64::NAN,
        jac_bound: e.jacobian / grow,
        probes_ok: 0,
        pass: false,
        failure: None,
    };
    if !(e.r_n > 0.0) {
        rec.failure = Some("radius is zero".into());
        return Ok((rec, false));
    }
    let (uc, ub) = (&frames[n], &frames[n + 1]);
    let probes = ball_offsets(k, uc, e.r_n, BRANCH_PROBES);
    let mut images = Vec::with_capacity(probes.len());
    for p in &probes {
        match pull_offset(map, ub, uc, p) {
            Some(eta) => images.push(eta),
            None => {
                rec.probes_ok = images.len();
                rec.failure = Some("newton divergence".into());
                return Ok((rec, true));
            }
        }
    }
    rec.probes_ok = images.len();
    let (lip_g, lip_f) = pair_lipschitz(k, uc, &probes, ub, &images);
    let mut jac_min = f64::INFINITY;
    for eta in &images {
        jac_min = jac_min.min(map.fs_jacobian(&offset_point(k, ub, eta)?));
    }
    rec.lip_g = lip_g;
    rec.lip_f = lip_f;
    rec.jac_min = jac_min;
    let ok_g = lip_g <= rec.lip_g_bound * (1.0 + BOUND_TOL);
    let ok_f = lip_f <= rec.lip_f_bound * (1.0 + BOUND_TOL);
    let ok_j = jac_min > CRITICAL_JAC && jac_min >= rec.jac_bound * (1.0 - BOUND_TOL);
    rec.pass = ok_g && ok_f && ok_j;
    if !rec.pass {
        let mut why = Vec::new();
        if !ok_g {
            why.push("lip_g");
        }
        if !ok_f {
            why.push("lip_f");
        }
        if !ok_j {
            why.push("jacobian");
        }
        rec.failure = Some(format!("bound exceeded: {}", why.join(", ")));
    }
    Ok((rec, false))
}

/// Offsets of `g_1(p), …, g_depth(p)` at `x_-1, …, x_-depth` for the offset
/// `p` at `x_0`, or `None` on a Newton failure.
fn branch_chain(map: &MapModel, frames: &[CVec], p: &CVec, depth: usize) -> Option<Vec<CVec>> {
    let mut chain = Vec::with_capacity(depth);
    let mut eta = *p;
    for j in 0..depth {
        eta = pull_offset(map, &frames[j + 1], &frames[j], &eta)?;
        chain.push(eta);
    }
    Some(chain)
}

/// Offset at `x_0` of `f^n([x_-n + η])`.
fn push_to_start(map: &MapModel, frames: &[CVec], eta: &CVec, n: usize) -> Result<CVec> {
    let k = map.dim();
    let mut e = *eta;
    for j in (1..=n).rev() {
        let (w, img) = push_offset(map, &frames[j], &e)?;
        e = transfer(k, &w, &frames[j - 1], &img);
    }
    Ok(e)
}

fn composed_check(
    map: &MapModel,
    frames: &[CVec],
    sched: &RadiusSchedule,
    records: &[DepthRecord],
    depth: usize,
) -> Result<ComposedCheck> {
    let k = map.dim();
    let eps = sched.eps;
    let half = (eps / 2.0).exp();
    let exps = &sched.exponents;

    let mut radius = f64::INFINITY;
    let mut lip = 1.0;
    for j in 0..depth {
        radius = radius.min(records[j].r_n / lip);
        lip *= sched.entries[j].inv_norm * half;
    }

    // ε-rapid constants C = max(C_1, C_2) and κ = C_3^{-1} fitted on this orbit
    let (mut c1, mut c2, mut kappa) = (1f64, 1f64, 1f64);
    let (mut log_inv, mut log_op, mut log_jac) = (0.0, 0.0, 0.0);
    for n in 1..=depth {
        let e = &sched.entries[n - 1];
        log_inv += e.inv_norm.ln();
        log_op += e.op_norm.ln();
        log_jac += e.jacobian.ln();
        let nf = n as f64;
        c1 = c1.max((log_inv + nf * eps / 2.0 - nf * (-exps.chi_min() + eps)).exp());
        c2 = c2.max((log_op + nf * eps / 2.0 - nf * (exps.chi_max() + eps)).exp());
        kappa = kappa.max((nf * (2.0 * exps.sigma - eps) - (log_jac - nf * eps / 2.0)).exp());
    }
    let c_hat = c1.max(c2);

    let u0 = &frames[0];
    let points = ball_offsets(k, u0, radius, VOLUME_POINTS);
    let chains: Vec<Option<Vec<CVec>>> = points.iter().map(|p| branch_chain(map, frames, p, depth)).collect();
    let newton_failures = chains.iter().filter(|c| c.is_none()).count();

    let mut identity_error: f64 = 0.0;
    for (p, chain) in points.iter().zip(&chains).take(IDENTITY_PROBES) {
        let Some(chain) = chain else { continue };
        for (j, eta) in chain.iter().enumerate() {
            let back = push_to_start(map, frames, eta, j + 1)?;
            identity_error = identity_error.max(offset_chordal(k, u0, &back, p));
        }
    }

    let ball_volume = radius.powi(2 * k as i32);
    let mut volumes = Vec::with_capacity(depth);
    let mut inv_jac = vec![0.0; depth];
    let mut used = 0usize;
    for chain in chains.iter().flatten() {
        used += 1;
        let mut log_j = 0.0;
        for (j, eta) in chain.iter().enumerate() {
            log_j += map.fs_jacobian(&offset_point(k, &frames[j + 1], eta)?).ln();
            inv_jac[j] += (-log_j).exp();
        }
    }
    for n in 1..=depth {
        let volume = ball_volume * inv_jac[n - 1] / used.max(1) as f64;
        let bound = kappa * ball_volume * (-(n as f64) * (2.0 * exps.sigma - eps)).exp();
        volumes.push(VolumeRecord {
            n,
            volume,
            bound,
            ok: volume <= bound * (1.0 + BOUND_TOL),
        });
    }

    let mut inclusion_failures = 0;
    for n in 1..=depth {
        let s = radius / c_hat * (-(n as f64) * (exps.chi_max() + eps)).exp();
        for q in ball_offsets(k, &frames[n], s, INCLUSION_PROBES + 1).iter().skip(1) {
            let y = push_to_start(map, frames, q, n)?;
            let inside = offset_chordal(k, u0, &ZERO_VEC, &y) < radius;
            let back = branch_chain(map, frames, &y, n).map(|c| c[n - 1]);
            let same = back.is_some_and(|b| offset_chordal(k, &frames[n], &b, q) <= 1e-6 * s);
            if !(inside && same) {
                inclusion_failures += 1;
            }
        }
    }

    let pass = newton_failures == 0
        && identity_error <= IDENTITY_TOL
        && inclusion_failures == 0
        && volumes.iter().all(|v| v.ok);
    Ok(ComposedCheck {
        depth,
        radius,
        c_hat,
        kappa_hat: kappa,
        identity_error,
        newton_failures,
        inclusion_failures,
        volumes,
        pass,
    })
}

/// Probes every one-step branch of the schedule and then the composed branch
/// up to the deepest fully passing depth.
pub fn certify_branches(map: &MapModel, orbit: &BackwardOrbit, sched: &RadiusSchedule) -> Result<InverseBranchCertificate> {
    let frames: Vec<CVec> = orbit.points.iter().map(|x| x.unit()).collect();
    let mut records = Vec::with_capacity(sched.entries.len());
    let mut truncated = false;
    for e in &sched.entries {
        let (rec, diverged) = certify_depth(map, &frames, sched.eps, e)?;
        records.push(rec);
        if diverged {
            truncated = true;
            break;
        }
    }
    let max_certified_depth = records.iter().take_while(|r| r.pass).count();

    let fit_len = if max_certified_depth >= 2 { max_certified_depth } else { records.len() };
    let radii: Vec<f64> = records[..fit_len].iter().map(|r| r.r_n).collect();
    let (rho_hat, eta_hat, decay_slope) = decay_fit(&radii, sched.eps);

    let composed = if max_certified_depth >= 1 {
        Some(composed_check(map, &frames, sched, &records, max_certified_depth)?)
    } else {
        None
    };

    Ok(InverseBranchCertificate {
        map_id: sched.map_id.clone(),
        orbit_seed: sched.orbit_seed,
        orbit_index: sched.orbit_index,
        eps: sched.eps,
        a1_hat: sched.a1_hat,
        c: sched.c,
        schedule: records,
        max_certified_depth,
        truncated,
        rho_hat,
        eta_hat,
        decay_slope,
        composed,
    })
}

/// `(ρ̂, η̂, slope)`: the smallest `ρ̂ ≥ 0` with `r_n ≥ r_0 e^{-3nρ̂ε}`,
/// `η̂ = r_0`, and the least-squares slope of `log r_n`.
fn decay_fit(radii: &[f64], eps: f64) -> (f64, f64, f64) {
    if radii.is_empty() || !(radii[0] > 0.0) {
        return (f64::NAN, 0.0, f64::NAN);
    }
    let l0 = radii[0].ln();
    let mut rho: f64 = 0.0;
    for (n, r) in radii.iter().enumerate().skip(1) {
        rho = rho.max((l0 - r.ln()) / (3.0 * n as f64 * eps));
    }
    let slope = if radii.len() >= 2 {
        let xs: Vec<f64> = (0..radii.len()).map(|n| n as f64).collect();
        let ys: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        linear_fit(&xs, &ys).slope
    } else {
        0.0
    };
    (rho, radii[0], slope)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificationSummary {
    pub map_id: String,
    pub eps: f64,
    pub target_depth: usize,
    pub orbits: usize,
    /// Orbits rejected before certification (too close to 𝒥).
    pub rejected: usize,
    pub certified: usize,
    pub fraction_certified: f64,
    pub max_identity_error: f64,
    /// Certified orbits whose `log r_n` slope is steeper than `−3.3 ρ̂ ε`.
    pub slow_decay_violations: usize,
    /// Median over certified orbits of the per-orbit decay exponents.
    pub rho_hat_median: f64,
}

/// Schedules and certificates for many orbits, in orbit order. Orbits whose
/// schedule cannot be built are returned as errors in place.
pub fn certify_orbits(
    map: &MapModel,
    orbits: &[BackwardOrbit],
    eps: f64,
    exps: &Exponents,
) -> Vec<Result<InverseBranchCertificate>> {
    orbits
        .par_iter()
        .map(|o| {
            let sched = radius_schedule(map, o, eps, exps)?;
            certify_branches(map, o, &sched)
        })
        .collect()
}

pub fn summarize_certificates(
    map_id: &str,
    eps: f64,
    target_depth: usize,
    results: &[Result<InverseBranchCertificate>],
) -> CertificationSummary {
    let certs: Vec<&InverseBranchCertificate> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let certified: Vec<&&InverseBranchCertificate> = certs.iter().filter(|c| c.certified_to(target_depth)).collect();
    let max_identity_error = certs
        .iter()
        .filter_map(|c| c.composed.as_ref())
        .map(|c| c.identity_error)
        .fold(0.0, f64::max);
    let rhos: Vec<f64> = certified.iter().map(|c| c.rho_hat).filter(|r| r.is_finite()).collect();
    let rho_hat_median = if rhos.is_empty() { f64::NAN } else { crate::stats::median(&rhos) };
    let slow_decay_violations = certified.iter().filter(|c| !c.slow_decay_ok(rho_hat_median)).count();
    CertificationSummary {
        map_id: map_id.to_string(),
        eps,
        target_depth,
        orbits: results.len(),
        rejected: results.len() - certs.len(),
        certified: certified.len(),
        fraction_certified: certified.len() as f64 / results.len().max(1) as f64,
        max_identity_error,
        slow_decay_violations,
        rho_hat_median,
    }
}

/// Orbit functions `u` tested for slow variation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum USelector {
    DistToJ,
    MinDerivativeData,
    OpNorm,
    InvNorm,
    Jacobian,
}

impl USelector {
    pub fn eval(self, map: &MapModel, x: &ProjectivePoint) -> Result<f64> {
        Ok(match self {
            USelector::DistToJ => map.distance_to_j(x),
            USelector::Jacobian => map.fs_jacobian(x),
            sel => {
                let t = map.differential(x)?;
                match sel {
                    USelector::OpNorm => t.op_norm,
                    USelector::InvNorm => t.inv_norm,
                    _ => 1f64.min(t.op_norm).min(t.inv_norm).min(t.fs_jacobian),
                }
            }
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlowFunctionCheck {
    pub eps: f64,
    pub chi_hat: f64,
    /// Largest `V_1 ≤ 1` making the lower envelope hold at every depth.
    pub v1_hat: f64,
    /// Smallest `V_2 ≥ 1` making the upper envelope hold at every depth.
    pub v2_hat: f64,
    /// Envelope breaches on the second half with `V_1, V_2` fitted on the first.
    pub violations: usize,
    pub depths_tested: usize,
    /// Mean of `|log u|` on the second half over the first half.
    pub abs_log_growth: f64,
    /// The growth ratio suggests `log u` is not integrable.
    pub non_integrable: bool,
}

/// Ratio of second-half to first-half mean `|log u|` above which the orbit
/// average is flagged as diverging.
const GROWTH_FLAG: f64 = 4.0;

/// Envelope check of `∏_{j=1..n} u(x_-j)` against `V e^{n(χ ± ε)}` for the
/// values `u_j = u(x_-j)`, `j = 1 … N`.
pub fn slow_variation_from_values(values: &[f64], eps: f64) -> Result<SlowFunctionCheck> {
    let n_tot = values.len();
    if n_tot < 2 {
        return Err(Error::InvalidArgument("need at least two orbit values".into()));
    }
    let logs: Vec<f64> = values.iter().map(|u| u.ln()).collect();
    if let Some(j) = logs.iter().position(|l| !l.is_finite()) {
        return Err(Error::NonIntegrable(format!("u = {} at depth {}", values[j], j + 1)));
    }
    let chi = logs.iter().sum::<f64>() / n_tot as f64;
    // centred partial sums S_n − nχ
    let mut s = 0.0;
    let dev: Vec<f64> = logs
        .iter()
        .map(|l| {
            s += l - chi;
            s
        })
        .collect();
    let upper = |n: usize| dev[n - 1] - n as f64 * eps;
    let lower = |n: usize| dev[n - 1] + n as f64 * eps;

    let log_v2 = (1..=n_tot).map(upper).fold(0.0, f64::max);
    let log_v1 = (1..=n_tot).map(lower).fold(0.0, f64::min);

    let train = n_tot / 2;
    let log_v2_train = (1..=train).map(upper).fold(0.0, f64::max);
    let log_v1_train = (1..=train).map(lower).fold(0.0, f64::min);
    let violations = (train + 1..=n_tot)
        .filter(|&n| upper(n) > log_v2_train + 1e-12 || lower(n) < log_v1_train - 1e-12)
        .count();

    let abs_mean = |v: &[f64]| v.iter().map(|l| l.abs()).sum::<f64>() / v.len().max(1) as f64;
    let first = abs_mean(&logs[..train.max(1)]);
    let second = abs_mean(&logs[train.max(1)..]);
    let abs_log_growth = if first > 0.0 { second / first } else if second > 0.0 { f64::INFINITY } else { 1.0 };

    Ok(SlowFunctionCheck {
        eps,
        chi_hat: chi,
        v1_hat: log_v1.exp(),
        v2_hat: log_v2.exp(),
        violations,
        depths_tested: n_tot,
        abs_log_growth,
        non_integrable: abs_log_growth > GROWTH_FLAG,
    })
}

/// Slow-variation envelopes of `u` along the backward orbit.
pub fn slow_variation_check(map: &MapModel, orbit: &BackwardOrbit, u: USelector, eps: f64) -> Result<SlowFunctionCheck> {
    let values = orbit.points[1..]
        .iter()
        .map(|x| u.eval(map, x))
        .collect::<Result<Vec<_>>>()?;
    slow_variation_from_values(&values, eps)
}
