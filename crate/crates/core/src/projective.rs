//! Points of P^1 and P^2 in homogeneous coordinates, and the chordal
//! (Fubini–Study) metric.
//!
//! The chordal distance between `[x]` and `[y]` is `|x ∧ y| / (|x| |y|)`,
//! the sine of the angle between the two complex lines. It is bounded by 1,
//! it is the distance induced by the Fubini–Study form normalized to unit
//! total volume, and a ball of chordal radius `s` has normalized volume
//! `s^(2k)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported projective dimension.
pub const MAX_DIM: usize = 2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A point of P^k, k ∈ {1, 2}, stored with its largest-modulus coordinate equal to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectivePoint {
    dim: usize,
    coords: [Complex64; MAX_DIM + 1],
}

impl ProjectivePoint {
    /// Builds a point from `k + 1` homogeneous coordinates.
    pub fn new(coords: &[Complex64]) -> Result<Self> {
        if coords.len() < 2 || coords.len() > MAX_DIM + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected 2 or 3 homogeneous coordinates, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        let mut buf = [ZERO; MAX_DIM + 1];
        buf[..coords.len()].copy_from_slice(coords);
        let mut p = ProjectivePoint {
            dim: coords.len() - 1,
            coords: buf,
        };
        if p.coords().iter().all(|c| c.norm_sqr() == 0.0) {
            return Err(Error::InvalidArgument("all coordinates are zero".into()));
        }
        p.normalize();
        Ok(p)
    }

    /// The point `[z : 1]` of P^1.
    pub fn p1(z: Complex64) -> Self {
        Self::new(&[z, ONE]).expect("finite affine point")
    }

    /// The point `[z : w : 1]` of P^2.
    pub fn p2(z: Complex64, w: Complex64) -> Self {
        Self::new(&[z, w, ONE]).expect("finite affine point")
    }

    /// `[1 : 0]`, the point at infinity of P^1.
    pub fn p1_infinity() -> Self {
        Self::new(&[ONE, ZERO]).unwrap()
    }

    /// A point distributed according to the normalized Fubini–Study volume
    /// (normalized complex Gaussian vector).
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut coords = [ZERO; MAX_DIM + 1];
        for c in coords.iter_mut().take(dim + 1) {
            *c = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        Self::new(&coords[..=dim]).expect("gaussian vector is nonzero")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords[..=self.dim]
    }

    /// Index of the coordinate normalized to 1 (the affine chart of the point).
    pub fn chart(&self) -> usize {
        self.coords()
            .iter()
            .position(|c| *c == ONE)
            .unwrap_or(0)
    }

    /// Affine coordinates in the chart of the largest coordinate.
    pub fn affine(&self) -> (usize, Vec<Complex64>) {
        let chart = self.chart();
        let rest = self
            .coords()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != chart)
            .map(|(_, c)| *c)
            .collect();
        (chart, rest)
    }

    /// For P^1: the value `z / t`, or `None` at infinity.
    pub fn p1_value(&self) -> Option<Complex64> {
        let c = self.coords();
        if c[1] == ZERO {
            None
        } else {
            Some(c[0] / c[1])
        }
    }

    /// Unit-norm representative in C^(k+1).
    pub fn unit(&self) -> [Complex64; MAX_DIM + 1] {
        let n = self.norm();
        let mut out = [ZERO; MAX_DIM + 1];
        for (o, c) in out.iter_mut().zip(self.coords()) {
            *o = c / n;
        }
        out
    }

    /// Euclidean norm of the stored representative (between 1 and sqrt(k+1)).
    pub fn norm(&self) -> f64 {
        self.coords()
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Chordal distance, computed from the wedge product so that it keeps full
    /// relative precision for nearby points.
    pub fn chordal(&self, other: &ProjectivePoint) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        chordal_raw(self.coords(), other.coords())
    }

    /// Isometric embedding into R^((k+1)^2): Euclidean distance between
    /// embedded points equals the chordal distance.
    pub fn embed(&self) -> Vec<f64> {
        let u = self.unit();
        let n = self.dim + 1;
        let mut out = Vec::with_capacity(n * n);
        for ui in u.iter().take(n) {
            out.push(ui.norm_sqr() * std::f64::consts::FRAC_1_SQRT_2);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let p = u[i] * u[j].conj();
                out.push(p.re);
                out.push(p.im);
            }
        }
        out
    }

    fn normalize(&mut self) {
        let k = self.dim;
        let already = self.coords[..=k].iter().any(|c| *c == ONE)
            && self.coords[..=k].iter().all(|c| c.norm_sqr() <= 1.0);
        if already {
            return;
        }
        let mut best = 0;
        let mut best_mod = -1.0;
        for (i, c) in self.coords[..=k].iter().enumerate() {
            let m = c.norm_sqr();
            if m > best_mod {
                best_mod = m;
                best = i;
            }
        }
        let pivot = self.coords[best];
        for (i, c) in self.coords[..=k].iter_mut().enumerate() {
            if i == best {
                *c = ONE;
            } else {
                *c /= pivot;
            }
        }
    }
}

/// Chordal distance between two nonzero homogeneous vectors.
pub fn chordal_raw(x: &[Complex64], y: &[Complex64]) -> f64 {
    let mut wedge = 0.0;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            wedge += (x[i] * y[j] - x[j] * y[i]).norm_sqr();
        }
    }
    let nx: f64 = x.iter().map(|c| c.norm_sqr()).sum();
    let ny: f64 = y.iter().map(|c| c.norm_sqr()).sum();
    (wedge / (nx * ny)).sqrt().min(1.0)
}

/// Hermitian inner product `<a, b> = Σ conj(a_i) b_i`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vec_norm(a: &[Complex64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

impl Serialize for ProjectivePoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.coords().iter().map(|c| [c.re, c.im]).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProjectivePoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs: Vec<[f64; 2]> = Vec::deserialize(d)?;
        let coords: Vec<Complex64> = pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect();
        ProjectivePoint::new(&coords).map_err(serde::de::Error::custom)
    }
}
