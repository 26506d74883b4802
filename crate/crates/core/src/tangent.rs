//! Differentials between Fubini–Study tangent spaces, and the handful of
//! dense complex linear-algebra routines needed for k ≤ 2.

use num_complex::Complex64;
use serde::Serialize;

use crate::projective::{inner, vec_norm, MAX_DIM};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub type CVec = [Complex64; MAX_DIM + 1];

/// Differential `df(x)` written in orthonormal frames of the tangent spaces at
/// `x` and `f(x)`.
#[derive(Clone, Debug, Serialize)]
pub struct TangentMatrix {
    pub dim: usize,
    /// Row-major `k x k`.
    pub entries: Vec<Complex64>,
    pub op_norm: f64,
    /// `‖df(x)^-1‖`, infinite at critical points.
    pub inv_norm: f64,
    /// `|det|^2`, the real Jacobian with respect to the volume form.
    pub fs_jacobian: f64,
}

impl TangentMatrix {
    pub fn from_entries(dim: usize, entries: Vec<Complex64>) -> Self {
        let (smax, smin, det) = singular_values(dim, &entries);
        let inv_norm = if smin > 0.0 { 1.0 / smin } else { f64::INFINITY };
        TangentMatrix {
            dim,
            entries,
            op_norm: smax,
            inv_norm,
            fs_jacobian: det.norm_sqr(),
        }
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }

    pub fn min_singular_value(&self) -> f64 {
        if self.inv_norm.is_infinite() {
            0.0
        } else {
            1.0 / self.inv_norm
        }
    }
}

/// Largest and smallest singular values and the determinant of a 1x1 or 2x2 matrix.
pub fn singular_values(dim: usize, a: &[Complex64]) -> (f64, f64, Complex64) {
    match dim {
        1 => (a[0].norm(), a[0].norm(), a[0]),
        2 => {
            let det = a[0] * a[3] - a[1] * a[2];
            let fro2: f64 = a.iter().map(|c| c.norm_sqr()).sum();
            let d2 = det.norm_sqr();
            // eigenvalues of A*A: (fro2 ± sqrt(fro2^2 - 4|det|^2)) / 2
            let disc = (fro2 * fro2 - 4.0 * d2).max(0.0).sqrt();
            let l_max = 0.5 * (fro2 + disc);
            let smax = l_max.sqrt();
            // smallest from the determinant keeps relative accuracy
            let smin = if smax > 0.0 { det.norm() / smax } else { 0.0 };
            (smax, smin, det)
        }
        _ => panic!("unsupported tangent dimension {dim}"),
    }
}

/// Orthonormal basis of the complement of the unit vector `u` in C^(k+1).
pub fn complement_basis(u: &[Complex64]) -> Vec<CVec> {
    let n = u.len();
    let pivot = (0..n)
        .max_by(|&i, &j| u[i].norm_sqr().total_cmp(&u[j].norm_sqr()))
        .unwrap();
    let mut basis: Vec<CVec> = Vec::with_capacity(n - 1);
    for e in (0..n).filter(|&e| e != pivot) {
        let mut v = [ZERO; MAX_DIM + 1];
        v[e] = Complex64::new(1.0, 0.0);
        project_out(&mut v[..n], u);
        for b in &basis {
            project_out(&mut v[..n], &b[..n]);
        }
        let nv = vec_norm(&v[..n]);
        for c in v[..n].iter_mut() {
            *c /= nv;
        }
        basis.push(v);
    }
    basis
}

/// `v -= <u, v> u` for unit `u`.
pub fn project_out(v: &mut [Complex64], u: &[Complex64]) {
    let c = inner(u, v);
    for (vi, ui) in v.iter_mut().zip(u) {
        *vi -= c * ui;
    }
}

/// Solves `A x = b` for a 1x1 or 2x2 complex system. Returns `None` when singular.
pub fn solve_small(dim: usize, a: &[Complex64], b: &[Complex64]) -> Option<Vec<Complex64>> {
    match dim {
        1 => {
            if a[0] == ZERO {
                None
            } else {
                Some(vec![b[0] / a[0]])
            }
        }
        2 => {
            let det = a[0] * a[3] - a[1] * a[2];
            if det == ZERO {
                return None;
            }
            Some(vec![
                (b[0] * a[3] - a[1] * b[1]) / det,
                (a[0] * b[1] - a[2] * b[0]) / det,
            ])
        }
        _ => None,
    }
}
