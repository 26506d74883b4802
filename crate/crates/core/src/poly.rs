//! Homogeneous polynomials in two or three complex variables.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Monomial = [u32; 3];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One term as written in map definition files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    /// `[re, im]`
    pub coef: [f64; 2],
    /// One exponent per homogeneous variable.
    pub pow: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomPoly {
    nvars: usize,
    degree: u32,
    terms: Vec<(Complex64, Monomial)>,
}

impl HomPoly {
    pub fn zero(nvars: usize, degree: u32) -> Self {
        HomPoly {
            nvars,
            degree,
            terms: Vec::new(),
        }
    }

    /// Builds a polynomial, merging repeated monomials and checking homogeneity.
    pub fn new(nvars: usize, terms: &[(Complex64, Monomial)]) -> Result<Self> {
        if !(2..=3).contains(&nvars) {
            return Err(Error::InvalidDefinition(format!("{nvars} variables")));
        }
        let mut degree = None;
        let mut acc: BTreeMap<Monomial, Complex64> = BTreeMap::new();
        for (c, m) in terms {
            if m[nvars..].iter().any(|&e| e != 0) {
                return Err(Error::InvalidDefinition(format!(
                    "monomial {m:?} uses more than {nvars} variables"
                )));
            }
            let deg: u32 = m.iter().sum();
            match degree {
                None => degree = Some(deg),
                Some(d) if d != deg => {
                    return Err(Error::InvalidDefinition(format!(
                        "polynomial is not homogeneous (degrees {d} and {deg})"
                    )))
                }
                _ => {}
            }
            *acc.entry(*m).or_insert(ZERO) += c;
        }
        let degree = degree.ok_or_else(|| Error::InvalidDefinition("empty polynomial".into()))?;
        Ok(HomPoly {
            nvars,
            degree,
            terms: acc.into_iter().filter(|(_, c)| *c != ZERO).map(|(m, c)| (c, m)).collect(),
        })
    }

    pub fn from_terms(nvars: usize, terms: &[Term]) -> Result<Self> {
        let parsed: Vec<(Complex64, Monomial)> = terms
            .iter()
            .map(|t| {
                if t.pow.len() != nvars {
                    return Err(Error::InvalidDefinition(format!(
                        "term exponent list {:?} should have {nvars} entries",
                        t.pow
                    )));
                }
                let mut m = [0u32; 3];
                m[..nvars].copy_from_slice(&t.pow);
                Ok((Complex64::new(t.coef[0], t.coef[1]), m))
            })
            .collect::<Result<_>>()?;
        HomPoly::new(nvars, &parsed)
    }

    pub fn to_terms(&self) -> Vec<Term> {
        self.terms
            .iter()
            .map(|(c, m)| Term {
                coef: [c.re, c.im],
                pow: m[..self.nvars].to_vec(),
            })
            .collect()
    }

    /// `c · x_var^degree`.
    pub fn monomial(nvars: usize, c: Complex64, m: Monomial) -> Self {
        HomPoly::new(nvars, &[(c, m)]).expect("single monomial")
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> &[(Complex64, Monomial)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> Complex64 {
        self.terms
            .iter()
            .find(|(_, mm)| mm == m)
            .map(|(c, _)| *c)
            .unwrap_or(ZERO)
    }

    pub fn max_coefficient(&self) -> f64 {
        self.terms.iter().map(|(c, _)| c.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, x: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for (c, m) in &self.terms {
            let mut t = *c;
            for v in 0..self.nvars {
                if m[v] > 0 {
                    t *= x[v].powu(m[v]);
                }
            }
            acc += t;
        }
        acc
    }

    /// Partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> HomPoly {
        if self.degree == 0 {
            return HomPoly::zero(self.nvars, 0);
        }
        let terms: Vec<(Complex64, Monomial)> = self
            .terms
            .iter()
            .filter(|(_, m)| m[var] > 0)
            .map(|(c, m)| {
                let mut mm = *m;
                mm[var] -= 1;
                (c * m[var] as f64, mm)
            })
            .collect();
        if terms.is_empty() {
            HomPoly::zero(self.nvars, self.degree - 1)
        } else {
            HomPoly::new(self.nvars, &terms).unwrap()
        }
    }

    pub fn scale(&self, s: Complex64) -> HomPoly {
        HomPoly {
            nvars: self.nvars,
            degree: self.degree,
            terms: self
                .terms
                .iter()
                .map(|(c, m)| (c * s, *m))
                .filter(|(c, _)| *c != ZERO)
                .collect(),
        }
    }

    pub fn add(&self, other: &HomPoly) -> HomPoly {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        assert_eq!(self.degree, other.degree, "adding polynomials of different degrees");
        let all: Vec<_> = self.terms.iter().chain(&other.terms).copied().collect();
        HomPoly::new(self.nvars, &all).unwrap_or_else(|_| HomPoly::zero(self.nvars, self.degree))
    }

    pub fn sub(&self, other: &HomPoly) -> HomPoly {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &HomPoly) -> HomPoly {
        let degree = self.degree + other.degree;
        let mut acc: BTreeMap<Monomial, Complex64> = BTreeMap::new();
        for (a, ma) in &self.terms {
            for (b, mb) in &other.terms {
                let m = [ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2]];
                *acc.entry(m).or_insert(ZERO) += a * b;
            }
        }
        HomPoly {
            nvars: self.nvars,
            degree,
            terms: acc.into_iter().filter(|(_, c)| *c != ZERO).map(|(m, c)| (c, m)).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> HomPoly {
        let mut out = HomPoly::monomial(self.nvars, Complex64::new(1.0, 0.0), [0, 0, 0]);
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// Substitutes `x_v := subs[v]`; all substitutes must share one degree.
    pub fn compose(&self, subs: &[HomPoly]) -> HomPoly {
        assert_eq!(subs.len(), self.nvars);
        let inner_deg = subs[0].degree;
        let mut out = HomPoly::zero(self.nvars, self.degree * inner_deg);
        for (c, m) in &self.terms {
            let mut t = HomPoly::monomial(self.nvars, *c, [0, 0, 0]);
            for v in 0..self.nvars {
                if m[v] > 0 {
                    t = t.mul(&subs[v].pow(m[v]));
                }
            }
            out = out.add(&t);
        }
        out
    }

    /// For a binary form, coefficients `a_i` of `x^i y^(d-i)`, i = 0..=d.
    pub fn binary_coefficients(&self) -> Vec<Complex64> {
        assert_eq!(self.nvars, 2);
        let mut out = vec![ZERO; self.degree as usize + 1];
        for (c, m) in &self.terms {
            out[m[0] as usize] += c;
        }
        out
    }

    /// Coefficients `a_i` of `x_a^i x_b^(d-i)` among the terms involving only
    /// the variables `a` and `b`.
    pub fn binary_coefficients_of(&self, a: usize, b: usize) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.degree as usize + 1];
        for (c, m) in &self.terms {
            if m[a] + m[b] == self.degree {
                out[m[a] as usize] += c;
            }
        }
        out
    }

    /// Coefficients of the univariate polynomial in `var` obtained by fixing the
    /// other variables to `fixed` (entries at `var` are ignored); index = power.
    pub fn coefficients_in(&self, var: usize, fixed: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.degree as usize + 1];
        for (c, m) in &self.terms {
            let mut t = *c;
            for v in 0..self.nvars {
                if v != var && m[v] > 0 {
                    t *= fixed[v].powu(m[v]);
                }
            }
            out[m[var] as usize] += t;
        }
        out
    }
}

/// Determinant of a square matrix of polynomials (size 2 or 3).
pub fn poly_det(m: &[Vec<HomPoly>]) -> HomPoly {
    match m.len() {
        2 => m[0][0].mul(&m[1][1]).sub(&m[0][1].mul(&m[1][0])),
        3 => {
            let minor = |a: usize, b: usize, c: usize, d: usize| {
                m[1][a].mul(&m[2][b]).sub(&m[1][c].mul(&m[2][d]))
            };
            m[0][0]
                .mul(&minor(1, 2, 2, 1))
                .sub(&m[0][1].mul(&minor(0, 2, 2, 0)))
                .add(&m[0][2].mul(&minor(0, 1, 1, 0)))
        }
        n => panic!("determinant of size {n} not supported"),
    }
}
