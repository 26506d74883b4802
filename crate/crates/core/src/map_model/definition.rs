//! On-disk map definitions (JSON, or TOML by file extension).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Term;
use crate::projective::ProjectivePoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapKind {
    /// `[p(z,t) : q(z,t)]` on P^1.
    #[serde(rename = "rational_P1")]
    RationalP1,
    /// `k + 1` homogeneous polynomials of one degree on P^k.
    #[serde(rename = "homogeneous_Pk")]
    HomogeneousPk,
    /// `[p(z,t) : q(z,w,t) : c t^d]` on P^2, the compactification of a
    /// polynomial skew product `(z, w) ↦ (p(z), q(z, w))` of C^2.
    #[serde(rename = "polynomial_skew_product")]
    PolynomialSkewProduct,
}

/// Defining polynomials of the exceptional set for maps of P^2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalDefinition {
    /// Polynomials whose zero sets make up the critical-value part.
    pub polynomials: Vec<Vec<Term>>,
    /// When the listed curves are already totally invariant, their pullbacks
    /// add nothing and are skipped.
    #[serde(default)]
    pub totally_invariant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapDefinition {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub kind: MapKind,
    pub dimension: usize,
    /// Algebraic degree `d`.
    pub degree: u32,
    /// One term list per homogeneous component, variables ordered `(z, t)` on
    /// P^1 and `(z, w, t)` on P^2.
    pub components: Vec<Vec<Term>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topological_degree: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamical_degrees: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exceptional: Option<ExceptionalDefinition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_seed: Option<ProjectivePoint>,
}

impl MapDefinition {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidDefinition(e.to_string()))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::InvalidDefinition(e.to_string()))
    }

    /// Reads a definition; `.toml` files are parsed as TOML, anything else as JSON.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml_str(&text)
        } else {
            Self::from_json_str(&text)
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("definitions serialize")
    }
}
