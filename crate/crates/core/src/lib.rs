//! Equilibrium measures, Lyapunov exponents, quantitative inverse branches and
//! Hausdorff-dimension estimates for holomorphic endomorphisms of P^1 and P^2.

pub mod branches;
pub mod catalog;
pub mod dimension;
pub mod error;
pub mod lyapunov;
pub mod map_model;
pub mod poly;
pub mod projective;
pub mod report;
pub mod rng;
pub mod roots;
pub mod sampler;
pub mod stats;
pub mod tangent;

pub use error::{Error, Result};
pub use map_model::{MapDefinition, MapKind, MapModel};
pub use projective::ProjectivePoint;
