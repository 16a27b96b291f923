//! Finite-difference construction of sign-changing solutions for the
//! singular system
//!
//! ```text
//! -Δu + λ(u + φ₁) = a₁(x) f₁(v) / |u|^α₁
//! -Δv + λ(v + φ₁) = a₂(x) f₂(u) / |v|^α₂     in Ω,  u = v = 0 on ∂Ω
//! ```
//!
//! on a rectangle, through explicit sub/supersolution bounds and a
//! regularization `|u| -> |u| + ε` driven to zero.

// `!(x > 0.0)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod mesh;
pub mod problem;
pub mod solver;
pub mod spectral;
pub mod subsuper;

pub use error::{Error, Result};
pub use mesh::{build_enlarged, build_grid, region_partition, EnlargedGrid, Grid, GridId, Regions, ScalarField};
