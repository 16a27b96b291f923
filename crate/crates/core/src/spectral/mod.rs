//! Discrete Laplacian, SPD solves, principal eigenpair and torsion function.

pub(crate) mod cg;
mod eigen;
mod laplace;
mod torsion;

pub use cg::{solve_spd, solve_spd_from, CgStats};
pub use eigen::{boundary_gradient_min, estimate_comparison_constants, principal_eigenpair, EigenPair};
pub use laplace::{discrete_principal_eigenvalue, neg_laplacian, LaplaceOperator};
pub use torsion::{torsion_function, TorsionField};
