use crate::error::{Error, Result};
use crate::mesh::{EnlargedGrid, ScalarField};

use super::cg::cg_iterate;
use super::eigen::estimate_comparison_constants;
use super::laplace::{neg_laplacian, LaplaceOperator};

/// Solution of `-Δ e = 1` with zero boundary data on the padded rectangle.
#[derive(Debug, Clone)]
pub struct TorsionField {
    pub egrid: EnlargedGrid,
    /// Values on the padded grid.
    pub e_tilde: ScalarField,
    /// `e_tilde` read back on the nodes of the original grid.
    pub on_omega: ScalarField,
    /// Smallest `c >= 1` with `d / c <= e <= c d` on interior padded nodes.
    pub c_est: f64,
    pub mu: f64,
    pub e_inf_on_omega: f64,
    pub e_sup: f64,
    /// `||-Δ_h e - 1||_inf` over interior padded nodes.
    pub residual: f64,
}

pub fn torsion_function(egrid: &EnlargedGrid, lin_tol: f64) -> Result<TorsionField> {
    if !(lin_tol > 0.0 && lin_tol < 1.0) {
        return Err(Error::config("lin_tol", format!("must lie in (0,1), got {lin_tol}")));
    }
    let grid = egrid.grid();
    let op = LaplaceOperator::new(grid, 0.0)?;
    let ones = grid.field_from_fn(|_, _| 1.0);
    let mut e = grid.zeros();
    // The acceptance test is a sup-norm on the residual; the 2-norm target
    // is tightened accordingly.
    let m = grid.interior_count() as f64;
    let cg_tol = (lin_tol / m.sqrt()).max(1e-15);
    let stats = cg_iterate(&op, ones.values(), e.values_mut(), cg_tol);
    let lap = neg_laplacian(grid, &e)?;
    let residual = grid.interior_nodes().fold(0.0f64, |r, k| r.max((lap[k] - 1.0).abs()));
    if residual > lin_tol {
        return Err(Error::LinearSolve {
            iterations: stats.iterations,
            residual,
        });
    }
    let c_est = estimate_comparison_constants(&e, grid.dist())?;
    let on_omega = egrid.restrict(&e)?;
    Ok(TorsionField {
        egrid: egrid.clone(),
        e_inf_on_omega: on_omega.min(),
        e_sup: e.max(),
        on_omega,
        c_est,
        mu: egrid.mu(),
        residual,
        e_tilde: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_enlarged, build_grid};

    #[test]
    fn positive_and_consistent() {
        let g = build_grid(1.0, 2.0, 11, 21).unwrap();
        let eg = build_enlarged(&g, 2).unwrap();
        let t = torsion_function(&eg, 1e-10).unwrap();
        assert!(t.residual <= 1e-10);
        for k in eg.grid().interior_nodes() {
            assert!(t.e_tilde[k] > 0.0);
        }
        assert!(t.e_inf_on_omega > 0.0);
        assert!(t.e_inf_on_omega >= t.mu / t.c_est * (1.0 - 1e-12));
        assert_eq!(t.mu, 0.2);
    }

    #[test]
    fn dilation_scales_by_square() {
        // Side 1 vs side 2 squares built around a centre node.
        let a = build_grid(0.5, 0.5, 9, 9).unwrap();
        let b = build_grid(1.0, 1.0, 9, 9).unwrap();
        let ta = torsion_function(&build_enlarged(&a, 4).unwrap(), 1e-11).unwrap();
        let tb = torsion_function(&build_enlarged(&b, 4).unwrap(), 1e-11).unwrap();
        let c = a.index(4, 4);
        assert!((tb.on_omega[c] - 4.0 * ta.on_omega[c]).abs() < 1e-9);
    }
}
