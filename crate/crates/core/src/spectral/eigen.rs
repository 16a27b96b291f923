use crate::error::{Error, Result};
use crate::mesh::{Grid, ScalarField};

use super::cg::{cg_iterate, dot};
use super::laplace::LaplaceOperator;

const MAX_POWER_STEPS: usize = 1000;

/// Principal Dirichlet eigenpair of the 5-point Laplacian.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda1: f64,
    /// Positive in the interior, zero on the boundary, `max = normalization`.
    pub phi1: ScalarField,
    pub normalization: f64,
    /// Smallest `l >= 1` with `d / l <= phi1 <= l d` at interior nodes.
    pub l_est: f64,
    /// Smallest gradient magnitude over the outermost interior layer.
    pub eta_est: f64,
    pub iterations: usize,
    /// `||A phi - lambda phi||_inf / (lambda ||phi||_inf)`.
    pub residual: f64,
}

/// Inverse power iteration with shift zero.
///
/// Stops once the Rayleigh quotient changes by at most `eig_tol` (relative)
/// and the eigen-residual is at most `eig_tol` relative to `lambda ||phi||`.
pub fn principal_eigenpair(grid: &Grid, normalization: f64, eig_tol: f64) -> Result<EigenPair> {
    if !(normalization.is_finite() && normalization > 0.0) {
        return Err(Error::config(
            "normalization",
            format!("must be positive, got {normalization}"),
        ));
    }
    if !(eig_tol > 0.0 && eig_tol < 1.0) {
        return Err(Error::config("eig_tol", format!("must lie in (0,1), got {eig_tol}")));
    }
    let op = LaplaceOperator::new(grid, 0.0)?;
    let n = grid.len();
    let (x0, y0) = grid.origin();
    let (l1, l2) = grid.lengths();
    let mut x: Vec<f64> = (0..n)
        .map(|k| {
            if !grid.is_interior(k) {
                return 0.0;
            }
            let (x, y) = grid.coords(k);
            let (s, t) = (x - x0, y - y0);
            s * (l1 - s) * t * (l2 - t)
        })
        .collect();
    normalize2(&mut x);

    let inner_tol = (0.01 * eig_tol).max(1e-13);
    let mut ax = vec![0.0; n];
    op.apply(&x, &mut ax);
    let mut lambda = dot(&x, &ax);
    let mut y = vec![0.0; n];
    let mut residual = f64::INFINITY;

    for step in 1..=MAX_POWER_STEPS {
        for k in 0..n {
            y[k] = x[k] / lambda;
        }
        cg_iterate(&op, &x, &mut y, inner_tol);
        normalize2(&mut y);
        std::mem::swap(&mut x, &mut y);
        op.apply(&x, &mut ax);
        let next = dot(&x, &ax);
        let change = (next - lambda).abs() / next;
        lambda = next;
        residual = eigen_residual(&x, &ax, lambda);
        if change <= eig_tol && residual <= eig_tol {
            return finish(grid, x, lambda, normalization, step, residual);
        }
    }
    Err(Error::EigenSolve {
        iterations: MAX_POWER_STEPS,
        residual,
    })
}

fn normalize2(x: &mut [f64]) {
    let nrm = dot(x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= nrm);
}

fn eigen_residual(x: &[f64], ax: &[f64], lambda: f64) -> f64 {
    let mut r: f64 = 0.0;
    let mut sup: f64 = 0.0;
    for (xi, axi) in x.iter().zip(ax) {
        r = r.max((axi - lambda * xi).abs());
        sup = sup.max(xi.abs());
    }
    r / (lambda * sup)
}

fn finish(
    grid: &Grid,
    mut x: Vec<f64>,
    lambda: f64,
    normalization: f64,
    iterations: usize,
    residual: f64,
) -> Result<EigenPair> {
    let sum: f64 = x.iter().sum();
    let sign = if sum < 0.0 { -1.0 } else { 1.0 };
    let max = x.iter().map(|v| sign * v).fold(f64::NEG_INFINITY, f64::max);
    let scale = sign * normalization / max;
    x.iter_mut().for_each(|v| *v *= scale);
    let phi1 = grid.field(x)?;
    for k in grid.interior_nodes() {
        if !(phi1[k] > 0.0) {
            return Err(Error::NonPositive {
                node: k,
                value: phi1[k],
            });
        }
    }
    let l_est = estimate_comparison_constants(&phi1, grid.dist())?;
    let eta_est = boundary_gradient_min(grid, &phi1);
    Ok(EigenPair {
        lambda1: lambda,
        phi1,
        normalization,
        l_est,
        eta_est,
        iterations,
        residual,
    })
}

/// Smallest `c >= 1` with `dist / c <= field <= c dist` on nodes where
/// `dist > 0`.
pub fn estimate_comparison_constants(field: &ScalarField, dist: &ScalarField) -> Result<f64> {
    field.same_grid(dist)?;
    let mut c: f64 = 1.0;
    for (k, (&f, &d)) in field.values().iter().zip(dist.values()).enumerate() {
        if d <= 0.0 {
            continue;
        }
        if !(f > 0.0) {
            return Err(Error::NonPositive { node: k, value: f });
        }
        c = c.max(f / d).max(d / f);
    }
    Ok(c)
}

/// Minimum of `|grad phi|` over the first interior layer. Differences are
/// one-sided towards an adjacent boundary node and central otherwise.
pub fn boundary_gradient_min(grid: &Grid, phi: &ScalarField) -> f64 {
    let (n1, n2) = (grid.n1(), grid.n2());
    let (h1, h2) = (grid.h1(), grid.h2());
    let mut eta = f64::INFINITY;
    for k in grid.interior_nodes() {
        if grid.layer(k) != 1 {
            continue;
        }
        let (i, j) = grid.ij(k);
        let gx = if i == 1 {
            (phi[k] - phi[k - 1]) / h1
        } else if i == n1 - 2 {
            (phi[k + 1] - phi[k]) / h1
        } else {
            (phi[k + 1] - phi[k - 1]) / (2.0 * h1)
        };
        let gy = if j == 1 {
            (phi[k] - phi[k - n1]) / h2
        } else if j == n2 - 2 {
            (phi[k + n1] - phi[k]) / h2
        } else {
            (phi[k + n1] - phi[k - n1]) / (2.0 * h2)
        };
        eta = eta.min(gx.hypot(gy));
    }
    eta
}
