use crate::error::{Error, Result};
use crate::mesh::{Grid, GridId, ScalarField};

/// The 5-point Dirichlet operator `-Δ_h + shift + diag` acting on the
/// interior unknowns of a grid.
///
/// Vectors are full nodal arrays. Boundary entries of the input are ignored
/// (treated as the homogeneous Dirichlet value) and boundary entries of the
/// output are zero, so the operator is SPD on the interior subspace.
#[derive(Debug, Clone)]
pub struct LaplaceOperator {
    grid_id: GridId,
    n1: usize,
    n2: usize,
    cx: f64,
    cy: f64,
    shift: f64,
    diag: Option<Vec<f64>>,
}

impl LaplaceOperator {
    pub fn new(grid: &Grid, shift: f64) -> Result<Self> {
        if !(shift.is_finite() && shift >= 0.0) {
            return Err(Error::config(
                "lambda",
                format!("shift must be nonnegative, got {shift}"),
            ));
        }
        Ok(LaplaceOperator {
            grid_id: grid.id(),
            n1: grid.n1(),
            n2: grid.n2(),
            cx: 1.0 / (grid.h1() * grid.h1()),
            cy: 1.0 / (grid.h2() * grid.h2()),
            shift,
            diag: None,
        })
    }

    /// Adds a nonnegative node-wise diagonal term.
    pub fn with_diagonal(mut self, diag: &ScalarField) -> Result<Self> {
        if diag.grid_id() != self.grid_id {
            return Err(Error::GridMismatch {
                left: self.grid_id.0,
                right: diag.grid_id().0,
            });
        }
        if let Some((k, &d)) = diag.values().iter().enumerate().find(|(_, d)| !(**d >= 0.0)) {
            return Err(Error::NonPositive { node: k, value: d });
        }
        self.diag = Some(diag.values().to_vec());
        Ok(self)
    }

    pub fn grid_id(&self) -> GridId {
        self.grid_id
    }
    pub fn shift(&self) -> f64 {
        self.shift
    }
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_interior(&self, i: usize, j: usize) -> bool {
        i > 0 && j > 0 && i + 1 < self.n1 && j + 1 < self.n2
    }

    pub(crate) fn is_interior_row(&self, k: usize) -> bool {
        self.is_interior(k % self.n1, k / self.n1)
    }

    /// Centre coefficient of row `k` (for interior `k`).
    pub fn diagonal(&self, k: usize) -> f64 {
        let d = 2.0 * self.cx + 2.0 * self.cy + self.shift;
        match &self.diag {
            Some(extra) => d + extra[k],
            None => d,
        }
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n1 = self.n1;
        for j in 0..self.n2 {
            for i in 0..n1 {
                let k = j * n1 + i;
                if !self.is_interior(i, j) {
                    y[k] = 0.0;
                    continue;
                }
                let west = if i > 1 { x[k - 1] } else { 0.0 };
                let east = if i + 2 < n1 { x[k + 1] } else { 0.0 };
                let south = if j > 1 { x[k - n1] } else { 0.0 };
                let north = if j + 2 < self.n2 { x[k + n1] } else { 0.0 };
                y[k] = self.diagonal(k) * x[k] - self.cx * (west + east) - self.cy * (south + north);
            }
        }
    }

    pub fn apply_field(&self, x: &ScalarField) -> Result<ScalarField> {
        self.check(x)?;
        let mut y = x.clone();
        self.apply(x.values(), y.values_mut());
        Ok(y)
    }

    pub(crate) fn check(&self, f: &ScalarField) -> Result<()> {
        if f.grid_id() != self.grid_id {
            return Err(Error::GridMismatch {
                left: self.grid_id.0,
                right: f.grid_id().0,
            });
        }
        if f.len() != self.len() {
            return Err(Error::FieldLength {
                expected: self.len(),
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// `-Δ_h f` at interior nodes using the stored boundary values of `f`
/// (which need not vanish); zero on boundary nodes.
pub fn neg_laplacian(grid: &Grid, f: &ScalarField) -> Result<ScalarField> {
    grid.check(f)?;
    let (n1, n2) = (grid.n1(), grid.n2());
    let cx = 1.0 / (grid.h1() * grid.h1());
    let cy = 1.0 / (grid.h2() * grid.h2());
    let mut out = grid.zeros();
    for j in 1..n2 - 1 {
        for i in 1..n1 - 1 {
            let k = j * n1 + i;
            out[k] = cx * (2.0 * f[k] - f[k - 1] - f[k + 1]) + cy * (2.0 * f[k] - f[k - n1] - f[k + n1]);
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of the 5-point Dirichlet Laplacian on a rectangle.
pub fn discrete_principal_eigenvalue(grid: &Grid) -> f64 {
    let (l1, l2) = grid.lengths();
    let (h1, h2) = (grid.h1(), grid.h2());
    let s1 = (std::f64::consts::PI * h1 / (2.0 * l1)).sin();
    let s2 = (std::f64::consts::PI * h2 / (2.0 * l2)).sin();
    4.0 / (h1 * h1) * s1 * s1 + 4.0 / (h2 * h2) * s2 * s2
}
