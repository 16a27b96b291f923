//! Structured node-centred grids over rectangles.
//!
//! Nodes are stored row-major: node `k = j * n1 + i` sits at
//! `(x0 + i*h1, y0 + j*h2)`. Boundary nodes are stored explicitly and carry
//! the Dirichlet value zero for every field that is used as a solver iterate.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static NEXT_GRID_ID: AtomicU64 = AtomicU64::new(1);

/// Identity of a grid. Clones of a grid share the id; every call to a
/// constructor mints a fresh one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridId(pub u64);

impl GridId {
    fn fresh() -> Self {
        GridId(NEXT_GRID_ID.fetch_add(1, Ordering::Relaxed))
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    id: GridId,
    n1: usize,
    n2: usize,
    h1: f64,
    h2: f64,
    origin: (f64, f64),
    lengths: (f64, f64),
    interior: Vec<bool>,
    dist: ScalarField,
}

/// Builds the grid over `[0, l1] x [0, l2]` with `n1 x n2` nodes.
pub fn build_grid(l1: f64, l2: f64, n1: usize, n2: usize) -> Result<Grid> {
    Grid::new((0.0, 0.0), (l1, l2), n1, n2)
}

impl Grid {
    pub fn new(origin: (f64, f64), lengths: (f64, f64), n1: usize, n2: usize) -> Result<Self> {
        let (l1, l2) = lengths;
        if !(l1.is_finite() && l1 > 0.0) {
            return Err(Error::config("L1", format!("length must be positive, got {l1}")));
        }
        if !(l2.is_finite() && l2 > 0.0) {
            return Err(Error::config("L2", format!("length must be positive, got {l2}")));
        }
        if n1 < 3 {
            return Err(Error::config("n1", format!("need at least 3 nodes per axis, got {n1}")));
        }
        if n2 < 3 {
            return Err(Error::config("n2", format!("need at least 3 nodes per axis, got {n2}")));
        }
        let h1 = l1 / (n1 - 1) as f64;
        let h2 = l2 / (n2 - 1) as f64;
        let id = GridId::fresh();
        let len = n1 * n2;
        let mut interior = vec![false; len];
        let mut dist = vec![0.0; len];
        for j in 0..n2 {
            for i in 0..n1 {
                let k = j * n1 + i;
                interior[k] = i > 0 && j > 0 && i < n1 - 1 && j < n2 - 1;
                if interior[k] {
                    // Offsets measured in cells keep dist exactly zero on the
                    // boundary and symmetric across the rectangle.
                    let dx = (i.min(n1 - 1 - i)) as f64 * h1;
                    let dy = (j.min(n2 - 1 - j)) as f64 * h2;
                    dist[k] = dx.min(dy);
                }
            }
        }
        Ok(Grid {
            id,
            n1,
            n2,
            h1,
            h2,
            origin,
            lengths,
            interior,
            dist: ScalarField {
                grid_id: id,
                values: dist,
            },
        })
    }

    pub fn id(&self) -> GridId {
        self.id
    }
    pub fn n1(&self) -> usize {
        self.n1
    }
    pub fn n2(&self) -> usize {
        self.n2
    }
    pub fn h1(&self) -> f64 {
        self.h1
    }
    pub fn h2(&self) -> f64 {
        self.h2
    }
    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }
    pub fn lengths(&self) -> (f64, f64) {
        self.lengths
    }
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Area of one cell, the quadrature weight of a node.
    pub fn cell_area(&self) -> f64 {
        self.h1 * self.h2
    }
    pub fn measure(&self) -> f64 {
        self.lengths.0 * self.lengths.1
    }
    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }
    pub fn is_interior(&self, k: usize) -> bool {
        self.interior[k]
    }
    pub fn interior_count(&self) -> usize {
        (self.n1 - 2) * (self.n2 - 2)
    }
    /// Distance of every node to the rectangle boundary.
    pub fn dist(&self) -> &ScalarField {
        &self.dist
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n1 + i
    }
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.n1, k / self.n1)
    }
    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (self.origin.0 + i as f64 * self.h1, self.origin.1 + j as f64 * self.h2)
    }

    /// Index of the node layer counted from the boundary: 0 on the boundary,
    /// 1 on the outermost interior ring, and so on.
    pub fn layer(&self, k: usize) -> usize {
        let (i, j) = self.ij(k);
        i.min(j).min(self.n1 - 1 - i).min(self.n2 - 1 - j)
    }

    /// Interior node indices in storage order.
    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.interior[k])
    }

    pub fn zeros(&self) -> ScalarField {
        ScalarField::zeros(self)
    }

    /// Samples `f(x, y)` at every node.
    pub fn field_from_fn(&self, mut f: impl FnMut(f64, f64) -> f64) -> ScalarField {
        let values = (0..self.len())
            .map(|k| {
                let (x, y) = self.coords(k);
                f(x, y)
            })
            .collect();
        ScalarField {
            grid_id: self.id,
            values,
        }
    }

    /// Wraps raw nodal values, checking the length.
    pub fn field(&self, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != self.len() {
            return Err(Error::FieldLength {
                expected: self.len(),
                got: values.len(),
            });
        }
        Ok(ScalarField {
            grid_id: self.id,
            values,
        })
    }

    pub fn check(&self, field: &ScalarField) -> Result<()> {
        if field.grid_id != self.id {
            return Err(Error::GridMismatch {
                left: self.id.0,
                right: field.grid_id.0,
            });
        }
        if field.values.len() != self.len() {
            return Err(Error::FieldLength {
                expected: self.len(),
                got: field.values.len(),
            });
        }
        Ok(())
    }
}

/// Nodal values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid_id: GridId,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        ScalarField {
            grid_id: grid.id,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid_id(&self) -> GridId {
        self.grid_id
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid_id != other.grid_id {
            return Err(Error::GridMismatch {
                left: self.grid_id.0,
                right: other.grid_id.0,
            });
        }
        Ok(())
    }

    /// Node-wise map producing a field on the same grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid_id: self.grid_id,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Node-wise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.same_grid(other)?;
        Ok(ScalarField {
            grid_id: self.grid_id,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scaled(&self, t: f64) -> ScalarField {
        self.map(|x| t * x)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    /// Sup-norm of the difference; grids must agree.
    pub fn sup_distance(&self, other: &ScalarField) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

impl std::ops::IndexMut<usize> for ScalarField {
    fn index_mut(&mut self, k: usize) -> &mut f64 {
        &mut self.values[k]
    }
}

/// A grid over the padded rectangle together with the embedding of the
/// original grid's nodes.
#[derive(Debug, Clone)]
pub struct EnlargedGrid {
    grid: Grid,
    inner: Grid,
    pad_cells: usize,
    mu: f64,
}

/// Pads `grid` by `pad_cells` cells on every side. Spacing is shared, so
/// each original node coincides with exactly one node of the padded grid.
pub fn build_enlarged(grid: &Grid, pad_cells: usize) -> Result<EnlargedGrid> {
    if pad_cells == 0 {
        return Err(Error::config("pad_cells", "padding must be at least one cell"));
    }
    let p = pad_cells as f64;
    let (x0, y0) = grid.origin();
    let (l1, l2) = grid.lengths();
    let origin = (x0 - p * grid.h1(), y0 - p * grid.h2());
    let lengths = (l1 + 2.0 * p * grid.h1(), l2 + 2.0 * p * grid.h2());
    let outer = Grid::new(origin, lengths, grid.n1() + 2 * pad_cells, grid.n2() + 2 * pad_cells)?;
    Ok(EnlargedGrid {
        grid: outer,
        inner: grid.clone(),
        pad_cells,
        mu: p * grid.h1().min(grid.h2()),
    })
}

impl EnlargedGrid {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn inner(&self) -> &Grid {
        &self.inner
    }
    pub fn pad_cells(&self) -> usize {
        self.pad_cells
    }
    /// Padding width; every node of the closed inner rectangle lies at least
    /// this far from the padded boundary.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Padded-grid index of inner node `k`.
    pub fn embed_index(&self, k: usize) -> usize {
        let (i, j) = self.inner.ij(k);
        self.grid.index(i + self.pad_cells, j + self.pad_cells)
    }

    /// Extends an inner field by zero to the padded grid.
    pub fn extend(&self, field: &ScalarField) -> Result<ScalarField> {
        self.inner.check(field)?;
        let mut out = self.grid.zeros();
        for k in 0..self.inner.len() {
            out[self.embed_index(k)] = field[k];
        }
        Ok(out)
    }

    /// Reads a padded-grid field back at the inner nodes.
    pub fn restrict(&self, field: &ScalarField) -> Result<ScalarField> {
        self.grid.check(field)?;
        let values = (0..self.inner.len()).map(|k| field[self.embed_index(k)]).collect();
        self.inner.field(values)
    }
}

/// Interior nodes split by a level of `phi1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regions {
    /// Interior nodes with `phi1 < rho`.
    pub strip: Vec<bool>,
    /// Interior nodes with `phi1 >= rho`.
    pub core: Vec<bool>,
}

impl Regions {
    pub fn strip_count(&self) -> usize {
        self.strip.iter().filter(|&&b| b).count()
    }
    pub fn core_count(&self) -> usize {
        self.core.iter().filter(|&&b| b).count()
    }
}

/// Partitions the interior nodes into the sublevel strip `{phi1 < rho}` and
/// the core `{phi1 >= rho}`.
pub fn region_partition(grid: &Grid, phi1: &ScalarField, rho: f64) -> Result<Regions> {
    grid.check(phi1)?;
    if !(rho > 0.0) {
        return Err(Error::config("rho", format!("level must be positive, got {rho}")));
    }
    let max = phi1.max();
    if rho >= max {
        return Err(Error::CoreRegionEmpty { rho, max });
    }
    let mut strip = vec![false; grid.len()];
    let mut core = vec![false; grid.len()];
    for k in grid.interior_nodes() {
        if phi1[k] < rho {
            strip[k] = true;
        } else {
            core[k] = true;
        }
    }
    Ok(Regions { strip, core })
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn interior_count_and_lipschitz_dist(
            l1 in 0.1f64..10.0, l2 in 0.1f64..10.0, n1 in 3usize..40, n2 in 3usize..40,
        ) {
            let g = build_grid(l1, l2, n1, n2).unwrap();
            prop_assert_eq!(g.interior_mask().iter().filter(|&&b| b).count(), (n1 - 2) * (n2 - 2));
            let d = g.dist();
            for j in 0..n2 {
                for i in 0..n1 {
                    let k = g.index(i, j);
                    if i + 1 < n1 {
                        prop_assert!((d[k] - d[g.index(i + 1, j)]).abs() <= g.h1() * (1.0 + 1e-12));
                    }
                    if j + 1 < n2 {
                        prop_assert!((d[k] - d[g.index(i, j + 1)]).abs() <= g.h2() * (1.0 + 1e-12));
                    }
                }
            }
        }

        #[test]
        fn partition_is_disjoint_cover_and_monotone(
            n in 5usize..25, r1 in 0.05f64..0.95, r2 in 0.05f64..0.95,
        ) {
            let g = build_grid(1.0, 1.0, n, n).unwrap();
            let phi = g.field_from_fn(|x, y| (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin());
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let max = phi.max();
            prop_assume!(hi < max);
            let a = region_partition(&g, &phi, lo).unwrap();
            let b = region_partition(&g, &phi, hi).unwrap();
            for k in 0..g.len() {
                prop_assert!(!(a.strip[k] && a.core[k]));
                prop_assert_eq!(a.strip[k] || a.core[k], g.is_interior(k));
                prop_assert!(!a.strip[k] || b.strip[k]);
            }
        }
    }
}
