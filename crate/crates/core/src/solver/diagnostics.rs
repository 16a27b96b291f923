use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Grid, ScalarField};
use crate::problem::ProblemData;
use crate::spectral::neg_laplacian;

use super::SolutionBundle;

/// Relative threshold below which a nodal value counts as zero.
pub const ZERO_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignSummary {
    pub strip_pos: usize,
    pub strip_neg: usize,
    pub strip_zero: usize,
    pub core_pos: usize,
    pub core_neg: usize,
    pub core_zero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDiagnostics {
    pub zero_fraction: f64,
    /// `ZERO_TOL · max |w|`.
    pub tau: f64,
    pub sign: SignSummary,
    /// Positive somewhere in the strip and negative somewhere in the core.
    pub sign_changing: bool,
    /// `max |w| = 0`.
    pub degenerate: bool,
    /// Weak residual of the `ε = 0` system over nodes with `|w| > τ`.
    pub weak_residual_eps0: f64,
    pub residual_scale_eps0: f64,
    /// Nodes left out of the `ε = 0` residual.
    pub excluded_nodes: usize,
    pub energy: f64,
    pub energy_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsBlock {
    pub eps: f64,
    pub comps: [ComponentDiagnostics; 2],
}

fn edge_sum(grid: &Grid, w: &ScalarField) -> f64 {
    let (n1, n2) = (grid.n1(), grid.n2());
    let (h1, h2) = (grid.h1(), grid.h2());
    let mut s = 0.0;
    for j in 0..n2 {
        for i in 0..n1 {
            let k = j * n1 + i;
            if i + 1 < n1 {
                let d = (w[k + 1] - w[k]) / h1;
                s += d * d;
            }
            if j + 1 < n2 {
                let d = (w[k + n1] - w[k]) / h2;
                s += d * d;
            }
        }
    }
    s * h1 * h2
}

/// Discrete `H¹` norm: squared difference quotients over all grid edges
/// plus the lumped `L²` term, both weighted by `h1 h2`.
pub fn h1_norm(grid: &Grid, w: &ScalarField) -> Result<f64> {
    grid.check(w)?;
    let l2: f64 = w.values().iter().map(|x| x * x).sum::<f64>() * grid.cell_area();
    Ok((edge_sum(grid, w) + l2).sqrt())
}

pub fn h1_distance(grid: &Grid, a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.same_grid(b)?;
    h1_norm(grid, &a.zip_map(b, |x, y| x - y)?)
}

/// `Σ_edges |D w|² h1h2 + Σ λ(w + φ₁) w h1h2`.
pub fn energy(data: &ProblemData, w: &ScalarField) -> Result<f64> {
    let grid = &data.grid;
    grid.check(w)?;
    let phi = data.phi1();
    let shift: f64 = grid
        .interior_nodes()
        .map(|k| data.lambda * (w[k] + phi[k]) * w[k])
        .sum();
    Ok(edge_sum(grid, w) + shift * grid.cell_area())
}

/// `M ||a||_inf |Ω| (C ||ẽ||_inf)^(1-α) (1 + (C ||ẽ||_inf)^β)` per equation.
/// Needs calibrated constants.
pub fn energy_bound(data: &ProblemData) -> Result<[f64; 2]> {
    let (Some(c), Some(e)) = (data.c_scale, data.torsion_sup) else {
        return Err(Error::Calibration {
            reason: "energy bound needs calibrated C and the torsion sup".into(),
        });
    };
    let s = c * e;
    let b = |i: usize| {
        let comp = &data.comps[i];
        comp.f.big_m * comp.a_sup() * data.grid.measure() * s.powf(1.0 - comp.alpha) * (1.0 + s.powf(comp.beta))
    };
    Ok([b(0), b(1)])
}

pub(crate) fn zero_fraction(w: &ScalarField, strip: &[bool]) -> f64 {
    let count = strip.iter().filter(|&&s| s).count();
    if count == 0 {
        return 0.0;
    }
    let tau = ZERO_TOL * w.max_abs();
    let zeros = strip
        .iter()
        .enumerate()
        .filter(|&(k, &s)| s && w[k].abs() <= tau)
        .count();
    zeros as f64 / count as f64
}

pub(crate) fn sign_summary(w: &ScalarField, strip: &[bool], core: &[bool]) -> SignSummary {
    let tau = ZERO_TOL * w.max_abs();
    let mut s = SignSummary::default();
    for k in 0..w.len() {
        let (pos, neg, zero) = if strip[k] {
            (&mut s.strip_pos, &mut s.strip_neg, &mut s.strip_zero)
        } else if core[k] {
            (&mut s.core_pos, &mut s.core_neg, &mut s.core_zero)
        } else {
            continue;
        };
        if w[k] > tau {
            *pos += 1;
        } else if w[k] < -tau {
            *neg += 1;
        } else {
            *zero += 1;
        }
    }
    s
}

/// Zero set, sign pattern, `ε = 0` residual and energy of a solution.
pub fn diagnostics(data: &ProblemData, sol: &SolutionBundle) -> Result<DiagnosticsBlock> {
    diagnose(data, &sol.u, &sol.v, sol.eps)
}

/// [`diagnostics`] on bare fields, e.g. reloaded from disk.
pub fn diagnose(data: &ProblemData, u: &ScalarField, v: &ScalarField, eps: f64) -> Result<DiagnosticsBlock> {
    let grid = &data.grid;
    grid.check(u)?;
    grid.check(v)?;
    let phi = data.phi1();
    let bounds = energy_bound(data).ok();
    let fields = [u, v];
    let mut out = Vec::with_capacity(2);
    for i in 0..2 {
        let comp = &data.comps[i];
        let (own, other) = (fields[i], fields[1 - i]);
        let max = own.max_abs();
        let tau = ZERO_TOL * max;
        let lap = neg_laplacian(grid, own)?;
        let mut res: f64 = 0.0;
        let mut scale: f64 = 1.0;
        let mut excluded = 0;
        for k in grid.interior_nodes() {
            if own[k].abs() <= tau {
                excluded += 1;
                continue;
            }
            let g = comp.a[k] * comp.f.eval(other[k]) / own[k].abs().powf(comp.alpha);
            scale = scale.max(g.abs());
            res = res.max((lap[k] + data.lambda * (own[k] + phi[k]) - g).abs());
        }
        let sign = sign_summary(own, &comp.regions.strip, &comp.regions.core);
        out.push(ComponentDiagnostics {
            zero_fraction: zero_fraction(own, &comp.regions.strip),
            tau,
            sign,
            sign_changing: sign.strip_pos > 0 && sign.core_neg > 0,
            degenerate: max == 0.0,
            weak_residual_eps0: res * grid.cell_area(),
            residual_scale_eps0: scale,
            excluded_nodes: excluded,
            energy: energy(data, own)?,
            energy_bound: bounds.map(|b| b[i]),
        });
    }
    let v = out.pop().unwrap();
    let u = out.pop().unwrap();
    Ok(DiagnosticsBlock { eps, comps: [u, v] })
}
