//! Fixed-`ε` solves of the auxiliary and regularized systems, the
//! `ε -> 0` continuation and the diagnostics of the limit.

mod continuation;
mod diagnostics;
mod iteration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::ScalarField;
use crate::problem::ProblemData;

pub use continuation::{continuation, ContinuationResult, ContinuationStep};
pub use diagnostics::{
    diagnose, diagnostics, energy, energy_bound, h1_distance, h1_norm, ComponentDiagnostics, DiagnosticsBlock,
    SignSummary,
};
pub use iteration::{solve_auxiliary, solve_fixed_eps, weak_residual};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationConfig {
    pub damping: f64,
    pub max_outer: usize,
    pub fp_tol: f64,
    pub lin_tol: f64,
    pub clamp: bool,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            damping: 0.5,
            max_outer: 500,
            fp_tol: 1e-9,
            lin_tol: 1e-11,
            clamp: true,
        }
    }
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config(
                "damping",
                format!("must lie in (0,1], got {}", self.damping),
            ));
        }
        if self.max_outer == 0 {
            return Err(Error::config("max_outer", "must be at least 1"));
        }
        for (name, v) in [("fp_tol", self.fp_tol), ("lin_tol", self.lin_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(name, format!("must lie in (0,1), got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsSchedule {
    pub eps: Vec<f64>,
    pub continuation_tol: f64,
}

impl EpsSchedule {
    /// `2^-k` for `k = k_first..=k_last`.
    pub fn geometric(k_first: u32, k_last: u32, continuation_tol: f64) -> Result<Self> {
        let eps = (k_first..=k_last).map(|k| 0.5f64.powi(k as i32)).collect();
        let s = EpsSchedule { eps, continuation_tol };
        s.validate()?;
        Ok(s)
    }

    /// `1/n` for `n = n_first..=n_last`.
    pub fn harmonic(n_first: u32, n_last: u32, continuation_tol: f64) -> Result<Self> {
        let eps = (n_first..=n_last).map(|n| 1.0 / n as f64).collect();
        let s = EpsSchedule { eps, continuation_tol };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(Error::config("schedule", "needs at least one eps"));
        }
        if !(self.eps[0] > 0.0 && self.eps[0] < 1.0) {
            return Err(Error::config(
                "schedule",
                format!("eps must lie in (0,1), got {}", self.eps[0]),
            ));
        }
        if let Some(w) = self.eps.windows(2).find(|w| !(w[1] < w[0] && w[1] > 0.0)) {
            return Err(Error::config(
                "schedule",
                format!("eps must be positive and strictly decreasing ({} then {})", w[0], w[1]),
            ));
        }
        if !(self.continuation_tol >= 0.0) {
            return Err(Error::config("continuation_tol", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn range(&self) -> (f64, f64) {
        (*self.eps.last().unwrap(), self.eps[0])
    }
}

impl Default for EpsSchedule {
    fn default() -> Self {
        EpsSchedule::geometric(1, 16, 1e-6).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsKind {
    Auxiliary,
    Regularized,
}

/// The truncation `χ(s)`: zero below `φ₁`, the ramp `s - φ₁` up to `2φ₁`,
/// then constant `φ₁`, all divided by `sup φ₁`.
pub fn chi_truncation(s: f64, phi1_at_x: f64, phi1_sup: f64) -> f64 {
    let raw = if s >= 2.0 * phi1_at_x {
        phi1_at_x
    } else if s >= phi1_at_x {
        s - phi1_at_x
    } else {
        0.0
    };
    raw / phi1_sup
}

fn chi_slope(s: f64, phi1_at_x: f64, phi1_sup: f64) -> f64 {
    if s > phi1_at_x && s < 2.0 * phi1_at_x {
        1.0 / phi1_sup
    } else {
        0.0
    }
}

/// Auxiliary right-hand side of equation `i` at interior node `k`.
///
/// Strip: `a⁺ χ(own⁺) f(other) / (|upper_own| + 1)^α`.
/// Core: `-a⁻ (1 + |upper_other|^β) / (|own| + ε)^α`, with the exponent `β`
/// of equation `i`.
pub fn f_eps(data: &ProblemData, i: usize, k: usize, own: f64, other: f64, eps: f64, upper: [&ScalarField; 2]) -> f64 {
    f_eps_with_slope(data, data.eigen.phi1.max_abs(), i, k, own, other, eps, upper).0
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn f_eps_with_slope(
    data: &ProblemData,
    phi_sup: f64,
    i: usize,
    k: usize,
    own: f64,
    other: f64,
    eps: f64,
    upper: [&ScalarField; 2],
) -> (f64, f64) {
    let c = &data.comps[i];
    let phi = data.eigen.phi1[k];
    if c.regions.strip[k] {
        let scale = c.a_pos(k) * c.f.eval(other) / (upper[i][k].abs() + 1.0).powf(c.alpha);
        let s = own.max(0.0);
        (
            scale * chi_truncation(s, phi, phi_sup),
            scale * chi_slope(s, phi, phi_sup),
        )
    } else if c.regions.core[k] {
        let top = c.a_neg(k) * (1.0 + upper[1 - i][k].abs().powf(c.beta));
        let den = own.abs() + eps;
        let val = -top / den.powf(c.alpha);
        // d/d own of -top (|own| + ε)^-α; at own = 0 take the branch that
        // stabilises the iteration.
        let sign = if own > 0.0 { 1.0 } else { -1.0 };
        (val, sign * c.alpha * top * den.powf(-c.alpha - 1.0))
    } else {
        (0.0, 0.0)
    }
}

/// Regularized reaction `a f(other) / (|own| + ε)^α` and its slope in
/// `own`.
pub(crate) fn regularized_with_slope(
    data: &ProblemData,
    i: usize,
    k: usize,
    own: f64,
    other: f64,
    eps: f64,
) -> (f64, f64) {
    let c = &data.comps[i];
    let af = c.a[k] * c.f.eval(other);
    let den = own.abs() + eps;
    let val = af / den.powf(c.alpha);
    let slope = if own == 0.0 {
        -c.alpha * af.abs() * den.powf(-c.alpha - 1.0)
    } else {
        -c.alpha * af * own.signum() * den.powf(-c.alpha - 1.0)
    };
    (val, slope)
}

/// A solution of one fixed-`ε` problem.
#[derive(Debug, Clone)]
pub struct SolutionBundle {
    pub u: ScalarField,
    pub v: ScalarField,
    /// Zero for the limit candidate.
    pub eps: f64,
    pub kind: RhsKind,
    pub outer_iters: usize,
    pub linear_iters: usize,
    /// Sup-norm change of the last outer step.
    pub fp_residual: f64,
    /// Lumped weak residual of the undamped, unclamped discrete system.
    pub weak_residual: [f64; 2],
    /// `max(1, ||RHS||_inf)` per equation at the solution.
    pub rhs_scale: [f64; 2],
    pub energy: [f64; 2],
    pub zero_fraction: [f64; 2],
    pub sign_summary: [SignSummary; 2],
    /// Nodes where the auxiliary right side exceeded the regularized one,
    /// summed over all iterates (auxiliary solves only).
    pub domination_violations: usize,
    /// Sup-norm change per outer step.
    pub history: Vec<f64>,
}

impl SolutionBundle {
    pub fn field(&self, i: usize) -> &ScalarField {
        if i == 0 {
            &self.u
        } else {
            &self.v
        }
    }
}
