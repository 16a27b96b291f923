use crate::error::{Error, Result};
use crate::subsuper::SubSuperPair;

use super::diagnostics::{diagnostics, h1_distance, DiagnosticsBlock};
use super::iteration::{solve_auxiliary, solve_fixed_eps};
use super::{EpsSchedule, IterationConfig, RhsKind, SolutionBundle};

#[derive(Debug, Clone)]
pub struct ContinuationStep {
    pub eps: f64,
    pub auxiliary: Option<SolutionBundle>,
    pub regularized: Option<SolutionBundle>,
    /// `H¹` distance of `(u, v)` to the previous successful step.
    pub h1_distance: Option<[f64; 2]>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub steps: Vec<ContinuationStep>,
    /// Last successful regularized solution, relabelled `eps = 0`.
    pub limit: SolutionBundle,
    pub diagnostics: DiagnosticsBlock,
    /// The `H¹` distance fell below the schedule tolerance before the end.
    pub stopped_early: bool,
    pub warm_start: bool,
}

/// Runs the schedule on a calibrated sign-changing pair. For each `ε` the
/// auxiliary problem is solved in `[-Cẽ, (ū, v̄)]`, then the regularized
/// problem in `[(u̲_ε, v̲_ε), (ū, v̄)]`. With `warm_start` each solve starts
/// from the previous `ε`, otherwise from its lower bound.
///
/// A failed `ε` is recorded and skipped; two failures in a row abort.
pub fn continuation(
    data: &crate::problem::ProblemData,
    pair: &SubSuperPair,
    schedule: &EpsSchedule,
    cfg: &IterationConfig,
    warm_start: bool,
) -> Result<ContinuationResult> {
    schedule.validate()?;
    let mut steps: Vec<ContinuationStep> = Vec::with_capacity(schedule.eps.len());
    let mut prev_aux: Option<SolutionBundle> = None;
    let mut prev: Option<SolutionBundle> = None;
    let mut consecutive = 0;
    let mut stopped_early = false;

    for &eps in &schedule.eps {
        let start = |b: &Option<SolutionBundle>| b.as_ref().filter(|_| warm_start).map(|b| [b.u.clone(), b.v.clone()]);
        let outcome = solve_auxiliary(data, pair, eps, cfg, start(&prev_aux)).and_then(|aux| {
            solve_fixed_eps(
                data,
                eps,
                [&aux.u, &aux.v],
                [&pair.upper[0], &pair.upper[1]],
                RhsKind::Regularized,
                cfg,
                start(&prev),
            )
            .map(|reg| (aux, reg))
        });
        match outcome {
            Ok((aux, reg)) => {
                consecutive = 0;
                let dist = match &prev {
                    Some(p) => Some([
                        h1_distance(&data.grid, &p.u, &reg.u)?,
                        h1_distance(&data.grid, &p.v, &reg.v)?,
                    ]),
                    None => None,
                };
                prev_aux = Some(aux.clone());
                prev = Some(reg.clone());
                steps.push(ContinuationStep {
                    eps,
                    auxiliary: Some(aux),
                    regularized: Some(reg),
                    h1_distance: dist,
                    failure: None,
                });
                if dist.is_some_and(|d| d[0].max(d[1]) <= schedule.continuation_tol) {
                    stopped_early = steps.len() < schedule.eps.len();
                    break;
                }
            }
            Err(e) => {
                consecutive += 1;
                steps.push(ContinuationStep {
                    eps,
                    auxiliary: None,
                    regularized: None,
                    h1_distance: None,
                    failure: Some(e.to_string()),
                });
                if consecutive >= 2 {
                    return Err(e);
                }
            }
        }
    }
    let Some(mut limit) = prev else {
        return Err(Error::NonConvergence {
            iterations: 0,
            change: f64::INFINITY,
            residual: f64::INFINITY,
        });
    };
    limit.eps = 0.0;
    let diagnostics = diagnostics(data, &limit)?;
    Ok(ContinuationResult {
        steps,
        limit,
        diagnostics,
        stopped_early,
        warm_start,
    })
}
