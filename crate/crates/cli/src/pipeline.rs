//! Pipeline stages. Each stage reads the artifacts of the earlier ones from
//! the output directory, so `eigen`, `torsion`, `verify`, `solve` and
//! `continue` can run one at a time; `run` chains them in process.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nodal_core::mesh::{build_enlarged, build_grid, Grid};
use nodal_core::problem::{ProblemData, ValidationReport};
use nodal_core::solver::{
    continuation, diagnose, solve_auxiliary, solve_fixed_eps, DiagnosticsBlock, RhsKind, SignSummary, SolutionBundle,
};
use nodal_core::spectral::{principal_eigenpair, torsion_function, EigenPair, TorsionField};
use nodal_core::subsuper::{calibrate, sign_changing_pair, Calibration, SubSuperPair, VerificationReport};
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, EigenSummary, TorsionSummary};
use crate::config::{check_path, map_core_config, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

pub struct Context {
    pub cfg: RunConfig,
    /// Built once: fields carry the id of the grid they live on.
    pub grid: Grid,
    pub out: PathBuf,
    pub timings: bool,
    pub stamps: Vec<Timing>,
}

impl Context {
    pub fn new(cfg: RunConfig, out: PathBuf, timings: bool) -> Result<Self, CliError> {
        let d = &cfg.domain;
        let grid = build_grid(d.l1, d.l2, d.n1, d.n2).map_err(map_core_config)?;
        std::fs::create_dir_all(&out).map_err(|source| CliError::Io {
            path: out.display().to_string(),
            source,
        })?;
        Ok(Context {
            cfg,
            grid,
            out,
            timings,
            stamps: Vec::new(),
        })
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let t0 = Instant::now();
        let r = f(self);
        self.stamps.push(Timing {
            stage: stage.into(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        r
    }

    fn timings(&self) -> Option<Vec<Timing>> {
        self.timings.then(|| self.stamps.clone())
    }

    fn dir(&self) -> &Path {
        &self.out
    }
}

/// Calibrated constants plus the hypothesis checks, as written by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub validation: ValidationReport,
    pub calibration: Calibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSummary {
    pub eps: f64,
    pub kind: RhsKind,
    pub outer_iters: usize,
    pub linear_iters: usize,
    pub fp_residual: f64,
    pub weak_residual: [f64; 2],
    pub rhs_scale: [f64; 2],
    pub energy: [f64; 2],
    pub zero_fraction: [f64; 2],
    pub sign_summary: [SignSummary; 2],
    pub domination_violations: usize,
    pub history: Vec<f64>,
}

impl From<&SolutionBundle> for BundleSummary {
    fn from(b: &SolutionBundle) -> Self {
        BundleSummary {
            eps: b.eps,
            kind: b.kind,
            outer_iters: b.outer_iters,
            linear_iters: b.linear_iters,
            fp_residual: b.fp_residual,
            weak_residual: b.weak_residual,
            rhs_scale: b.rhs_scale,
            energy: b.energy,
            zero_fraction: b.zero_fraction,
            sign_summary: b.sign_summary,
            domination_violations: b.domination_violations,
            history: b.history.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    /// Index `k` of `ε_k` in the schedule (exponent or denominator).
    pub k: u32,
    pub eps: f64,
    pub auxiliary: Option<BundleSummary>,
    pub regularized: Option<BundleSummary>,
    pub h1_distance: Option<[f64; 2]>,
    pub failure: Option<String>,
    pub snapshot: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSummary {
    pub warm_start: bool,
    pub stopped_early: bool,
    pub steps: Vec<StepSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub eigen: EigenSummary,
    pub torsion: TorsionSummary,
    pub validation: ValidationReport,
    pub calibration: Calibration,
    pub continuation: ContinuationSummary,
    pub limit: DiagnosticsBlock,
    pub sign_changing: [bool; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<Timing>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub eps: f64,
    pub auxiliary: BundleSummary,
    pub regularized: BundleSummary,
    /// `10 (fp_tol + lin_tol) · rhs_scale` per equation.
    pub residual_threshold: [f64; 2],
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<Timing>>,
}

pub fn eigen(ctx: &mut Context) -> Result<(EigenSummary, EigenPair), CliError> {
    let grid = ctx.grid.clone();
    let sp = ctx.cfg.spectral.clone();
    ctx.timed("eigen", |ctx| {
        let e = principal_eigenpair(&grid, sp.normalization, sp.eig_tol).map_err(map_core_config)?;
        let s = artifacts::write_eigen(ctx.dir(), &grid, &e)?;
        println!(
            "lambda1 = {:.10e} (bias-corrected {:.10e}, continuum {:.10e}), l_est = {:.4}, eta_est = {:.4e}",
            s.lambda1, s.lambda1_corrected, s.lambda1_continuum, s.l_est, s.eta_est
        );
        Ok((s, e))
    })
}

pub fn torsion(ctx: &mut Context) -> Result<(TorsionSummary, TorsionField), CliError> {
    let grid = ctx.grid.clone();
    let pad = ctx.cfg.domain.pad_cells;
    let tol = ctx.cfg.spectral.torsion_tol;
    ctx.timed("torsion", |ctx| {
        let eg = build_enlarged(&grid, pad).map_err(map_core_config)?;
        let t = torsion_function(&eg, tol).map_err(|e| match e {
            nodal_core::Error::Config { reason, .. } => CliError::Config {
                path: "spectral.torsion_tol".into(),
                reason,
            },
            other => CliError::Core(other),
        })?;
        let s = artifacts::write_torsion(ctx.dir(), &t)?;
        println!(
            "torsion: c_est = {:.4}, mu = {:.4e}, sup = {:.6e}",
            s.c_est, s.mu, s.e_sup
        );
        Ok((s, t))
    })
}

fn assemble(cfg: &RunConfig, grid: &Grid, eigen: &EigenPair, lambda: f64) -> Result<ProblemData, CliError> {
    ProblemData::assemble(grid, eigen, cfg.specs(), lambda).map_err(|e| match e {
        nodal_core::Error::CoreRegionEmpty { rho, max } => CliError::Config {
            path: "problem.{u,v}.rho".into(),
            reason: format!("core region empty: rho = {rho} is not below max(phi1) = {max}"),
        },
        other => map_core_config(other),
    })
}

fn validation_error(rep: &ValidationReport) -> CliError {
    let lines: Vec<String> = rep
        .failures()
        .map(|c| format!("  {}: {}", check_path(&c.label, c.component), c.message))
        .collect();
    CliError::Validation(lines.join("\n"))
}

fn print_margins(cal: &Calibration) {
    let c = &cal.constants;
    println!("calibrated: C = {}, delta = {}, lambda = {}", c.c, c.delta, c.lambda);
    let groups: [(&str, &[VerificationReport; 2]); 3] = [
        ("constant-sign super", &cal.constant_sign_super),
        ("constant-sign sub", &cal.constant_sign_sub),
        ("sign-changing super", &cal.sign_changing_super),
    ];
    for (name, reps) in groups {
        for r in reps {
            println!(
                "  {name} (eq {}): {} min margin {:.6e} at node {:?}",
                r.component,
                if r.passed { "pass" } else { "FAIL" },
                r.min_margin,
                r.worst_node
            );
        }
    }
}

/// Validates the hypotheses, calibrates `C`, `δ` and `λ`, and writes
/// `calibration.json`. A failed validation writes `validation.json` only.
pub fn verify(
    ctx: &mut Context,
    eigen: &EigenPair,
    torsion: &TorsionField,
) -> Result<(ProblemData, CalibrationArtifact), CliError> {
    let grid = ctx.grid.clone();
    let fixed = ctx.cfg.problem.lambda.fixed();
    let range = ctx.cfg.schedule()?.range();
    ctx.timed("verify", |ctx| {
        let mut data = assemble(&ctx.cfg, &grid, eigen, fixed.unwrap_or(1.0))?;
        let pre = data.validate();
        if !pre.passed() {
            artifacts::write_json(ctx.dir(), artifacts::VALIDATION_JSON, &pre)?;
            return Err(validation_error(&pre));
        }
        let calibration = calibrate(&mut data, torsion, range, fixed)?;
        let validation = data.validate();
        artifacts::write_json(ctx.dir(), artifacts::VALIDATION_JSON, &validation)?;
        if !validation.passed() {
            return Err(validation_error(&validation));
        }
        print_margins(&calibration);
        let art = CalibrationArtifact {
            validation,
            calibration,
        };
        artifacts::write_json(ctx.dir(), artifacts::CALIBRATION_JSON, &art)?;
        Ok((data, art))
    })
}

/// Problem data with the constants of `calibration.json`.
pub fn load_calibrated(
    ctx: &Context,
    eigen: &EigenPair,
    torsion: &TorsionField,
) -> Result<(ProblemData, CalibrationArtifact), CliError> {
    let art: CalibrationArtifact = artifacts::read_json(ctx.dir(), artifacts::CALIBRATION_JSON, "verify")?;
    let mut data = assemble(&ctx.cfg, &ctx.grid, eigen, art.calibration.constants.lambda)?;
    data.c_scale = Some(art.calibration.constants.c);
    data.torsion_sup = Some(torsion.e_sup);
    Ok((data, art))
}

fn pair(data: &ProblemData, torsion: &TorsionField, cal: &Calibration) -> Result<SubSuperPair, CliError> {
    let mut p = sign_changing_pair(data, torsion, cal.constants.c)?;
    p.constants = cal.constants;
    Ok(p)
}

pub fn solve(
    ctx: &mut Context,
    data: &ProblemData,
    torsion: &TorsionField,
    cal: &Calibration,
    eps: f64,
) -> Result<SolveReport, CliError> {
    let it = ctx.cfg.iteration();
    let p = pair(data, torsion, cal)?;
    let (aux, reg) = ctx.timed("solve", |_| {
        let aux = solve_auxiliary(data, &p, eps, &it, None).map_err(map_core_config)?;
        let reg = solve_fixed_eps(
            data,
            eps,
            [&aux.u, &aux.v],
            [&p.upper[0], &p.upper[1]],
            RhsKind::Regularized,
            &it,
            None,
        )
        .map_err(map_core_config)?;
        Ok((aux, reg))
    })?;
    artifacts::write_fields(&ctx.out.join(artifacts::SOLVE_CSV), data, torsion, &reg.u, &reg.v)?;
    let tol = 10.0 * (it.fp_tol + it.lin_tol);
    let threshold = [tol * reg.rhs_scale[0], tol * reg.rhs_scale[1]];
    let passed = (0..2).all(|i| reg.weak_residual[i] <= threshold[i]);
    let rep = SolveReport {
        eps,
        auxiliary: (&aux).into(),
        regularized: (&reg).into(),
        residual_threshold: threshold,
        passed,
        timings: ctx.timings(),
    };
    artifacts::write_json(ctx.dir(), artifacts::SOLVE_JSON, &rep)?;
    println!(
        "eps = {eps}: {} outer iterations, weak residual [{:.3e}, {:.3e}] (threshold [{:.3e}, {:.3e}])",
        reg.outer_iters, reg.weak_residual[0], reg.weak_residual[1], threshold[0], threshold[1]
    );
    if let Some(i) = (0..2).find(|&i| reg.weak_residual[i] > threshold[i]) {
        return Err(CliError::Residual {
            component: i + 1,
            residual: reg.weak_residual[i],
            threshold: threshold[i],
        });
    }
    Ok(rep)
}

/// Runs the schedule, writes `fields.csv`, the snapshots and `report.json`.
pub fn continue_run(
    ctx: &mut Context,
    data: &ProblemData,
    torsion: &TorsionField,
    summaries: (EigenSummary, TorsionSummary),
    cal: CalibrationArtifact,
) -> Result<RunReport, CliError> {
    let schedule = ctx.cfg.schedule()?;
    let it = ctx.cfg.iteration();
    let warm = ctx.cfg.solver.warm_start;
    let p = pair(data, torsion, &cal.calibration)?;
    let res = ctx.timed("continue", |_| {
        continuation(data, &p, &schedule, &it, warm).map_err(map_core_config)
    })?;

    let first = ctx.cfg.solver.schedule.first;
    let snapshots = ctx.cfg.output.snapshots;
    let mut steps = Vec::with_capacity(res.steps.len());
    for (idx, s) in res.steps.iter().enumerate() {
        let k = first + idx as u32;
        let snapshot = match (&s.regularized, snapshots) {
            (Some(reg), true) => {
                let name = format!("fields_eps_{k}.csv");
                artifacts::write_fields(&ctx.out.join(&name), data, torsion, &reg.u, &reg.v)?;
                Some(name)
            }
            _ => None,
        };
        steps.push(StepSummary {
            k,
            eps: s.eps,
            auxiliary: s.auxiliary.as_ref().map(Into::into),
            regularized: s.regularized.as_ref().map(Into::into),
            h1_distance: s.h1_distance,
            failure: s.failure.clone(),
            snapshot,
        });
    }
    artifacts::write_fields(
        &ctx.out.join(artifacts::FIELDS_CSV),
        data,
        torsion,
        &res.limit.u,
        &res.limit.v,
    )?;

    let d = &res.diagnostics;
    for (name, c) in ["u", "v"].iter().zip(&d.comps) {
        println!(
            "{name}: sign-changing {}, zero fraction {:.4}, strip +{}/-{}, core +{}/-{}, eps=0 residual {:.3e}",
            c.sign_changing,
            c.zero_fraction,
            c.sign.strip_pos,
            c.sign.strip_neg,
            c.sign.core_pos,
            c.sign.core_neg,
            c.weak_residual_eps0
        );
    }
    let report = RunReport {
        config: ctx.cfg.clone(),
        eigen: summaries.0,
        torsion: summaries.1,
        validation: cal.validation,
        calibration: cal.calibration,
        continuation: ContinuationSummary {
            warm_start: res.warm_start,
            stopped_early: res.stopped_early,
            steps,
        },
        sign_changing: [d.comps[0].sign_changing, d.comps[1].sign_changing],
        limit: res.diagnostics,
        timings: ctx.timings(),
    };
    artifacts::write_json(ctx.dir(), artifacts::REPORT_JSON, &report)?;
    Ok(report)
}

/// Diagnostics of the limit recomputed from `fields.csv` and the upstream
/// artifacts in `dir` alone.
pub fn rediagnose(cfg: &RunConfig, dir: &Path) -> Result<DiagnosticsBlock, CliError> {
    let ctx = Context::new(cfg.clone(), dir.to_path_buf(), false)?;
    let (_, e) = artifacts::load_eigen(dir, &ctx.grid, cfg.spectral.normalization)?;
    let (_, t) = artifacts::load_torsion(dir, &ctx.grid, cfg.domain.pad_cells)?;
    let (data, _) = load_calibrated(&ctx, &e, &t)?;
    let (u, v) = artifacts::load_fields(dir, artifacts::FIELDS_CSV, "continue", &ctx.grid)?;
    Ok(diagnose(&data, &u, &v, 0.0)?)
}
