//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails.

use std::f64::consts::{E, PI};
use std::panic;
use std::sync::OnceLock;
use std::time::Instant;

use nodal_core::problem::{gamma_from_rho, gamma_map, ComponentSpec, FKind, ProblemData};
use nodal_core::solver::{continuation, f_eps, solve_fixed_eps, EpsSchedule, IterationConfig, RhsKind};
use nodal_core::spectral::{discrete_principal_eigenvalue, principal_eigenpair, torsion_function, TorsionField};
use nodal_core::subsuper::{
    build_constant_sign, calibrate, sign_changing_pair, sign_structure_violations, verify_subsolution,
    verify_supersolution, Calibration, SubSuperPair,
};
use nodal_core::{build_enlarged, build_grid, Error, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EIG_TOL: f64 = 1e-10;
const TORSION_TOL: f64 = 1e-11;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Instance {
    data: ProblemData,
    torsion: TorsionField,
    cal: Calibration,
    pair: SubSuperPair,
}

/// `[0,4]²`, max φ₁ = 6, ρ = 2.8, α = β = 1/2, f ≡ 1, A± = 1, sharp
/// coefficient switch; padding keeps μ̃ = 1/2 on every grid.
fn default_instance(n: usize) -> Instance {
    let pad = (n - 1) / 8;
    let g = build_grid(4.0, 4.0, n, n).unwrap();
    let e = principal_eigenpair(&g, 6.0, EIG_TOL).unwrap();
    let torsion = torsion_function(&build_enlarged(&g, pad).unwrap(), TORSION_TOL).unwrap();
    let mut data = ProblemData::assemble(&g, &e, [ComponentSpec::default(); 2], 1.0).unwrap();
    let cal = calibrate(&mut data, &torsion, EpsSchedule::default().range(), None).unwrap();
    let mut pair = sign_changing_pair(&data, &torsion, cal.constants.c).unwrap();
    pair.constants = cal.constants;
    Instance {
        data,
        torsion,
        cal,
        pair,
    }
}

fn order(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn criterion_1() -> Outcome {
    let mut errs = Vec::new();
    let mut rel = 0.0;
    let mut secs = 0.0;
    for n in [33, 65, 129] {
        let g = build_grid(PI, PI, n, n).unwrap();
        let t = Instant::now();
        let e = principal_eigenpair(&g, 1.0, EIG_TOL).unwrap();
        if n == 129 {
            secs = t.elapsed().as_secs_f64();
            let exact = discrete_principal_eigenvalue(&g);
            rel = (e.lambda1 - exact).abs() / exact;
        }
        errs.push((e.lambda1 - 2.0).abs());
    }
    let p = order(&errs);
    let pass = rel <= 1e-8 && p.iter().all(|o| (o - 2.0).abs() <= 0.2) && secs < 5.0;
    outcome(
        pass,
        format!("rel err vs discrete {rel:.2e} (<= 1e-8), orders {p:.3?} (2 +- 0.2), 129^2 solve {secs:.2}s (< 5s)"),
    )
}

/// Centre value of the torsion function of the unit square from its double
/// sine series.
fn fourier_centre() -> f64 {
    let mut s = 0.0;
    for j in (1..4000).step_by(2) {
        for k in (1..4000).step_by(2) {
            let sign = if ((j + k) / 2 - 1) % 2 == 0 { 1.0 } else { -1.0 };
            let (jf, kf) = (j as f64, k as f64);
            s += sign * 16.0 / (PI.powi(4) * jf * kf * (jf * jf + kf * kf));
        }
    }
    s
}

fn criterion_2() -> Outcome {
    let reference = fourier_centre();
    let mut errs = Vec::new();
    let mut cs = Vec::new();
    let mut positive = true;
    for n in [33usize, 65, 129] {
        // Ω = [0, 1/2]² padded by 1/4 on every side: Ω̃ is the unit square and
        // shares its centre node with Ω.
        let m = n.div_ceil(2);
        let g = build_grid(0.5, 0.5, m, m).unwrap();
        let eg = build_enlarged(&g, (m - 1) / 2).unwrap();
        let t = torsion_function(&eg, TORSION_TOL).unwrap();
        let c = g.index((m - 1) / 2, (m - 1) / 2);
        errs.push((t.on_omega[c] - reference).abs());
        positive &= eg.grid().interior_nodes().all(|k| t.e_tilde[k] > 0.0);
        cs.push(t.c_est);
    }
    let p = order(&errs);
    let finite = cs.iter().all(|c| c.is_finite());
    let spread =
        cs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / cs.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let pass = p.iter().all(|o| (o - 2.0).abs() <= 0.2) && positive && finite && spread <= 0.05;
    outcome(
        pass,
        format!(
            "centre errors {:.2e} {:.2e} {:.2e} vs series {reference:.7}, orders {p:.3?}, positive {positive}, c_est {cs:.2?} spread {:.1}% (<= 5%)",
            errs[0],
            errs[1],
            errs[2],
            100.0 * spread
        ),
    )
}

fn criterion_3() -> Outcome {
    let g = gamma_from_rho(4.0).unwrap();
    let rejected = [E, 2.5, 2.0, 1.0]
        .iter()
        .all(|&r| matches!(gamma_from_rho(r), Err(Error::GammaUnsatisfiable { .. })));
    let n = 10_000;
    let monotone = (1..n)
        .map(|i| gamma_map(i as f64 / n as f64))
        .collect::<Vec<_>>()
        .windows(2)
        .all(|w| w[1] < w[0]);
    let pass = (g - 0.5).abs() <= 1e-10 && rejected && monotone;
    outcome(
        pass,
        format!("gamma(4) = {g:.15} (0.5 +- 1e-10), rho <= e rejected {rejected}, g decreasing on 1e4 grid {monotone}"),
    )
}

fn criterion_4(inst: &Instance) -> Outcome {
    let d = &inst.data;
    let v: Vec<usize> = (0..2)
        .map(|i| sign_structure_violations(&d.grid, &inst.pair.upper[i], d.phi1(), d.comps[i].rho))
        .collect();
    outcome(
        v.iter().all(|&x| x == 0),
        format!("violating nodes u {} v {} (129^2)", v[0], v[1]),
    )
}

fn criterion_5(inst: &Instance) -> Outcome {
    let d = &inst.data;
    let sched = EpsSchedule::default();
    let cs = build_constant_sign(&inst.torsion, inst.cal.constants.c).unwrap();
    let mut worst = f64::INFINITY;
    let mut ranges = vec![sched.range()];
    ranges.extend(sched.eps.iter().map(|&e| (e, e)));
    for r in &ranges {
        let reps = [
            verify_supersolution(&inst.pair, d, *r).unwrap(),
            verify_subsolution(&inst.pair, d, *r).unwrap(),
            verify_supersolution(&cs, d, *r).unwrap(),
            verify_subsolution(&cs, d, *r).unwrap(),
        ];
        for rep in reps.iter().flatten() {
            worst = worst.min(rep.min_margin);
        }
    }
    let tenth = build_constant_sign(&inst.torsion, inst.cal.constants.c / 10.0).unwrap();
    let flipped = verify_subsolution(&tenth, d, sched.range())
        .unwrap()
        .iter()
        .any(|r| !r.passed);
    let c = inst.cal.constants;
    outcome(
        worst > 0.0 && flipped,
        format!(
            "C {} delta {} lambda {}: min margin over all checks and eps {worst:.3e} (> 0), C/10 subsolution fails {flipped}",
            c.c, c.delta, c.lambda
        ),
    )
}

fn criterion_6(inst: &Instance) -> Outcome {
    let d = &inst.data;
    let p = &inst.pair;
    let (emin, emax) = EpsSchedule::default().range();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let nodes: Vec<usize> = d.grid.interior_nodes().collect();
    let mut bad = 0;
    let samples = 10_000;
    for _ in 0..samples {
        let k = nodes[rng.gen_range(0..nodes.len())];
        let i = rng.gen_range(0..2);
        let mut pick = |c: usize| p.lower[c][k] + (p.upper[c][k] - p.lower[c][k]) * rng.gen::<f64>();
        let own = pick(i);
        let other = pick(1 - i);
        let eps = (emin.ln() + (emax.ln() - emin.ln()) * rng.gen::<f64>()).exp();
        let comp = &d.comps[i];
        let reg = comp.a[k] * comp.f.eval(other) / (own.abs() + eps).powf(comp.alpha);
        if f_eps(d, i, k, own, other, eps, [&p.upper[0], &p.upper[1]]) > reg {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("{bad} violations in {samples} samples"))
}

fn criterion_7(inst: &Instance) -> Outcome {
    let cfg = IterationConfig::default();
    let mut worst: f64 = 0.0;
    for lambda in [1.0, inst.cal.constants.lambda] {
        let mut d = inst.data.clone();
        d.lambda = lambda;
        let z = d.grid.zeros();
        let d = d.with_coefficients(z.clone(), z).unwrap();
        let lo = d.grid.field_from_fn(|_, _| -10.0);
        let hi = d.grid.field_from_fn(|_, _| 10.0);
        let sol = solve_fixed_eps(&d, 0.5, [&lo, &lo], [&hi, &hi], RhsKind::Regularized, &cfg, None).unwrap();
        let l1 = discrete_principal_eigenvalue(&d.grid);
        let exact = d.phi1().scaled(-lambda / (l1 + lambda));
        worst = worst
            .max(sol.u.sup_distance(&exact).unwrap())
            .max(sol.v.sup_distance(&exact).unwrap());
    }
    let tol = cfg.fp_tol + 10.0 * cfg.lin_tol;
    outcome(
        worst <= tol,
        format!(
            "sup error {worst:.2e} (<= {tol:.2e}) at lambda 1 and {}",
            inst.cal.constants.lambda
        ),
    )
}

fn gauss(a: &mut [f64], b: &mut [f64], n: usize) {
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            b.swap(piv, col);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            if f != 0.0 {
                for c in col..n {
                    a[row * n + c] -= f * a[col * n + c];
                }
                b[row] -= f * b[col];
            }
        }
    }
    for row in (0..n).rev() {
        let s: f64 = b[row] - (row + 1..n).map(|c| a[row * n + c] * b[c]).sum::<f64>();
        b[row] = s / a[row * n + row];
    }
}

/// Damped Newton with a dense Jacobian on the full α = 0 residual.
fn dense_newton(d: &ProblemData) -> Vec<f64> {
    let g = &d.grid;
    let idx: Vec<usize> = g.interior_nodes().collect();
    let m = idx.len();
    let nn = 2 * m;
    let mut pos = vec![None; g.len()];
    for (p, &k) in idx.iter().enumerate() {
        pos[k] = Some(p);
    }
    let (cx, cy) = (1.0 / (g.h1() * g.h1()), 1.0 / (g.h2() * g.h2()));
    let n1 = g.n1();
    let phi = d.phi1();
    let residual = |x: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; nn];
        for c in 0..2 {
            for (p, &k) in idx.iter().enumerate() {
                let w = |kk: usize| pos[kk].map_or(0.0, |q| x[c * m + q]);
                let lap = cx * (2.0 * w(k) - w(k - 1) - w(k + 1)) + cy * (2.0 * w(k) - w(k - n1) - w(k + n1));
                r[c * m + p] =
                    lap + d.lambda * (w(k) + phi[k]) - d.comps[c].a[k] * d.comps[c].f.eval(x[(1 - c) * m + p]);
            }
        }
        r
    };
    let sup = |r: &[f64]| r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut x = vec![0.1; nn];
    let mut r = residual(&x);
    for _ in 0..200 {
        if sup(&r) < 1e-13 {
            break;
        }
        let mut jac = vec![0.0; nn * nn];
        for c in 0..2 {
            let beta = d.comps[c].beta;
            for (p, &k) in idx.iter().enumerate() {
                let row = c * m + p;
                jac[row * nn + row] = 2.0 * (cx + cy) + d.lambda;
                for (kk, coef) in [(k - 1, cx), (k + 1, cx), (k - n1, cy), (k + n1, cy)] {
                    if let Some(q) = pos[kk] {
                        jac[row * nn + c * m + q] -= coef;
                    }
                }
                let col = (1 - c) * m + p;
                let s = x[col];
                jac[row * nn + col] -= d.comps[c].a[k] * beta * s.abs().powf(beta - 1.0) * s.signum();
            }
        }
        let mut step: Vec<f64> = r.iter().map(|v| -v).collect();
        gauss(&mut jac, &mut step, nn);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            let rt = residual(&trial);
            if sup(&rt) < sup(&r) || t < 1e-8 {
                x = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    assert!(sup(&r) < 1e-10, "dense Newton stalled at {:e}", sup(&r));
    let mut out = vec![0.0; 2 * g.len()];
    for (p, &k) in idx.iter().enumerate() {
        out[k] = x[p];
        out[g.len() + k] = x[m + p];
    }
    out
}

fn criterion_8() -> Outcome {
    let g = build_grid(4.0, 4.0, 17, 17).unwrap();
    let e = principal_eigenpair(&g, 6.0, EIG_TOL).unwrap();
    let spec = ComponentSpec {
        alpha: 0.0,
        family: FKind::Power,
        ..Default::default()
    };
    let d = ProblemData::assemble(&g, &e, [spec; 2], 0.25).unwrap();
    let oracle = dense_newton(&d);
    let lo = g.field_from_fn(|_, _| -20.0);
    let hi = g.field_from_fn(|_, _| 20.0);
    let cfg = IterationConfig {
        fp_tol: 1e-12,
        lin_tol: 1e-13,
        ..Default::default()
    };
    let sol = solve_fixed_eps(&d, 0.5, [&lo, &lo], [&hi, &hi], RhsKind::Regularized, &cfg, None).unwrap();
    let n = g.len();
    let err = (0..n)
        .map(|k| (sol.u[k] - oracle[k]).abs().max((sol.v[k] - oracle[n + k]).abs()))
        .fold(0.0, f64::max);
    outcome(
        err <= 1e-8,
        format!("sup difference to dense Newton {err:.2e} (<= 1e-8), 17^2, alpha = 0, f = 1 + |s|^0.5"),
    )
}

fn below(a: &ScalarField, b: &ScalarField) -> bool {
    a.values().iter().zip(b.values()).all(|(x, y)| x <= y)
}

fn criterion_9() -> Outcome {
    let t = Instant::now();
    let inst = default_instance(129);
    let d = &inst.data;
    let sched = EpsSchedule::default();
    let cfg = IterationConfig::default();
    let run = continuation(d, &inst.pair, &sched, &cfg, true).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let diag = &run.diagnostics;
    let signs = diag.comps.iter().all(|c| c.sign_changing);
    let last = run.steps.iter().rev().find_map(|s| s.auxiliary.as_ref()).unwrap();
    let lim = &run.limit;
    let contained = below(&last.u, &lim.u)
        && below(&lim.u, &inst.pair.upper[0])
        && below(&last.v, &lim.v)
        && below(&lim.v, &inst.pair.upper[1]);
    let zf = [diag.comps[0].zero_fraction, diag.comps[1].zero_fraction];
    let bound = [diag.comps[0].energy_bound.unwrap(), diag.comps[1].energy_bound.unwrap()];
    let energy_ok = run
        .steps
        .iter()
        .filter_map(|s| s.regularized.as_ref())
        .all(|r| r.energy[0] <= bound[0] && r.energy[1] <= bound[1]);
    let dists: Vec<f64> = run
        .steps
        .iter()
        .filter_map(|s| s.h1_distance)
        .map(|d| d[0].max(d[1]))
        .collect();
    let worst_ratio = dists.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    let pass = signs && contained && zf.iter().all(|&z| z <= 0.02) && energy_ok && worst_ratio <= 1.5 && secs < 180.0;
    let s = diag.comps[0].sign;
    outcome(
        pass,
        format!(
            "sign-changing {signs} (u: strip +{} -{}, core +{} -{}), contained {contained}, zero_fraction {zf:.3?} (<= 0.02), energy <= bound {energy_ok}, max H1 ratio {worst_ratio:.2} (<= 1.5), {secs:.1}s (< 180s)",
            s.strip_pos, s.strip_neg, s.core_pos, s.core_neg
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut zf = Vec::new();
    for n in [33, 65, 129] {
        let inst = default_instance(n);
        let run = continuation(
            &inst.data,
            &inst.pair,
            &EpsSchedule::default(),
            &IterationConfig::default(),
            true,
        )
        .unwrap();
        zf.push([
            run.diagnostics.comps[0].zero_fraction,
            run.diagnostics.comps[1].zero_fraction,
        ]);
    }
    let pass = zf.windows(2).all(|w| w[1][0] <= w[0][0] && w[1][1] <= w[0][1]);
    outcome(
        pass,
        format!("zero_fraction (u, v) on 33^2, 65^2, 129^2: {zf:.4?} (non-increasing)"),
    )
}

fn inst() -> &'static Instance {
    static SHARED: OnceLock<Instance> = OnceLock::new();
    SHARED.get_or_init(|| default_instance(129))
}

fn main() {
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for n in 1..=10 {
        let t = Instant::now();
        let result = panic::catch_unwind(panic::AssertUnwindSafe(|| match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(inst()),
            5 => criterion_5(inst()),
            6 => criterion_6(inst()),
            7 => criterion_7(inst()),
            8 => criterion_8(),
            9 => criterion_9(),
            _ => criterion_10(),
        }));
        let o = result.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2}: {} [{:.2}s] {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
