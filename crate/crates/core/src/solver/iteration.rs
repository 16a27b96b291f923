use crate::error::{Error, Result};
use crate::mesh::ScalarField;
use crate::problem::ProblemData;
use crate::spectral::cg::cg_iterate;
use crate::spectral::{neg_laplacian, LaplaceOperator};
use crate::subsuper::SubSuperPair;

use super::diagnostics::{energy, sign_summary, zero_fraction};
use super::{f_eps_with_slope, regularized_with_slope, IterationConfig, RhsKind, SolutionBundle};

/// Right side of equation `i` at node `k` and its slope in `own`.
struct Rhs<'a> {
    data: &'a ProblemData,
    kind: RhsKind,
    upper: [&'a ScalarField; 2],
    eps: f64,
    phi_sup: f64,
}

impl Rhs<'_> {
    fn eval(&self, i: usize, k: usize, own: f64, other: f64) -> (f64, f64) {
        let Rhs {
            data,
            kind,
            upper,
            eps,
            phi_sup,
        } = *self;
        match kind {
            RhsKind::Auxiliary => f_eps_with_slope(data, phi_sup, i, k, own, other, eps, upper),
            RhsKind::Regularized => regularized_with_slope(data, i, k, own, other, eps),
        }
    }
}

/// `h1 h2 sup |(-Δ_h w) + λ(w + φ₁) - g(w)|` over interior nodes for both
/// equations, with the right side evaluated at `(u, v)` as given. Returns the
/// residuals and `max(1, ||g||_inf)` per equation.
pub fn weak_residual(
    data: &ProblemData,
    u: &ScalarField,
    v: &ScalarField,
    eps: f64,
    kind: RhsKind,
    upper: [&ScalarField; 2],
) -> Result<([f64; 2], [f64; 2])> {
    let grid = &data.grid;
    let phi = data.phi1();
    let fields = [u, v];
    let mut res = [0.0; 2];
    let mut scale = [1.0f64; 2];
    let rhs = Rhs {
        data,
        kind,
        upper,
        eps,
        phi_sup: phi.max_abs(),
    };
    for i in 0..2 {
        let lap = neg_laplacian(grid, fields[i])?;
        let (own, other) = (fields[i], fields[1 - i]);
        let mut r: f64 = 0.0;
        for k in grid.interior_nodes() {
            let (g, _) = rhs.eval(i, k, own[k], other[k]);
            r = r.max((lap[k] + data.lambda * (own[k] + phi[k]) - g).abs());
            scale[i] = scale[i].max(g.abs());
        }
        res[i] = r * grid.cell_area();
    }
    Ok((res, scale))
}

/// Solves the auxiliary (`kind = Auxiliary`) or regularized problem at a
/// fixed `ε` inside the order interval `[lower, upper]`.
///
/// Each outer step updates `u` then `v` (Gauss-Seidel) by one linear solve of
/// `(-Δ_h + λ + S) ŵ = g(w) + S w - λφ₁`, where `S = -∂g/∂w` is clipped from
/// below at `-λ/2`. The new iterate is `w + θ(ŵ - w)`, clamped into the
/// interval when `cfg.clamp` is set. The result is one fixed point reached
/// from `start`. The default start is the upper bound, which carries the
/// target sign pattern; the discrete problem can have several solutions in
/// the interval and no claim of uniqueness is made.
///
/// For the auxiliary problem `upper` also provides the barrier values used
/// inside the truncated right side.
pub fn solve_fixed_eps(
    data: &ProblemData,
    eps: f64,
    lower: [&ScalarField; 2],
    upper: [&ScalarField; 2],
    kind: RhsKind,
    cfg: &IterationConfig,
    start: Option<[ScalarField; 2]>,
) -> Result<SolutionBundle> {
    cfg.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::config("eps", format!("must be positive, got {eps}")));
    }
    let grid = &data.grid;
    for f in lower.iter().chain(upper.iter()) {
        grid.check(f)?;
    }
    let n = grid.len();
    let lambda = data.lambda;
    let phi = data.phi1();
    let interior = grid.interior_mask();
    let rhs = Rhs {
        data,
        kind,
        upper,
        eps,
        phi_sup: phi.max_abs(),
    };

    let mut w: [Vec<f64>; 2] = match start {
        Some([a, b]) => {
            grid.check(&a)?;
            grid.check(&b)?;
            [a.into_values(), b.into_values()]
        }
        None => [upper[0].values().to_vec(), upper[1].values().to_vec()],
    };
    for (i, wi) in w.iter_mut().enumerate() {
        for k in 0..n {
            if !interior[k] {
                wi[k] = 0.0;
            } else if cfg.clamp {
                wi[k] = wi[k].clamp(lower[i][k], upper[i][k]);
            }
        }
    }

    let mut diag = grid.zeros();
    let mut b = vec![0.0; n];
    let mut hat = vec![0.0; n];
    let mut history = Vec::new();
    let mut linear_iters = 0;
    let mut violations = 0;
    let mut change = f64::INFINITY;
    let theta = cfg.damping;

    for _ in 0..cfg.max_outer {
        change = 0.0;
        for i in 0..2 {
            let j = 1 - i;
            for k in 0..n {
                if !interior[k] {
                    diag[k] = 0.0;
                    b[k] = 0.0;
                    continue;
                }
                let (own, other) = (w[i][k], w[j][k]);
                let (g, slope) = rhs.eval(i, k, own, other);
                if kind == RhsKind::Auxiliary {
                    let (reg, _) = regularized_with_slope(data, i, k, own, other, eps);
                    if g > reg {
                        violations += 1;
                    }
                }
                let s = (-slope).max(-0.5 * lambda);
                diag[k] = lambda + s;
                b[k] = g + s * own - lambda * phi[k];
            }
            let op = LaplaceOperator::new(grid, 0.0)?.with_diagonal(&diag)?;
            hat.copy_from_slice(&w[i]);
            linear_iters += cg_iterate(&op, &b, &mut hat, cfg.lin_tol).iterations;
            for k in 0..n {
                if !interior[k] {
                    continue;
                }
                let mut next = w[i][k] + theta * (hat[k] - w[i][k]);
                if cfg.clamp {
                    next = next.clamp(lower[i][k], upper[i][k]);
                }
                change = change.max((next - w[i][k]).abs());
                w[i][k] = next;
            }
        }
        history.push(change);
        if !change.is_finite() {
            break;
        }
        if change <= cfg.fp_tol {
            break;
        }
    }
    let [wu, wv] = w;
    let u = grid.field(wu)?;
    let v = grid.field(wv)?;
    let (weak, rhs_scale) = weak_residual(data, &u, &v, eps, kind, upper)?;
    if !(change <= cfg.fp_tol) {
        return Err(Error::NonConvergence {
            iterations: history.len(),
            change,
            residual: weak[0].max(weak[1]),
        });
    }
    let energy = [energy(data, &u)?, energy(data, &v)?];
    let strips = [&data.comps[0].regions.strip, &data.comps[1].regions.strip];
    let cores = [&data.comps[0].regions.core, &data.comps[1].regions.core];
    Ok(SolutionBundle {
        zero_fraction: [zero_fraction(&u, strips[0]), zero_fraction(&v, strips[1])],
        sign_summary: [
            sign_summary(&u, strips[0], cores[0]),
            sign_summary(&v, strips[1], cores[1]),
        ],
        u,
        v,
        eps,
        kind,
        outer_iters: history.len(),
        linear_iters,
        fp_residual: change,
        weak_residual: weak,
        rhs_scale,
        energy,
        domination_violations: violations,
        history,
    })
}

/// Auxiliary solve in `[-Cẽ, (ū, v̄)]` for a sign-changing pair.
pub fn solve_auxiliary(
    data: &ProblemData,
    pair: &SubSuperPair,
    eps: f64,
    cfg: &IterationConfig,
    start: Option<[ScalarField; 2]>,
) -> Result<SolutionBundle> {
    solve_fixed_eps(
        data,
        eps,
        [&pair.lower[0], &pair.lower[1]],
        [&pair.upper[0], &pair.upper[1]],
        RhsKind::Auxiliary,
        cfg,
        start,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grid;
    use crate::problem::{ComponentSpec, FKind};
    use crate::spectral::{discrete_principal_eigenvalue, principal_eigenpair};

    fn data(n: usize, lambda: f64, spec: ComponentSpec) -> ProblemData {
        let g = build_grid(4.0, 4.0, n, n).unwrap();
        let e = principal_eigenpair(&g, 6.0, 1e-12).unwrap();
        ProblemData::assemble(&g, &e, [spec; 2], lambda).unwrap()
    }

    fn zero_reaction(n: usize, lambda: f64) -> ProblemData {
        let d = data(n, lambda, ComponentSpec::default());
        let z = d.grid.zeros();
        d.with_coefficients(z.clone(), z).unwrap()
    }

    fn wide(d: &ProblemData, s: f64) -> [ScalarField; 2] {
        let b = d.grid.field_from_fn(|_, _| s);
        [b.clone(), b]
    }

    #[test]
    fn zero_reaction_is_scaled_eigenvector() {
        let cfg = IterationConfig::default();
        for (n, lambda) in [(17, 3.0), (33, 1.0), (33, 128.0)] {
            let d = zero_reaction(n, lambda);
            let lo = wide(&d, -10.0);
            let hi = wide(&d, 10.0);
            let sol = solve_fixed_eps(
                &d,
                0.5,
                [&lo[0], &lo[1]],
                [&hi[0], &hi[1]],
                RhsKind::Regularized,
                &cfg,
                None,
            )
            .unwrap();
            let l1 = discrete_principal_eigenvalue(&d.grid);
            let exact = d.phi1().scaled(-lambda / (l1 + lambda));
            let err = sol
                .u
                .sup_distance(&exact)
                .unwrap()
                .max(sol.v.sup_distance(&exact).unwrap());
            assert!(
                err <= cfg.fp_tol + 10.0 * cfg.lin_tol,
                "n={n} lambda={lambda} err={err:e}"
            );
        }
    }

    #[test]
    fn zero_reaction_without_shift_is_zero() {
        let d = zero_reaction(17, 0.0);
        let lo = wide(&d, -1.0);
        let hi = wide(&d, 1.0);
        let cfg = IterationConfig::default();
        let sol = solve_fixed_eps(
            &d,
            0.5,
            [&lo[0], &lo[1]],
            [&hi[0], &hi[1]],
            RhsKind::Regularized,
            &cfg,
            None,
        )
        .unwrap();
        assert!(sol.u.max_abs() <= cfg.fp_tol);
        assert!(sol.v.max_abs() <= cfg.fp_tol);
    }

    #[test]
    fn clamped_iterates_stay_in_interval() {
        let d = data(17, 4.0, ComponentSpec::default());
        let lo = wide(&d, -0.5);
        let hi = wide(&d, 0.25);
        let cfg = IterationConfig {
            max_outer: 60,
            ..Default::default()
        };
        // The interval is not an order interval of the problem, so the
        // clamped fixed point leaves a large residual.
        let sol = solve_fixed_eps(
            &d,
            0.1,
            [&lo[0], &lo[1]],
            [&hi[0], &hi[1]],
            RhsKind::Regularized,
            &cfg,
            None,
        )
        .unwrap();
        for k in d.grid.interior_nodes() {
            for w in [&sol.u, &sol.v] {
                assert!(w[k] >= -0.5 && w[k] <= 0.25);
            }
        }
        for k in 0..d.grid.len() {
            if !d.grid.is_interior(k) {
                assert_eq!(sol.u[k], 0.0);
                assert_eq!(sol.v[k], 0.0);
            }
        }
        assert!(sol.weak_residual[0] > 1e-3);
    }

    #[test]
    fn non_convergence_is_reported() {
        let d = data(17, 4.0, ComponentSpec::default());
        let lo = wide(&d, -10.0);
        let hi = wide(&d, 10.0);
        let cfg = IterationConfig {
            max_outer: 2,
            ..Default::default()
        };
        let r = solve_fixed_eps(
            &d,
            0.1,
            [&lo[0], &lo[1]],
            [&hi[0], &hi[1]],
            RhsKind::Regularized,
            &cfg,
            None,
        );
        assert!(matches!(r, Err(Error::NonConvergence { iterations: 2, .. })));
        assert!(solve_fixed_eps(
            &d,
            0.0,
            [&lo[0], &lo[1]],
            [&hi[0], &hi[1]],
            RhsKind::Regularized,
            &cfg,
            None
        )
        .is_err());
    }

    /// Dense damped Newton on the full residual of the α = 0 system, with
    /// Gaussian elimination for the steps.
    fn newton_oracle(d: &ProblemData) -> (Vec<f64>, Vec<f64>) {
        let g = &d.grid;
        let idx: Vec<usize> = g.interior_nodes().collect();
        let m = idx.len();
        let mut pos = vec![usize::MAX; g.len()];
        for (p, &k) in idx.iter().enumerate() {
            pos[k] = p;
        }
        let (cx, cy) = (1.0 / (g.h1() * g.h1()), 1.0 / (g.h2() * g.h2()));
        let n1 = g.n1();
        let phi = d.phi1();
        let f = |i: usize, s: f64| d.comps[i].f.eval(s);
        let df = |i: usize, s: f64| {
            let c = &d.comps[i];
            c.beta * s.abs().powf(c.beta - 1.0) * s.signum()
        };
        let residual = |x: &[f64]| -> Vec<f64> {
            let mut r = vec![0.0; 2 * m];
            for c in 0..2 {
                for (p, &k) in idx.iter().enumerate() {
                    let w = |kk: usize| if pos[kk] == usize::MAX { 0.0 } else { x[c * m + pos[kk]] };
                    let lap = cx * (2.0 * w(k) - w(k - 1) - w(k + 1)) + cy * (2.0 * w(k) - w(k - n1) - w(k + n1));
                    let other = x[(1 - c) * m + p];
                    r[c * m + p] = lap + d.lambda * (w(k) + phi[k]) - d.comps[c].a[k] * f(c, other);
                }
            }
            r
        };
        let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut x = vec![-0.1; 2 * m];
        let mut r = residual(&x);
        for _ in 0..100 {
            if norm(&r) < 1e-13 {
                break;
            }
            let mut jac = vec![0.0; 4 * m * m];
            let nn = 2 * m;
            for c in 0..2 {
                for (p, &k) in idx.iter().enumerate() {
                    let row = c * m + p;
                    jac[row * nn + row] = 2.0 * cx + 2.0 * cy + d.lambda;
                    for (kk, coef) in [(k - 1, cx), (k + 1, cx), (k - n1, cy), (k + n1, cy)] {
                        if pos[kk] != usize::MAX {
                            jac[row * nn + c * m + pos[kk]] -= coef;
                        }
                    }
                    let col = (1 - c) * m + p;
                    jac[row * nn + col] -= d.comps[c].a[k] * df(c, x[col]);
                }
            }
            let mut step: Vec<f64> = r.iter().map(|v| -v).collect();
            gauss(&mut jac, &mut step, nn);
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + t * b).collect();
                let rt = residual(&trial);
                if norm(&rt) < norm(&r) || t < 1e-6 {
                    x = trial;
                    r = rt;
                    break;
                }
                t *= 0.5;
            }
        }
        assert!(norm(&r) < 1e-10, "oracle did not converge: {}", norm(&r));
        let mut u = vec![0.0; g.len()];
        let mut v = vec![0.0; g.len()];
        for (p, &k) in idx.iter().enumerate() {
            u[k] = x[p];
            v[k] = x[m + p];
        }
        (u, v)
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
            let d = a[col * n + col];
            for row in col + 1..n {
                let fct = a[row * n + col] / d;
                if fct == 0.0 {
                    continue;
                }
                for c in col..n {
                    a[row * n + c] -= fct * a[col * n + c];
                }
                b[row] -= fct * b[col];
            }
        }
        for row in (0..n).rev() {
            let mut s = b[row];
            for c in row + 1..n {
                s -= a[row * n + c] * b[c];
            }
            b[row] = s / a[row * n + row];
        }
    }

    #[test]
    fn nonsingular_case_matches_dense_newton() {
        let spec = ComponentSpec {
            alpha: 0.0,
            family: FKind::Power,
            m: 1.0,
            ..Default::default()
        };
        let d = data(17, 0.25, spec);
        let (ou, ov) = newton_oracle(&d);
        let lo = wide(&d, -20.0);
        let hi = wide(&d, 20.0);
        let cfg = IterationConfig {
            fp_tol: 1e-12,
            lin_tol: 1e-13,
            ..Default::default()
        };
        let sol = solve_fixed_eps(
            &d,
            0.5,
            [&lo[0], &lo[1]],
            [&hi[0], &hi[1]],
            RhsKind::Regularized,
            &cfg,
            None,
        )
        .unwrap();
        let err = (0..d.grid.len())
            .map(|k| (sol.u[k] - ou[k]).abs().max((sol.v[k] - ov[k]).abs()))
            .fold(0.0, f64::max);
        assert!(err <= 1e-8, "sup difference {err:e}");
        assert!(sol.u.min() < 0.0 && sol.u.max() > 0.0);
    }
}
