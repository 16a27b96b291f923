//! Problem data: exponents, nonlinearities, sign-structured coefficients and
//! the hypothesis checks that tie them together.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{region_partition, Grid, Regions, ScalarField};
use crate::spectral::EigenPair;

/// `h(s) = λ (s + φ₁(x))`.
pub fn h_shift(s: f64, phi1_at_x: f64, lambda: f64) -> f64 {
    lambda * (s + phi1_at_x)
}

/// `a f / (|u| + ε)^α`.
pub fn reaction(a: f64, f_val: f64, u: f64, alpha: f64, eps: f64) -> Result<f64> {
    if eps == 0.0 && u == 0.0 {
        return Err(Error::Singular);
    }
    Ok(a * f_val / (u.abs() + eps).powf(alpha))
}

/// `g(γ) = γ^(-1/(1-γ))`, strictly decreasing from `+inf` to `e` on `(0,1)`.
pub fn gamma_map(gamma: f64) -> f64 {
    gamma.powf(-1.0 / (1.0 - gamma))
}

/// The `γ ∈ (0,1)` with `g(γ) = ρ`, found by bisection.
pub fn gamma_from_rho(rho: f64) -> Result<f64> {
    if !(rho > std::f64::consts::E) || !rho.is_finite() {
        return Err(Error::GammaUnsatisfiable { rho });
    }
    // Work with ln g = -ln γ / (1 - γ) to stay finite near γ = 0.
    let target = rho.ln();
    let ln_g = |g: f64| -g.ln() / (1.0 - g);
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    if ln_g(hi) >= target {
        // ρ is within rounding of e.
        return Ok(hi);
    }
    // Bisect to full precision; this is well inside the 1e-12 target and
    // keeps g(γ) accurate when γ is tiny.
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ln_g(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FKind {
    /// `f ≡ m`
    Constant,
    /// `f(s) = m + |s|^β`
    Power,
    /// `f(s) = m + M |s|^β / (1 + |s|^β)`
    Bounded,
}

/// A built-in nonlinearity together with its growth envelope
/// `m <= f(s) <= M (1 + |s|^β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FSpec {
    pub kind: FKind,
    pub m: f64,
    pub big_m: f64,
    pub beta: f64,
}

impl FSpec {
    /// Builds the family with its default envelope constant when `big_m` is
    /// not given: `m` for the constant family, `max(m, 1) + 1` for the power
    /// family. The bounded family needs `big_m` explicitly.
    pub fn new(kind: FKind, m: f64, big_m: Option<f64>, beta: f64) -> Result<Self> {
        let big_m = match (kind, big_m) {
            (_, Some(v)) => v,
            (FKind::Constant, None) => m,
            (FKind::Power, None) => m.max(1.0) + 1.0,
            (FKind::Bounded, None) => return Err(Error::config("M", "the bounded family needs an explicit M")),
        };
        Ok(FSpec { kind, m, big_m, beta })
    }

    pub fn eval(&self, s: f64) -> f64 {
        let p = s.abs().powf(self.beta);
        let f = match self.kind {
            FKind::Constant => self.m,
            FKind::Power => self.m + p,
            FKind::Bounded => self.m + self.big_m * p / (1.0 + p),
        };
        debug_assert!(
            !self.envelope_valid() || (f >= self.m && f <= self.envelope(s) * (1.0 + 1e-12)),
            "growth envelope violated at s = {s}"
        );
        f
    }

    /// `M (1 + |s|^β)`.
    pub fn envelope(&self, s: f64) -> f64 {
        self.big_m * (1.0 + s.abs().powf(self.beta))
    }

    fn envelope_valid(&self) -> bool {
        self.m > 0.0 && self.m <= self.big_m && self.beta > 0.0 && self.beta < 1.0
    }

    /// Supremum of `f` over `|s| <= bound`. Every family is even and
    /// nondecreasing in `|s|`.
    pub fn sup_on(&self, bound: f64) -> f64 {
        self.eval(bound.abs())
    }

    /// Infimum of `f` over `|s| <= bound`.
    pub fn inf_on(&self, _bound: f64) -> f64 {
        self.eval(0.0)
    }

    /// Samples `n` points of `[-s_max, s_max]` and returns the worst envelope
    /// violation `(s, f(s))`, if any.
    pub fn check_envelope(&self, s_max: f64, n: usize) -> Option<(f64, f64)> {
        let raw = |s: f64| {
            let p = s.abs().powf(self.beta);
            match self.kind {
                FKind::Constant => self.m,
                FKind::Power => self.m + p,
                FKind::Bounded => self.m + self.big_m * p / (1.0 + p),
            }
        };
        let mut worst: Option<(f64, f64, f64)> = None;
        for i in 0..n {
            let s = -s_max + 2.0 * s_max * i as f64 / (n - 1).max(1) as f64;
            let f = raw(s);
            let gap = (self.m - f).max(f - self.envelope(s));
            if gap > 0.0 && worst.is_none_or(|w| gap > w.2) {
                worst = Some((s, f, gap));
            }
        }
        worst.map(|(s, f, _)| (s, f))
    }
}

/// Sign-structured coefficient: `A⁺` below the level band, `-A⁻` above it,
/// linear in `φ₁` across a band of width `w` centred on `ρ`.
pub fn build_coefficient(
    grid: &Grid,
    eigen: &EigenPair,
    rho: f64,
    a_plus: f64,
    a_minus: f64,
    ramp_width: f64,
) -> Result<ScalarField> {
    grid.check(&eigen.phi1)?;
    let max = eigen.phi1.max();
    if !(rho > 0.0) {
        return Err(Error::config("rho", format!("level must be positive, got {rho}")));
    }
    if rho >= max {
        return Err(Error::CoreRegionEmpty { rho, max });
    }
    if !(a_plus > 0.0) {
        return Err(Error::config("A_plus", format!("must be positive, got {a_plus}")));
    }
    if !(a_minus >= 0.0) {
        return Err(Error::config("A_minus", format!("must be nonnegative, got {a_minus}")));
    }
    if !(ramp_width >= 0.0) {
        return Err(Error::config(
            "ramp_width",
            format!("must be nonnegative, got {ramp_width}"),
        ));
    }
    let lo = rho - 0.5 * ramp_width;
    let hi = rho + 0.5 * ramp_width;
    Ok(eigen.phi1.map(|p| {
        if p < lo || (ramp_width == 0.0 && p < rho) {
            a_plus
        } else if p >= hi {
            -a_minus
        } else {
            let t = (p - lo) / ramp_width;
            a_plus + t * (-a_minus - a_plus)
        }
    }))
}

/// Plain inputs for one equation of the system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub alpha: f64,
    pub beta: f64,
    pub m: f64,
    pub big_m: Option<f64>,
    pub rho: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub ramp_width: f64,
    pub family: FKind,
}

impl Default for ComponentSpec {
    fn default() -> Self {
        ComponentSpec {
            alpha: 0.5,
            beta: 0.5,
            m: 1.0,
            big_m: None,
            rho: 2.8,
            a_plus: 1.0,
            a_minus: 1.0,
            ramp_width: 0.0,
            family: FKind::Constant,
        }
    }
}

/// Data of one equation. Component `i` reacts to the other component
/// through `f`.
#[derive(Debug, Clone)]
pub struct Component {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    /// `None` when `ρ <= e`.
    pub gamma: Option<f64>,
    pub f: FSpec,
    pub a: ScalarField,
    pub regions: Regions,
    pub spec: ComponentSpec,
}

impl Component {
    pub fn a_pos(&self, k: usize) -> f64 {
        self.a[k].max(0.0)
    }
    pub fn a_neg(&self, k: usize) -> f64 {
        (-self.a[k]).max(0.0)
    }
    pub fn a_sup(&self) -> f64 {
        self.a.max_abs()
    }
    pub fn gamma(&self) -> Result<f64> {
        self.gamma.ok_or(Error::GammaUnsatisfiable { rho: self.rho })
    }
}

#[derive(Debug, Clone)]
pub struct ProblemData {
    pub grid: Grid,
    pub eigen: EigenPair,
    pub comps: [Component; 2],
    pub lambda: f64,
    /// Scale of the constant-sign pair, once calibrated.
    pub c_scale: Option<f64>,
    /// `max ẽ`, used for the sampling range of the envelope check.
    pub torsion_sup: Option<f64>,
}

impl ProblemData {
    pub fn assemble(grid: &Grid, eigen: &EigenPair, specs: [ComponentSpec; 2], lambda: f64) -> Result<Self> {
        grid.check(&eigen.phi1)?;
        if !(lambda >= 0.0) {
            return Err(Error::config("lambda", format!("must be nonnegative, got {lambda}")));
        }
        let mk = |i: usize, s: &ComponentSpec| -> Result<Component> {
            let field = |name: &str| format!("{name}{}", i + 1);
            let f = FSpec::new(s.family, s.m, s.big_m, s.beta)
                .map_err(|_| Error::config(field("M"), "the bounded family needs an explicit M"))?;
            let a = build_coefficient(grid, eigen, s.rho, s.a_plus, s.a_minus, s.ramp_width).map_err(|e| match e {
                Error::Config { field: f, reason } => Error::config(format!("{f}{}", i + 1), reason),
                other => other,
            })?;
            let regions = region_partition(grid, &eigen.phi1, s.rho)?;
            Ok(Component {
                alpha: s.alpha,
                beta: s.beta,
                rho: s.rho,
                gamma: gamma_from_rho(s.rho).ok(),
                f,
                a,
                regions,
                spec: *s,
            })
        };
        Ok(ProblemData {
            grid: grid.clone(),
            eigen: eigen.clone(),
            comps: [mk(0, &specs[0])?, mk(1, &specs[1])?],
            lambda,
            c_scale: None,
            torsion_sup: None,
        })
    }

    /// Replaces both coefficient fields (for experiments outside the
    /// built-in profile, such as the zero-reaction cases).
    pub fn with_coefficients(mut self, a1: ScalarField, a2: ScalarField) -> Result<Self> {
        self.grid.check(&a1)?;
        self.grid.check(&a2)?;
        self.comps[0].a = a1;
        self.comps[1].a = a2;
        Ok(self)
    }

    pub fn phi1(&self) -> &ScalarField {
        &self.eigen.phi1
    }

    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();
        let meas = self.grid.measure();
        let phi_max = self.eigen.phi1.max();
        let s_max = self.c_scale.unwrap_or(2.0) * self.torsion_sup.unwrap_or(1.0);
        for (i, c) in self.comps.iter().enumerate() {
            let n = i + 1;
            checks.push(Check::new(
                "(exp)",
                n,
                c.alpha > 0.0 && c.alpha < 1.0,
                format!("(exp) violated: alpha{n} = {} must lie in (0,1)", c.alpha),
                None,
            ));
            let f = &c.f;
            let mut hf_msg = Vec::new();
            if !(c.beta > 0.0 && c.beta < 1.0) {
                hf_msg.push(format!("beta{n} = {} must lie in (0,1)", c.beta));
            }
            if !(f.m > 0.0 && f.m <= f.big_m) {
                hf_msg.push(format!("need 0 < m{n} <= M{n}, got m = {}, M = {}", f.m, f.big_m));
            }
            if hf_msg.is_empty() {
                if let Some((s, fs)) = f.check_envelope(s_max, 10_000) {
                    hf_msg.push(format!(
                        "envelope m <= f(s) <= M(1+|s|^beta) fails at s = {s:.6e} (f = {fs:.6e})"
                    ));
                }
            }
            checks.push(Check::new(
                "H(f)",
                n,
                hf_msg.is_empty(),
                format!("H(f) violated: {}", hf_msg.join("; ")),
                None,
            ));
            let (ok33, msg33) = match c.gamma {
                None => (
                    false,
                    format!("(33) unsatisfiable: rho{n} = {} <= e, no gamma in (0,1)", c.rho),
                ),
                Some(g) => {
                    let err = (gamma_map(g) - c.rho).abs() / c.rho;
                    (
                        err <= 1e-10,
                        format!("(33) violated: |g(gamma{n}) - rho{n}| / rho{n} = {err:.3e}"),
                    )
                }
            };
            checks.push(Check::new("(33)", n, ok33, msg33, None));
            checks.push(Check::new(
                "(10**)",
                n,
                c.rho < 0.5 * phi_max,
                format!(
                    "(10**) violated: rho{n} = {} is not below max(phi1)/2 = {}",
                    c.rho,
                    0.5 * phi_max
                ),
                None,
            ));
            let mut worst = None;
            for k in self.grid.interior_nodes() {
                let bad = (c.regions.strip[k] && !(c.a[k] > 0.0)) || (c.regions.core[k] && c.a[k] > 0.0);
                if bad {
                    worst = Some(k);
                    break;
                }
            }
            checks.push(Check::new(
                "H(a)",
                n,
                worst.is_none(),
                match worst {
                    Some(k) => format!(
                        "H(a) violated: a{n} = {} at node {k} (phi1 = {}, rho{n} = {})",
                        c.a[k], self.eigen.phi1[k], c.rho
                    ),
                    None => String::new(),
                },
                worst,
            ));
            checks.push(Check::new(
                "meas",
                n,
                meas > 1.0 && c.rho > 1.0 && c.rho < meas,
                format!("need 1 < rho{n} < meas(Omega), got rho{n} = {}, meas = {meas}", c.rho),
                None,
            ));
        }
        let mismatch = self
            .comps
            .iter()
            .map(|c| {
                self.grid
                    .interior_nodes()
                    .filter(|&k| c.regions.strip[k] != (self.grid.dist()[k] < c.rho))
                    .count()
            })
            .collect::<Vec<_>>();
        ValidationReport {
            checks,
            strip_convention_mismatch: [mismatch[0], mismatch[1]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub component: usize,
    pub passed: bool,
    /// Empty when the check passes.
    pub message: String,
    pub worst_node: Option<usize>,
}

impl Check {
    fn new(label: &str, component: usize, passed: bool, message: String, worst_node: Option<usize>) -> Self {
        Check {
            label: label.to_string(),
            component,
            passed,
            message: if passed { String::new() } else { message },
            worst_node,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Interior nodes where the level strip `{φ₁ < ρ}` and the distance strip
    /// `{d < ρ}` disagree, per component. Informational only.
    pub strip_convention_mismatch: [usize; 2],
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}
