//! TOML run configuration. Every table rejects unknown keys; omitted keys
//! take the default instance's values.

use std::path::Path;

use nodal_core::problem::{ComponentSpec, FKind};
use nodal_core::solver::{EpsSchedule, IterationConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub spectral: SpectralConfig,
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub l1: f64,
    pub l2: f64,
    pub n1: usize,
    pub n2: usize,
    /// Cells of padding per side for the torsion domain.
    pub pad_cells: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            l1: 4.0,
            l2: 4.0,
            n1: 129,
            n2: 129,
            pad_cells: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    /// `max φ₁`.
    pub normalization: f64,
    pub eig_tol: f64,
    pub torsion_tol: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            normalization: 6.0,
            eig_tol: 1e-10,
            torsion_tol: 1e-11,
        }
    }
}

/// `"auto"` or a fixed nonnegative number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, try_from = "RawLambda")]
pub enum Lambda {
    Auto(AutoTag),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawLambda {
    Number(f64),
    Word(String),
}

impl TryFrom<RawLambda> for Lambda {
    type Error = String;
    fn try_from(r: RawLambda) -> Result<Self, String> {
        match r {
            RawLambda::Number(v) => Ok(Lambda::Fixed(v)),
            RawLambda::Word(w) if w == "auto" => Ok(Lambda::Auto(AutoTag::Auto)),
            RawLambda::Word(w) => Err(format!("expected \"auto\" or a number, got \"{w}\"")),
        }
    }
}

impl Lambda {
    pub fn fixed(&self) -> Option<f64> {
        match self {
            Lambda::Auto(_) => None,
            Lambda::Fixed(v) => Some(*v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub lambda: Lambda,
    pub u: ComponentConfig,
    pub v: ComponentConfig,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            lambda: Lambda::Auto(AutoTag::Auto),
            u: ComponentConfig::default(),
            v: ComponentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComponentConfig {
    pub alpha: f64,
    pub beta: f64,
    pub m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub big_m: Option<f64>,
    pub rho: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub ramp_width: f64,
    pub family: FKind,
}

impl Default for ComponentConfig {
    fn default() -> Self {
        ComponentConfig::from(ComponentSpec::default())
    }
}

impl From<ComponentSpec> for ComponentConfig {
    fn from(s: ComponentSpec) -> Self {
        ComponentConfig {
            alpha: s.alpha,
            beta: s.beta,
            m: s.m,
            big_m: s.big_m,
            rho: s.rho,
            a_plus: s.a_plus,
            a_minus: s.a_minus,
            ramp_width: s.ramp_width,
            family: s.family,
        }
    }
}

impl From<ComponentConfig> for ComponentSpec {
    fn from(c: ComponentConfig) -> Self {
        ComponentSpec {
            alpha: c.alpha,
            beta: c.beta,
            m: c.m,
            big_m: c.big_m,
            rho: c.rho,
            a_plus: c.a_plus,
            a_minus: c.a_minus,
            ramp_width: c.ramp_width,
            family: c.family,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `ε_k = 2^-k`
    Geometric,
    /// `ε_n = 1/n`
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub first: u32,
    pub last: u32,
    pub continuation_tol: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            kind: ScheduleKind::Geometric,
            first: 1,
            last: 16,
            continuation_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub damping: f64,
    pub max_outer: usize,
    pub fp_tol: f64,
    pub lin_tol: f64,
    pub clamp: bool,
    pub warm_start: bool,
    pub schedule: ScheduleConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let it = IterationConfig::default();
        SolverConfig {
            damping: it.damping,
            max_outer: it.max_outer,
            fp_tol: it.fp_tol,
            lin_tol: it.lin_tol,
            clamp: it.clamp,
            warm_start: true,
            schedule: ScheduleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Used when `--out-dir` is not given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Write `fields_eps_<k>.csv` for every successful step.
    pub snapshots: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Config {
            path: "config".into(),
            reason: e.to_string().trim_end().to_string(),
        })?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            path: e.path().to_string(),
            reason: e.inner().to_string().trim_end().to_string(),
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Range checks that do not need the eigenfunction. The hypotheses on
    /// the component data are checked later by `ProblemData::validate`.
    fn check(&self) -> Result<(), CliError> {
        let bad = |path: &str, reason: String| {
            Err(CliError::Config {
                path: path.into(),
                reason,
            })
        };
        if let Lambda::Fixed(v) = self.problem.lambda {
            if !(v.is_finite() && v >= 0.0) {
                return bad(
                    "problem.lambda",
                    format!("must be \"auto\" or a nonnegative number, got {v}"),
                );
            }
        }
        let s = &self.solver.schedule;
        if s.first < 2 && s.kind == ScheduleKind::Harmonic {
            return bad("solver.schedule.first", "harmonic schedule starts at n >= 2".into());
        }
        if s.last < s.first {
            return bad(
                "solver.schedule.last",
                format!("must be >= first = {}, got {}", s.first, s.last),
            );
        }
        self.iteration().validate().map_err(map_core_config)?;
        self.schedule()?;
        Ok(())
    }

    pub fn specs(&self) -> [ComponentSpec; 2] {
        [self.problem.u.into(), self.problem.v.into()]
    }

    pub fn iteration(&self) -> IterationConfig {
        let s = &self.solver;
        IterationConfig {
            damping: s.damping,
            max_outer: s.max_outer,
            fp_tol: s.fp_tol,
            lin_tol: s.lin_tol,
            clamp: s.clamp,
        }
    }

    pub fn schedule(&self) -> Result<EpsSchedule, CliError> {
        let s = &self.solver.schedule;
        match s.kind {
            ScheduleKind::Geometric => EpsSchedule::geometric(s.first, s.last, s.continuation_tol),
            ScheduleKind::Harmonic => EpsSchedule::harmonic(s.first, s.last, s.continuation_tol),
        }
        .map_err(map_core_config)
    }
}

/// Config path of a field name used by the core crate. Component fields
/// carry a trailing `1` or `2`.
pub fn config_path(field: &str) -> String {
    let (base, comp) = match field.strip_suffix('1') {
        Some(b) if !b.is_empty() && b != "L" && b != "n" => (b, Some("u")),
        _ => match field.strip_suffix('2') {
            Some(b) if !b.is_empty() && b != "L" && b != "n" => (b, Some("v")),
            _ => (field, None),
        },
    };
    if let Some(c) = comp {
        let key = match base {
            "M" => "big_m",
            "A_plus" => "a_plus",
            "A_minus" => "a_minus",
            other => other,
        };
        return format!("problem.{c}.{key}");
    }
    match field {
        "L1" => "domain.l1".into(),
        "L2" => "domain.l2".into(),
        "n1" | "n2" | "pad_cells" => format!("domain.{field}"),
        "normalization" | "eig_tol" => format!("spectral.{field}"),
        "lambda" => "problem.lambda".into(),
        "damping" | "max_outer" | "fp_tol" | "lin_tol" => format!("solver.{field}"),
        "schedule" => "solver.schedule".into(),
        "continuation_tol" => "solver.schedule.continuation_tol".into(),
        "eps" => "--eps".into(),
        other => other.into(),
    }
}

/// Rewrites a core configuration error in terms of the config file.
pub fn map_core_config(e: nodal_core::Error) -> CliError {
    match e {
        nodal_core::Error::Config { field, reason } => CliError::Config {
            path: config_path(&field),
            reason,
        },
        other => CliError::Core(other),
    }
}

/// Config path of a failed hypothesis check.
pub fn check_path(label: &str, component: usize) -> String {
    let c = if component == 1 { "u" } else { "v" };
    let keys = match label {
        "(exp)" => "alpha",
        "H(f)" => "{beta,m,big_m,family}",
        "(33)" | "(10**)" => "rho",
        "H(a)" => "{rho,a_plus,a_minus,ramp_width}",
        "meas" => "rho",
        _ => "",
    };
    format!("problem.{c}.{keys}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default_instance() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.specs(), [ComponentSpec::default(); 2]);
        assert_eq!(c.iteration(), IterationConfig::default());
        assert_eq!(c.schedule().unwrap(), EpsSchedule::default());
    }

    #[test]
    fn lambda_forms() {
        let c = RunConfig::parse("[problem]\nlambda = \"auto\"").unwrap();
        assert_eq!(c.problem.lambda.fixed(), None);
        let c = RunConfig::parse("[problem]\nlambda = 12.5").unwrap();
        assert_eq!(c.problem.lambda.fixed(), Some(12.5));
        let e = RunConfig::parse("[problem]\nlambda = \"big\"").unwrap_err();
        assert!(e.to_string().contains("expected \"auto\""), "{e}");
        assert_eq!(
            RunConfig::parse("[problem]\nlambda = 3")
                .unwrap()
                .problem
                .lambda
                .fixed(),
            Some(3.0)
        );
        let e = RunConfig::parse("[problem]\nlambda = -1.0").unwrap_err();
        assert!(e.to_string().contains("problem.lambda"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::parse("[domain]\nn3 = 5").unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().starts_with("domain.n3"), "{e}");
        assert!(RunConfig::parse("[problem.u]\nalpah = 0.5").is_err());
        assert!(RunConfig::parse("[extra]").is_err());
    }

    #[test]
    fn solver_errors_name_the_key() {
        let e = RunConfig::parse("[solver]\ndamping = 0.0").unwrap_err();
        assert!(e.to_string().contains("solver.damping"), "{e}");
        let e = RunConfig::parse("[solver.schedule]\nfirst = 5\nlast = 2").unwrap_err();
        assert!(e.to_string().contains("solver.schedule.last"), "{e}");
    }

    #[test]
    fn harmonic_schedule() {
        let c = RunConfig::parse("[solver.schedule]\nkind = \"harmonic\"\nfirst = 2\nlast = 4").unwrap();
        assert_eq!(c.schedule().unwrap().eps, vec![0.5, 1.0 / 3.0, 0.25]);
    }

    #[test]
    fn core_field_names_map_to_paths() {
        assert_eq!(config_path("rho2"), "problem.v.rho");
        assert_eq!(config_path("M1"), "problem.u.big_m");
        assert_eq!(config_path("A_minus2"), "problem.v.a_minus");
        assert_eq!(config_path("L1"), "domain.l1");
        assert_eq!(config_path("n2"), "domain.n2");
        assert_eq!(config_path("eig_tol"), "spectral.eig_tol");
        assert_eq!(check_path("(exp)", 1), "problem.u.alpha");
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::parse("[problem.v]\nbig_m = 3.0\nfamily = \"bounded\"").unwrap();
        let again = RunConfig::parse(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again);
    }
}
