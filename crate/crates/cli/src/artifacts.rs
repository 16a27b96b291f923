//! Files exchanged between stages. Fields are CSV, one row per node in
//! row-major order, every float written with 17 significant digits so a
//! reload is exact.

use std::path::{Path, PathBuf};

use nodal_core::mesh::{build_enlarged, EnlargedGrid, Grid, ScalarField};
use nodal_core::problem::ProblemData;
use nodal_core::spectral::{discrete_principal_eigenvalue, EigenPair, TorsionField};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const EIGEN_JSON: &str = "eigen.json";
pub const EIGEN_CSV: &str = "eigen.csv";
pub const TORSION_JSON: &str = "torsion.json";
pub const TORSION_CSV: &str = "torsion.csv";
pub const CALIBRATION_JSON: &str = "calibration.json";
pub const VALIDATION_JSON: &str = "validation.json";
pub const SOLVE_JSON: &str = "solve.json";
pub const SOLVE_CSV: &str = "solve_fields.csv";
pub const FIELDS_CSV: &str = "fields.csv";
pub const REPORT_JSON: &str = "report.json";

pub const FIELD_COLUMNS: [&str; 9] = ["x", "y", "u", "v", "phi1", "e_tilde", "a1", "a2", "region"];

pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

fn require(dir: &Path, name: &str, stage: &'static str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(CliError::MissingArtifact {
            path: path.display().to_string(),
            stage,
        });
    }
    Ok(path)
}

pub fn read_json<T: DeserializeOwned>(dir: &Path, name: &str, stage: &'static str) -> Result<T, CliError> {
    let path = require(dir, name, stage)?;
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| CliError::StaleArtifact {
        path: path.display().to_string(),
        stage,
        reason: e.to_string(),
    })
}

/// Writes `columns` for every node of `grid`; `row(k)` yields the values
/// after the two coordinates.
pub fn write_grid_csv(
    path: &Path,
    grid: &Grid,
    columns: &[&str],
    mut row: impl FnMut(usize) -> Vec<String>,
) -> Result<(), CliError> {
    let csv_err = |e: csv::Error| CliError::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(columns).map_err(csv_err)?;
    for k in 0..grid.len() {
        let (x, y) = grid.coords(k);
        let mut rec = vec![fmt(x), fmt(y)];
        rec.extend(row(k));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Reads the named float columns of a grid CSV. Row count and node
/// coordinates must match `grid` exactly.
pub fn read_grid_csv(
    dir: &Path,
    name: &str,
    stage: &'static str,
    grid: &Grid,
    columns: &[&str],
) -> Result<Vec<ScalarField>, CliError> {
    let path = require(dir, name, stage)?;
    let stale = |reason: String| CliError::StaleArtifact {
        path: path.display().to_string(),
        stage,
        reason,
    };
    let mut r = csv::Reader::from_path(&path).map_err(|e| stale(e.to_string()))?;
    let headers = r.headers().map_err(|e| stale(e.to_string()))?.clone();
    let find = |c: &str| {
        headers
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| stale(format!("no column `{c}`")))
    };
    let (ix, iy) = (find("x")?, find("y")?);
    let idx = columns.iter().map(|c| find(c)).collect::<Result<Vec<_>, _>>()?;
    let mut out = vec![Vec::with_capacity(grid.len()); columns.len()];
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| stale(e.to_string()))?;
        let num = |i: usize| -> Result<f64, CliError> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| stale(format!("row {}: {e}", k + 1)))
        };
        if k >= grid.len() {
            return Err(stale(format!("more than {} rows", grid.len())));
        }
        if (num(ix)?, num(iy)?) != grid.coords(k) {
            return Err(stale(format!("row {} is not node {k} of the configured grid", k + 1)));
        }
        for (col, &i) in out.iter_mut().zip(&idx) {
            col.push(num(i)?);
        }
    }
    if out.first().map_or(0, Vec::len) != grid.len() {
        return Err(stale(format!("expected {} rows", grid.len())));
    }
    out.into_iter().map(|v| grid.field(v).map_err(CliError::Core)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub n1: usize,
    pub n2: usize,
    pub lambda1: f64,
    /// Closed-form eigenvalue of the 5-point Laplacian on the rectangle.
    pub lambda1_discrete_exact: f64,
    pub lambda1_continuum: f64,
    /// `lambda1` minus the closed-form discretization bias.
    pub lambda1_corrected: f64,
    pub normalization: f64,
    pub l_est: f64,
    pub eta_est: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl EigenSummary {
    pub fn new(grid: &Grid, e: &EigenPair) -> Self {
        let (l1, l2) = grid.lengths();
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let cont = pi2 / (l1 * l1) + pi2 / (l2 * l2);
        let exact = discrete_principal_eigenvalue(grid);
        EigenSummary {
            n1: grid.n1(),
            n2: grid.n2(),
            lambda1: e.lambda1,
            lambda1_discrete_exact: exact,
            lambda1_continuum: cont,
            lambda1_corrected: e.lambda1 - (exact - cont),
            normalization: e.normalization,
            l_est: e.l_est,
            eta_est: e.eta_est,
            iterations: e.iterations,
            residual: e.residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorsionSummary {
    pub pad_cells: usize,
    pub mu: f64,
    pub c_est: f64,
    pub e_sup: f64,
    pub e_inf_on_omega: f64,
    pub residual: f64,
}

impl TorsionSummary {
    pub fn new(t: &TorsionField) -> Self {
        TorsionSummary {
            pad_cells: t.egrid.pad_cells(),
            mu: t.mu,
            c_est: t.c_est,
            e_sup: t.e_sup,
            e_inf_on_omega: t.e_inf_on_omega,
            residual: t.residual,
        }
    }
}

pub fn write_eigen(dir: &Path, grid: &Grid, e: &EigenPair) -> Result<EigenSummary, CliError> {
    let s = EigenSummary::new(grid, e);
    write_grid_csv(&dir.join(EIGEN_CSV), grid, &["x", "y", "phi1"], |k| {
        vec![fmt(e.phi1[k])]
    })?;
    write_json(dir, EIGEN_JSON, &s)?;
    Ok(s)
}

pub fn load_eigen(dir: &Path, grid: &Grid, normalization: f64) -> Result<(EigenSummary, EigenPair), CliError> {
    let s: EigenSummary = read_json(dir, EIGEN_JSON, "eigen")?;
    if (s.n1, s.n2) != (grid.n1(), grid.n2()) || s.normalization != normalization {
        return Err(CliError::StaleArtifact {
            path: dir.join(EIGEN_JSON).display().to_string(),
            stage: "eigen",
            reason: format!(
                "{}x{} grid with normalization {}, config asks for {}x{} with {}",
                s.n1,
                s.n2,
                s.normalization,
                grid.n1(),
                grid.n2(),
                normalization
            ),
        });
    }
    let phi1 = read_grid_csv(dir, EIGEN_CSV, "eigen", grid, &["phi1"])?.pop().unwrap();
    let pair = EigenPair {
        lambda1: s.lambda1,
        phi1,
        normalization: s.normalization,
        l_est: s.l_est,
        eta_est: s.eta_est,
        iterations: s.iterations,
        residual: s.residual,
    };
    Ok((s, pair))
}

pub fn write_torsion(dir: &Path, t: &TorsionField) -> Result<TorsionSummary, CliError> {
    let s = TorsionSummary::new(t);
    write_grid_csv(&dir.join(TORSION_CSV), t.egrid.grid(), &["x", "y", "e_tilde"], |k| {
        vec![fmt(t.e_tilde[k])]
    })?;
    write_json(dir, TORSION_JSON, &s)?;
    Ok(s)
}

pub fn load_torsion(dir: &Path, grid: &Grid, pad_cells: usize) -> Result<(TorsionSummary, TorsionField), CliError> {
    let s: TorsionSummary = read_json(dir, TORSION_JSON, "torsion")?;
    if s.pad_cells != pad_cells {
        return Err(CliError::StaleArtifact {
            path: dir.join(TORSION_JSON).display().to_string(),
            stage: "torsion",
            reason: format!("pad_cells {} vs {pad_cells}", s.pad_cells),
        });
    }
    let egrid: EnlargedGrid = build_enlarged(grid, pad_cells).map_err(crate::config::map_core_config)?;
    let e_tilde = read_grid_csv(dir, TORSION_CSV, "torsion", egrid.grid(), &["e_tilde"])?
        .pop()
        .unwrap();
    let on_omega = egrid.restrict(&e_tilde)?;
    let t = TorsionField {
        egrid,
        e_tilde,
        on_omega,
        c_est: s.c_est,
        mu: s.mu,
        e_inf_on_omega: s.e_inf_on_omega,
        e_sup: s.e_sup,
        residual: s.residual,
    };
    Ok((s, t))
}

fn region_label(data: &ProblemData, i: usize, k: usize) -> &'static str {
    let r = &data.comps[i].regions;
    if r.strip[k] {
        "strip"
    } else if r.core[k] {
        "core"
    } else {
        "boundary"
    }
}

/// `strip`, `core` or `boundary`; `<u>|<v>` where the two partitions differ.
pub fn region(data: &ProblemData, k: usize) -> String {
    let (a, b) = (region_label(data, 0, k), region_label(data, 1, k));
    if a == b {
        a.to_string()
    } else {
        format!("{a}|{b}")
    }
}

pub fn write_fields(
    path: &Path,
    data: &ProblemData,
    torsion: &TorsionField,
    u: &ScalarField,
    v: &ScalarField,
) -> Result<(), CliError> {
    let phi = data.phi1();
    write_grid_csv(path, &data.grid, &FIELD_COLUMNS, |k| {
        vec![
            fmt(u[k]),
            fmt(v[k]),
            fmt(phi[k]),
            fmt(torsion.on_omega[k]),
            fmt(data.comps[0].a[k]),
            fmt(data.comps[1].a[k]),
            region(data, k),
        ]
    })
}

/// `(u, v)` from a fields file written by [`write_fields`].
pub fn load_fields(
    dir: &Path,
    name: &str,
    stage: &'static str,
    grid: &Grid,
) -> Result<(ScalarField, ScalarField), CliError> {
    let mut f = read_grid_csv(dir, name, stage, grid, &["u", "v"])?;
    let v = f.pop().unwrap();
    let u = f.pop().unwrap();
    Ok((u, v))
}
