use thiserror::Error;

/// Errors raised by the grid, linear algebra, calibration and solver layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration for `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("fields live on different grids ({left} vs {right})")]
    GridMismatch { left: u64, right: u64 },

    #[error("field has {got} values, grid has {expected} nodes")]
    FieldLength { expected: usize, got: usize },

    #[error("core region empty: level {rho} is not below max(phi1) = {max}")]
    CoreRegionEmpty { rho: f64, max: f64 },

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("inverse power iteration did not converge after {iterations} steps (eigen residual {residual:.3e})")]
    EigenSolve { iterations: usize, residual: f64 },

    #[error("(33) unsatisfiable: rho = {rho} <= e, no gamma in (0,1) solves rho = gamma^(-1/(1-gamma))")]
    GammaUnsatisfiable { rho: f64 },

    #[error("singular reaction: |u| = 0 with eps = 0")]
    Singular,

    #[error("non-positive value {value:.3e} at interior node {node}")]
    NonPositive { node: usize, value: f64 },

    #[error("calibration failed: {reason}")]
    Calibration { reason: String },

    #[error("fixed-point iteration did not converge after {iterations} steps (sup change {change:.3e}, weak residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        change: f64,
        residual: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
