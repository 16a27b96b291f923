use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {reason}")]
    Config { path: String, reason: String },

    #[error("hypothesis validation failed:\n{0}")]
    Validation(String),

    #[error("missing artifact {path}: run `nodal {stage}` first")]
    MissingArtifact { path: String, stage: &'static str },

    #[error("artifact {path} does not match the config ({reason}); rerun `nodal {stage}`")]
    StaleArtifact {
        path: String,
        stage: &'static str,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: String, reason: String },

    #[error("weak residual {residual:.3e} above threshold {threshold:.3e} (component {component})")]
    Residual {
        component: usize,
        residual: f64,
        threshold: f64,
    },

    #[error(transparent)]
    Core(#[from] nodal_core::Error),
}

impl CliError {
    /// 1 validation, 2 calibration, 3 solver, 4 missing upstream artifact.
    pub fn exit_code(&self) -> i32 {
        use nodal_core::Error as E;
        match self {
            CliError::Config { .. } | CliError::Validation(_) | CliError::Io { .. } | CliError::Format { .. } => 1,
            CliError::MissingArtifact { .. } | CliError::StaleArtifact { .. } => 4,
            CliError::Residual { .. } => 3,
            CliError::Core(e) => match e {
                E::Calibration { .. } => 2,
                E::LinearSolve { .. }
                | E::EigenSolve { .. }
                | E::NonConvergence { .. }
                | E::Singular
                | E::NonPositive { .. } => 3,
                E::Config { .. }
                | E::GammaUnsatisfiable { .. }
                | E::CoreRegionEmpty { .. }
                | E::GridMismatch { .. }
                | E::FieldLength { .. } => 1,
            },
        }
    }
}
