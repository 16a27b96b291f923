//! Config-driven pipeline behind the `nodal` binary.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::CliError;
