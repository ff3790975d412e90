//! Experiment harness for the `mlas` crate: JSON-configured projection-error,
//! complexity and fit studies with deterministic CSV/JSON artifacts, and
//! evaluation of stored surrogates.

pub mod config;
pub mod error;
pub mod eval;
pub mod experiments;

pub use config::{ExperimentConfig, SCHEMA, SCHEMA_VERSION};
pub use error::{CliError, CliResult};
