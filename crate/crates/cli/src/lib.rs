//! Experiment harness around the `armdp` solvers.
//!
//! A run reads an [`ExperimentConfig`](config::ExperimentConfig), executes one
//! subcommand, and writes CSV tables plus a `<command>.meta.json` sidecar
//! recording the config, versions, seed and wall time.

use std::path::Path;

pub mod config;
pub mod output;
pub mod run;

pub use config::ExperimentConfig;
pub use run::{run, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failed at {point}: {source}")]
    Solver {
        point: String,
        #[source]
        source: armdp::Error,
    },
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Output(format!("{}: {e}", path.display()))
    }

    pub(crate) fn solver(point: impl Into<String>) -> impl FnOnce(armdp::Error) -> Self {
        let point = point.into();
        move |source| CliError::Solver { point, source }
    }

    /// Process exit code: 1 for configuration problems, 2 for failed runs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver { .. } | CliError::Output(_) => 2,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
