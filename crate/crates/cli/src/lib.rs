//! Command-line front end for the grid-tied PV simulator.
//!
//! The binary exposes two subcommands: `run`, which loads a scenario file
//! (or one of the bundled cases), simulates it, and writes trace/report
//! artifacts into an output directory; and `train-anfis`, which builds or
//! loads a tracker training dataset, runs the hybrid training loop, and
//! saves the network parameters together with their error trace.
//!
//! Everything here is plumbing around `pvgrid-core`; the library split
//! exists so integration tests can re-run the same analysis that produced
//! an emitted report and check the numbers agree exactly.

pub mod report;
pub mod run;
pub mod svg;
pub mod train;

use std::fmt::Display;
use std::path::Path;

use pvgrid_core::{ScenarioError, SimError};

/// Failure classes, one per process exit code. Exit codes are the only
/// machine-readable success signal: `1` for bad arguments or configuration,
/// `2` for a propagated simulation or training fault, `3` for filesystem
/// trouble.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Fault(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Fault(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    /// An I/O failure annotated with the path that caused it.
    pub fn io(path: &Path, err: impl Display) -> CliError {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<ScenarioError> for CliError {
    fn from(err: ScenarioError) -> Self {
        match err {
            ScenarioError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        match err {
            SimError::Scenario(inner) => inner.into(),
            other => CliError::Fault(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        assert_eq!(CliError::Invalid("x".into()).exit_code(), 1);
        assert_eq!(CliError::Fault("x".into()).exit_code(), 2);
        assert_eq!(CliError::Io("x".into()).exit_code(), 3);
    }

    #[test]
    fn scenario_io_errors_map_to_the_io_class() {
        let missing = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let err: CliError = ScenarioError::Io(missing).into();
        assert_eq!(err.exit_code(), 3, "file trouble must exit 3, got {err}");
    }

    #[test]
    fn scenario_validation_errors_map_to_the_usage_class() {
        let err: CliError = ScenarioError::Invalid("step out of range".into()).into();
        assert_eq!(err.exit_code(), 1, "validation must exit 1, got {err}");
        assert!(err.to_string().contains("step"), "message should survive: {err}");
    }
}
