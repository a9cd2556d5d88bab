//! Library half of the `chemdyn` binary: scenario configs, runners, and the
//! error-to-exit-code mapping. The binary stays a thin argument parser so
//! integration tests can drive everything in-process.

pub mod config;
pub mod run;

use thiserror::Error;

use chemdyn::kickback::KickbackError;
use chemdyn::measure::MeasureError;
use chemdyn::qsim::CircuitError;

/// Top-level failure classes, one per exit code. Everything a bad config can
/// cause is `Validation`; `ResourceCap` is strictly "the run would exceed the
/// simulator cap"; `Contract` is a numerical guarantee the run itself broke.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    ResourceCap(String),
    #[error("{0}")]
    Contract(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Validation(_) => 2,
            CliError::ResourceCap(_) => 3,
            CliError::Contract(_) => 4,
        }
    }

    pub fn validation(path: &str, message: impl std::fmt::Display) -> Self {
        CliError::Validation(format!("{path}: {message}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub(crate) fn map_circuit(e: CircuitError) -> CliError {
    match e {
        CircuitError::CapExceeded { .. } => CliError::ResourceCap(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

pub(crate) fn map_kickback(e: KickbackError) -> CliError {
    match e {
        KickbackError::Cap { .. } => CliError::ResourceCap(e.to_string()),
        KickbackError::Separability { .. } => CliError::Contract(e.to_string()),
        KickbackError::Circuit(inner) => map_circuit(inner),
        // Table shape, quantization range, ancilla width: config problems.
        other => CliError::Validation(other.to_string()),
    }
}

pub(crate) fn map_measure(e: MeasureError) -> CliError {
    match e {
        MeasureError::Circuit(inner) => map_circuit(inner),
        MeasureError::Kickback(inner) => map_kickback(inner),
        other => CliError::Validation(other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_partition_the_failure_classes() {
        assert_eq!(CliError::Runtime(String::new()).exit_code(), 1);
        assert_eq!(CliError::Validation(String::new()).exit_code(), 2);
        assert_eq!(CliError::ResourceCap(String::new()).exit_code(), 3);
        assert_eq!(CliError::Contract(String::new()).exit_code(), 4);
    }

    #[test]
    fn cap_breaches_map_to_the_resource_exit() {
        let e = map_circuit(CircuitError::CapExceeded { required: 30, cap: 26 });
        assert!(matches!(e, CliError::ResourceCap(_)));
        let e = map_kickback(KickbackError::Cap { required: 30, cap: 26 });
        assert!(matches!(e, CliError::ResourceCap(_)));
        let e = map_kickback(KickbackError::Separability { step: 3, deviation: 1e-2 });
        assert!(matches!(e, CliError::Contract(_)));
    }
}
