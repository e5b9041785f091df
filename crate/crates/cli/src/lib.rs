//! Library surface of the command line runner, split out so integration
//! tests can drive the engine without spawning the binary.

pub mod blocks;
pub mod config;
pub mod report;

use std::fmt;

/// Failure classes aligned with the process exit codes: configuration
/// problems exit 2, runtime problems exit 3, verdict failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<ccgeo::error::Error> for CliError {
    fn from(e: ccgeo::error::Error) -> Self {
        match e {
            ccgeo::error::Error::InvalidParam(_) | ccgeo::error::Error::DimensionMismatch { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}
