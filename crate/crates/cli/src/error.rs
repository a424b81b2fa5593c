//! Command errors and their process exit codes.

use std::path::Path;

use thiserror::Error;
use turbopinn::data::DataError;
use turbopinn::network::NetworkError;
use turbopinn::report::ReportError;
use turbopinn::trainer::TrainError;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NON_FINITE: u8 = 4;
pub const EXIT_MISMATCH: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    NonFinite(String),
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::NonFinite(_) => EXIT_NON_FINITE,
            CliError::Mismatch(_) => EXIT_MISMATCH,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::NonFinite(e.to_string()),
            TrainError::Report(r) => r.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

/// Checkpoint problems: unreadable files are I/O errors, anything else
/// means the file does not describe a usable network.
impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Mismatch(e.to_string()),
        }
    }
}
