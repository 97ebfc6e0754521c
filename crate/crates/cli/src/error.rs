use std::path::Path;

use thiserror::Error;
use tomosar_core::TomoError;

/// Failures of a command, grouped by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation or configuration, including input files that are
    /// missing or are not the expected kind of file. Exit status 2.
    #[error("{0}")]
    Usage(String),
    /// A recognised input whose content is inconsistent (truncated payload,
    /// unsupported version, mismatched dimensions), or an output that cannot
    /// be written. Exit status 3.
    #[error("{0}")]
    Data(String),
    /// A numerical routine failed. Exit status 4.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub(crate) fn open(path: &Path, err: std::io::Error) -> Self {
        CliError::Usage(format!("cannot read {}: {err}", path.display()))
    }

    pub(crate) fn write(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("cannot write {}: {err}", path.display()))
    }
}

impl From<TomoError> for CliError {
    fn from(e: TomoError) -> Self {
        match e {
            TomoError::InvalidGeometry(_)
            | TomoError::InvalidGrid(_)
            | TomoError::InvalidParameter(_)
            | TomoError::ZeroAperture
            | TomoError::Domain(_) => CliError::Usage(e.to_string()),
            TomoError::DimensionMismatch(_) | TomoError::EmptyRegion(_) | TomoError::OutOfRange(_) => {
                CliError::Data(e.to_string())
            }
            TomoError::Singular(_)
            | TomoError::PowerIterationDiverged(_)
            | TomoError::Divergence(_)
            | TomoError::IterationCap(_) => CliError::Numerical(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
