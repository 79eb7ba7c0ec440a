use std::io;
use std::path::PathBuf;

use regime_extract::Error as ModelError;
use thiserror::Error;

/// Exit statuses of the binary.
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: invalid config at byte offset {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("{0}")]
    Verification(String),

    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse { .. } | CliError::Input(_) => EXIT_USAGE,
            CliError::Model(e) if is_input_error(e) => EXIT_USAGE,
            CliError::Model(_) | CliError::Verification(_) => EXIT_FAILURE,
            CliError::Read { .. } | CliError::Write { .. } => EXIT_IO,
        }
    }
}

/// Errors caused by the values a user supplied, as opposed to a failure
/// of the mathematics for otherwise valid inputs.
fn is_input_error(e: &ModelError) -> bool {
    matches!(
        e,
        ModelError::NonPositiveParameter(_)
            | ModelError::NonFinite(_)
            | ModelError::CostNotConvex { .. }
            | ModelError::CostNotIncreasing { .. }
            | ModelError::CostNotNormalized(_)
            | ModelError::OutOfRange { .. }
            | ModelError::InvalidSimConfig(_)
    )
}

pub type CliResult<T> = std::result::Result<T, CliError>;
