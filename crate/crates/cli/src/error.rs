use std::path::Path;

use locc_core::Error;
use thiserror::Error;

use crate::cut::CutParseError;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_EXHAUSTED: u8 = 2;
pub const EXIT_INPUT: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{file}: {source}")]
    InFile { file: String, source: Box<CliError> },
    #[error("invalid cut: {0}")]
    Cut(#[from] CutParseError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn in_file(self, path: &Path) -> Self {
        CliError::InFile { file: path.display().to_string(), source: Box::new(self) }
    }

    /// 2 when copies or yield ran out, 3 for bad input or unmet
    /// preconditions, 1 for internal verification failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::InFile { source, .. } => source.exit_code(),
            CliError::Core(Error::BudgetExhausted { .. } | Error::YieldZero | Error::InsufficientEntanglement { .. }) => EXIT_EXHAUSTED,
            CliError::Core(Error::VerificationFailed(_) | Error::ProtocolInvalid(_) | Error::BasisSearchExhausted { .. }) => EXIT_FAILURE,
            _ => EXIT_INPUT,
        }
    }
}
