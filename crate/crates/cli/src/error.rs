use std::io;
use std::path::Path;

use escrowsim::chainkit::{ChainError, ChainFileError};
use escrowsim::cryptofile::{CorpusError, EngineError, PartialRun};
use escrowsim::enclave::EnclaveError;
use escrowsim::keys::KeyError;
use escrowsim::nodesim::{CertError, ScenarioError, TransportError};
use escrowsim::release::ReleaseError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_REFUSED: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<CliError> },
}

impl CliError {
    pub fn io(path: &Path, e: io::Error) -> CliError {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
            CliError::Stage { source, .. } => source.exit_code(),
        }
    }
}

/// Tags an error with the lifecycle stage it came from.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T, E: Into<CliError>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Stage { stage, source: Box::new(e.into()) })
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Validation(e.to_string())
            }
        }
    )*};
}

validation_from!(ChainError, KeyError, CertError, ReleaseError, TransportError);

impl From<EnclaveError> for CliError {
    fn from(e: EnclaveError) -> Self {
        match e {
            EnclaveError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Enclave(e) => e.into(),
            EngineError::Envelope(escrowsim::cryptofile::EnvelopeError::Io(_)) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PartialRun> for CliError {
    fn from(e: PartialRun) -> Self {
        let msg = e.to_string();
        match CliError::from(e.error) {
            CliError::Io(_) => CliError::Io(msg),
            _ => CliError::Validation(msg),
        }
    }
}

impl From<ChainFileError> for CliError {
    fn from(e: ChainFileError) -> Self {
        match e {
            ChainFileError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Validation(e.to_string())
    }
}
