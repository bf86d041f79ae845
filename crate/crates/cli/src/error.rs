use std::io;
use std::path::PathBuf;

use kmreg::dataset::{ManifestError, PlyError};
use thiserror::Error;

/// Failure categories, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot parse input: {0}")]
    Parse(String),
    #[error("registration failed: {0}")]
    Registration(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Parse(_) => 4,
            CliError::Registration(_) => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Io { path, source } => CliError::Io { path, source },
            ManifestError::Ply {
                path,
                source: PlyError::Io { source, .. },
                ..
            } => CliError::Io { path, source },
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<kmreg::Error> for CliError {
    fn from(e: kmreg::Error) -> Self {
        match e {
            kmreg::Error::Manifest(m) => m.into(),
            kmreg::Error::Ply(PlyError::Io { path, source }) => CliError::Io { path, source },
            kmreg::Error::Ply(p) => CliError::Parse(p.to_string()),
            kmreg::Error::Sampling(s) => CliError::Config(s.to_string()),
            kmreg::Error::Synth(s) => CliError::Config(s.to_string()),
            other => CliError::Registration(other.to_string()),
        }
    }
}
