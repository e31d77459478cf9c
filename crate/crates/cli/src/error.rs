use std::path::PathBuf;

use crate::config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing {}: run `{producer}` first", path.display())]
    MissingArtifact {
        path: PathBuf,
        producer: &'static str,
    },
    #[error("{} does not match the configuration ({reason}); rerun `{producer}`", path.display())]
    StaleArtifact {
        path: PathBuf,
        reason: String,
        producer: &'static str,
    },
    #[error(transparent)]
    Core(#[from] breath_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
}

impl CliError {
    /// 1 usage or validation, 2 missing or stale input artifact, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::MissingArtifact { .. } | CliError::StaleArtifact { .. } => 2,
            CliError::Core(_) | CliError::Io { .. } | CliError::Csv { .. } => 3,
        }
    }
}
