use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {field}: {message}")]
    Config { field: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: kpo::Error,
    },

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn stage(&self) -> Option<&str> {
        match self {
            CliError::Stage { stage, .. } => Some(stage),
            CliError::Config { .. } => Some("config"),
            _ => None,
        }
    }
}

/// Tags a core error with the stage that produced it.
pub(crate) trait StageExt<T> {
    fn stage(self, name: &str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for kpo::Result<T> {
    fn stage(self, name: &str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage {
            stage: name.to_string(),
            source,
        })
    }
}
