use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid scenario: {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("mesh file, line {line}: {reason}")]
    MeshFile { line: usize, reason: String },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("{stage} stage: {source}")]
    Stage { stage: &'static str, source: uwvf_core::Error },
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), reason: reason.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Attribute a core error to a pipeline stage.
    pub fn stage<E: Into<uwvf_core::Error>>(stage: &'static str) -> impl FnOnce(E) -> Self {
        move |e| Error::Stage { stage, source: e.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
