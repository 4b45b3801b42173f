use std::path::PathBuf;

use eventcast_numerics::NumericsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("ingest: {0}")]
    Ingest(String),
    #[error("format: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
    #[error("alignment: {0}")]
    Alignment(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("generation failed{}: {message}", chunk.map(|c| format!(" at chunk {c}")).unwrap_or_default())]
    Generation { chunk: Option<usize>, message: String },
    #[error("unparseable rating in response: {raw:?}")]
    Parse { raw: String },
    #[error("rating {0} outside 0..=10")]
    Range(i64),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("input: {0}")]
    Input(String),
    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },
    #[error("data: {0}")]
    Data(String),
    #[error("spec: {0}")]
    Spec(String),
    #[error("missing upstream artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CoreError {
    /// Stable machine-readable class name, used as the CLI error prefix.
    pub fn class(&self) -> &'static str {
        match self {
            CoreError::Ingest(_) => "ingest",
            CoreError::Format(_) => "format",
            CoreError::Config(_) => "config",
            CoreError::Alignment(_) => "alignment",
            CoreError::Dataset(_) => "dataset",
            CoreError::Generation { .. } => "generation",
            CoreError::Parse { .. } => "parse",
            CoreError::Range(_) => "range",
            CoreError::Precondition(_) => "precondition",
            CoreError::Sampling(_) => "sampling",
            CoreError::Input(_) => "input",
            CoreError::Training { .. } => "training",
            CoreError::Data(_) => "data",
            CoreError::Spec(_) => "spec",
            CoreError::MissingArtifact(_) => "missing-artifact",
            CoreError::Numerics(e) => match e {
                NumericsError::Shape(_) => "shape",
                NumericsError::Domain(_) => "numeric",
                NumericsError::Config(_) => "config",
                NumericsError::Contract(_) => "contract",
                _ => "numerics",
            },
            CoreError::Io { .. } => "io",
            CoreError::Json(_) => "json",
            CoreError::Csv(_) => "csv",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
