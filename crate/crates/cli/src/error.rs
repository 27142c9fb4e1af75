use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;
use urban_causal::dataset::DatasetError;
use urban_causal::discovery::DiscoveryError;
use urban_causal::effects::EffectsError;
use urban_causal::prediction::PredictionError;
use urban_causal::GraphError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("invalid graph spec: {0}")]
    InvalidGraphSpec(String),
    #[error("{stage} needs {}, which does not exist; run the earlier stage first", path.display())]
    MissingStageOutput { stage: &'static str, path: PathBuf },
    #[error("{0}")]
    Numerical(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::InvalidGraphSpec(_) | CliError::Io { .. } => 1,
            CliError::MissingStageOutput { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::InvalidGraphSpec(_) => "invalid-graph-spec",
            CliError::MissingStageOutput { .. } => "missing-stage-output",
            CliError::Numerical(_) => "numerical",
            CliError::Io { .. } => "io",
        }
    }

    /// The machine-readable form printed on stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Payload<'a> {
            error: &'a str,
            message: String,
            exit_code: i32,
        }
        serde_json::to_string(&Payload {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        })
        .expect("plain struct serializes")
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DiscoveryError> for CliError {
    fn from(e: DiscoveryError) -> Self {
        match e {
            DiscoveryError::NonFinite(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EffectsError> for CliError {
    fn from(e: EffectsError) -> Self {
        match e {
            EffectsError::Degenerate(_)
            | EffectsError::SingleLevel
            | EffectsError::TooFewPairs(_)
            | EffectsError::ZeroVariance(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PredictionError> for CliError {
    fn from(e: PredictionError) -> Self {
        match e {
            PredictionError::NonFiniteLoss { .. } => CliError::Numerical(e.to_string()),
            PredictionError::Effects(inner) => inner.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}
