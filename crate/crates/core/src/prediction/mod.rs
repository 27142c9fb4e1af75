//! Outcome prediction from selected factors and the training-size
//! experiment grid.

mod experiment;
mod linear;
mod mlp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, Dimension, FactorTable};
use crate::effects::{AteResult, EffectsError};
use crate::graph::{CausalGraph, GraphError};
use crate::stats::pearson;

pub use experiment::{
    cell_seed, epoch_curves, run_experiment, split_rows, summarize, write_curve_csv,
    write_report_csv, write_summary_json, CurveConfig, CurveRow, ExperimentConfig,
    ExperimentReport, ReportRow, Summary, SummaryEntry,
};
pub use linear::{fit_linear, LinearModel, OLS_RIDGE};
pub use mlp::{fit_mlp, fit_mlp_with, Layer, Mlp, MlpConfig};

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("unknown factor {0}")]
    UnknownFactor(String),
    #[error("{0} is not a Mobility factor")]
    NotAnOutcome(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("loss became {loss} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, loss: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Effects(#[from] EffectsError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Every non-Mobility factor, with L1 shrinkage inside the predictor.
    AllL1,
    /// Factors significantly correlated with the outcome.
    CorrelationP,
    /// Every ancestor of the outcome in the graph.
    CausalAncestor,
    /// Ancestors of the outcome once insignificant edges are pruned.
    CausalSignificance,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::AllL1,
        StrategyKind::CorrelationP,
        StrategyKind::CausalAncestor,
        StrategyKind::CausalSignificance,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::AllL1 => "all-l1",
            StrategyKind::CorrelationP => "correlation-p",
            StrategyKind::CausalAncestor => "causal-ancestor",
            StrategyKind::CausalSignificance => "causal-significance",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = PredictionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| PredictionError::InvalidConfig(format!("unknown strategy {s}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    Linear,
    Mlp,
}

impl PredictorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PredictorKind::Linear => "linear",
            PredictorKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStrategy {
    pub kind: StrategyKind,
    pub alpha: f64,
    pub l1_lambda: f64,
}

impl SelectionStrategy {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            alpha: 0.05,
            l1_lambda: 0.0,
        }
    }
}

/// Factors eligible as inputs for `outcome`: everything outside the Mobility
/// dimension.
pub fn candidate_features(table: &FactorTable, outcome: usize) -> Vec<usize> {
    table
        .meta()
        .iter()
        .enumerate()
        .filter(|(j, m)| *j != outcome && m.dimension != Dimension::Mobility)
        .map(|(j, _)| j)
        .collect()
}

pub fn outcome_index(table: &FactorTable, name: &str) -> Result<usize, PredictionError> {
    let idx = table
        .index_of(name)
        .ok_or_else(|| PredictionError::UnknownFactor(name.to_string()))?;
    if table.meta()[idx].dimension != Dimension::Mobility {
        return Err(PredictionError::NotAnOutcome(name.to_string()));
    }
    Ok(idx)
}

/// Input factors for `outcome` under `strategy`, as sorted column indices.
/// An empty result means the predictor falls back to the training mean.
pub fn select_features(
    strategy: &SelectionStrategy,
    table: &FactorTable,
    graph: &CausalGraph,
    effects: &[AteResult],
    outcome: usize,
) -> Result<Vec<usize>, PredictionError> {
    if !(strategy.alpha > 0.0 && strategy.alpha < 1.0) || !(strategy.l1_lambda >= 0.0) {
        return Err(PredictionError::InvalidConfig(format!(
            "alpha must be in (0, 1) and l1_lambda >= 0, got {} and {}",
            strategy.alpha, strategy.l1_lambda
        )));
    }
    let names = table.names();
    let outcome_name = names
        .get(outcome)
        .ok_or_else(|| PredictionError::UnknownFactor(outcome.to_string()))?;
    outcome_index(table, outcome_name)?;
    if graph.names() != names.as_slice() {
        return Err(PredictionError::InvalidConfig("graph factors differ from table columns".into()));
    }
    let candidates = candidate_features(table, outcome);
    let y = table.column(outcome);
    let selected: Vec<usize> = match strategy.kind {
        StrategyKind::AllL1 => candidates,
        StrategyKind::CorrelationP => candidates
            .into_iter()
            .filter(|&j| pearson(table.column(j), y).is_some_and(|(_, p)| p < strategy.alpha))
            .collect(),
        StrategyKind::CausalAncestor => {
            let anc = graph.ancestor_indices(outcome);
            candidates.into_iter().filter(|j| anc.contains(j)).collect()
        }
        StrategyKind::CausalSignificance => {
            let significant = |i: usize, j: usize| {
                effects.iter().any(|r| {
                    r.treatment == names[i] && r.outcome == names[j] && r.p_value < strategy.alpha
                })
            };
            let pruned = graph.filter_edges(significant);
            let anc = pruned.ancestor_indices(outcome);
            candidates.into_iter().filter(|j| anc.contains(j)).collect()
        }
    };
    Ok(selected)
}

/// `(rmse, mae)` of predictions against targets.
pub fn evaluate(predictions: &[f64], targets: &[f64]) -> Result<(f64, f64), PredictionError> {
    if predictions.len() != targets.len() {
        return Err(PredictionError::LengthMismatch {
            left: predictions.len(),
            right: targets.len(),
        });
    }
    if targets.is_empty() {
        return Err(PredictionError::LengthMismatch { left: 0, right: 0 });
    }
    let m = targets.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (p, t) in predictions.iter().zip(targets) {
        se += (p - t) * (p - t);
        ae += (p - t).abs();
    }
    let rmse = (se / m).sqrt();
    let mae = ae / m;
    debug_assert!(rmse >= mae * (1.0 - 1e-12));
    Ok((rmse, mae))
}
