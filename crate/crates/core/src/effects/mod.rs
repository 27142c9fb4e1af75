//! Deconfounded treatment effects on the edges of a causal graph.
//!
//! For an edge `T → Y` with confounders `C`, the treatment column is cut
//! into quantile levels, a proportional-odds model of the level on `C`
//! yields a scalar balancing score, every region is matched to its nearest
//! region at another level, and the average of the per-pair effects is
//! tested against zero. Edges without confounders fall back to the
//! regression slope and correlation test.

mod balance;
mod matching;
mod ordinal;

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{quantile_levels, ColumnScaler, DatasetError, FactorTable};
use crate::graph::{CausalGraph, GraphError};
use crate::stats::pearson;

pub use balance::{balance_report, BalanceReport, ConfounderBalance};
pub use matching::{
    estimate_ate, individual_effects, match_distance, match_pairs, naive_top_bottom, AteEstimate,
    MatchedPairs, Pair,
};
pub use ordinal::{
    fit_ordinal_regression, mean_loglik, propensity_score, propensity_scores, sample_ordinal,
    OrdinalModel, RawParams,
};

#[derive(Debug, Error)]
pub enum EffectsError {
    #[error("{treatment} -> {outcome} is not an edge of the graph")]
    NotAnEdge { treatment: String, outcome: String },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("every region has the same treatment level")]
    SingleLevel,
    #[error("need at least one matched pair, got {0} regions")]
    TooFewPairs(usize),
    #[error("factor {0} has zero variance")]
    ZeroVariance(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffectsOptions {
    /// Number of quantile treatment levels.
    pub levels: usize,
    pub alpha: f64,
}

impl Default for EffectsOptions {
    fn default() -> Self {
        Self { levels: 4, alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AteResult {
    pub treatment: String,
    pub outcome: String,
    /// Outcome units per treatment level (per treatment unit for
    /// unconfounded edges).
    pub ate: f64,
    pub p_value: f64,
    pub n_pairs: usize,
    pub significant: bool,
    pub confounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeBalance {
    pub treatment: String,
    pub outcome: String,
    pub report: BalanceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFailure {
    pub treatment: String,
    pub outcome: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EffectsReport {
    pub results: Vec<AteResult>,
    pub balance: Vec<EdgeBalance>,
    pub failures: Vec<EdgeFailure>,
}

/// Common ancestors of `treatment` and `outcome`, counting only ancestors of
/// the outcome that reach it without passing through the treatment.
pub fn confounders_of(
    graph: &CausalGraph,
    treatment: usize,
    outcome: usize,
) -> Result<BTreeSet<usize>, EffectsError> {
    if treatment >= graph.d() || outcome >= graph.d() || !graph.has_edge(treatment, outcome) {
        let name = |i: usize| graph.names().get(i).cloned().unwrap_or_else(|| i.to_string());
        return Err(EffectsError::NotAnEdge {
            treatment: name(treatment),
            outcome: name(outcome),
        });
    }
    let of_treatment = graph.ancestor_indices(treatment);
    let of_outcome = graph.reverse_reachable(outcome, Some(treatment));
    Ok(of_treatment
        .intersection(&of_outcome)
        .copied()
        .filter(|&c| c != treatment && c != outcome)
        .collect())
}

/// Effect of the edge `treatment → outcome`, plus a balance report when the
/// edge is confounded.
pub fn estimate_edge_effect(
    graph: &CausalGraph,
    table: &FactorTable,
    treatment: usize,
    outcome: usize,
    options: &EffectsOptions,
) -> Result<(AteResult, Option<BalanceReport>), EffectsError> {
    check_graph(graph, table)?;
    let confounders: Vec<usize> = confounders_of(graph, treatment, outcome)?.into_iter().collect();
    let names = table.names();
    let t = table.column(treatment);
    let y = table.column(outcome);
    let result = |ate: f64, p_value: f64, n_pairs: usize, confounded: bool| AteResult {
        treatment: names[treatment].clone(),
        outcome: names[outcome].clone(),
        ate,
        p_value,
        n_pairs,
        significant: p_value < options.alpha,
        confounded,
    };

    if confounders.is_empty() {
        let (ate, p) = slope_and_p(t, y).ok_or_else(|| EffectsError::ZeroVariance(names[treatment].clone()))?;
        return Ok((result(ate, p, 0, false), None));
    }

    let conf_names: Vec<String> = confounders.iter().map(|&c| names[c].clone()).collect();
    let raw = table.columns_matrix(&confounders);
    let x = ColumnScaler::fit(&raw, &conf_names)?.transform(&raw);
    let levels = quantile_levels(t, options.levels)?;
    let model = fit_ordinal_regression(&x, &levels)?;
    let scores = propensity_scores(&model, &x)?;
    let pairs = match_pairs(&scores, &levels)?;
    let est = estimate_ate(&pairs, y)?;
    let balance = balance_report(&x, &conf_names, &levels, &pairs)?;
    Ok((result(est.ate, est.p_value, est.n_pairs, true), Some(balance)))
}

/// OLS slope of `y` on `t` and the correlation-test p-value. `None` when `t`
/// is constant; a constant `y` gives slope 0 and p = 1.
fn slope_and_p(t: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|v| (v - mt).powi(2)).sum();
    if !(stt > 0.0) {
        return None;
    }
    let sty: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let p = pearson(t, y).map_or(1.0, |(_, p)| p);
    Some((sty / stt, p))
}

fn check_graph(graph: &CausalGraph, table: &FactorTable) -> Result<(), EffectsError> {
    if graph.names() != table.names().as_slice() {
        return Err(EffectsError::DimensionMismatch(
            "graph factors differ from table columns".into(),
        ));
    }
    if !graph.is_acyclic() {
        return Err(GraphError::CyclicGraph.into());
    }
    Ok(())
}

/// Runs [`estimate_edge_effect`] on every edge in row-major order. Per-edge
/// failures are collected rather than aborting the run.
pub fn estimate_all_effects(
    graph: &CausalGraph,
    table: &FactorTable,
    options: &EffectsOptions,
) -> Result<EffectsReport, EffectsError> {
    check_graph(graph, table)?;
    if options.levels < 2 || !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(EffectsError::Degenerate(format!(
            "levels must be at least 2 and alpha in (0, 1), got {} and {}",
            options.levels, options.alpha
        )));
    }
    let names = table.names();
    let mut report = EffectsReport::default();
    for (i, j) in graph.edges() {
        match estimate_edge_effect(graph, table, i, j, options) {
            Ok((ate, balance)) => {
                if let Some(b) = balance {
                    report.balance.push(EdgeBalance {
                        treatment: names[i].clone(),
                        outcome: names[j].clone(),
                        report: b,
                    });
                }
                report.results.push(ate);
            }
            Err(e) => report.failures.push(EdgeFailure {
                treatment: names[i].clone(),
                outcome: names[j].clone(),
                error: e.to_string(),
            }),
        }
    }
    Ok(report)
}

/// Cause × effect matrix: `+1`/`−1` for significant positive/negative
/// effects, `0` otherwise.
pub fn significance_matrix(names: &[String], results: &[AteResult]) -> DMatrix<i8> {
    let mut m = DMatrix::zeros(names.len(), names.len());
    let idx = |n: &str| names.iter().position(|x| x == n);
    for r in results.iter().filter(|r| r.significant) {
        if let (Some(i), Some(j)) = (idx(&r.treatment), idx(&r.outcome)) {
            m[(i, j)] = if r.ate > 0.0 {
                1
            } else if r.ate < 0.0 {
                -1
            } else {
                0
            };
        }
    }
    m
}

pub fn write_effects_json<W: Write>(results: &[AteResult], writer: W) -> Result<(), EffectsError> {
    serde_json::to_writer_pretty(writer, results)?;
    Ok(())
}

pub fn read_effects_json<R: std::io::Read>(reader: R) -> Result<Vec<AteResult>, EffectsError> {
    Ok(serde_json::from_reader(reader)?)
}

pub fn write_significance_csv<W: Write>(
    names: &[String],
    results: &[AteResult],
    writer: W,
) -> Result<(), EffectsError> {
    let m = significance_matrix(names, results);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(std::iter::once("cause").chain(names.iter().map(String::as_str)))?;
    for (i, name) in names.iter().enumerate() {
        let row: Vec<String> = (0..names.len()).map(|j| m[(i, j)].to_string()).collect();
        w.write_record(std::iter::once(name.clone()).chain(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_balance_csv<W: Write>(balance: &[EdgeBalance], writer: W) -> Result<(), EffectsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["edge", "confounder", "rel_diff_before", "rel_diff_after"])?;
    for eb in balance {
        let edge = format!("{}->{}", eb.treatment, eb.outcome);
        for c in &eb.report.confounders {
            w.write_record([
                edge.as_str(),
                c.confounder.as_str(),
                &c.rel_diff_before.to_string(),
                &c.rel_diff_after.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
