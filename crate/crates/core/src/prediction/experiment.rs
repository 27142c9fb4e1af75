use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linear::fit_linear;
use super::mlp::{fit_mlp, fit_mlp_with, Mlp, MlpConfig};
use super::{evaluate, outcome_index, select_features, PredictionError, PredictorKind, SelectionStrategy, StrategyKind};
use crate::dataset::{ColumnScaler, FactorTable};
use crate::effects::{estimate_all_effects, AteResult, EffectsOptions};
use crate::graph::CausalGraph;
use crate::stats::{mean, population_std, sample_std};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub outcomes: Vec<String>,
    pub strategies: Vec<StrategyKind>,
    pub predictors: Vec<PredictorKind>,
    pub fractions: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
    /// Significance threshold for correlation and effect pruning.
    pub alpha: f64,
    /// Candidate L1 strengths for the all-factor baseline.
    pub l1_grid: Vec<f64>,
    /// Share of the training rows held out to choose the L1 strength.
    pub validation_fraction: f64,
    pub mlp: MlpConfig,
    pub effects: EffectsOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            outcomes: Vec::new(),
            strategies: StrategyKind::ALL.to_vec(),
            predictors: vec![PredictorKind::Linear],
            fractions: (2..=8).map(|i| i as f64 / 10.0).collect(),
            repeats: 5,
            seed: 0,
            alpha: 0.05,
            l1_grid: default_l1_grid(),
            validation_fraction: 0.25,
            mlp: MlpConfig::default(),
            effects: EffectsOptions::default(),
        }
    }
}

/// 13 geometric steps from 1e-4 to 1.
fn default_l1_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-4.0 + i as f64 / 3.0)).collect()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), PredictionError> {
        let bad = |m: String| Err(PredictionError::InvalidConfig(m));
        if self.outcomes.is_empty() || self.strategies.is_empty() || self.predictors.is_empty() {
            return bad("outcomes, strategies and predictors must be non-empty".into());
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return bad(format!("fraction {f} outside (0, 1)"));
        }
        if self.fractions.is_empty() || self.repeats == 0 {
            return bad("need at least one fraction and one repeat".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if self.l1_grid.is_empty() || self.l1_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return bad("l1_grid must hold positive values".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must be in (0, 1)".into());
        }
        if self.predictors.contains(&PredictorKind::Mlp) {
            self.mlp.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub outcome: String,
    pub strategy: StrategyKind,
    pub predictor: PredictorKind,
    pub train_fraction: f64,
    pub repeat: usize,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub selected_features: Vec<String>,
    /// L1 strength picked on the validation rows (all-factor baseline only).
    pub l1_lambda: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the split for one (outcome, fraction, repeat) cell.
pub fn cell_seed(master: u64, outcome: usize, fraction: usize, repeat: usize) -> u64 {
    [outcome, fraction, repeat]
        .iter()
        .fold(splitmix(master), |acc, &c| splitmix(acc ^ splitmix(c as u64)))
}

/// Uniform random split: `⌈fraction · n⌉` sorted training rows (at most
/// `n − 1`) and the sorted remainder.
pub fn split_rows(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let m = ((fraction * n as f64).ceil() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = index::sample(&mut rng, n, m).into_vec();
    train.sort_unstable();
    let mut in_train = vec![false; n];
    for &i in &train {
        in_train[i] = true;
    }
    let test = (0..n).filter(|&i| !in_train[i]).collect();
    (train, test)
}

/// What a fitted cell needs to predict on new rows.
enum Fitted {
    Mean(f64),
    Linear(super::LinearModel),
    Mlp(Mlp),
}

/// Training data of one cell, z-scored with training statistics only.
struct Scaled {
    x_train: DMatrix<f64>,
    y_train: Vec<f64>,
    scaler: Option<ColumnScaler>,
    y_mean: f64,
    y_std: f64,
}

impl Scaled {
    fn new(train: &FactorTable, features: &[usize], outcome: usize) -> Result<Self, PredictionError> {
        let raw = train.columns_matrix(features);
        let names: Vec<String> = features.iter().map(|&j| train.names()[j].clone()).collect();
        let scaler = if features.is_empty() { None } else { Some(ColumnScaler::fit(&raw, &names)?) };
        let y = train.column(outcome);
        let y_mean = mean(y);
        let sd = population_std(y);
        let y_std = if sd > 0.0 { sd } else { 1.0 };
        Ok(Self {
            x_train: match &scaler {
                Some(s) => s.transform(&raw),
                None => raw,
            },
            y_train: y.iter().map(|v| (v - y_mean) / y_std).collect(),
            scaler,
            y_mean,
            y_std,
        })
    }

    fn transform(&self, table: &FactorTable, rows: &[usize], features: &[usize]) -> DMatrix<f64> {
        let raw = DMatrix::from_fn(rows.len(), features.len(), |i, j| table.column(features[j])[rows[i]]);
        match &self.scaler {
            Some(s) => s.transform(&raw),
            None => raw,
        }
    }

    fn unscale(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|v| v * self.y_std + self.y_mean).collect()
    }
}

impl Fitted {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        match self {
            Fitted::Mean(m) => vec![*m; x.nrows()],
            Fitted::Linear(l) => l.predict(x),
            Fitted::Mlp(m) => m.predict(x),
        }
    }
}

/// Picks the L1 strength with the smallest validation RMSE (the smaller
/// strength on ties).
fn choose_lambda(x: &DMatrix<f64>, y: &[f64], config: &ExperimentConfig, seed: u64) -> Result<f64, PredictionError> {
    let n = x.nrows();
    let (fit_rows, val_rows) = split_rows(n, 1.0 - config.validation_fraction, seed ^ 0x5EED);
    if fit_rows.len() < 2 || val_rows.is_empty() {
        return Err(PredictionError::InvalidConfig(format!("{n} training rows are too few to tune the L1 strength")));
    }
    let xf = x.select_rows(&fit_rows);
    let yf: Vec<f64> = fit_rows.iter().map(|&i| y[i]).collect();
    let xv = x.select_rows(&val_rows);
    let yv: Vec<f64> = val_rows.iter().map(|&i| y[i]).collect();
    let mut grid = config.l1_grid.clone();
    grid.sort_by(f64::total_cmp);
    let mut best = (f64::INFINITY, grid[0]);
    for &lambda in &grid {
        let m = fit_linear(&xf, &yf, lambda)?;
        let (rmse, _) = evaluate(&m.predict(&xv), &yv)?;
        if rmse < best.0 {
            best = (rmse, lambda);
        }
    }
    Ok(best.1)
}

struct CellOutcome {
    predictions: Vec<f64>,
    selected: Vec<usize>,
    l1_lambda: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn fit_cell(
    table: &FactorTable,
    train: &FactorTable,
    test_rows: &[usize],
    features: &[usize],
    outcome: usize,
    strategy: StrategyKind,
    predictor: PredictorKind,
    config: &ExperimentConfig,
    seed: u64,
    mut on_epoch: Option<&mut dyn FnMut(usize, &Mlp, &Scaled, &[usize])>,
) -> Result<CellOutcome, PredictionError> {
    let mut features = features.to_vec();
    let mut l1_lambda = None;
    if strategy == StrategyKind::AllL1 && !features.is_empty() {
        let scaled = Scaled::new(train, &features, outcome)?;
        let lambda = choose_lambda(&scaled.x_train, &scaled.y_train, config, seed)?;
        let lasso = fit_linear(&scaled.x_train, &scaled.y_train, lambda)?;
        l1_lambda = Some(lambda);
        if predictor == PredictorKind::Linear {
            let x_test = scaled.transform(table, test_rows, &features);
            let selected = features
                .iter()
                .zip(&lasso.weights)
                .filter(|(_, w)| **w != 0.0)
                .map(|(&f, _)| f)
                .collect();
            return Ok(CellOutcome {
                predictions: scaled.unscale(&lasso.predict(&x_test)),
                selected,
                l1_lambda,
            });
        }
        features = features
            .iter()
            .zip(&lasso.weights)
            .filter(|(_, w)| **w != 0.0)
            .map(|(&f, _)| f)
            .collect();
    }

    let scaled = Scaled::new(train, &features, outcome)?;
    let fitted = if features.is_empty() {
        Fitted::Mean(0.0)
    } else {
        match predictor {
            PredictorKind::Linear => Fitted::Linear(fit_linear(&scaled.x_train, &scaled.y_train, 0.0)?),
            PredictorKind::Mlp => {
                let cfg = MlpConfig {
                    seed: config.mlp.seed ^ seed,
                    ..config.mlp.clone()
                };
                match on_epoch.as_mut() {
                    Some(cb) => Fitted::Mlp(fit_mlp_with(&scaled.x_train, &scaled.y_train, &cfg, |e, m| cb(e, m, &scaled, &features))?),
                    None => Fitted::Mlp(fit_mlp(&scaled.x_train, &scaled.y_train, &cfg)?),
                }
            }
        }
    };
    let x_test = scaled.transform(table, test_rows, &features);
    Ok(CellOutcome {
        predictions: scaled.unscale(&fitted.predict(&x_test)),
        selected: features,
        l1_lambda,
    })
}

/// Runs every (outcome, fraction, repeat, strategy, predictor) cell.
///
/// Each (outcome, fraction, repeat) draws one training split shared by all
/// strategies and predictors. Correlations and causal effects used for
/// selection are computed on the training rows only; the graph itself is
/// kept fixed. Failing cells are recorded with an error message.
pub fn run_experiment(
    table: &FactorTable,
    graph: &CausalGraph,
    config: &ExperimentConfig,
) -> Result<ExperimentReport, PredictionError> {
    config.validate()?;
    let outcomes = config
        .outcomes
        .iter()
        .map(|o| outcome_index(table, o))
        .collect::<Result<Vec<_>, _>>()?;
    if graph.names() != table.names().as_slice() {
        return Err(PredictionError::InvalidConfig("graph factors differ from table columns".into()));
    }
    let names = table.names();
    let mut rows = Vec::new();
    for (oi, &outcome) in outcomes.iter().enumerate() {
        for (fi, &fraction) in config.fractions.iter().enumerate() {
            for repeat in 0..config.repeats {
                let seed = cell_seed(config.seed, oi, fi, repeat);
                let (train_rows, test_rows) = split_rows(table.n(), fraction, seed);
                let train = table.select_rows(&train_rows);
                let effects = lazy_effects(graph, train.as_ref().ok(), config);
                let targets: Vec<f64> = test_rows.iter().map(|&i| table.column(outcome)[i]).collect();

                for &strategy in &config.strategies {
                    for &predictor in &config.predictors {
                        let result = train
                            .as_ref()
                            .map_err(|e| e.to_string())
                            .and_then(|train| {
                                let effects = if strategy == StrategyKind::CausalSignificance {
                                    effects.as_ref().map_err(|e| e.clone())?.as_slice()
                                } else {
                                    &[]
                                };
                                let sel = SelectionStrategy {
                                    kind: strategy,
                                    alpha: config.alpha,
                                    l1_lambda: 0.0,
                                };
                                let features = select_features(&sel, train, graph, effects, outcome)
                                    .map_err(|e| e.to_string())?;
                                let cell = fit_cell(
                                    table, train, &test_rows, &features, outcome, strategy, predictor, config, seed,
                                    None,
                                )
                                .map_err(|e| e.to_string())?;
                                let (rmse, mae) = evaluate(&cell.predictions, &targets).map_err(|e| e.to_string())?;
                                Ok((rmse, mae, cell))
                            });
                        let mut row = ReportRow {
                            outcome: names[outcome].clone(),
                            strategy,
                            predictor,
                            train_fraction: fraction,
                            repeat,
                            rmse: None,
                            mae: None,
                            selected_features: Vec::new(),
                            l1_lambda: None,
                            error: None,
                        };
                        match result {
                            Ok((rmse, mae, cell)) => {
                                row.rmse = Some(rmse);
                                row.mae = Some(mae);
                                row.selected_features = cell.selected.iter().map(|&j| names[j].clone()).collect();
                                row.l1_lambda = cell.l1_lambda;
                            }
                            Err(e) => row.error = Some(e),
                        }
                        rows.push(row);
                    }
                }
            }
        }
    }
    Ok(ExperimentReport { rows })
}

/// Effects on the training rows, computed only if some strategy needs them.
fn lazy_effects(
    graph: &CausalGraph,
    train: Option<&FactorTable>,
    config: &ExperimentConfig,
) -> Result<Vec<AteResult>, String> {
    if !config.strategies.contains(&StrategyKind::CausalSignificance) {
        return Ok(Vec::new());
    }
    let train = train.ok_or_else(|| "training split unavailable".to_string())?;
    let opts = EffectsOptions {
        alpha: config.alpha,
        ..config.effects
    };
    estimate_all_effects(graph, train, &opts)
        .map(|r| r.results)
        .map_err(|e| e.to_string())
}

/// Train/dev/test shares for the per-epoch MLP curves; the test share is the
/// remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveConfig {
    pub train_fraction: f64,
    pub dev_fraction: f64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.2,
            dev_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub outcome: String,
    pub strategy: StrategyKind,
    pub epoch: usize,
    pub dev_rmse: f64,
    pub test_rmse: f64,
}

/// Per-epoch dev and test RMSE of the MLP for every outcome and strategy on
/// one seeded train/dev/test split.
pub fn epoch_curves(
    table: &FactorTable,
    graph: &CausalGraph,
    config: &ExperimentConfig,
    curve: &CurveConfig,
) -> Result<Vec<CurveRow>, PredictionError> {
    config.mlp.validate()?;
    if !(curve.train_fraction > 0.0 && curve.dev_fraction > 0.0 && curve.train_fraction + curve.dev_fraction < 1.0) {
        return Err(PredictionError::InvalidConfig("curve shares must be positive and sum below 1".into()));
    }
    let names = table.names();
    let n = table.n();
    let mut out = Vec::new();
    for (oi, name) in config.outcomes.iter().enumerate() {
        let outcome = outcome_index(table, name)?;
        let seed = cell_seed(config.seed, oi, usize::MAX, 0);
        let (train_rows, rest) = split_rows(n, curve.train_fraction, seed);
        let dev_count = ((curve.dev_fraction * n as f64).ceil() as usize).min(rest.len().saturating_sub(1));
        let (dev_rows, test_rows) = rest.split_at(dev_count);
        if dev_rows.is_empty() || test_rows.is_empty() {
            return Err(PredictionError::InvalidConfig(format!("{n} rows are too few for a train/dev/test split")));
        }
        let train = table.select_rows(&train_rows)?;
        let effects = lazy_effects(graph, Some(&train), config).map_err(PredictionError::InvalidConfig)?;
        let y = table.column(outcome);
        let dev_y: Vec<f64> = dev_rows.iter().map(|&i| y[i]).collect();
        let test_y: Vec<f64> = test_rows.iter().map(|&i| y[i]).collect();
        for &strategy in &config.strategies {
            let sel = SelectionStrategy {
                kind: strategy,
                alpha: config.alpha,
                l1_lambda: 0.0,
            };
            let features = select_features(&sel, &train, graph, &effects, outcome)?;
            let mut rows = Vec::new();
            let mut record = |epoch: usize, model: &Mlp, scaled: &Scaled, used: &[usize]| {
                let score = |rows: &[usize], target: &[f64]| {
                    let p = scaled.unscale(&model.predict(&scaled.transform(table, rows, used)));
                    evaluate(&p, target).map(|r| r.0).unwrap_or(f64::NAN)
                };
                rows.push(CurveRow {
                    outcome: names[outcome].clone(),
                    strategy,
                    epoch,
                    dev_rmse: score(dev_rows, &dev_y),
                    test_rmse: score(test_rows, &test_y),
                });
            };
            let _ = fit_cell(
                table,
                &train,
                test_rows,
                &features,
                outcome,
                strategy,
                PredictorKind::Mlp,
                config,
                seed,
                Some(&mut record),
            )?;
            out.extend(rows);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub outcome: String,
    pub strategy: StrategyKind,
    pub predictor: PredictorKind,
    /// `None` for the aggregate over all fractions.
    pub train_fraction: Option<f64>,
    pub n: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub entries: Vec<SummaryEntry>,
}

/// Means and sample standard deviations of successful rows, per
/// (outcome, strategy, predictor) overall and per training fraction.
pub fn summarize(report: &ExperimentReport) -> Summary {
    type Key = (String, StrategyKind, PredictorKind, Option<u64>);
    let mut groups: BTreeMap<Key, (Vec<f64>, Vec<f64>, Option<f64>)> = BTreeMap::new();
    for r in &report.rows {
        if let (Some(rmse), Some(mae)) = (r.rmse, r.mae) {
            for frac in [None, Some(r.train_fraction)] {
                let key = (r.outcome.clone(), r.strategy, r.predictor, frac.map(f64::to_bits));
                let g = groups.entry(key).or_insert_with(|| (Vec::new(), Vec::new(), frac));
                g.0.push(rmse);
                g.1.push(mae);
            }
        }
    }
    let sd = |v: &[f64]| if v.len() < 2 { 0.0 } else { sample_std(v) };
    let mut entries: Vec<SummaryEntry> = groups
        .into_iter()
        .map(|((outcome, strategy, predictor, _), (rmse, mae, frac))| SummaryEntry {
            outcome,
            strategy,
            predictor,
            train_fraction: frac,
            n: rmse.len(),
            rmse_mean: mean(&rmse),
            rmse_std: sd(&rmse),
            mae_mean: mean(&mae),
            mae_std: sd(&mae),
        })
        .collect();
    entries.sort_by(|a, b| {
        (&a.outcome, a.strategy, a.predictor)
            .cmp(&(&b.outcome, b.strategy, b.predictor))
            .then(a.train_fraction.map_or(-1.0, |f| f).total_cmp(&b.train_fraction.map_or(-1.0, |f| f)))
    });
    Summary { entries }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_report_csv<W: Write>(report: &ExperimentReport, writer: W) -> Result<(), PredictionError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "outcome",
        "strategy",
        "predictor",
        "train_fraction",
        "repeat",
        "rmse",
        "mae",
        "selected_features",
        "l1_lambda",
        "error",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.outcome.clone(),
            r.strategy.to_string(),
            r.predictor.to_string(),
            r.train_fraction.to_string(),
            r.repeat.to_string(),
            opt(r.rmse),
            opt(r.mae),
            r.selected_features.join(";"),
            opt(r.l1_lambda),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write>(summary: &Summary, writer: W) -> Result<(), PredictionError> {
    serde_json::to_writer_pretty(writer, summary)?;
    Ok(())
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], writer: W) -> Result<(), PredictionError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["outcome", "strategy", "epoch", "dev_rmse", "test_rmse"])?;
    for r in rows {
        w.write_record([
            r.outcome.clone(),
            r.strategy.to_string(),
            r.epoch.to_string(),
            r.dev_rmse.to_string(),
            r.test_rmse.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
