use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use urban_causal::dataset::{load_factor_table, standardize, write_factor_table, write_schema, Schema};
use urban_causal::discovery::train_discovery;
use urban_causal::effects::{
    estimate_all_effects, read_effects_json, write_balance_csv, write_effects_json, write_significance_csv, AteResult,
};
use urban_causal::graph::GraphJson;
use urban_causal::prediction::{
    epoch_curves, run_experiment, summarize, write_curve_csv, write_report_csv, write_summary_json, PredictorKind,
};
use urban_causal::{CausalGraph, Dimension, FactorTable};

use crate::config::Resolved;
use crate::error::CliError;
use crate::report;

/// What a stage read and wrote, for the manifest.
#[derive(Debug, Default)]
pub struct StageFiles {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub notes: Vec<String>,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn require(stage: &'static str, path: PathBuf) -> Result<PathBuf, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingStageOutput { stage, path })
    }
}

fn load_table(run: &Resolved, stage: &'static str, files: &mut StageFiles) -> Result<FactorTable, CliError> {
    let schema = run.load_schema(stage)?;
    let path = run.data_path();
    if run.data.is_none() {
        require(stage, path.clone())?;
    }
    files.inputs.push(path.clone());
    let loaded = load_factor_table(&path, &schema)?;
    if loaded.dropped_rows > 0 {
        files.notes.push(format!("dropped {} rows with missing values", loaded.dropped_rows));
    }
    Ok(if run.standardize {
        standardize(&loaded.table)?
    } else {
        loaded.table
    })
}

fn load_graph(run: &Resolved, stage: &'static str, files: &mut StageFiles) -> Result<GraphJson, CliError> {
    let path = require(stage, run.out.join("graph.json"))?;
    files.inputs.push(path.clone());
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_effects(run: &Resolved, stage: &'static str, files: &mut StageFiles) -> Result<Vec<AteResult>, CliError> {
    let path = require(stage, run.out.join("effects.json"))?;
    files.inputs.push(path.clone());
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(read_effects_json(file)?)
}

fn prepare_out(run: &Resolved) -> Result<(), CliError> {
    fs::create_dir_all(&run.out).map_err(|e| CliError::io(&run.out, e))
}

/// Synthetic table, its generating truth and the matching schema.
pub fn synth(run: &Resolved) -> Result<StageFiles, CliError> {
    let mut files = StageFiles::default();
    let cfg = &run.config.synth;
    let spec = cfg.sem()?;
    let table = spec.generate(cfg.n, run.seed)?;
    prepare_out(run)?;

    let data = run.out.join("data.csv");
    let mut w = create(&data)?;
    write_factor_table(&table, &mut w)?;
    finish(w, &data)?;

    let truth = run.out.join("truth.json");
    write_text(&truth, &(serde_json::to_string_pretty(&spec.truth(cfg.n, run.seed))? + "\n"))?;

    let schema = run.out.join("schema.toml");
    write_schema(&Schema { factor: table.meta().to_vec() }, &schema)?;
    files.outputs.extend([data, truth, schema]);
    Ok(files)
}

pub fn discover(run: &Resolved) -> Result<StageFiles, CliError> {
    let mut files = StageFiles::default();
    let table = load_table(run, "discover", &mut files)?;
    let cfg = run.train_config();
    let result = train_discovery(&table, &cfg)?;
    prepare_out(run)?;

    let graph = run.out.join("graph.json");
    let doc = GraphJson::from_graph(&result.best_graph, result.best_score, run.seed);
    write_text(&graph, &(serde_json::to_string_pretty(&doc)? + "\n"))?;

    let dot = run.out.join("graph.dot");
    write_text(&dot, &result.best_graph.to_dot())?;

    let rewards = run.out.join("reward_history.csv");
    let mut w = csv::Writer::from_writer(create(&rewards)?);
    for rec in &result.reward_history {
        w.serialize(rec)?;
    }
    w.flush().map_err(|e| CliError::io(&rewards, e))?;
    files.outputs.extend([graph, dot, rewards]);
    Ok(files)
}

pub fn effects(run: &Resolved) -> Result<StageFiles, CliError> {
    let mut files = StageFiles::default();
    let table = load_table(run, "effects", &mut files)?;
    let graph = load_graph(run, "effects", &mut files)?.to_graph()?;
    let report = estimate_all_effects(&graph, &table, &run.config.effects)?;
    for f in &report.failures {
        files.notes.push(format!("{} -> {}: {}", f.treatment, f.outcome, f.error));
    }

    let effects = run.out.join("effects.json");
    let mut w = create(&effects)?;
    write_effects_json(&report.results, &mut w)?;
    w.write_all(b"\n").map_err(|e| CliError::io(&effects, e))?;
    finish(w, &effects)?;

    let sig = run.out.join("significance_matrix.csv");
    let mut w = create(&sig)?;
    write_significance_csv(&table.names(), &report.results, &mut w)?;
    finish(w, &sig)?;

    let balance = run.out.join("balance.csv");
    let mut w = create(&balance)?;
    write_balance_csv(&report.balance, &mut w)?;
    finish(w, &balance)?;
    files.outputs.extend([effects, sig, balance]);
    Ok(files)
}

pub fn predict(run: &Resolved) -> Result<StageFiles, CliError> {
    let mut files = StageFiles::default();
    let table = load_table(run, "predict", &mut files)?;
    let graph = load_graph(run, "predict", &mut files)?.to_graph()?;
    // Full-data effects are a prerequisite; the experiment re-estimates them
    // on each training split.
    load_effects(run, "predict", &mut files)?;

    let mut cfg = run.experiment_config();
    if cfg.outcomes.is_empty() {
        cfg.outcomes = table
            .meta()
            .iter()
            .filter(|m| m.dimension == Dimension::Mobility)
            .map(|m| m.name.clone())
            .collect();
    }
    if cfg.outcomes.is_empty() {
        return Err(CliError::Validation("the table has no Mobility factor to predict".into()));
    }
    let report = run_experiment(&table, &graph, &cfg)?;
    for row in report.rows.iter().filter(|r| r.error.is_some()) {
        files.notes.push(format!(
            "{} {} {} fraction {} repeat {}: {}",
            row.outcome,
            row.strategy,
            row.predictor,
            row.train_fraction,
            row.repeat,
            row.error.as_deref().unwrap_or_default()
        ));
    }

    let experiment = run.out.join("experiment.csv");
    let mut w = create(&experiment)?;
    write_report_csv(&report, &mut w)?;
    finish(w, &experiment)?;

    let summary = run.out.join("summary.json");
    let mut w = create(&summary)?;
    write_summary_json(&summarize(&report), &mut w)?;
    w.write_all(b"\n").map_err(|e| CliError::io(&summary, e))?;
    finish(w, &summary)?;
    files.outputs.extend([experiment, summary]);

    if cfg.predictors.contains(&PredictorKind::Mlp) {
        let rows = epoch_curves(&table, &graph, &cfg, &run.config.curve)?;
        let curve = run.out.join("epoch_curve.csv");
        let mut w = create(&curve)?;
        write_curve_csv(&rows, &mut w)?;
        finish(w, &curve)?;
        files.outputs.push(curve);
    }
    Ok(files)
}

pub fn report(run: &Resolved) -> Result<StageFiles, CliError> {
    let mut files = StageFiles::default();
    let doc = load_graph(run, "report", &mut files)?;
    let graph: CausalGraph = doc.to_graph()?;
    let effects = load_effects(run, "report", &mut files)?;

    let balance_path = run.out.join("balance.csv");
    let balance = if balance_path.is_file() {
        files.inputs.push(balance_path.clone());
        Some(report::read_balance_csv(&balance_path)?)
    } else {
        None
    };
    let summary_path = run.out.join("summary.json");
    let summary = if summary_path.is_file() {
        files.inputs.push(summary_path.clone());
        let text = fs::read_to_string(&summary_path).map_err(|e| CliError::io(&summary_path, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };

    let md = run.out.join("summary.md");
    write_text(&md, &report::render_markdown(&graph, doc.bic, &effects, balance.as_deref(), summary.as_ref())?)?;
    files.outputs.push(md);
    if let Some(s) = &summary {
        let csv_path = run.out.join("summary.csv");
        let mut w = create(&csv_path)?;
        report::write_prediction_grid(s, &mut w)?;
        finish(w, &csv_path)?;
        files.outputs.push(csv_path);
    }
    Ok(files)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StageRecord {
    config: Option<PathBuf>,
    seed: u64,
    standardize: bool,
    version: String,
    started_unix_secs: u64,
    wall_time_secs: f64,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    notes: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Manifest {
    stages: BTreeMap<String, StageRecord>,
}

/// Runs one stage and records it in `manifest.json`, the only output that
/// carries timestamps.
pub fn run_stage(
    name: &str,
    run: &Resolved,
    stage: fn(&Resolved) -> Result<StageFiles, CliError>,
) -> Result<(), CliError> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let files = stage(run)?;
    let path = run.out.join("manifest.json");
    let mut manifest: Manifest = fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or_default();
    manifest.stages.insert(
        name.to_string(),
        StageRecord {
            config: run.config_path.clone(),
            seed: run.seed,
            standardize: run.standardize,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_secs: started,
            wall_time_secs: clock.elapsed().as_secs_f64(),
            inputs: files.inputs,
            outputs: files.outputs,
            notes: files.notes,
        },
    );
    write_text(&path, &(serde_json::to_string_pretty(&manifest)? + "\n"))
}
