use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use urban_causal::dataset::presets::Preset;
use urban_causal::dataset::{load_schema, paper_schema, Schema, SemSpec, SemTruth};
use urban_causal::discovery::TrainConfig;
use urban_causal::effects::EffectsOptions;
use urban_causal::prediction::{CurveConfig, ExperimentConfig};
use urban_causal::FactorMeta;

use crate::error::CliError;

/// Contents of the run config file.
///
/// Every stage seed is derived from the top-level `seed`; seeds inside the
/// stage sections are rejected so there is exactly one source of randomness.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Input table. Defaults to the `data.csv` written by `synth`.
    pub data: Option<PathBuf>,
    /// Schema file, or the literal `paper` for the built-in sixteen factors.
    /// Defaults to the `schema.toml` written by `synth`.
    pub schema: Option<PathBuf>,
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub discover: TrainConfig,
    #[serde(default)]
    pub effects: EffectsOptions,
    #[serde(default)]
    pub predict: ExperimentConfig,
    #[serde(default)]
    pub curve: CurveConfig,
}

fn yes() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: None,
            data: None,
            schema: None,
            standardize: true,
            synth: SynthConfig::default(),
            discover: TrainConfig::default(),
            effects: EffectsOptions::default(),
            predict: ExperimentConfig::default(),
            curve: CurveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub preset: Option<String>,
    /// Seed of the random structure for `paper16-random`.
    pub structure_seed: u64,
    pub n: usize,
    pub graph: Option<InlineGraph>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            preset: None,
            structure_seed: 0,
            n: 1000,
            graph: None,
        }
    }
}

/// A linear-Gaussian SEM given in full.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineGraph {
    pub factor: Vec<FactorMeta>,
    pub adjacency: Vec<Vec<u8>>,
    pub weights: Vec<Vec<f64>>,
    pub noise_std: Vec<f64>,
}

impl SynthConfig {
    pub fn sem(&self) -> Result<SemSpec, CliError> {
        match (&self.preset, &self.graph) {
            (Some(_), Some(_)) => Err(CliError::InvalidGraphSpec("give either a preset or an inline graph, not both".into())),
            (None, Some(g)) => {
                let d = g.factor.len();
                if g.noise_std.len() != d || g.noise_std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return Err(CliError::InvalidGraphSpec(format!("noise_std needs {d} positive values")));
                }
                for (i, row) in g.weights.iter().enumerate() {
                    for (j, w) in row.iter().enumerate() {
                        let on_edge = g.adjacency.get(i).and_then(|r| r.get(j)) == Some(&1);
                        if !w.is_finite() || (*w != 0.0 && !on_edge) {
                            return Err(CliError::InvalidGraphSpec(format!("weight ({i}, {j}) = {w} is off the edge support")));
                        }
                    }
                }
                let truth = SemTruth {
                    factor_names: g.factor.iter().map(|f| f.name.clone()).collect(),
                    dimensions: g.factor.iter().map(|f| f.dimension).collect(),
                    adjacency: g.adjacency.clone(),
                    weights: g.weights.clone(),
                    noise_std: g.noise_std.clone(),
                    n: self.n,
                    seed: 0,
                };
                let spec = truth.spec().map_err(|e| CliError::InvalidGraphSpec(e.to_string()))?;
                if !spec.graph.is_acyclic() {
                    return Err(CliError::InvalidGraphSpec("graph has a directed cycle".into()));
                }
                Ok(spec)
            }
            (preset, None) => {
                let name = preset.as_deref().unwrap_or("chain3");
                let preset = match name.parse::<Preset>().map_err(|e| CliError::InvalidGraphSpec(e.to_string()))? {
                    Preset::Paper16Random { .. } => Preset::Paper16Random {
                        structure_seed: self.structure_seed,
                    },
                    p => p,
                };
                Ok(preset.spec())
            }
        }
    }
}

/// A loaded config with every path made absolute and the seed settled.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub schema: SchemaSource,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchemaSource {
    Paper,
    File(PathBuf),
    /// Whatever `synth` wrote into the output directory.
    Synth(PathBuf),
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub no_standardize: bool,
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
}

pub fn resolve(overrides: &Overrides) -> Result<Resolved, CliError> {
    let (config, base) = match &overrides.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (parse_config(&text)?, base)
        }
        None => (RunConfig::default(), PathBuf::new()),
    };
    let at = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

    let seed = overrides
        .seed
        .or(config.seed)
        .ok_or_else(|| CliError::Validation("no seed: set `seed` in the config or pass --seed".into()))?;
    let out = match (&overrides.out, &config.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => at(o),
        (None, None) => base.join("out"),
    };
    let data = config.data.as_deref().map(at);
    if let Some(d) = &data {
        if !d.is_file() {
            return Err(CliError::Validation(format!("data file {} does not exist", d.display())));
        }
    }
    let schema = match config.schema.as_deref() {
        Some(p) if p == Path::new("paper") => SchemaSource::Paper,
        Some(p) => {
            let p = at(p);
            if !p.is_file() {
                return Err(CliError::Validation(format!("schema file {} does not exist", p.display())));
            }
            SchemaSource::File(p)
        }
        None => SchemaSource::Synth(out.join("schema.toml")),
    };
    if config.discover.seed != 0 || config.predict.seed != 0 || config.predict.mlp.seed != 0 {
        return Err(CliError::Validation("stage seeds are derived from the top-level `seed`; remove them from the sections".into()));
    }
    if config.predict.effects != EffectsOptions::default() {
        return Err(CliError::Validation("set effect options under [effects], not [predict.effects]".into()));
    }
    config.discover.validate()?;
    let standardize = config.standardize && !overrides.no_standardize;
    Ok(Resolved {
        config,
        config_path: overrides.config.clone(),
        seed,
        out,
        data,
        schema,
        standardize,
    })
}

impl Resolved {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.config.discover.clone()
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        let mut c = self.config.predict.clone();
        c.seed = self.seed;
        c.mlp.seed = self.seed;
        c.effects = self.config.effects;
        c
    }

    pub fn load_schema(&self, stage: &'static str) -> Result<Schema, CliError> {
        match &self.schema {
            SchemaSource::Paper => Ok(paper_schema()),
            SchemaSource::File(p) => Ok(load_schema(p)?),
            SchemaSource::Synth(p) => {
                if !p.is_file() {
                    return Err(CliError::MissingStageOutput { stage, path: p.clone() });
                }
                Ok(load_schema(p)?)
            }
        }
    }

    pub fn data_path(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.out.join("data.csv"))
    }
}
