use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acyclicity::acyclicity_penalty;
use super::bic::{check_names, BicScorer, CachedScorer};
use super::policy::{backward, decode_edge_logits, encode_with_cache, PolicyParams};
use super::DiscoveryError;
use crate::dataset::FactorTable;
use crate::graph::{CausalGraph, MAX_FACTORS};
use crate::stats::{log_sigmoid, sigmoid};

/// Decay of the critic's moving-average baseline.
pub const BASELINE_DECAY: f64 = 0.99;
/// Gradient norm clip applied before every update.
pub const GRAD_CLIP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight on the acyclicity penalty; `None` means `10 · n`.
    pub lambda_acyc: Option<f64>,
    pub minibatch_rows: usize,
    pub hidden_width: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 2000,
            batch_size: 64,
            learning_rate: 1e-3,
            lambda_acyc: None,
            minibatch_rows: 128,
            hidden_width: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DiscoveryError> {
        let bad = |what: &str| Err(DiscoveryError::InvalidConfig(what.to_string()));
        if self.episodes == 0 {
            return bad("episodes must be at least 1");
        }
        if self.batch_size == 0 || self.minibatch_rows == 0 || self.hidden_width == 0 {
            return bad("batch_size, minibatch_rows and hidden_width must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if let Some(l) = self.lambda_acyc {
            if !(l > 0.0 && l.is_finite()) {
                return bad("lambda_acyc must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub mean_reward: f64,
    pub best_score: f64,
}

#[derive(Debug, Clone)]
pub struct DiscoveryResult {
    pub best_graph: CausalGraph,
    pub best_score: f64,
    pub reward_history: Vec<EpisodeRecord>,
    pub episodes_run: usize,
}

/// A sampled adjacency and its log-probability under the policy.
#[derive(Debug, Clone)]
pub struct SampledGraph {
    pub graph: CausalGraph,
    pub log_prob: f64,
}

/// Draws every off-diagonal edge independently with probability
/// `sigmoid(logit)`.
pub fn sample_graph<R: Rng + ?Sized>(
    logits: &DMatrix<f64>,
    names: &[String],
    rng: &mut R,
) -> Result<SampledGraph, DiscoveryError> {
    let d = names.len();
    if logits.shape() != (d, d) {
        return Err(DiscoveryError::ShapeMismatch(format!(
            "logits are {}x{}, expected {d}x{d}",
            logits.nrows(),
            logits.ncols()
        )));
    }
    let mut graph = CausalGraph::empty(names.to_vec())?;
    let mut log_prob = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let l = logits[(i, j)];
            let u: f64 = rng.random();
            if u < sigmoid(l) {
                graph.set_edge(i, j, true);
                log_prob += log_sigmoid(l);
            } else {
                log_prob += log_sigmoid(-l);
            }
        }
    }
    Ok(SampledGraph { graph, log_prob })
}

/// `−BIC − λ · penalty`.
pub fn episode_reward(
    graph: &CausalGraph,
    table: &FactorTable,
    lambda_acyc: f64,
) -> Result<f64, DiscoveryError> {
    check_names(graph, table)?;
    let score = BicScorer::new(table).score(graph);
    Ok(combine_reward(score, acyclicity_penalty(graph.adjacency(), graph.d()), lambda_acyc))
}

fn combine_reward(score: f64, penalty: f64, lambda_acyc: f64) -> f64 {
    if penalty == 0.0 {
        -score
    } else {
        -score - lambda_acyc * penalty
    }
}

/// `−(1/B) Σ_b A_b · log π(U_b)`: its gradient is the REINFORCE estimate.
pub fn surrogate_loss(logits: &DMatrix<f64>, batch: &[(&CausalGraph, f64)]) -> f64 {
    let d = logits.nrows();
    let mut total = 0.0;
    for (g, adv) in batch {
        let mut lp = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    let l = logits[(i, j)];
                    lp += if g.has_edge(i, j) { log_sigmoid(l) } else { log_sigmoid(-l) };
                }
            }
        }
        total += adv * lp;
    }
    -total / batch.len() as f64
}

/// Gradient of [`surrogate_loss`] with respect to the logits.
pub fn surrogate_logit_grad(logits: &DMatrix<f64>, batch: &[(&CausalGraph, f64)]) -> DMatrix<f64> {
    let d = logits.nrows();
    let b = batch.len() as f64;
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            return 0.0;
        }
        let p = sigmoid(logits[(i, j)]);
        -batch
            .iter()
            .map(|(g, adv)| adv * (g.has_edge(i, j) as u8 as f64 - p))
            .sum::<f64>()
            / b
    })
}

/// Fixed random subset of rows fed to the encoder.
pub fn encoder_state<R: Rng + ?Sized>(table: &FactorTable, rows: usize, rng: &mut R) -> DMatrix<f64> {
    let m = rows.min(table.n());
    let mut picked = index::sample(rng, table.n(), m).into_vec();
    picked.sort_unstable();
    table.values().select_rows(&picked)
}

/// Trains the policy with REINFORCE against a moving-average baseline and
/// returns the best acyclic graph sampled.
///
/// The tracker starts from the empty graph, so the result never scores worse
/// than it.
pub fn train_discovery(
    table: &FactorTable,
    config: &TrainConfig,
) -> Result<DiscoveryResult, DiscoveryError> {
    config.validate()?;
    let d = table.d();
    if d > MAX_FACTORS {
        return Err(DiscoveryError::TooManyFactors { d, max: MAX_FACTORS });
    }
    let names = table.names();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let state = encoder_state(table, config.minibatch_rows, &mut rng);
    let mut params = PolicyParams::init(state.nrows(), config.hidden_width, &mut rng);
    let lambda = config.lambda_acyc.unwrap_or(10.0 * table.n() as f64);

    let scorer = BicScorer::new(table);
    let mut cache = CachedScorer::new(&scorer);
    let mut best_graph = CausalGraph::empty(names.clone())?;
    let mut best_score = cache.score(&best_graph);
    let mut history = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        let enc = encode_with_cache(&state, &params)?;
        let logits = decode_edge_logits(enc.embeddings(), &params)?;

        let mut samples = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let sampled = sample_graph(&logits, &names, &mut rng)?;
            let score = cache.score(&sampled.graph);
            let penalty = acyclicity_penalty(sampled.graph.adjacency(), d);
            if penalty == 0.0 && score < best_score {
                best_score = score;
                best_graph = sampled.graph.clone();
            }
            samples.push((sampled.graph, combine_reward(score, penalty, lambda)));
        }
        let mean_reward = samples.iter().map(|(_, r)| r).sum::<f64>() / samples.len() as f64;
        if episode == 0 {
            params.baseline = mean_reward;
        }
        let batch: Vec<(&CausalGraph, f64)> =
            samples.iter().map(|(g, r)| (g, r - params.baseline)).collect();
        params.baseline = BASELINE_DECAY * params.baseline + (1.0 - BASELINE_DECAY) * mean_reward;

        let dlogits = surrogate_logit_grad(&logits, &batch);
        let grad = backward(&state, &params, &enc, &dlogits).to_flat();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let step = if norm > GRAD_CLIP {
            config.learning_rate * GRAD_CLIP / norm
        } else {
            config.learning_rate
        };
        let updated: Vec<f64> = params.to_flat().iter().zip(&grad).map(|(p, g)| p - step * g).collect();
        params.set_flat(&updated);
        if !params.is_finite() {
            return Err(DiscoveryError::NonFinite(format!("policy parameters at episode {episode}")));
        }

        history.push(EpisodeRecord {
            episode,
            mean_reward,
            best_score,
        });
    }

    Ok(DiscoveryResult {
        best_graph: best_graph.finalize()?,
        best_score,
        reward_history: history,
        episodes_run: config.episodes,
    })
}
