//! Structure learning: BIC scoring, an exhaustive oracle for small factor
//! counts, and a policy-gradient search over adjacency matrices.

mod acyclicity;
pub mod bic;
pub mod exhaustive;
pub mod policy;
mod train;

use thiserror::Error;

use crate::graph::GraphError;

pub use acyclicity::acyclicity_penalty;
pub use bic::{bic_score, BicScorer, CachedScorer};
pub use exhaustive::{enumerate_dags, exhaustive_search, ExhaustiveResult, MAX_EXHAUSTIVE_FACTORS};
pub use train::{
    encoder_state, episode_reward, sample_graph, surrogate_logit_grad, surrogate_loss,
    train_discovery, DiscoveryResult, EpisodeRecord, SampledGraph, TrainConfig, BASELINE_DECAY,
    GRAD_CLIP,
};

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{d} factors exceeds the limit of {max}")]
    TooManyFactors { d: usize, max: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
