//! Causal analysis of regional factor tables.
//!
//! The pipeline has three stages:
//!
//! 1. [`discovery`] searches for a DAG over the factors with a policy-gradient
//!    agent that samples adjacency matrices and is rewarded with the negative
//!    BIC score minus an acyclicity penalty.
//! 2. [`effects`] estimates a deconfounded average treatment effect for every
//!    edge by quantile treatment levels, an ordinal-regression propensity
//!    score and nearest-neighbour matching.
//! 3. [`prediction`] uses the significant part of the graph to choose inputs
//!    for small-sample outcome prediction and compares that against
//!    correlation- and L1-based selection.
//!
//! [`dataset`] handles ingestion, standardization, quantile treatment levels,
//! correlation diagnostics and synthetic linear-Gaussian data.

pub mod dataset;
pub mod discovery;
pub mod effects;
pub mod graph;
pub mod linalg;
pub mod prediction;
pub mod stats;

pub use dataset::{Dimension, FactorMeta, FactorTable, TreatmentAssignment};
pub use graph::{CausalGraph, GraphError};
