use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::DiscoveryError;
use crate::dataset::FactorTable;
use crate::graph::CausalGraph;
use crate::linalg::solve_psd;

/// Ridge added to singular parent covariances.
pub const SINGULAR_RIDGE: f64 = 1e-8;
/// Floor on the explained-variance ratio, keeping exact fits finite.
const MIN_RESIDUAL_RATIO: f64 = 1e-12;

/// Gaussian BIC with per-node free variance, scored from the sample
/// covariance.
///
/// The node term is `n · ln(RSS_j / SST_j) + |pa(j)| · ln n`, where `RSS_j`
/// is the residual sum of squares of the least-squares regression of `j` on
/// its parents plus intercept and `SST_j` its total sum of squares. On
/// standardized data `SST_j = n`, so this equals `n · ln(RSS_j / n) + k ln n`
/// and the empty graph scores exactly zero.
#[derive(Debug, Clone)]
pub struct BicScorer {
    n: usize,
    ln_n: f64,
    cov: DMatrix<f64>,
}

impl BicScorer {
    pub fn new(table: &FactorTable) -> Self {
        Self::from_data(table.values())
    }

    /// Builds the scorer from an n×d data matrix.
    pub fn from_data(data: &DMatrix<f64>) -> Self {
        let (n, d) = data.shape();
        let means: Vec<f64> = (0..d).map(|j| data.column(j).sum() / n as f64).collect();
        let centered = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - means[j]);
        let cov = (centered.transpose() * &centered) / n as f64;
        Self {
            n,
            ln_n: (n as f64).ln(),
            cov,
        }
    }

    pub fn d(&self) -> usize {
        self.cov.nrows()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Contribution of node `j` with the given parents.
    pub fn node_term(&self, j: usize, parents: &[usize]) -> f64 {
        if parents.is_empty() {
            return 0.0;
        }
        let c_jj = self.cov[(j, j)];
        let c_pp = DMatrix::from_fn(parents.len(), parents.len(), |a, b| {
            self.cov[(parents[a], parents[b])]
        });
        let c_pj = DVector::from_iterator(parents.len(), parents.iter().map(|&p| self.cov[(p, j)]));
        let beta = solve_psd(&c_pp, &c_pj, SINGULAR_RIDGE);
        let resid = c_jj - c_pj.dot(&beta);
        let ratio = if c_jj > 0.0 { resid / c_jj } else { 1.0 };
        self.n as f64 * ratio.max(MIN_RESIDUAL_RATIO).ln() + parents.len() as f64 * self.ln_n
    }

    pub fn score(&self, graph: &CausalGraph) -> f64 {
        (0..graph.d()).map(|j| self.node_term(j, &graph.parents(j))).sum()
    }
}

/// Memoizes node terms by `(node, parent mask)`.
#[derive(Debug)]
pub struct CachedScorer<'a> {
    scorer: &'a BicScorer,
    cache: HashMap<(usize, u64), f64>,
}

impl<'a> CachedScorer<'a> {
    pub fn new(scorer: &'a BicScorer) -> Self {
        Self {
            scorer,
            cache: HashMap::new(),
        }
    }

    pub fn score(&mut self, graph: &CausalGraph) -> f64 {
        (0..graph.d())
            .map(|j| {
                let mask = graph.parent_mask(j);
                *self
                    .cache
                    .entry((j, mask))
                    .or_insert_with(|| self.scorer.node_term(j, &mask_to_indices(mask)))
            })
            .sum()
    }
}

pub(crate) fn mask_to_indices(mask: u64) -> Vec<usize> {
    (0..64).filter(|&i| mask & (1 << i) != 0).collect()
}

/// BIC of `graph` on `table`; cyclic graphs are scored node by node too.
pub fn bic_score(graph: &CausalGraph, table: &FactorTable) -> Result<f64, DiscoveryError> {
    check_names(graph, table)?;
    Ok(BicScorer::new(table).score(graph))
}

pub(crate) fn check_names(graph: &CausalGraph, table: &FactorTable) -> Result<(), DiscoveryError> {
    if graph.d() != table.d() {
        return Err(DiscoveryError::DimensionMismatch(format!(
            "graph has {} factors, table has {}",
            graph.d(),
            table.d()
        )));
    }
    Ok(())
}
