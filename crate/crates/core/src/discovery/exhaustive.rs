//! Brute-force BIC optimum for desk-scale factor counts.

use super::bic::BicScorer;
use super::DiscoveryError;
use crate::dataset::FactorTable;
use crate::graph::{has_topological_order, CausalGraph};

pub const MAX_EXHAUSTIVE_FACTORS: usize = 5;

/// Scores within this relative band of the minimum count as tied.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ExhaustiveResult {
    pub graph: CausalGraph,
    pub score: f64,
    /// Number of DAGs scored.
    pub candidates: usize,
}

/// Every DAG over `names`, in increasing order of the row-major adjacency
/// bit string.
pub fn enumerate_dags(names: &[String]) -> Vec<CausalGraph> {
    let d = names.len();
    let mut out = Vec::new();
    for_each_dag(d, |adj| {
        let rows: Vec<Vec<u8>> = (0..d)
            .map(|i| (0..d).map(|j| adj[i * d + j] as u8).collect())
            .collect();
        out.push(CausalGraph::from_adjacency(names.to_vec(), &rows).expect("valid adjacency"));
    });
    out
}

fn for_each_dag(d: usize, mut visit: impl FnMut(&[bool])) {
    let slots: Vec<usize> = (0..d * d).filter(|k| k / d != k % d).collect();
    let width = slots.len();
    let mut adj = vec![false; d * d];
    for mask in 0u64..(1u64 << width) {
        // The first slot is the most significant bit, so masks ascend in
        // lexicographic bit-string order.
        for (t, &slot) in slots.iter().enumerate() {
            adj[slot] = (mask >> (width - 1 - t)) & 1 == 1;
        }
        if has_topological_order(d, &adj) {
            visit(&adj);
        }
    }
}

/// Minimum-BIC DAG on `table`. Among graphs within a `1e-9` relative band of
/// the minimum, the lexicographically smallest adjacency bit string wins.
pub fn exhaustive_search(table: &FactorTable) -> Result<ExhaustiveResult, DiscoveryError> {
    exhaustive_search_with(&BicScorer::new(table), &table.names())
}

pub fn exhaustive_search_with(
    scorer: &BicScorer,
    names: &[String],
) -> Result<ExhaustiveResult, DiscoveryError> {
    let d = names.len();
    if d != scorer.d() {
        return Err(DiscoveryError::DimensionMismatch(format!(
            "{} names for {} scored factors",
            d,
            scorer.d()
        )));
    }
    if d > MAX_EXHAUSTIVE_FACTORS {
        return Err(DiscoveryError::TooManyFactors {
            d,
            max: MAX_EXHAUSTIVE_FACTORS,
        });
    }

    // Node terms for every (node, parent subset).
    let mut terms = vec![vec![0.0; 1 << d]; d];
    for (j, row) in terms.iter_mut().enumerate() {
        for (mask, slot) in row.iter_mut().enumerate() {
            if mask & (1 << j) == 0 {
                let parents: Vec<usize> = (0..d).filter(|&i| mask & (1 << i) != 0).collect();
                *slot = scorer.node_term(j, &parents);
            }
        }
    }

    let mut scored: Vec<(Vec<bool>, f64)> = Vec::new();
    for_each_dag(d, |adj| {
        let score = (0..d)
            .map(|j| {
                let mask = (0..d).filter(|&i| adj[i * d + j]).fold(0usize, |m, i| m | (1 << i));
                terms[j][mask]
            })
            .sum();
        scored.push((adj.to_vec(), score));
    });

    let min = scored.iter().map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
    let band = TIE_TOLERANCE * min.abs().max(1.0);
    let (adj, score) = scored
        .iter()
        .find(|(_, s)| *s <= min + band)
        .cloned()
        .expect("the empty graph is always a DAG");
    let rows: Vec<Vec<u8>> = (0..d)
        .map(|i| (0..d).map(|j| adj[i * d + j] as u8).collect())
        .collect();
    let graph = CausalGraph::from_adjacency(names.to_vec(), &rows)?.finalize()?;
    Ok(ExhaustiveResult {
        graph,
        score,
        candidates: scored.len(),
    })
}
