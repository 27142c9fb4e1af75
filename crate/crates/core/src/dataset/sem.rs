//! Linear-Gaussian structural equation models for synthetic tables.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DatasetError, Dimension, FactorMeta, FactorTable};
use crate::graph::CausalGraph;

/// Draws `n` rows from `X_j = Σ_{i→j} w_ij X_i + ε_j`, `ε_j ~ N(0, σ_j²)`.
///
/// Columns are generated in topological order; the noise for column `j` is
/// drawn as one contiguous block, so the output is a pure function of the
/// arguments. Factor dimensions default to `Citizens`.
pub fn generate_synthetic_sem(
    graph: &CausalGraph,
    weights: &DMatrix<f64>,
    noise_std: &[f64],
    n: usize,
    seed: u64,
) -> Result<FactorTable, DatasetError> {
    let d = graph.d();
    if weights.shape() != (d, d) {
        return Err(DatasetError::DimensionMismatch(format!(
            "weights are {}x{}, graph has {d} factors",
            weights.nrows(),
            weights.ncols()
        )));
    }
    if noise_std.len() != d {
        return Err(DatasetError::DimensionMismatch(format!(
            "{} noise scales for {d} factors",
            noise_std.len()
        )));
    }
    if noise_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(DatasetError::DimensionMismatch("noise scales must be finite and non-negative".into()));
    }
    for i in 0..d {
        for j in 0..d {
            if !graph.has_edge(i, j) && weights[(i, j)] != 0.0 {
                return Err(DatasetError::DimensionMismatch(format!(
                    "weight ({i}, {j}) is nonzero but the graph has no such edge"
                )));
            }
        }
    }
    let order = graph.topological_order().map_err(|_| DatasetError::CyclicGraph)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = DMatrix::<f64>::zeros(n, d);
    for &j in &order {
        let parents = graph.parents(j);
        for r in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut v = noise_std[j] * z;
            for &p in &parents {
                v += weights[(p, j)] * values[(r, p)];
            }
            values[(r, j)] = v;
        }
    }
    let meta = graph
        .names()
        .iter()
        .map(|name| FactorMeta::new(name.clone(), Dimension::Citizens))
        .collect();
    let ids = (0..n).map(|i| format!("r{i:05}")).collect();
    FactorTable::new(values, meta, ids)
}

/// Everything needed to regenerate a synthetic table.
#[derive(Debug, Clone, PartialEq)]
pub struct SemSpec {
    pub graph: CausalGraph,
    pub weights: DMatrix<f64>,
    pub noise_std: Vec<f64>,
    pub dimensions: Vec<Dimension>,
}

impl SemSpec {
    pub fn generate(&self, n: usize, seed: u64) -> Result<FactorTable, DatasetError> {
        let t = generate_synthetic_sem(&self.graph, &self.weights, &self.noise_std, n, seed)?;
        if self.dimensions.len() != t.d() {
            return Err(DatasetError::DimensionMismatch("one dimension per factor".into()));
        }
        let meta = t
            .meta()
            .iter()
            .zip(&self.dimensions)
            .map(|(m, &dim)| FactorMeta::new(m.name.clone(), dim))
            .collect();
        FactorTable::new(t.values().clone(), meta, t.region_ids().to_vec())
    }

    /// Population covariance `(I − W)^{-T} D (I − W)^{-1}` for row-vector
    /// samples `x = x W + ε`.
    pub fn analytic_covariance(&self) -> DMatrix<f64> {
        let d = self.graph.d();
        let a = DMatrix::<f64>::identity(d, d) - &self.weights;
        let inv = a.try_inverse().expect("I - W is unit triangular up to permutation for a DAG");
        let noise = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            d,
            self.noise_std.iter().map(|s| s * s),
        ));
        inv.transpose() * noise * inv
    }

    pub fn truth(&self, n: usize, seed: u64) -> SemTruth {
        SemTruth {
            factor_names: self.graph.names().to_vec(),
            dimensions: self.dimensions.clone(),
            adjacency: self.graph.adjacency_rows(),
            weights: (0..self.graph.d())
                .map(|i| self.weights.row(i).iter().copied().collect())
                .collect(),
            noise_std: self.noise_std.clone(),
            n,
            seed,
        }
    }
}

/// Sidecar describing how a synthetic table was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemTruth {
    pub factor_names: Vec<String>,
    pub dimensions: Vec<Dimension>,
    pub adjacency: Vec<Vec<u8>>,
    pub weights: Vec<Vec<f64>>,
    pub noise_std: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

impl SemTruth {
    pub fn spec(&self) -> Result<SemSpec, DatasetError> {
        let graph = CausalGraph::from_adjacency(self.factor_names.clone(), &self.adjacency)
            .map_err(|e| DatasetError::InvalidTable(e.to_string()))?;
        let d = graph.d();
        if self.weights.len() != d || self.weights.iter().any(|r| r.len() != d) {
            return Err(DatasetError::DimensionMismatch("weights must be d x d".into()));
        }
        let flat: Vec<f64> = self.weights.iter().flatten().copied().collect();
        Ok(SemSpec {
            graph,
            weights: DMatrix::from_row_slice(d, d, &flat),
            noise_std: self.noise_std.clone(),
            dimensions: self.dimensions.clone(),
        })
    }
}
