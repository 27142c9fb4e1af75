//! Region-by-factor tables: ingestion, standardization, treatment levels,
//! correlation diagnostics and synthetic data.

mod io;
pub mod presets;
mod sem;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

pub use io::{
    load_factor_table, load_schema, paper_schema, read_factor_table, write_factor_table,
    write_schema, LoadedTable, Schema,
};
pub use sem::{generate_synthetic_sem, SemSpec, SemTruth};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("column `{0}` is missing from the input")]
    MissingColumn(String),
    #[error("non-numeric value `{value}` at data row {row}, column `{col}`")]
    NonNumericCell { row: usize, col: String, value: String },
    #[error("no valid rows remain after dropping rows with missing values")]
    EmptyTable,
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("need at least {k} rows for {k} quantile levels, got {n}")]
    TooFewRows { n: usize, k: usize },
    #[error("invalid number of levels {0} (need at least 2)")]
    InvalidLevels(usize),
    #[error("graph must be acyclic")]
    CyclicGraph,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("duplicate region id `{0}`")]
    DuplicateRegion(String),
    #[error("duplicate factor name `{0}`")]
    DuplicateFactor(String),
    #[error("invalid table: {0}")]
    InvalidTable(String),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Which part of the urban system a factor describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Citizens,
    Locations,
    Mobility,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Dimension::Citizens => "Citizens",
            Dimension::Locations => "Locations",
            Dimension::Mobility => "Mobility",
        };
        f.write_str(s)
    }
}

impl FromStr for Dimension {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "citizens" => Ok(Dimension::Citizens),
            "locations" => Ok(Dimension::Locations),
            "mobility" => Ok(Dimension::Mobility),
            _ => Err(DatasetError::Schema(format!("unknown dimension `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorMeta {
    pub name: String,
    pub dimension: Dimension,
    #[serde(default)]
    pub description: String,
}

impl FactorMeta {
    pub fn new(name: impl Into<String>, dimension: Dimension) -> Self {
        Self {
            name: name.into(),
            dimension,
            description: String::new(),
        }
    }
}

/// An immutable n×d table of finite values, one row per region.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    values: DMatrix<f64>,
    meta: Vec<FactorMeta>,
    region_ids: Vec<String>,
}

impl FactorTable {
    pub fn new(
        values: DMatrix<f64>,
        meta: Vec<FactorMeta>,
        region_ids: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let (n, d) = values.shape();
        if n == 0 {
            return Err(DatasetError::EmptyTable);
        }
        if n < 2 || d < 2 {
            return Err(DatasetError::InvalidTable(format!(
                "need at least 2 rows and 2 factors, got {n}x{d}"
            )));
        }
        if meta.len() != d {
            return Err(DatasetError::DimensionMismatch(format!(
                "{} factor descriptions for {d} columns",
                meta.len()
            )));
        }
        if region_ids.len() != n {
            return Err(DatasetError::DimensionMismatch(format!(
                "{} region ids for {n} rows",
                region_ids.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::InvalidTable("non-finite value".into()));
        }
        let mut names = HashSet::new();
        for m in &meta {
            if !names.insert(m.name.as_str()) {
                return Err(DatasetError::DuplicateFactor(m.name.clone()));
            }
        }
        let mut ids = HashSet::new();
        for r in &region_ids {
            if !ids.insert(r.as_str()) {
                return Err(DatasetError::DuplicateRegion(r.clone()));
            }
        }
        Ok(Self {
            values,
            meta,
            region_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn meta(&self) -> &[FactorMeta] {
        &self.meta
    }

    pub fn names(&self) -> Vec<String> {
        self.meta.iter().map(|m| m.name.clone()).collect()
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.meta.iter().position(|m| m.name == name)
    }

    /// Copy restricted to the given rows (in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> Result<FactorTable, DatasetError> {
        let values = self.values.select_rows(rows);
        let ids = rows.iter().map(|&i| self.region_ids[i].clone()).collect();
        FactorTable::new(values, self.meta.clone(), ids)
    }

    /// n×|cols| matrix of the given columns.
    pub fn columns_matrix(&self, cols: &[usize]) -> DMatrix<f64> {
        self.values.select_columns(cols)
    }
}

/// Per-column affine z-score transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnScaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ColumnScaler {
    /// Fits population (1/n) means and standard deviations.
    pub fn fit(values: &DMatrix<f64>, names: &[String]) -> Result<Self, DatasetError> {
        let n = values.nrows();
        let mut means = Vec::with_capacity(values.ncols());
        let mut stds = Vec::with_capacity(values.ncols());
        for j in 0..values.ncols() {
            let col = &values.as_slice()[j * n..(j + 1) * n];
            let m = stats::mean(col);
            let s = stats::population_std(col);
            if !(s > 1e-12 * (1.0 + m.abs())) {
                return Err(DatasetError::ZeroVariance(
                    names.get(j).cloned().unwrap_or_else(|| j.to_string()),
                ));
            }
            means.push(m);
            stds.push(s);
        }
        Ok(Self { means, stds })
    }

    pub fn transform(&self, values: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = values.clone();
        for j in 0..out.ncols() {
            for i in 0..out.nrows() {
                out[(i, j)] = (out[(i, j)] - self.means[j]) / self.stds[j];
            }
        }
        out
    }
}

/// Z-scores every column with the population standard deviation.
pub fn standardize(table: &FactorTable) -> Result<FactorTable, DatasetError> {
    let scaler = ColumnScaler::fit(&table.values, &table.names())?;
    Ok(FactorTable {
        values: scaler.transform(&table.values),
        meta: table.meta.clone(),
        region_ids: table.region_ids.clone(),
    })
}

/// Ordinal treatment levels `1..=k` for every region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentAssignment {
    pub levels: Vec<usize>,
    pub k: usize,
    pub factor_index: Option<usize>,
}

impl TreatmentAssignment {
    pub fn from_levels(levels: Vec<usize>, k: usize) -> Result<Self, DatasetError> {
        if k < 2 {
            return Err(DatasetError::InvalidLevels(k));
        }
        if let Some(bad) = levels.iter().find(|&&l| l == 0 || l > k) {
            return Err(DatasetError::InvalidTable(format!("level {bad} outside 1..={k}")));
        }
        Ok(Self {
            levels,
            k,
            factor_index: None,
        })
    }

    pub fn n(&self) -> usize {
        self.levels.len()
    }

    /// Number of regions at each level; index 0 is level 1.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &l in &self.levels {
            c[l - 1] += 1;
        }
        c
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.levels.iter().map(|&l| l as f64).collect()
    }
}

/// Splits regions into `k` equally sized rank buckets.
///
/// The region with rank `r` (ascending value, ties by row order) gets level
/// `floor(r·k/n) + 1`, so every level holds `floor(n/k)` or `ceil(n/k)`
/// regions.
pub fn quantile_levels(values: &[f64], k: usize) -> Result<TreatmentAssignment, DatasetError> {
    if k < 2 {
        return Err(DatasetError::InvalidLevels(k));
    }
    let n = values.len();
    if n < k {
        return Err(DatasetError::TooFewRows { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut levels = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        levels[i] = rank * k / n + 1;
    }
    Ok(TreatmentAssignment {
        levels,
        k,
        factor_index: None,
    })
}

/// Pairwise Pearson correlations with two-sided p-values.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

pub fn correlation_matrix(table: &FactorTable) -> Result<CorrelationMatrix, DatasetError> {
    let d = table.d();
    ColumnScaler::fit(&table.values, &table.names())?;
    let mut r = DMatrix::identity(d, d);
    let mut p = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in (i + 1)..d {
            let (rij, pij) = stats::pearson(table.column(i), table.column(j))
                .ok_or_else(|| DatasetError::ZeroVariance(table.meta[i].name.clone()))?;
            r[(i, j)] = rij;
            r[(j, i)] = rij;
            p[(i, j)] = pij;
            p[(j, i)] = pij;
        }
    }
    Ok(CorrelationMatrix { r, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn table(cols: &[&[f64]]) -> FactorTable {
        let n = cols[0].len();
        let flat: Vec<f64> = cols.iter().flat_map(|c| c.iter().copied()).collect();
        let meta = (0..cols.len())
            .map(|j| FactorMeta::new(format!("f{j}"), Dimension::Citizens))
            .collect();
        let ids = (0..n).map(|i| format!("r{i}")).collect();
        FactorTable::new(DMatrix::from_column_slice(n, cols.len(), &flat), meta, ids).unwrap()
    }

    #[test]
    fn standardize_gives_zero_mean_unit_std() {
        let t = standardize(&table(&[&[1.0, 2.0, 3.0], &[10.0, 0.0, 5.0]])).unwrap();
        for j in 0..2 {
            assert!(stats::mean(t.column(j)).abs() < 1e-9);
            assert!((stats::population_std(t.column(j)) - 1.0).abs() < 1e-9);
        }
        let s = 1.5f64.sqrt();
        assert!((t.column(0)[0] + s).abs() < 1e-12);
        assert!((t.column(0)[2] - s).abs() < 1e-12);
    }

    #[test]
    fn standardize_rejects_constant_column() {
        let err = standardize(&table(&[&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0]])).unwrap_err();
        assert!(matches!(err, DatasetError::ZeroVariance(ref c) if c == "f0"));
    }

    #[test]
    fn quantile_levels_sorted_and_reversed() {
        let up = quantile_levels(&[10., 20., 30., 40., 50., 60., 70., 80.], 4).unwrap();
        assert_eq!(up.levels, vec![1, 1, 2, 2, 3, 3, 4, 4]);
        let down = quantile_levels(&[8., 7., 6., 5., 4., 3., 2., 1.], 4).unwrap();
        assert_eq!(down.levels, vec![4, 4, 3, 3, 2, 2, 1, 1]);
    }

    #[test]
    fn quantile_levels_normal_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t = quantile_levels(&xs, 4).unwrap();
        assert_eq!(t.counts(), vec![500, 500, 500, 500]);
        // Sort-rank oracle: the 500 smallest values are exactly level 1.
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        for (x, l) in xs.iter().zip(&t.levels) {
            let rank = sorted.partition_point(|v| v < x);
            assert_eq!(*l, rank / 500 + 1);
        }
    }

    #[test]
    fn quantile_levels_errors() {
        assert!(matches!(quantile_levels(&[1.0, 2.0], 4), Err(DatasetError::TooFewRows { n: 2, k: 4 })));
        assert!(matches!(quantile_levels(&[1.0, 2.0], 1), Err(DatasetError::InvalidLevels(1))));
    }

    #[test]
    fn ties_keep_row_order() {
        let t = quantile_levels(&[1.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(t.levels, vec![1, 1, 2, 2]);
    }

    #[test]
    fn correlation_basics() {
        let x = [1.0, 2.0, 4.0, 7.0, 11.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let z = [3.0, -1.0, 2.0, 0.0, 5.0];
        let c = correlation_matrix(&table(&[&x, &y, &z])).unwrap();
        for i in 0..3 {
            assert_eq!(c.r[(i, i)], 1.0);
        }
        assert!((c.r[(0, 1)] - 1.0).abs() < 1e-12);
        assert!(c.p[(0, 1)] < 1e-12);
        assert_eq!(c.r[(0, 2)], c.r[(2, 0)]);
    }

    #[test]
    fn independent_normals_are_rarely_significant() {
        let mut ok = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
            let c = correlation_matrix(&table(&[&a, &b])).unwrap();
            if c.r[(0, 1)].abs() < 0.1 && c.p[(0, 1)] > 0.05 {
                ok += 1;
            }
        }
        assert!(ok >= 90, "{ok} of 100 trials");
    }

    proptest! {
        #[test]
        fn quantile_counts_balanced(xs in prop::collection::vec(-1e6f64..1e6, 4..200), k in 2usize..6) {
            prop_assume!(xs.len() >= k);
            let t = quantile_levels(&xs, k).unwrap();
            let c = t.counts();
            let (lo, hi) = (*c.iter().min().unwrap(), *c.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            prop_assert!(lo == xs.len() / k);
        }

        #[test]
        fn standardize_is_idempotent(a in prop::collection::vec(-1e3f64..1e3, 5..40),
                                     shift in -10.0f64..10.0) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * 0.5 + shift + i as f64).collect();
            let t = table(&[&a, &b]);
            prop_assume!(ColumnScaler::fit(t.values(), &t.names()).is_ok());
            let once = standardize(&t).unwrap();
            let twice = standardize(&once).unwrap();
            for (x, y) in once.values().iter().zip(twice.values().iter()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn correlation_bounded_and_symmetric(a in prop::collection::vec(-1e3f64..1e3, 5..40),
                                             b_seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(b_seed);
            let b: Vec<f64> = a.iter().map(|v| { let z: f64 = StandardNormal.sample(&mut rng); v + z * 100.0 }).collect();
            let t = table(&[&a, &b]);
            prop_assume!(ColumnScaler::fit(t.values(), &t.names()).is_ok());
            let c = correlation_matrix(&t).unwrap();
            prop_assert!(c.r.iter().all(|v| (-1.0..=1.0).contains(v)));
            prop_assert_eq!(c.r[(0, 1)], c.r[(1, 0)]);
        }
    }
}
