use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::matching::MatchedPairs;
use super::EffectsError;
use crate::dataset::TreatmentAssignment;
use crate::stats::{mean, population_std};

/// Standardized mean differences of one confounder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderBalance {
    pub confounder: String,
    pub rel_diff_before: f64,
    pub rel_diff_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub confounders: Vec<ConfounderBalance>,
}

/// Confounder balance before and after matching.
///
/// Before: upper half of the levels (`level > k/2`) against the lower half.
/// After: the higher-level member of each pair against the lower-level one.
/// Both gaps are divided by the confounder's standard deviation over all
/// regions.
pub fn balance_report(
    x: &DMatrix<f64>,
    names: &[String],
    levels: &TreatmentAssignment,
    pairs: &MatchedPairs,
) -> Result<BalanceReport, EffectsError> {
    let (n, c) = x.shape();
    if names.len() != c || levels.n() != n || pairs.levels.len() != n {
        return Err(EffectsError::DimensionMismatch(format!(
            "{c} confounder columns, {} names, {} levels, {} matched regions for {n} rows",
            names.len(),
            levels.n(),
            pairs.levels.len()
        )));
    }
    if c == 0 {
        return Err(EffectsError::DimensionMismatch("no confounders to balance".into()));
    }
    if levels.k % 2 != 0 {
        return Err(EffectsError::Degenerate(format!(
            "balance halves need an even level count, got {}",
            levels.k
        )));
    }
    let half = levels.k / 2;
    let t = &levels.levels;
    let confounders = (0..c)
        .map(|col| {
            let v: Vec<f64> = x.column(col).iter().copied().collect();
            let sd = population_std(&v);
            if !(sd > 0.0) {
                return Err(EffectsError::ZeroVariance(names[col].clone()));
            }
            let top: Vec<f64> = (0..n).filter(|&i| t[i] > half).map(|i| v[i]).collect();
            let bottom: Vec<f64> = (0..n).filter(|&i| t[i] <= half).map(|i| v[i]).collect();
            let before = if top.is_empty() || bottom.is_empty() {
                0.0
            } else {
                (mean(&top) - mean(&bottom)).abs() / sd
            };
            let gaps: Vec<f64> = pairs
                .pairs
                .iter()
                .map(|p| {
                    let (hi, lo) = if pairs.levels[p.i] > pairs.levels[p.j] { (p.i, p.j) } else { (p.j, p.i) };
                    v[hi] - v[lo]
                })
                .collect();
            let after = if gaps.is_empty() { 0.0 } else { mean(&gaps).abs() / sd };
            Ok(ConfounderBalance {
                confounder: names[col].clone(),
                rel_diff_before: before,
                rel_diff_after: after,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(BalanceReport { confounders })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::quantile_levels;
    use crate::effects::matching::{match_pairs, Pair};
    use crate::effects::ordinal::{fit_ordinal_regression, propensity_scores, sample_ordinal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn independent_confounder_is_balanced_already() {
        let x = normal(2000, 1);
        let t = normal(2000, 2);
        let levels = quantile_levels(t.as_slice(), 4).unwrap();
        let pairs = match_pairs(x.as_slice(), &levels).unwrap();
        let r = balance_report(&x, &["X".into()], &levels, &pairs).unwrap();
        assert!(r.confounders[0].rel_diff_before < 0.1);
    }

    #[test]
    fn matching_reduces_imbalance() {
        for seed in 0..5 {
            let x = normal(2000, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let levels = sample_ordinal(&x, &[3.0], &[-2.0, 0.0, 2.0], &mut rng);
            let levels = TreatmentAssignment::from_levels(levels, 4).unwrap();
            let model = fit_ordinal_regression(&x, &levels).unwrap();
            let pairs = match_pairs(&propensity_scores(&model, &x).unwrap(), &levels).unwrap();
            let r = balance_report(&x, &["X".into()], &levels, &pairs).unwrap();
            let b = &r.confounders[0];
            assert!(b.rel_diff_after < b.rel_diff_before, "seed {seed}: {b:?}");
        }
    }

    #[test]
    fn identical_pair_members_give_zero_after() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 1.0, 3.0, 3.0]);
        let levels = TreatmentAssignment::from_levels(vec![1, 3, 2, 4], 4).unwrap();
        let pairs = MatchedPairs {
            pairs: vec![
                Pair { i: 0, j: 1, distance: 0.0 },
                Pair { i: 1, j: 0, distance: 0.0 },
                Pair { i: 2, j: 3, distance: 0.0 },
                Pair { i: 3, j: 2, distance: 0.0 },
            ],
            levels: levels.levels.clone(),
            scores: vec![0.0; 4],
        };
        let r = balance_report(&x, &["X".into()], &levels, &pairs).unwrap();
        assert_eq!(r.confounders[0].rel_diff_after, 0.0);
        assert!(r.confounders[0].rel_diff_before >= 0.0);
    }

    #[test]
    fn constant_confounder_is_an_error() {
        let x = DMatrix::from_element(4, 1, 2.0);
        let levels = TreatmentAssignment::from_levels(vec![1, 2, 3, 4], 4).unwrap();
        let pairs = match_pairs(&[0.0; 4], &levels).unwrap();
        assert!(matches!(
            balance_report(&x, &["X".into()], &levels, &pairs),
            Err(EffectsError::ZeroVariance(_))
        ));
    }
}
