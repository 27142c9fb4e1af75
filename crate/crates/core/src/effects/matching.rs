use serde::{Deserialize, Serialize};

use super::EffectsError;
use crate::dataset::TreatmentAssignment;
use crate::stats::{mean, one_sample_t_test};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPairs {
    pub pairs: Vec<Pair>,
    pub levels: Vec<usize>,
    pub scores: Vec<f64>,
}

/// `|e_i − e_j| / |T_i − T_j|`; infinite when the levels agree.
pub fn match_distance(e_i: f64, e_j: f64, t_i: usize, t_j: usize) -> f64 {
    if t_i == t_j {
        return f64::INFINITY;
    }
    (e_i - e_j).abs() / (t_i as f64 - t_j as f64).abs()
}

/// Matches every region, with replacement, to the region at a different
/// treatment level that minimizes [`match_distance`]. Ties go to the smaller
/// index.
pub fn match_pairs(scores: &[f64], levels: &TreatmentAssignment) -> Result<MatchedPairs, EffectsError> {
    let n = scores.len();
    if n != levels.n() {
        return Err(EffectsError::DimensionMismatch(format!(
            "{n} scores for {} treatment levels",
            levels.n()
        )));
    }
    if n < 2 {
        return Err(EffectsError::TooFewPairs(n));
    }
    let t = &levels.levels;
    if t.iter().all(|&l| l == t[0]) {
        return Err(EffectsError::SingleLevel);
    }
    let pairs = (0..n)
        .map(|i| {
            let mut best = Pair {
                i,
                j: usize::MAX,
                distance: f64::INFINITY,
            };
            for j in 0..n {
                let dist = match_distance(scores[i], scores[j], t[i], t[j]);
                if dist < best.distance {
                    best.j = j;
                    best.distance = dist;
                }
            }
            best
        })
        .collect();
    Ok(MatchedPairs {
        pairs,
        levels: t.clone(),
        scores: scores.to_vec(),
    })
}

/// Result of the matched-pair estimate before it is attached to an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct AteEstimate {
    pub ate: f64,
    pub p_value: f64,
    pub n_pairs: usize,
}

/// Per-pair effects `(Y_i − Y_j) / (T_i − T_j)`.
pub fn individual_effects(pairs: &MatchedPairs, outcome: &[f64]) -> Result<Vec<f64>, EffectsError> {
    if outcome.len() != pairs.levels.len() {
        return Err(EffectsError::DimensionMismatch(format!(
            "{} outcomes for {} regions",
            outcome.len(),
            pairs.levels.len()
        )));
    }
    let t = &pairs.levels;
    Ok(pairs
        .pairs
        .iter()
        .map(|p| (outcome[p.i] - outcome[p.j]) / (t[p.i] as f64 - t[p.j] as f64))
        .collect())
}

/// Mean individual effect with a two-sided one-sample t test. A single pair
/// gets p = 1; zero-variance effects get p = 0 unless the mean is zero.
pub fn estimate_ate(pairs: &MatchedPairs, outcome: &[f64]) -> Result<AteEstimate, EffectsError> {
    let ite = individual_effects(pairs, outcome)?;
    if ite.is_empty() {
        return Err(EffectsError::TooFewPairs(0));
    }
    let (ate, p_value) = one_sample_t_test(&ite);
    Ok(AteEstimate {
        ate,
        p_value,
        n_pairs: ite.len(),
    })
}

/// Difference of outcome means between the upper and lower half of the
/// levels, divided by the difference of their mean levels. Ignores
/// confounding; used as the unadjusted reference.
pub fn naive_top_bottom(outcome: &[f64], levels: &TreatmentAssignment) -> f64 {
    let half = levels.k / 2;
    let (mut top_y, mut top_t, mut bot_y, mut bot_t) = (vec![], vec![], vec![], vec![]);
    for (&l, &y) in levels.levels.iter().zip(outcome) {
        if l > half {
            top_y.push(y);
            top_t.push(l as f64);
        } else {
            bot_y.push(y);
            bot_t.push(l as f64);
        }
    }
    (mean(&top_y) - mean(&bot_y)) / (mean(&top_t) - mean(&bot_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn levels(l: &[usize], k: usize) -> TreatmentAssignment {
        TreatmentAssignment::from_levels(l.to_vec(), k).unwrap()
    }

    #[test]
    fn hand_evaluated_matches() {
        let m = match_pairs(&[0.10, 0.12, 0.90], &levels(&[1, 2, 4], 4)).unwrap();
        let got: Vec<(usize, usize)> = m.pairs.iter().map(|p| (p.i, p.j)).collect();
        assert_eq!(got, vec![(0, 1), (1, 0), (2, 0)]);
        assert!((m.pairs[0].distance - 0.02).abs() < 1e-12);
        assert!((m.pairs[2].distance - 0.8 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn two_regions_match_each_other() {
        let m = match_pairs(&[5.0, -40.0], &levels(&[1, 2], 2)).unwrap();
        assert_eq!((m.pairs[0].j, m.pairs[1].j), (1, 0));
    }

    #[test]
    fn ties_go_to_smaller_index() {
        let m = match_pairs(&[0.3, 0.3, 0.3], &levels(&[1, 1, 2], 2)).unwrap();
        assert_eq!(m.pairs[2].j, 0);
    }

    #[test]
    fn single_level_is_rejected() {
        assert!(matches!(
            match_pairs(&[0.0, 1.0], &levels(&[2, 2], 2)),
            Err(EffectsError::SingleLevel)
        ));
    }

    #[test]
    fn one_pair_arithmetic() {
        let m = MatchedPairs {
            pairs: vec![Pair { i: 0, j: 1, distance: 0.0 }],
            levels: vec![3, 1],
            scores: vec![0.0, 0.0],
        };
        let est = estimate_ate(&m, &[5.0, 3.0]).unwrap();
        assert_eq!(est.ate, 1.0);
        assert_eq!(est.n_pairs, 1);
        assert_eq!(est.p_value, 1.0);
    }

    #[test]
    fn constant_outcome_has_no_effect() {
        let m = match_pairs(&[0.1, 0.5, 0.2, 0.9], &levels(&[1, 2, 1, 2], 2)).unwrap();
        let est = estimate_ate(&m, &[7.0; 4]).unwrap();
        assert_eq!(est.ate, 0.0);
        assert_eq!(est.p_value, 1.0);
    }

    #[test]
    fn exact_effect_is_significant() {
        let l = [1, 2, 3, 4, 1, 2, 3, 4];
        let m = match_pairs(&[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7], &levels(&l, 4)).unwrap();
        let y: Vec<f64> = l.iter().map(|&t| 2.0 * t as f64 + 1.0).collect();
        let est = estimate_ate(&m, &y).unwrap();
        assert!((est.ate - 2.0).abs() < 1e-12);
        assert_eq!(est.p_value, 0.0);
    }

    #[test]
    fn naive_estimate_on_exact_line() {
        let l = [1, 2, 3, 4];
        let y: Vec<f64> = l.iter().map(|&t| 3.0 * t as f64).collect();
        assert!((naive_top_bottom(&y, &levels(&l, 4)) - 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_nonnegative(a in -10.0..10.0f64, b in -10.0..10.0f64, ti in 1usize..5, tj in 1usize..5) {
            let d1 = match_distance(a, b, ti, tj);
            let d2 = match_distance(b, a, tj, ti);
            prop_assert_eq!(d1, d2);
            prop_assert!(d1 >= 0.0);
            prop_assert_eq!(d1.is_infinite(), ti == tj);
        }

        #[test]
        fn pairs_cross_levels_and_are_optimal(
            data in prop::collection::vec((-3.0..3.0f64, 1usize..5), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let l: Vec<usize> = data.iter().map(|d| d.1).collect();
            prop_assume!(l.iter().any(|&x| x != l[0]));
            let m = match_pairs(&scores, &levels(&l, 4)).unwrap();
            prop_assert_eq!(m.pairs.len(), l.len());
            for p in &m.pairs {
                prop_assert!(l[p.i] != l[p.j]);
                prop_assert!(p.distance >= 0.0);
                for j in 0..l.len() {
                    prop_assert!(match_distance(scores[p.i], scores[j], l[p.i], l[j]) >= p.distance);
                }
            }
        }

        #[test]
        fn ite_is_antisymmetric(y in prop::collection::vec(-10.0..10.0f64, 2), t in (1usize..5, 1usize..5)) {
            prop_assume!(t.0 != t.1);
            let fwd = MatchedPairs { pairs: vec![Pair { i: 0, j: 1, distance: 0.0 }], levels: vec![t.0, t.1], scores: vec![0.0; 2] };
            let rev = MatchedPairs { pairs: vec![Pair { i: 1, j: 0, distance: 0.0 }], ..fwd.clone() };
            let a = individual_effects(&fwd, &y).unwrap()[0];
            let b = individual_effects(&rev, &y).unwrap()[0];
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn ate_is_translation_and_scale_equivariant(
            data in prop::collection::vec((-3.0..3.0f64, 1usize..5, -10.0..10.0f64), 3..30),
            shift in -100.0..100.0f64, scale in -5.0..5.0f64
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let l: Vec<usize> = data.iter().map(|d| d.1).collect();
            prop_assume!(l.iter().any(|&x| x != l[0]));
            let y: Vec<f64> = data.iter().map(|d| d.2).collect();
            let m = match_pairs(&scores, &levels(&l, 4)).unwrap();
            let base = estimate_ate(&m, &y).unwrap().ate;
            let shifted: Vec<f64> = y.iter().map(|v| v + shift).collect();
            let scaled: Vec<f64> = y.iter().map(|v| v * scale).collect();
            prop_assert!((estimate_ate(&m, &shifted).unwrap().ate - base).abs() < 1e-9);
            prop_assert!((estimate_ate(&m, &scaled).unwrap().ate - scale * base).abs() < 1e-9);
        }
    }
}
