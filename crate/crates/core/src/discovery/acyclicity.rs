use nalgebra::DMatrix;

/// `tr(exp(U)) − d` for a binary adjacency `U` (row-major, `d × d`).
///
/// Summed as `Σ_{k≥1} tr(U^k) / k!` over factorial-scaled powers, so every
/// term is non-negative and there is no cancellation against `d`: the result
/// is exactly 0 for a DAG (all diagonal path counts vanish) and strictly
/// positive as soon as any cycle exists. The series runs for at least `d`
/// terms and is then cut once the remaining tail is provably below
/// `1e-12 · max(1, sum)`.
pub fn acyclicity_penalty(adjacency: &[bool], d: usize) -> f64 {
    assert_eq!(adjacency.len(), d * d, "adjacency must be d x d");
    if d == 0 {
        return 0.0;
    }
    let u = DMatrix::from_fn(d, d, |i, j| if adjacency[i * d + j] { 1.0 } else { 0.0 });
    let max_row_sum = (0..d)
        .map(|i| u.row(i).iter().sum::<f64>())
        .fold(0.0, f64::max);
    if max_row_sum == 0.0 {
        return 0.0;
    }

    let mut term = DMatrix::<f64>::identity(d, d);
    let mut total = 0.0;
    for k in 1usize.. {
        term = (&term * &u) / k as f64;
        let mass = term.sum();
        if mass == 0.0 {
            break;
        }
        total += term.trace();
        // Cycles are at most d long, so the first d terms are always summed.
        // Beyond that sum(T_{k+m}) <= sum(T_k) * q^m with q = r / (k + 1).
        let q = max_row_sum / (k + 1) as f64;
        if k >= d && q < 1.0 && mass * q / (1.0 - q) <= 1e-12 * total.max(1.0) {
            break;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::has_topological_order;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_matrix() {
        assert_eq!(acyclicity_penalty(&[false; 9], 3), 0.0);
    }

    #[test]
    fn strictly_triangular_is_zero() {
        let d = 6;
        let adj: Vec<bool> = (0..d * d).map(|k| k / d < k % d).collect();
        assert_eq!(acyclicity_penalty(&adj, d), 0.0);
    }

    #[test]
    fn two_cycle_closed_form() {
        let v = acyclicity_penalty(&[false, true, true, false], 2);
        // exp of the exchange matrix has trace 2 cosh(1).
        let expected = 2.0 * 1f64.cosh() - 2.0;
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn long_cycle_is_detected_at_max_width() {
        let d = 64;
        let mut adj = vec![false; d * d];
        for i in 0..d {
            adj[i * d + (i + 1) % d] = true;
        }
        let v = acyclicity_penalty(&adj, d);
        assert!(v > 0.0);
        // tr(U^64)/64! = 64/64! plus higher multiples of the cycle length.
        assert!(v < 1e-80);
    }

    #[test]
    fn complete_graph_matches_eigenvalues() {
        // The complete digraph J - I has eigenvalues d-1 (once) and -1 (d-1 times).
        let d = 5;
        let adj: Vec<bool> = (0..d * d).map(|k| k / d != k % d).collect();
        let expected = (4f64).exp() + 4.0 * (-1f64).exp() - 5.0;
        let v = acyclicity_penalty(&adj, d);
        assert!((v - expected).abs() < 1e-9 * expected, "{v} vs {expected}");
    }

    #[test]
    fn agrees_with_dfs_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..1000 {
            let d = rng.random_range(1..=8);
            let adj: Vec<bool> = (0..d * d)
                .map(|k| k / d != k % d && rng.random::<f64>() < 0.3)
                .collect();
            let zero = acyclicity_penalty(&adj, d) == 0.0;
            assert_eq!(zero, has_topological_order(d, &adj));
        }
    }
}
