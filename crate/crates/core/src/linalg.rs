//! Normal-equation solvers with a ridge fallback for singular designs.

use nalgebra::{DMatrix, DVector};

/// Solves `a x = b` for symmetric positive semi-definite `a`.
///
/// Cholesky is tried first; if it fails the diagonal is loaded with `ridge`
/// (multiplied by ten on each further failure) until it succeeds.
pub fn solve_psd(a: &DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> DVector<f64> {
    if let Some(chol) = a.clone().cholesky() {
        return chol.solve(b);
    }
    let mut lambda = ridge.max(f64::MIN_POSITIVE);
    for _ in 0..40 {
        let mut loaded = a.clone();
        for i in 0..loaded.nrows() {
            loaded[(i, i)] += lambda;
        }
        if let Some(chol) = loaded.cholesky() {
            return chol.solve(b);
        }
        lambda *= 10.0;
    }
    DVector::zeros(b.len())
}

/// Least squares with an intercept, solved on centered normal equations.
///
/// `x` is n×k. Returns `(weights, intercept)`. With `k = 0` the intercept is
/// the mean of `y`.
pub fn ols_with_intercept(x: &DMatrix<f64>, y: &[f64], ridge: f64) -> (Vec<f64>, f64) {
    let n = x.nrows();
    let k = x.ncols();
    assert_eq!(n, y.len());
    let y_mean = y.iter().sum::<f64>() / n as f64;
    if k == 0 {
        return (Vec::new(), y_mean);
    }
    let col_means: Vec<f64> = (0..k).map(|j| x.column(j).sum() / n as f64).collect();
    let mut xc = x.clone();
    for j in 0..k {
        for i in 0..n {
            xc[(i, j)] -= col_means[j];
        }
    }
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
    let gram = xc.transpose() * &xc;
    let rhs = xc.transpose() * yc;
    let w = solve_psd(&gram, &rhs, ridge);
    let intercept = y_mean - w.iter().zip(&col_means).map(|(a, b)| a * b).sum::<f64>();
    (w.iter().copied().collect(), intercept)
}
