use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::PredictionError;
use crate::linalg::ols_with_intercept;

/// Ridge added only when the normal equations are singular.
pub const OLS_RIDGE: f64 = 1e-10;
const LASSO_TOLERANCE: f64 = 1e-8;
const LASSO_MAX_SWEEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| self.intercept + self.weights.iter().enumerate().map(|(j, w)| w * x[(i, j)]).sum::<f64>())
            .collect()
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

/// Least squares (`l1_lambda = 0`) or the lasso
/// `(1/2n)‖y − Xw − b‖² + λ‖w‖₁` by cyclic coordinate descent.
pub fn fit_linear(x: &DMatrix<f64>, y: &[f64], l1_lambda: f64) -> Result<LinearModel, PredictionError> {
    let (n, k) = x.shape();
    if n != y.len() {
        return Err(PredictionError::LengthMismatch { left: n, right: y.len() });
    }
    if n == 0 {
        return Err(PredictionError::InvalidConfig("cannot fit on zero rows".into()));
    }
    if !(l1_lambda >= 0.0 && l1_lambda.is_finite()) {
        return Err(PredictionError::InvalidConfig(format!("l1_lambda must be >= 0, got {l1_lambda}")));
    }
    if l1_lambda == 0.0 || k == 0 {
        let (weights, intercept) = ols_with_intercept(x, y, OLS_RIDGE);
        return Ok(LinearModel { weights, intercept });
    }

    // The intercept is unpenalized, so work on centered columns.
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;
    let means: Vec<f64> = (0..k).map(|j| x.column(j).sum() / nf).collect();
    let xc = DMatrix::from_fn(n, k, |i, j| x[(i, j)] - means[j]);
    let z: Vec<f64> = (0..k).map(|j| xc.column(j).norm_squared() / nf).collect();
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let mut w = vec![0.0; k];

    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..k {
            if z[j] == 0.0 {
                continue;
            }
            let col = xc.column(j);
            let rho = col.iter().zip(&resid).map(|(a, r)| a * r).sum::<f64>() / nf + z[j] * w[j];
            let new = soft_threshold(rho, l1_lambda) / z[j];
            let delta = new - w[j];
            if delta != 0.0 {
                for (r, a) in resid.iter_mut().zip(col.iter()) {
                    *r -= delta * a;
                }
                w[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < LASSO_TOLERANCE {
            break;
        }
    }
    let intercept = y_mean - w.iter().zip(&means).map(|(a, b)| a * b).sum::<f64>();
    Ok(LinearModel { weights: w, intercept })
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}
