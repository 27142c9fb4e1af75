//! Proportional-odds ordinal regression: `P(T ≤ d | x) = σ(θ_d − wᵀx)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EffectsError;
use crate::dataset::TreatmentAssignment;
use crate::stats::{log_sigmoid, sigmoid};

pub const MAX_ITERATIONS: usize = 10_000;
/// Exit tolerance on the gradient norm of the mean log-likelihood.
pub const GRAD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalModel {
    pub w: Vec<f64>,
    pub theta: Vec<f64>,
    pub converged: bool,
    /// Total (not mean) log-likelihood at the fitted parameters.
    pub final_loglik: f64,
}

impl OrdinalModel {
    /// Number of treatment levels.
    pub fn k(&self) -> usize {
        self.theta.len() + 1
    }
}

/// `wᵀx`, the scalar balancing score.
pub fn propensity_score(model: &OrdinalModel, x: &[f64]) -> Result<f64, EffectsError> {
    if x.len() != model.w.len() {
        return Err(EffectsError::DimensionMismatch(format!(
            "{} covariates for a model with {} weights",
            x.len(),
            model.w.len()
        )));
    }
    Ok(model.w.iter().zip(x).map(|(w, v)| w * v).sum())
}

/// Scores every row of `x`.
pub fn propensity_scores(model: &OrdinalModel, x: &DMatrix<f64>) -> Result<Vec<f64>, EffectsError> {
    if x.ncols() != model.w.len() {
        return Err(EffectsError::DimensionMismatch(format!(
            "{} covariates for a model with {} weights",
            x.ncols(),
            model.w.len()
        )));
    }
    let w = DVector::from_column_slice(&model.w);
    Ok((x * w).iter().copied().collect())
}

/// Draws levels from the model by thresholding `wᵀx + ε` with logistic `ε`.
pub fn sample_ordinal<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    w: &[f64],
    theta: &[f64],
    rng: &mut R,
) -> Vec<usize> {
    assert_eq!(x.ncols(), w.len());
    (0..x.nrows())
        .map(|i| {
            let eta: f64 = (0..w.len()).map(|c| w[c] * x[(i, c)]).sum();
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            let latent = eta + (u / (1.0 - u)).ln();
            1 + theta.iter().filter(|&&t| latent > t).count()
        })
        .collect()
}

/// Unconstrained parameters: `w`, then `θ_1`, then `ln(θ_d − θ_{d−1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawParams(pub Vec<f64>);

impl RawParams {
    pub fn from_model(w: &[f64], theta: &[f64]) -> Self {
        let mut v = w.to_vec();
        v.push(theta[0]);
        for d in 1..theta.len() {
            v.push((theta[d] - theta[d - 1]).max(1e-12).ln());
        }
        Self(v)
    }

    pub fn split(&self, c: usize) -> (Vec<f64>, Vec<f64>) {
        let w = self.0[..c].to_vec();
        let mut theta = vec![self.0[c]];
        for r in &self.0[c + 1..] {
            let prev = *theta.last().unwrap();
            theta.push(prev + r.exp());
        }
        (w, theta)
    }
}

/// Log-probability of `level` given linear predictor `eta`, and its partial
/// derivatives with respect to `θ_level` and `θ_{level−1}`.
fn level_loglik(level: usize, eta: f64, theta: &[f64]) -> (f64, f64, f64) {
    let k = theta.len() + 1;
    if level == 1 {
        let a = theta[0] - eta;
        (log_sigmoid(a), sigmoid(-a), 0.0)
    } else if level == k {
        let b = theta[k - 2] - eta;
        (log_sigmoid(-b), 0.0, -sigmoid(b))
    } else {
        let a = theta[level - 1] - eta;
        let b = theta[level - 2] - eta;
        // σ(a) − σ(b) = σ(a) σ(−b) (1 − e^{−(a−b)})
        let gap = a - b;
        let ll = log_sigmoid(a) + log_sigmoid(-b) + (-(-gap).exp_m1()).ln();
        let inv = 1.0 / gap.exp_m1();
        (ll, sigmoid(-a) + inv, -sigmoid(b) - inv)
    }
}

/// Mean log-likelihood and its gradient in raw parameters.
pub fn mean_loglik(x: &DMatrix<f64>, levels: &[usize], k: usize, raw: &RawParams) -> (f64, Vec<f64>) {
    let (n, c) = x.shape();
    let (w, theta) = raw.split(c);
    assert_eq!(theta.len(), k - 1);
    let mut ll = 0.0;
    let mut gw = vec![0.0; c];
    let mut gtheta = vec![0.0; k - 1];
    for i in 0..n {
        let eta: f64 = (0..c).map(|j| w[j] * x[(i, j)]).sum();
        let lvl = levels[i];
        let (l, da, db) = level_loglik(lvl, eta, &theta);
        ll += l;
        if lvl < k {
            gtheta[lvl - 1] += da;
        }
        if lvl > 1 {
            gtheta[lvl - 2] += db;
        }
        let deta = -(da + db);
        for j in 0..c {
            gw[j] += deta * x[(i, j)];
        }
    }
    let mut grad = gw;
    // θ_d depends on θ_1 and every increment up to d.
    let mut suffix = vec![0.0; k - 1];
    let mut acc = 0.0;
    for d in (0..k - 1).rev() {
        acc += gtheta[d];
        suffix[d] = acc;
    }
    grad.push(suffix[0]);
    for d in 1..k - 1 {
        grad.push(raw.0[c + d].exp() * suffix[d]);
    }
    let nf = n as f64;
    (ll / nf, grad.into_iter().map(|g| g / nf).collect())
}

/// Maximum-likelihood fit by gradient ascent with a backtracking
/// (Armijo) line search. Trial steps use the Barzilai-Borwein length, so the
/// objective is non-decreasing while still converging quickly.
pub fn fit_ordinal_regression(
    x: &DMatrix<f64>,
    levels: &TreatmentAssignment,
) -> Result<OrdinalModel, EffectsError> {
    let (n, c) = x.shape();
    let k = levels.k;
    if n != levels.n() {
        return Err(EffectsError::DimensionMismatch(format!(
            "{n} covariate rows for {} treatment levels",
            levels.n()
        )));
    }
    let counts = levels.counts();
    if let Some(empty) = counts.iter().position(|&m| m == 0) {
        return Err(EffectsError::Degenerate(format!("treatment level {} is empty", empty + 1)));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(EffectsError::Degenerate("non-finite covariates".into()));
    }

    // Start at the no-covariate optimum: logits of cumulative frequencies.
    let mut cum = 0;
    let theta0: Vec<f64> = counts[..k - 1]
        .iter()
        .map(|&m| {
            cum += m;
            let p = cum as f64 / n as f64;
            (p / (1.0 - p)).ln()
        })
        .collect();
    let mut raw = RawParams::from_model(&vec![0.0; c], &theta0);
    let (mut f, mut g) = mean_loglik(x, &levels.levels, k, &raw);
    let mut step = 1.0;
    let mut converged = false;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;

    for _ in 0..MAX_ITERATIONS {
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < GRAD_TOLERANCE {
            converged = true;
            break;
        }
        if let Some((px, pg)) = &prev {
            let s: Vec<f64> = raw.0.iter().zip(px).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g.iter().zip(pg).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            let ss: f64 = s.iter().map(|v| v * v).sum();
            // Ascent on a concave-like objective: s·y < 0 near the optimum.
            if sy < 0.0 {
                step = (ss / -sy).clamp(1e-8, 1e4);
            }
        }
        let mut accepted = false;
        for _ in 0..60 {
            let trial = RawParams(raw.0.iter().zip(&g).map(|(p, d)| p + step * d).collect());
            let (ft, gt) = mean_loglik(x, &levels.levels, k, &trial);
            if ft.is_finite() && ft >= f + 1e-4 * step * gnorm2 {
                prev = Some((std::mem::replace(&mut raw, trial).0, std::mem::replace(&mut g, gt)));
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No ascent direction left at machine precision.
            converged = gnorm2.sqrt() < GRAD_TOLERANCE * 1e3;
            break;
        }
    }

    let (w, theta) = raw.split(c);
    if w.iter().chain(&theta).any(|v| !v.is_finite()) {
        return Err(EffectsError::Degenerate("ordinal fit diverged".into()));
    }
    Ok(OrdinalModel {
        w,
        theta,
        converged,
        final_loglik: (f * n as f64).min(0.0),
    })
}
