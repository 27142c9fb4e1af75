use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PredictionError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden_sizes: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![64, 64],
            epochs: 6000,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), PredictionError> {
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(PredictionError::InvalidConfig("hidden sizes must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(PredictionError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(PredictionError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// One dense layer: `out = W · in + b`, `W` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// ReLU hidden layers and a linear scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    /// Training MSE before each epoch's update.
    pub loss_history: Vec<f64>,
}

impl Mlp {
    /// He-initialized weights, zero biases.
    pub fn init(inputs: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (2.0 / w[0].max(1) as f64).sqrt()).expect("finite std");
                Layer {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| normal.sample(&mut rng)),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        Self {
            layers,
            loss_history: Vec::new(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    /// Activations of every layer for a batch, features as columns.
    fn forward_all(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.transpose()];
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = acts.last().unwrap();
            let mut z = &layer.weights * prev;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            if l + 1 < self.layers.len() {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.forward_all(x).last().unwrap().iter().copied().collect()
    }

    /// Mean squared error on `(x, y)`.
    pub fn loss(&self, x: &DMatrix<f64>, y: &[f64]) -> f64 {
        let p = self.predict(x);
        p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
    }

    /// MSE and its gradient for every layer.
    pub fn loss_and_grad(&self, x: &DMatrix<f64>, y: &[f64]) -> (f64, Vec<Layer>) {
        let n = y.len() as f64;
        let acts = self.forward_all(x);
        let out = acts.last().unwrap();
        let mut delta = DMatrix::from_fn(1, y.len(), |_, i| 2.0 * (out[(0, i)] - y[i]) / n);
        let loss = out.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = &acts[l];
            let gw = &delta * input.transpose();
            let gb = DVector::from_iterator(delta.nrows(), delta.row_iter().map(|r| r.sum()));
            grads.push(Layer { weights: gw, bias: gb });
            if l > 0 {
                let mut back = self.layers[l].weights.transpose() * &delta;
                // ReLU gate from the stored post-activation.
                back.zip_apply(input, |d, a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        (loss, grads)
    }

    fn step(&mut self, grads: &[Layer], lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.weights -= lr * &g.weights;
            layer.bias -= lr * &g.bias;
        }
    }
}

/// Full-batch gradient descent on MSE. `on_epoch` sees the model after each
/// update.
pub fn fit_mlp_with(
    x: &DMatrix<f64>,
    y: &[f64],
    config: &MlpConfig,
    mut on_epoch: impl FnMut(usize, &Mlp),
) -> Result<Mlp, PredictionError> {
    config.validate()?;
    if x.nrows() != y.len() {
        return Err(PredictionError::LengthMismatch {
            left: x.nrows(),
            right: y.len(),
        });
    }
    if x.ncols() == 0 || y.is_empty() {
        return Err(PredictionError::InvalidConfig("the MLP needs at least one feature and row".into()));
    }
    let mut model = Mlp::init(x.ncols(), &config.hidden_sizes, config.seed);
    model.loss_history.reserve(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, grads) = model.loss_and_grad(x, y);
        if !loss.is_finite() {
            return Err(PredictionError::NonFiniteLoss { epoch, loss });
        }
        model.loss_history.push(loss);
        model.step(&grads, config.learning_rate);
        on_epoch(epoch, &model);
    }
    Ok(model)
}

pub fn fit_mlp(x: &DMatrix<f64>, y: &[f64], config: &MlpConfig) -> Result<Mlp, PredictionError> {
    fit_mlp_with(x, y, config, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn flat(m: &Mlp) -> Vec<f64> {
        m.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    fn set_flat(m: &mut Mlp, v: &[f64]) {
        let mut k = 0;
        for l in &mut m.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = v[k];
                k += 1;
            }
        }
    }

    fn grad_check(model: &Mlp, x: &DMatrix<f64>, y: &[f64]) {
        let (_, grads) = model.loss_and_grad(x, y);
        let analytic: Vec<f64> = grads
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect();
        let base = flat(model);
        let mut probe = model.clone();
        for (k, g) in analytic.iter().enumerate() {
            let mut v = base.clone();
            v[k] += 1e-6;
            set_flat(&mut probe, &v);
            let up = probe.loss(x, y);
            v[k] -= 2e-6;
            set_flat(&mut probe, &v);
            let numeric = (up - probe.loss(x, y)) / 2e-6;
            let err = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-4);
            assert!(err < 1e-4, "param {k}: {g} vs {numeric}");
        }
    }

    fn batch(seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        (x, y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = batch(1);
        let model = Mlp::init(3, &[6, 4], 7);
        grad_check(&model, &x, &y);
        let cfg = MlpConfig {
            hidden_sizes: vec![6, 4],
            epochs: 100,
            learning_rate: 0.01,
            seed: 7,
        };
        let trained = fit_mlp(&x, &y, &cfg).unwrap();
        grad_check(&trained, &x, &y);
    }

    #[test]
    fn learns_a_line() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 25.0 - 1.0).collect();
        let x = DMatrix::from_column_slice(50, 1, &xs);
        let y: Vec<f64> = xs.iter().map(|v| 3.0 * v + 1.0).collect();
        let cfg = MlpConfig {
            hidden_sizes: vec![8],
            epochs: 5000,
            learning_rate: 0.01,
            seed: 3,
        };
        let m = fit_mlp(&x, &y, &cfg).unwrap();
        assert!(m.loss(&x, &y).sqrt() < 0.05, "rmse {}", m.loss(&x, &y).sqrt());
        assert_eq!(m.loss_history.len(), 5000);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let (x, y) = batch(2);
        let cfg = MlpConfig {
            hidden_sizes: vec![4],
            epochs: 50,
            learning_rate: 0.05,
            seed: 11,
        };
        assert_eq!(fit_mlp(&x, &y, &cfg).unwrap(), fit_mlp(&x, &y, &cfg).unwrap());
    }

    #[test]
    fn divergence_is_reported() {
        let (x, y) = batch(3);
        let cfg = MlpConfig {
            hidden_sizes: vec![4],
            epochs: 2000,
            learning_rate: 1e6,
            seed: 1,
        };
        assert!(matches!(fit_mlp(&x, &y, &cfg), Err(PredictionError::NonFiniteLoss { .. })));
    }
}
