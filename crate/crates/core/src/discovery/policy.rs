//! Graph-sampling policy: a single-head self-attention encoder over factor
//! columns followed by a bilinear edge scorer.
//!
//! Shapes, with `m` state rows, `d` factors and hidden width `h`:
//!
//! ```text
//! X0 = Cᵀ E                      d×h   (C is the m×d state, E the m×h projection)
//! A  = softmax_rows(X0 Wq (X0 Wk)ᵀ / √h)
//! H1 = X0 + A (X0 Wv)
//! S  = H1 + relu(H1 Wff)         embeddings, one row per factor
//! logit[i][j] = s_iᵀ Wdec s_j + b,   logit[i][i] = −∞
//! ```
//!
//! There are no positional terms, so permuting the factors permutes the
//! embeddings and the logits the same way.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::DiscoveryError;

/// Trainable actor parameters plus the critic's scalar baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub embed: DMatrix<f64>,
    pub query: DMatrix<f64>,
    pub key: DMatrix<f64>,
    pub value: DMatrix<f64>,
    pub feed_forward: DMatrix<f64>,
    pub decoder: DMatrix<f64>,
    pub bias: f64,
    /// Critic baseline; not part of the gradient.
    pub baseline: f64,
}

impl PolicyParams {
    /// Random initialization. Input projections are scaled so embeddings of
    /// standardized columns start with unit-order entries and initial edge
    /// logits are close to zero.
    pub fn init<R: Rng + ?Sized>(rows: usize, hidden: usize, rng: &mut R) -> Self {
        let mut normal = |r: usize, c: usize, scale: f64| {
            DMatrix::from_fn(r, c, |_, _| {
                let z: f64 = StandardNormal.sample(rng);
                z * scale
            })
        };
        let h = hidden as f64;
        Self {
            embed: normal(rows, hidden, 1.0 / (rows as f64).sqrt()),
            query: normal(hidden, hidden, 1.0 / h.sqrt()),
            key: normal(hidden, hidden, 1.0 / h.sqrt()),
            value: normal(hidden, hidden, 0.5 / h.sqrt()),
            feed_forward: normal(hidden, hidden, 0.5 / h.sqrt()),
            decoder: normal(hidden, hidden, 0.1 / h),
            bias: 0.0,
            baseline: 0.0,
        }
    }

    pub fn zeros(rows: usize, hidden: usize) -> Self {
        let z = || DMatrix::zeros(hidden, hidden);
        Self {
            embed: DMatrix::zeros(rows, hidden),
            query: z(),
            key: z(),
            value: z(),
            feed_forward: z(),
            decoder: z(),
            bias: 0.0,
            baseline: 0.0,
        }
    }

    pub fn rows(&self) -> usize {
        self.embed.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.embed.ncols()
    }

    fn matrices(&self) -> [&DMatrix<f64>; 6] {
        [&self.embed, &self.query, &self.key, &self.value, &self.feed_forward, &self.decoder]
    }

    fn matrices_mut(&mut self) -> [&mut DMatrix<f64>; 6] {
        [
            &mut self.embed,
            &mut self.query,
            &mut self.key,
            &mut self.value,
            &mut self.feed_forward,
            &mut self.decoder,
        ]
    }

    /// Actor parameters flattened (matrices column-major, then the bias).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.matrices().iter().flat_map(|m| m.iter().copied()).collect();
        v.push(self.bias);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for m in self.matrices_mut() {
            for x in m.iter_mut() {
                *x = it.next().expect("flat vector too short");
            }
        }
        self.bias = it.next().expect("flat vector too short");
        assert!(it.next().is_none(), "flat vector too long");
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite()) && self.baseline.is_finite()
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    x0: DMatrix<f64>,
    q: DMatrix<f64>,
    k: DMatrix<f64>,
    v: DMatrix<f64>,
    attn: DMatrix<f64>,
    h1: DMatrix<f64>,
    pre_relu: DMatrix<f64>,
    embeddings: DMatrix<f64>,
}

impl EncoderCache {
    pub fn embeddings(&self) -> &DMatrix<f64> {
        &self.embeddings
    }
}

fn check_state(state: &DMatrix<f64>, params: &PolicyParams) -> Result<(), DiscoveryError> {
    if state.nrows() != params.rows() {
        return Err(DiscoveryError::ShapeMismatch(format!(
            "state has {} rows, encoder expects {}",
            state.nrows(),
            params.rows()
        )));
    }
    let h = params.hidden();
    for m in params.matrices().iter().skip(1) {
        if m.shape() != (h, h) {
            return Err(DiscoveryError::ShapeMismatch(format!(
                "parameter is {}x{}, expected {h}x{h}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    Ok(())
}

/// Embeds every factor column of the `m×d` state into a `d×h` matrix.
pub fn encode(state: &DMatrix<f64>, params: &PolicyParams) -> Result<DMatrix<f64>, DiscoveryError> {
    Ok(encode_with_cache(state, params)?.embeddings)
}

pub fn encode_with_cache(
    state: &DMatrix<f64>,
    params: &PolicyParams,
) -> Result<EncoderCache, DiscoveryError> {
    check_state(state, params)?;
    let scale = 1.0 / (params.hidden() as f64).sqrt();
    let x0 = state.transpose() * &params.embed;
    let q = &x0 * &params.query;
    let k = &x0 * &params.key;
    let v = &x0 * &params.value;
    let mut attn = (&q * k.transpose()) * scale;
    softmax_rows(&mut attn);
    let h1 = &x0 + &attn * &v;
    let pre_relu = &h1 * &params.feed_forward;
    let embeddings = &h1 + pre_relu.map(|x| x.max(0.0));
    Ok(EncoderCache {
        x0,
        q,
        k,
        v,
        attn,
        h1,
        pre_relu,
        embeddings,
    })
}

fn softmax_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.apply(|x| *x = (*x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Pairwise edge logits; the diagonal is `−∞` so self loops are never drawn.
pub fn decode_edge_logits(
    embeddings: &DMatrix<f64>,
    params: &PolicyParams,
) -> Result<DMatrix<f64>, DiscoveryError> {
    let h = params.hidden();
    if embeddings.ncols() != h || params.decoder.shape() != (h, h) {
        return Err(DiscoveryError::ShapeMismatch(format!(
            "embeddings are {}x{}, decoder is {}x{}",
            embeddings.nrows(),
            embeddings.ncols(),
            params.decoder.nrows(),
            params.decoder.ncols()
        )));
    }
    let mut logits = embeddings * &params.decoder * embeddings.transpose();
    logits.add_scalar_mut(params.bias);
    for i in 0..logits.nrows() {
        logits[(i, i)] = f64::NEG_INFINITY;
    }
    Ok(logits)
}

/// Backpropagates `d loss / d logits` (diagonal ignored) to every actor
/// parameter.
pub fn backward(
    state: &DMatrix<f64>,
    params: &PolicyParams,
    cache: &EncoderCache,
    dlogits: &DMatrix<f64>,
) -> PolicyParams {
    let d = dlogits.nrows();
    let mut dl = dlogits.clone();
    for i in 0..d {
        dl[(i, i)] = 0.0;
    }
    let s = &cache.embeddings;
    let scale = 1.0 / (params.hidden() as f64).sqrt();

    let mut grad = PolicyParams::zeros(params.rows(), params.hidden());
    grad.bias = dl.sum();
    grad.decoder = s.transpose() * &dl * s;
    let ds = &dl * s * params.decoder.transpose() + dl.transpose() * s * &params.decoder;

    let dpre = ds.zip_map(&cache.pre_relu, |g, z| if z > 0.0 { g } else { 0.0 });
    grad.feed_forward = cache.h1.transpose() * &dpre;
    let dh1 = &ds + &dpre * params.feed_forward.transpose();

    let mut dx0 = dh1.clone();
    let dattn = &dh1 * cache.v.transpose();
    let dv = cache.attn.transpose() * &dh1;

    // Row-wise softmax Jacobian.
    let mut dscores = DMatrix::zeros(d, d);
    for i in 0..d {
        let dot: f64 = (0..d).map(|k| dattn[(i, k)] * cache.attn[(i, k)]).sum();
        for j in 0..d {
            dscores[(i, j)] = cache.attn[(i, j)] * (dattn[(i, j)] - dot) * scale;
        }
    }
    let dq = &dscores * &cache.k;
    let dk = dscores.transpose() * &cache.q;

    grad.query = cache.x0.transpose() * &dq;
    grad.key = cache.x0.transpose() * &dk;
    grad.value = cache.x0.transpose() * &dv;
    dx0 += &dq * params.query.transpose() + &dk * params.key.transpose() + &dv * params.value.transpose();
    grad.embed = state * dx0;
    grad
}
