//! Convolution + three dense layers over aggregated node features, trained
//! with hand-written backpropagation and Adam.
//!
//! Layer accounting for an input of `R = K+2` rows and `C = F·nodes` channels:
//!
//! * depthwise convolution along the row axis: every input channel has its
//!   own `conv_filters` kernels of width `conv_kernel`, no bias, valid
//!   padding, stride 1, giving `C·conv_filters` maps of length
//!   `L = R − conv_kernel + 1`;
//! * ReLU, flatten (`C·conv_filters·L` values);
//! * dense + ReLU, dense + ReLU, dense to one logit, sigmoid.
//!
//! With `conv_filters = 2`, `fc_sizes = [4, 5, 1]`, `K = 3`, `F = 3`, one
//! node and kernel 3 this is `18 + 76 + 25 + 6 = 125` parameters.

mod persist;
mod train;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::LearnerError;
use crate::par;

pub use persist::{persist_model, restore_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{split_dataset, split_indices, train, EpochStats, TrainConfig};

/// Probabilities are clamped to `[BCE_EPS, 1 − BCE_EPS]` inside the loss.
pub const BCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub conv_filters: usize,
    pub conv_kernel: usize,
    /// Widths of the three dense layers; the last must be 1.
    pub fc_sizes: [usize; 3],
    /// Aggregation length K; inputs have `K + 2` rows.
    pub k_len: usize,
    pub n_features: usize,
    pub agg_nodes: Vec<usize>,
}

impl ModelSpec {
    /// `conv_filters` followed by the dense widths, e.g. `[2, 4, 5, 1]`.
    pub fn from_widths(widths: [usize; 4], k_len: usize, n_features: usize, agg_nodes: Vec<usize>) -> Self {
        ModelSpec {
            conv_filters: widths[0],
            conv_kernel: 3,
            fc_sizes: [widths[1], widths[2], widths[3]],
            k_len,
            n_features,
            agg_nodes,
        }
    }

    pub fn rows(&self) -> usize {
        self.k_len + 2
    }

    pub fn channels(&self) -> usize {
        self.n_features * self.agg_nodes.len()
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        (self.rows(), self.n_features, self.agg_nodes.len())
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidSpec(m.to_string()));
        if self.fc_sizes[2] != 1 {
            return bad("final layer width must be 1");
        }
        if self.conv_filters == 0 || self.fc_sizes.contains(&0) {
            return bad("layer widths must be positive");
        }
        if self.conv_kernel == 0 || self.conv_kernel > self.rows() {
            return bad("kernel must be in 1..=K+2");
        }
        if self.k_len == 0 || self.n_features == 0 || self.agg_nodes.is_empty() {
            return bad("K, feature count and aggregation nodes must be non-empty");
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let conv_out = self.channels() * self.conv_filters;
        let len = self.rows() + 1 - self.conv_kernel;
        let flat = conv_out * len;
        let [f1, f2, f3] = self.fc_sizes;
        let conv = 0;
        let w1 = conv + conv_out * self.conv_kernel;
        let b1 = w1 + flat * f1;
        let w2 = b1 + f1;
        let b2 = w2 + f1 * f2;
        let w3 = b2 + f2;
        let b3 = w3 + f2 * f3;
        Layout {
            len,
            flat,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            total: b3 + f3,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().total
    }
}

/// Offsets of each tensor in the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    len: usize,
    flat: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    total: usize,
}

/// Per-element input standardisation fitted on training data. Not trained,
/// so not counted as parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn identity(size: usize) -> Self {
        Scaler {
            mean: vec![0.0; size],
            std: vec![1.0; size],
        }
    }

    /// Column-major element statistics; near-constant elements keep scale 1.
    pub fn fit(samples: &[&DMatrix<f64>]) -> Self {
        let size = samples[0].len();
        let m = samples.len() as f64;
        let mut mean = vec![0.0; size];
        for s in samples {
            for (a, v) in mean.iter_mut().zip(s.iter()) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= m);
        let mut var = vec![0.0; size];
        for s in samples {
            for ((a, v), mu) in var.iter_mut().zip(s.iter()).zip(&mean) {
                *a += (v - mu) * (v - mu);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / m).sqrt();
                if s > 1e-9 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, std }
    }
}

/// Trainable weights as one flat vector (see the module docs for order),
/// plus the input scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub theta: Vec<f64>,
    pub scaler: Scaler,
}

impl ModelParams {
    pub fn parameter_count(&self) -> usize {
        self.theta.len()
    }

    pub fn conv_weights(&self) -> &[f64] {
        let l = self.spec.layout();
        &self.theta[..l.w1]
    }

    /// Weight matrix (out × in, row-major) and bias of dense layer `i`.
    pub fn dense(&self, i: usize) -> (&[f64], &[f64]) {
        let l = self.spec.layout();
        let (w, b, end) = match i {
            0 => (l.w1, l.b1, l.w2),
            1 => (l.w2, l.b2, l.w3),
            2 => (l.w3, l.b3, l.total),
            _ => panic!("dense layer index {i} out of range"),
        };
        (&self.theta[w..b], &self.theta[b..end])
    }

    pub fn dense_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let l = self.spec.layout();
        let (w, b, end) = match i {
            0 => (l.w1, l.b1, l.w2),
            1 => (l.w2, l.b2, l.w3),
            2 => (l.w3, l.b3, l.total),
            _ => panic!("dense layer index {i} out of range"),
        };
        let (ws, bs) = self.theta[w..end].split_at_mut(b - w);
        (ws, bs)
    }

    pub fn conv_weights_mut(&mut self) -> &mut [f64] {
        let l = self.spec.layout();
        &mut self.theta[..l.w1]
    }
}

/// Uniform `±√(1/fan_in)` weights, zero biases, identity scaler.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<ModelParams, LearnerError> {
    spec.validate()?;
    let l = spec.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = vec![0.0; l.total];
    let [f1, f2, _] = spec.fc_sizes;
    let ranges = [
        (0, l.w1, spec.conv_kernel),
        (l.w1, l.b1, l.flat),
        (l.w2, l.b2, f1),
        (l.w3, l.b3, f2),
    ];
    for (start, end, fan_in) in ranges {
        let bound = (1.0 / fan_in as f64).sqrt();
        for w in &mut theta[start..end] {
            *w = rng.gen_range(-bound..bound);
        }
    }
    Ok(ModelParams {
        spec: spec.clone(),
        theta,
        scaler: Scaler::identity(spec.rows() * spec.channels()),
    })
}

fn check_shape(spec: &ModelSpec, z: &DMatrix<f64>) -> Result<(), LearnerError> {
    if z.nrows() != spec.rows() || z.ncols() != spec.channels() {
        return Err(LearnerError::ShapeMismatch {
            expected: format!("{}x{}", spec.rows(), spec.channels()),
            found: format!("{}x{}", z.nrows(), z.ncols()),
        });
    }
    Ok(())
}

/// Intermediate values of one forward pass, kept for backpropagation.
struct Trace {
    x: Vec<f64>,
    a0: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    logit: f64,
}

fn dense_relu(w: &[f64], b: &[f64], input: &[f64], relu: bool) -> Vec<f64> {
    let n_in = input.len();
    b.iter()
        .enumerate()
        .map(|(o, &bias)| {
            let row = &w[o * n_in..(o + 1) * n_in];
            let s = bias + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            if relu {
                s.max(0.0)
            } else {
                s
            }
        })
        .collect()
}

fn forward(params: &ModelParams, z: &DMatrix<f64>) -> Trace {
    let spec = &params.spec;
    let l = spec.layout();
    let rows = spec.rows();
    let (c, w) = (spec.conv_filters, spec.conv_kernel);
    // Standardised input, column-major: element (r, ch) at ch·rows + r.
    let x: Vec<f64> = z
        .iter()
        .zip(params.scaler.mean.iter().zip(&params.scaler.std))
        .map(|(v, (m, s))| (v - m) / s)
        .collect();
    let kern = params.conv_weights();
    let mut a0 = vec![0.0; l.flat];
    for ch in 0..spec.channels() {
        let col = &x[ch * rows..(ch + 1) * rows];
        for f in 0..c {
            let o = ch * c + f;
            let k = &kern[o * w..(o + 1) * w];
            for p in 0..l.len {
                let s: f64 = k.iter().zip(&col[p..p + w]).map(|(a, b)| a * b).sum();
                a0[o * l.len + p] = s.max(0.0);
            }
        }
    }
    let (w1, b1) = params.dense(0);
    let h1 = dense_relu(w1, b1, &a0, true);
    let (w2, b2) = params.dense(1);
    let h2 = dense_relu(w2, b2, &h1, true);
    let (w3, b3) = params.dense(2);
    let logit = dense_relu(w3, b3, &h2, false)[0];
    Trace { x, a0, h1, h2, logit }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Largest `f64` below one.
const ONE_MINUS: f64 = 1.0 - f64::EPSILON / 2.0;

/// Probability of the secure class, strictly inside `(0, 1)`.
pub fn predict(params: &ModelParams, z: &DMatrix<f64>) -> Result<f64, LearnerError> {
    check_shape(&params.spec, z)?;
    Ok(sigmoid(forward(params, z).logit).clamp(f64::MIN_POSITIVE, ONE_MINUS))
}

/// Pre-sigmoid output.
pub fn predict_logit(params: &ModelParams, z: &DMatrix<f64>) -> Result<f64, LearnerError> {
    check_shape(&params.spec, z)?;
    Ok(forward(params, z).logit)
}

pub fn predict_batch(params: &ModelParams, zs: &[DMatrix<f64>]) -> Result<Vec<f64>, LearnerError> {
    zs.iter().map(|z| predict(params, z)).collect()
}

/// Mean binary cross-entropy with probabilities clamped to `[eps, 1 − eps]`.
pub fn bce_loss(probs: &[f64], labels: &[bool]) -> Result<f64, LearnerError> {
    if probs.is_empty() {
        return Err(LearnerError::EmptyInput);
    }
    if probs.len() != labels.len() {
        return Err(LearnerError::ShapeMismatch {
            expected: format!("{} labels", probs.len()),
            found: labels.len().to_string(),
        });
    }
    let total: f64 = probs.iter().zip(labels).map(|(&p, &y)| sample_loss(p, y)).sum();
    Ok(total / probs.len() as f64)
}

fn sample_loss(p: f64, y: bool) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Loss and gradient for one sample, unscaled by batch size.
fn sample_gradient(params: &ModelParams, z: &DMatrix<f64>, y: bool) -> (f64, f64, Vec<f64>) {
    let spec = &params.spec;
    let l = spec.layout();
    let rows = spec.rows();
    let (c, w) = (spec.conv_filters, spec.conv_kernel);
    let t = forward(params, z);
    let p = sigmoid(t.logit);
    let target = if y { 1.0 } else { 0.0 };
    // The clamp in the loss is flat outside [eps, 1 − eps].
    let d_logit = if (BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
        p - target
    } else {
        0.0
    };
    let mut g = vec![0.0; l.total];

    let [f1, f2, _] = spec.fc_sizes;
    let (w3, _) = params.dense(2);
    for (k, &h) in t.h2.iter().enumerate() {
        g[l.w3 + k] = d_logit * h;
    }
    g[l.b3] = d_logit;
    let d2: Vec<f64> = (0..f2)
        .map(|k| if t.h2[k] > 0.0 { d_logit * w3[k] } else { 0.0 })
        .collect();

    let (w2, _) = params.dense(1);
    let mut dh1 = vec![0.0; f1];
    for (o, &d) in d2.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        for i in 0..f1 {
            g[l.w2 + o * f1 + i] = d * t.h1[i];
            dh1[i] += d * w2[o * f1 + i];
        }
        g[l.b2 + o] = d;
    }
    let d1: Vec<f64> = (0..f1)
        .map(|k| if t.h1[k] > 0.0 { dh1[k] } else { 0.0 })
        .collect();

    let (w1, _) = params.dense(0);
    let mut da0 = vec![0.0; l.flat];
    for (o, &d) in d1.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &w1[o * l.flat..(o + 1) * l.flat];
        let grow = &mut g[l.w1 + o * l.flat..l.w1 + (o + 1) * l.flat];
        for i in 0..l.flat {
            grow[i] = d * t.a0[i];
            da0[i] += d * row[i];
        }
        g[l.b1 + o] = d;
    }

    for ch in 0..spec.channels() {
        let col = &t.x[ch * rows..(ch + 1) * rows];
        for f in 0..c {
            let o = ch * c + f;
            for p in 0..l.len {
                let idx = o * l.len + p;
                if t.a0[idx] <= 0.0 || da0[idx] == 0.0 {
                    continue;
                }
                for k in 0..w {
                    g[o * w + k] += da0[idx] * col[p + k];
                }
            }
        }
    }
    (sample_loss(p, y), p, g)
}

/// Mean loss and analytic gradient of the mean BCE over a batch, with the
/// per-sample probabilities. Per-sample work may run in parallel; the sum is
/// always taken in batch order.
pub fn loss_and_gradients(
    params: &ModelParams,
    batch: &[(&DMatrix<f64>, bool)],
) -> Result<(f64, Vec<f64>, Vec<f64>), LearnerError> {
    if batch.is_empty() {
        return Err(LearnerError::EmptyInput);
    }
    for (z, _) in batch {
        check_shape(&params.spec, z)?;
    }
    let parts = par::map(batch, |&(z, y)| sample_gradient(params, z, y));
    let m = batch.len() as f64;
    let mut grad = vec![0.0; params.theta.len()];
    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(batch.len());
    for (l, p, g) in parts {
        loss += l;
        probs.push(p);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|v| *v /= m);
    Ok((loss / m, grad, probs))
}

/// Gradient of the mean BCE over `batch` with respect to `theta`.
pub fn gradients(params: &ModelParams, batch: &[(&DMatrix<f64>, bool)]) -> Result<Vec<f64>, LearnerError> {
    Ok(loss_and_gradients(params, batch)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(super) fn spec_125() -> ModelSpec {
        ModelSpec::from_widths([2, 4, 5, 1], 3, 3, vec![0])
    }

    #[test]
    fn parameter_count_125() {
        let spec = spec_125();
        assert_eq!(spec.parameter_count(), 125);
        let p = init_model(&spec, 7).unwrap();
        assert_eq!(p.parameter_count(), 125);
        // Tensor-by-tensor: 3 channels × 2 filters × 3 taps, then 18 → 4 → 5 → 1.
        assert_eq!(p.conv_weights().len(), 18);
        assert_eq!(p.dense(0).0.len() + p.dense(0).1.len(), 18 * 4 + 4);
        assert_eq!(p.dense(1).0.len() + p.dense(1).1.len(), 4 * 5 + 5);
        assert_eq!(p.dense(2).0.len() + p.dense(2).1.len(), 5 + 1);
    }

    #[test]
    fn init_deterministic_with_zero_biases() {
        let spec = spec_125();
        let a = init_model(&spec, 3).unwrap();
        assert_eq!(a, init_model(&spec, 3).unwrap());
        assert_ne!(a.theta, init_model(&spec, 4).unwrap().theta);
        for i in 0..3 {
            assert!(a.dense(i).1.iter().all(|&b| b == 0.0));
        }
        let bound = (1.0f64 / 18.0).sqrt();
        assert!(a.dense(0).0.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec_125();
        s.fc_sizes[2] = 2;
        assert!(s.validate().is_err());
        let mut s = spec_125();
        s.conv_kernel = 6;
        assert!(s.validate().is_err());
        s.conv_kernel = 5;
        assert!(s.validate().is_ok());
    }

    #[test]
    fn zero_weights_give_half() {
        let mut p = init_model(&spec_125(), 1).unwrap();
        p.theta.fill(0.0);
        let z = DMatrix::from_fn(5, 3, |i, j| (i as f64 - 2.0) * (j as f64 + 0.5));
        assert_eq!(predict(&p, &z).unwrap(), 0.5);
    }

    #[test]
    fn output_layer_is_affine() {
        let mut p = init_model(&spec_125(), 11).unwrap();
        // Nudge biases so the hidden layers are active.
        p.dense_mut(0).1.fill(0.3);
        p.dense_mut(1).1.fill(0.3);
        let z = DMatrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64).sin());
        let base = predict_logit(&p, &z).unwrap();
        p.dense_mut(2).0.iter_mut().for_each(|w| *w *= 2.5);
        assert!((predict_logit(&p, &z).unwrap() - 2.5 * base).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_tiny_model() {
        // K = 1 → 3 rows, one feature, one node, one filter of width 2,
        // dense widths [1, 1, 1].
        let spec = ModelSpec {
            conv_filters: 1,
            conv_kernel: 2,
            fc_sizes: [1, 1, 1],
            k_len: 1,
            n_features: 1,
            agg_nodes: vec![0],
        };
        assert_eq!(spec.parameter_count(), 2 + (2 + 1) + (1 + 1) + (1 + 1));
        let mut p = init_model(&spec, 0).unwrap();
        // conv [0.5, -1], W1 [1, 2] b1 0.1, W2 [3] b2 -0.2, W3 [0.7] b3 0.05
        p.theta = vec![0.5, -1.0, 1.0, 2.0, 0.1, 3.0, -0.2, 0.7, 0.05];
        let z = DMatrix::from_column_slice(3, 1, &[2.0, 0.5, -1.0]);
        // conv: [2·0.5 − 0.5, 0.5·0.5 + 1] = [0.5, 1.25]
        // h1 = relu(0.5 + 2.5 + 0.1) = 3.1; h2 = relu(9.3 − 0.2) = 9.1
        // logit = 6.37 + 0.05 = 6.42
        let want = 1.0 / (1.0 + (-6.42f64).exp());
        assert!((predict(&p, &z).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn bce_examples() {
        assert_eq!(bce_loss(&[1.0], &[true]).unwrap(), -(1.0f64 - 1e-12).ln());
        assert!(bce_loss(&[1.0], &[true]).unwrap() < 1e-11);
        assert!((bce_loss(&[0.5], &[true]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let want = -(0.9f64.ln() + 0.9f64.ln()) / 2.0;
        assert!((bce_loss(&[0.9, 0.1], &[true, false]).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.105361).abs() < 1e-6);
        assert!(matches!(bce_loss(&[], &[]), Err(LearnerError::EmptyInput)));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = init_model(&spec_125(), 1).unwrap();
        assert!(matches!(
            predict(&p, &DMatrix::zeros(4, 3)),
            Err(LearnerError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn duplicated_batch_matches_single() {
        let mut p = init_model(&spec_125(), 5).unwrap();
        p.dense_mut(0).1.fill(0.2);
        p.dense_mut(1).1.fill(0.2);
        let z = DMatrix::from_fn(5, 3, |i, j| ((i + 2 * j) as f64).cos());
        let one = gradients(&p, &[(&z, true)]).unwrap();
        let many = gradients(&p, &[(&z, true); 4]).unwrap();
        for (a, b) in one.iter().zip(&many) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn saturated_correct_output_has_zero_gradient() {
        let mut p = init_model(&spec_125(), 5).unwrap();
        p.theta.fill(0.0);
        *p.dense_mut(2).1.first_mut().unwrap() = 50.0;
        let z = DMatrix::from_element(5, 3, 1.0);
        let g = gradients(&p, &[(&z, true), (&z, true)]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }
}
