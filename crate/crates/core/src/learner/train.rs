use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{init_model, loss_and_gradients, predict, sample_loss, ModelParams, ModelSpec, Scaler};
use crate::error::LearnerError;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// `(train, val, test)` fractions.
    pub split: (f64, f64, f64),
    /// Fit per-element input standardisation on the training split.
    pub standardize: bool,
    /// Probability at or above which a sample counts as secure.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 128,
            epochs: 2500,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            split: (0.75, 0.15, 0.10),
            standardize: true,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidConfig(m.to_string()));
        let (a, b, c) = self.split;
        if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || (a + b + c - 1.0).abs() > 1e-9 {
            return bad("split fractions must be in [0, 1] and sum to 1");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("learning rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || self.adam_eps <= 0.0 {
            return bad("Adam constants out of range");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss and accuracy over the epoch's mini-batches, each sample
    /// scored before the update it contributes to.
    pub train_loss: f64,
    pub train_acc: f64,
    /// `NaN` when the validation split is empty.
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Shuffled index partition with `⌊f·M⌋` validation and test samples and the
/// remainder in training.
pub fn split_indices(m: usize, fractions: (f64, f64, f64), seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let count = |f: f64| ((f * m as f64) + 1e-9).floor() as usize;
    let n_val = count(fractions.1).min(m);
    let n_test = count(fractions.2).min(m - n_val);
    let test = idx.split_off(m - n_test);
    let val = idx.split_off(idx.len() - n_val);
    (idx, val, test)
}

pub fn split_dataset<T: Clone>(samples: &[T], fractions: (f64, f64, f64), seed: u64) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (a, b, c) = split_indices(samples.len(), fractions, seed);
    let pick = |v: Vec<usize>| v.into_iter().map(|i| samples[i].clone()).collect();
    (pick(a), pick(b), pick(c))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, theta: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.adam_beta1.powi(self.t);
        let c2 = 1.0 - cfg.adam_beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = cfg.adam_beta1 * self.m[i] + (1.0 - cfg.adam_beta1) * grad[i];
            self.v[i] = cfg.adam_beta2 * self.v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= cfg.lr * mh / (vh.sqrt() + cfg.adam_eps);
        }
    }
}

fn evaluate(params: &ModelParams, set: &[(&DMatrix<f64>, bool)], threshold: f64) -> (f64, f64) {
    if set.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut loss = 0.0;
    let mut hits = 0usize;
    for &(z, y) in set {
        let p = predict(params, z).expect("shapes checked");
        loss += sample_loss(p, y);
        hits += usize::from((p >= threshold) == y);
    }
    let m = set.len() as f64;
    (loss / m, hits as f64 / m)
}

/// Mini-batch Adam on the training split of `samples`. Returns the snapshot
/// with the best validation accuracy (ties: lower validation loss, then the
/// earlier epoch), or the final weights when there is no validation split,
/// along with one [`EpochStats`] per epoch.
pub fn train(
    samples: &[(DMatrix<f64>, bool)],
    spec: &ModelSpec,
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochStats>), LearnerError> {
    cfg.validate()?;
    spec.validate()?;
    if samples.is_empty() {
        return Err(LearnerError::EmptyInput);
    }
    let (tr, va, _) = split_indices(samples.len(), cfg.split, cfg.seed);
    let view = |idx: &[usize]| -> Vec<(&DMatrix<f64>, bool)> {
        idx.iter().map(|&i| (&samples[i].0, samples[i].1)).collect()
    };
    let train_set = view(&tr);
    let val_set = view(&va);
    let positives = train_set.iter().filter(|s| s.1).count();
    if positives == 0 || positives == train_set.len() {
        return Err(LearnerError::DegenerateDataset(format!(
            "training split of {} samples has a single class",
            train_set.len()
        )));
    }

    let mut params = init_model(spec, cfg.seed)?;
    for (z, _) in &train_set {
        if z.nrows() != spec.rows() || z.ncols() != spec.channels() {
            return Err(LearnerError::ShapeMismatch {
                expected: format!("{}x{}", spec.rows(), spec.channels()),
                found: format!("{}x{}", z.nrows(), z.ncols()),
            });
        }
    }
    if cfg.standardize {
        let zs: Vec<&DMatrix<f64>> = train_set.iter().map(|s| s.0).collect();
        params.scaler = Scaler::fit(&zs);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut adam = Adam {
        m: vec![0.0; params.theta.len()],
        v: vec![0.0; params.theta.len()],
        t: 0,
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, f64, ModelParams)> = None;
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i]));
            let (loss, grad, probs) = loss_and_gradients(&params, &batch)?;
            loss_sum += loss * batch.len() as f64;
            hits += probs
                .iter()
                .zip(&batch)
                .filter(|(&p, s)| (p >= cfg.threshold) == s.1)
                .count();
            adam.step(&mut params.theta, &grad, cfg);
        }
        if params.theta.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::InvalidConfig(format!(
                "weights became non-finite at epoch {epoch}"
            )));
        }
        let n = train_set.len() as f64;
        let (val_loss, val_acc) = evaluate(&params, &val_set, cfg.threshold);
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / n,
            train_acc: hits as f64 / n,
            val_loss,
            val_acc,
        });
        if !val_set.is_empty() {
            let better = match &best {
                None => true,
                Some((acc, loss, _)) => val_acc > *acc || (val_acc == *acc && val_loss < *loss),
            };
            if better {
                best = Some((val_acc, val_loss, params.clone()));
            }
        }
    }
    Ok((best.map(|b| b.2).unwrap_or(params), history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let (a, b, c) = split_indices(100, (0.75, 0.15, 0.10), 1);
        assert_eq!((a.len(), b.len(), c.len()), (75, 15, 10));
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (a, b, c) = split_indices(7, (1.0, 0.0, 0.0), 1);
        assert_eq!((a.len(), b.len(), c.len()), (7, 0, 0));
        assert_eq!(split_indices(50, (0.6, 0.2, 0.2), 9), split_indices(50, (0.6, 0.2, 0.2), 9));
        let (a, b, c) = split_indices(10, (0.7, 0.2, 0.1), 3);
        assert_eq!((a.len(), b.len(), c.len()), (7, 2, 1));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = TrainConfig {
            split: (0.5, 0.2, 0.2),
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            lr: -1.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
