use crate::error::{Error, Result};

/// Confusion counts with "secure" as the positive class. Ratios whose
/// denominator is zero are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    /// Insecure cases recognised: TN / (TN + FP).
    pub specificity: Option<f64>,
    /// Secure cases recognised: TP / (TP + FN).
    pub recall: Option<f64>,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub fn compute_metrics(predictions: &[bool], labels: &[bool]) -> Result<Metrics> {
    if predictions.is_empty() {
        return Err(Error::Data("no predictions to score".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(Metrics {
        accuracy: (tp + tn) as f64 / predictions.len() as f64,
        specificity: ratio(tn, tn + fp),
        recall: ratio(tp, tp + fn_),
        tp,
        tn,
        fp,
        fn_,
    })
}
