//! Confidence-based test-error proxies computed from the deployed model's logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax_rows, Matrix};
use crate::scalar::Scalar;

pub const THRESHOLDS: [f64; 3] = [0.7, 0.8, 0.9];

fn max_prob<T: Scalar>(p: &[T]) -> T {
    p.iter().copied().fold(T::neg_infinity(), T::max)
}

/// `Σ_k p_k log p_k`, with `0 log 0 = 0`.
fn neg_entropy<T: Scalar>(p: &[T]) -> T {
    p.iter().filter(|&&v| v > T::zero()).map(|&v| v * v.ln()).sum()
}

fn mean<T: Scalar>(values: impl Iterator<Item = T>, n: usize) -> f64 {
    (values.sum::<T>() / T::count(n.max(1))).as_f64()
}

/// Mean max-softmax probability.
pub fn conf_score<T: Scalar>(logits: &Matrix<T>) -> f64 {
    let p = softmax_rows(logits);
    mean((0..p.rows()).map(|i| max_prob(p.row(i))), p.rows())
}

/// Mean softmax entropy.
pub fn entropy_score<T: Scalar>(logits: &Matrix<T>) -> f64 {
    let p = softmax_rows(logits);
    mean((0..p.rows()).map(|i| -neg_entropy(p.row(i))), p.rows())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtcVariant {
    /// Max confidence.
    Mc,
    /// Negative entropy.
    Ne,
}

impl AtcVariant {
    fn row_scores<T: Scalar>(self, logits: &Matrix<T>) -> Vec<f64> {
        let p = softmax_rows(logits);
        (0..p.rows())
            .map(|i| match self {
                AtcVariant::Mc => max_prob(p.row(i)).as_f64(),
                AtcVariant::Ne => neg_entropy(p.row(i)).as_f64(),
            })
            .collect()
    }
}

/// Average thresholded confidence, calibrated on a labeled validation set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtcModel {
    pub variant: AtcVariant,
    pub threshold: f64,
}

/// Picks `t` so the fraction of validation rows scoring below `t` matches the
/// validation error: with scores sorted ascending and `k = round(N·err)`,
/// `t` is the midpoint of the `k`-th and `(k+1)`-th order statistics
/// (one unit past the extremes when `k = 0` or `k = N`).
pub fn atc_fit<T: Scalar>(val_logits: &Matrix<T>, val_labels: &[usize], variant: AtcVariant) -> Result<AtcModel> {
    let n = val_logits.rows();
    if n == 0 {
        return Err(Error::Invalid("ATC needs a non-empty validation set".into()));
    }
    if val_labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} validation rows", val_labels.len())));
    }
    let pred = val_logits.argmax_rows();
    let wrong = pred.iter().zip(val_labels).filter(|(p, y)| p != y).count();
    let mut scores = variant.row_scores(val_logits);
    scores.sort_by(f64::total_cmp);
    let threshold = threshold_for(&scores, wrong);
    Ok(AtcModel { variant, threshold })
}

fn threshold_for(sorted: &[f64], k: usize) -> f64 {
    let n = sorted.len();
    if k == 0 {
        sorted[0] - 1.0
    } else if k >= n {
        sorted[n - 1] + 1.0
    } else {
        let (lo, hi) = (sorted[k - 1], sorted[k]);
        lo + (hi - lo) / 2.0
    }
}

/// Fraction of rows whose score is strictly below the fitted threshold.
pub fn atc_score<T: Scalar>(m: &AtcModel, test_logits: &Matrix<T>) -> f64 {
    let scores = m.variant.row_scores(test_logits);
    let below = scores.iter().filter(|&&s| s < m.threshold).count();
    below as f64 / scores.len().max(1) as f64
}

/// `1 -` fraction of rows with max softmax above `tau`.
pub fn threshold_score<T: Scalar>(test_logits: &Matrix<T>, tau: f64) -> f64 {
    let p = softmax_rows(test_logits);
    let confident = (0..p.rows()).filter(|&i| max_prob(p.row(i)).as_f64() > tau).count();
    1.0 - confident as f64 / p.rows().max(1) as f64
}
