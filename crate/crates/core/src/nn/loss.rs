use super::Matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// `log Σ_k exp(row_k)`, stabilized.
pub fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

fn check_labels(logits: &Matrix<impl Scalar>, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(i) = labels.iter().position(|&y| y >= logits.cols()) {
        return Err(Error::Invariant(format!("label out of range at node {i}")));
    }
    Ok(())
}

/// Mean over rows of `-log softmax(logits)_y`.
pub fn cross_entropy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<T> {
    check_labels(logits, labels)?;
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        total += log_sum_exp(row) - row[y];
    }
    Ok(total / T::count(labels.len().max(1)))
}

/// Loss together with `∂loss/∂logits = (softmax - onehot) / M`.
pub fn cross_entropy_with_grad<T: Scalar>(
    logits: &Matrix<T>,
    labels: &[usize],
) -> Result<(T, Matrix<T>)> {
    check_labels(logits, labels)?;
    let inv_m = T::count(labels.len().max(1)).recip();
    let mut grad = softmax_rows(logits);
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        total += log_sum_exp(row) - row[y];
        let g = grad.row_mut(i);
        g[y] -= T::one();
        for v in g.iter_mut() {
            *v *= inv_m;
        }
    }
    Ok((total * inv_m, grad))
}
