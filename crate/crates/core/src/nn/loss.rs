use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Row-wise softmax with the max subtracted before exponentiating.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut probs = logits.clone();
    for r in 0..probs.rows() {
        let row = probs.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    probs
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(Error::Shape {
            op: "softmax_xent labels",
            left: logits.shape(),
            right: (labels.len(), 1),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(Error::Param(format!(
            "label {bad} out of range for {} classes",
            logits.cols()
        )));
    }
    Ok(())
}

/// Summed negative log-likelihood over the batch, via log-sum-exp.
pub(crate) fn nll_sum(logits: &Matrix, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
        total += lse - row[label];
    }
    total
}

/// Number of rows whose arg-max (first on ties) equals the label.
pub fn correct_count(logits: &Matrix, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(r, &label)| argmax(logits.row(r)) == label)
        .count()
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// `(probs − onehot) / batch`.
pub fn xent_grad(probs: &Matrix, labels: &[usize]) -> Result<Matrix> {
    check_labels(probs, labels)?;
    let batch = labels.len() as f64;
    let mut d = probs.clone();
    for (r, &label) in labels.iter().enumerate() {
        let row = d.row_mut(r);
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v /= batch;
        }
    }
    Ok(d)
}

/// Mean cross-entropy of the softmax of `logits` against `labels`.
/// Returns `(loss, dloss/dlogits, probs)`.
pub fn softmax_xent(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix, Matrix)> {
    check_labels(logits, labels)?;
    let probs = softmax(logits);
    let loss = nll_sum(logits, labels) / labels.len() as f64;
    let dlogits = xent_grad(&probs, labels)?;
    Ok((loss, dlogits, probs))
}
