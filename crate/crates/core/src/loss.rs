//! Softmax cross-entropy.

use alloc::vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Row-wise softmax of a logit matrix, stabilized by the row max.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

/// In-place softmax of one vector.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = math::exp(*x - max);
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax − onehot) / B` with respect to the logits.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, c) = (logits.rows(), logits.cols());
    if logits.shape().len() != 2 || labels.len() != b {
        return Err(Error::ShapeMismatch {
            context: "cross_entropy labels",
            expected: vec![b],
            found: vec![labels.len()],
        });
    }
    if c < 2 {
        return Err(Error::InvalidConfig(
            "cross_entropy needs at least 2 classes".into(),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidConfig(alloc::format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + math::ln(row.iter().map(|z| math::exp(z - max)).sum::<f64>());
        loss += lse - row[label];
        let g = grad.row_mut(r);
        for (gi, z) in g.iter_mut().zip(row) {
            *gi = math::exp(z - lse) / b as f64;
        }
        g[label] -= 1.0 / b as f64;
    }
    Ok((loss / b as f64, grad))
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> alloc::vec::Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
