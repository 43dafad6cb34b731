use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Row-wise numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy over the batch and its gradient `(softmax − onehot)/batch`.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let batch = logits.rows();
    let classes = logits.row_len();
    if labels.len() != batch {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    let inv_b = T::one() / T::lit(batch as f64);
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(&[batch, classes]);
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::ClassOutOfRange {
                class: y,
                num_classes: classes,
            });
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&z| (z - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        let g = grad.row_mut(i);
        for (c, gc) in g.iter_mut().enumerate() {
            let p = (row[c] - log_z).exp();
            *gc = (p - if c == y { T::one() } else { T::zero() }) * inv_b;
        }
    }
    Ok((loss * inv_b, grad))
}
