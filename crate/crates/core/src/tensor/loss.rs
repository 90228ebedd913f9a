use super::Tensor;
use crate::error::{Error, Result};

/// Mean absolute error, accumulated in `f64`, with subgradient
/// `sign(pred - target) / count` (zero on ties).
pub fn mae_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Shape("empty tensors in loss".into()));
    }
    let count = pred.len() as f64;
    let inv = (1.0 / count) as f32;
    let mut sum = 0f64;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p as f64 - t as f64;
        sum += d.abs();
        grad.push(if d > 0.0 {
            inv
        } else if d < 0.0 {
            -inv
        } else {
            0.0
        });
    }
    Ok((sum / count, Tensor::new(pred.shape().to_vec(), grad)?))
}
