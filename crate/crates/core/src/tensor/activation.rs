//! Element-wise activations. Backward functions take the forward input `x`
//! (or, for `tanh` and `sigmoid`, the forward output `y`) and the upstream
//! gradient.

use super::Tensor;
use crate::error::{Error, Result};

fn check(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::Shape(format!("activation gradient {:?} vs {:?}", b.shape(), a.shape())))
    }
}

fn zip(a: &Tensor, g: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
    check(a, g)?;
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(g.data()).map(|(&a, &g)| f(a, g)).collect(),
    )
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(x: &Tensor, grad: &Tensor) -> Result<Tensor> {
    zip(x, grad, |x, g| if x > 0.0 { g } else { 0.0 })
}

pub fn leaky_relu_forward(x: &Tensor, slope: f32) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

pub fn leaky_relu_backward(x: &Tensor, grad: &Tensor, slope: f32) -> Result<Tensor> {
    zip(x, grad, |x, g| if x > 0.0 { g } else { slope * g })
}

pub fn tanh_forward(x: &Tensor) -> Tensor {
    x.map(f32::tanh)
}

/// Takes the forward output `y = tanh(x)`.
pub fn tanh_backward(y: &Tensor, grad: &Tensor) -> Result<Tensor> {
    zip(y, grad, |y, g| g * (1.0 - y * y))
}

#[inline]
pub(crate) fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_forward(x: &Tensor) -> Tensor {
    x.map(sigmoid)
}

/// Takes the forward output `y = sigmoid(x)`.
pub fn sigmoid_backward(y: &Tensor, grad: &Tensor) -> Result<Tensor> {
    zip(y, grad, |y, g| g * y * (1.0 - y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f32]) -> Tensor {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn point_values() {
        assert_eq!(relu_forward(&t(&[-1.0, 2.0])).data(), &[0.0, 2.0]);
        assert_eq!(leaky_relu_forward(&t(&[-1.0, 3.0]), 0.2).data(), &[-0.2, 3.0]);
        assert_eq!(tanh_forward(&t(&[0.0])).data(), &[0.0]);
        assert_eq!(sigmoid_forward(&t(&[0.0])).data(), &[0.5]);
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        let y = sigmoid_forward(&t(&[-1e4, 1e4]));
        assert_eq!(y.data(), &[0.0, 1.0]);
    }

    #[test]
    fn kink_gradients() {
        let x = t(&[-0.5, 0.5]);
        let g = t(&[1.0, 1.0]);
        assert_eq!(relu_backward(&x, &g).unwrap().data(), &[0.0, 1.0]);
        assert_eq!(leaky_relu_backward(&x, &g, 0.2).unwrap().data(), &[0.2, 1.0]);
    }
}
