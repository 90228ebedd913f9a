//! A small dense-tensor engine: NHWC `f32` activations, forward and backward
//! kernels for the layers the generator and discriminator use, a sequential
//! layer graph with named skip taps, Adam, and a finite-difference checker.

mod activation;
mod adam;
mod conv;
mod fast;
pub mod gradcheck;
mod loss;
mod network;
mod shape_ops;

pub use activation::{
    leaky_relu_backward, leaky_relu_forward, relu_backward, relu_forward, sigmoid_backward,
    sigmoid_forward, tanh_backward, tanh_forward,
};
pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use conv::{
    conv2d_backward, conv2d_forward, conv2d_general, conv2d_general_backward, tconv2d_backward,
    tconv2d_backward_reference, tconv2d_forward, tconv2d_forward_reference, ConvGrads,
};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use loss::mae_loss;
pub use network::{Gradients, LayerKind, LayerSpec, Network, NetworkBuilder, ParamStore, Trace};
pub use shape_ops::{
    concat_channels, dense_backward, dense_forward, global_avg_pool_backward,
    global_avg_pool_forward, pixel_shuffle, pixel_unshuffle, split_channels,
};

use crate::error::{Error, Result};

/// Dense `f32` array with an explicit shape. Activations are rank 4 in NHWC
/// order; parameters use whatever rank fits (conv kernels are
/// `(kh, kw, cin, cout)`, biases are rank 1).
///
/// Gradients live outside the tensor, in [`Gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: impl Into<Vec<usize>>, value: f32) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self { shape, data: vec![value; n] }
    }

    /// Rank-4 NHWC tensor.
    pub fn nhwc(n: usize, h: usize, w: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(vec![n, h, w, c], data)
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(n, h, w, c)` of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape.as_slice() {
            &[n, h, w, c] => Ok((n, h, w, c)),
            s => Err(Error::Shape(format!("expected NHWC tensor, got shape {s:?}"))),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Inner product accumulated in `f64`.
    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "cannot add {:?} to {:?}",
                other.shape, self.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn reshape(mut self, shape: impl Into<Vec<usize>>) -> Result<Tensor> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Sample `i` of the batch as its own rank-4 tensor.
    pub fn batch_item(&self, i: usize) -> Result<Tensor> {
        let (n, h, w, c) = self.dims4()?;
        if i >= n {
            return Err(Error::Shape(format!("batch index {i} out of range for {n}")));
        }
        let len = h * w * c;
        Tensor::nhwc(1, h, w, c, self.data[i * len..(i + 1) * len].to_vec())
    }

    /// Stacks equal-shape rank-4 tensors along the batch axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or_else(|| Error::Shape("empty stack".into()))?;
        let (_, h, w, c) = first.dims4()?;
        let mut data = Vec::with_capacity(items.len() * h * w * c);
        let mut n = 0;
        for t in items {
            let (tn, th, tw, tc) = t.dims4()?;
            if (th, tw, tc) != (h, w, c) {
                return Err(Error::Shape(format!(
                    "cannot stack {:?} with {:?}",
                    t.shape, first.shape
                )));
            }
            n += tn;
            data.extend_from_slice(&t.data);
        }
        Tensor::nhwc(n, h, w, c, data)
    }
}
