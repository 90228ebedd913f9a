//! Sequential layer graph with named skip taps.
//!
//! A `Tap` layer remembers the activation flowing through it; a later
//! `Concat` layer with the same name stacks that activation (first) with the
//! current one. Gradients reaching a `Concat` are split and the tap share is
//! added back when the backward pass reaches the `Tap`.

use super::activation::{
    leaky_relu_backward, leaky_relu_forward, relu_backward, relu_forward, sigmoid_backward,
    sigmoid_forward, tanh_backward, tanh_forward,
};
use super::conv::{conv2d_backward, conv2d_forward, tconv2d_backward, tconv2d_forward};
use super::shape_ops::{
    concat_channels, dense_backward, dense_forward, global_avg_pool_backward,
    global_avg_pool_forward, pixel_shuffle, pixel_unshuffle, split_channels,
};
use super::Tensor;
use crate::error::{Error, Result};
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Conv3x3,
    Conv3x3Stride2,
    TConv4x4Stride2,
    Relu,
    LeakyRelu(f32),
    Tanh,
    Sigmoid,
    Tap,
    Concat,
    PixelShuffle(usize),
    GlobalAvgPool,
    Dense,
}

impl LayerKind {
    pub fn has_params(self) -> bool {
        matches!(
            self,
            LayerKind::Conv3x3 | LayerKind::Conv3x3Stride2 | LayerKind::TConv4x4Stride2 | LayerKind::Dense
        )
    }
}

/// One layer of a [`Network`]. `name` prefixes the layer's parameters
/// (`<name>.w`, `<name>.b`) and identifies the tap for `Tap` and `Concat`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl LayerSpec {
    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }
}

/// Named parameter tensors in construction order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::State(format!("parameter {name} missing from the store")))
    }
}

/// Gradient buffers, one per parameter tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    buffers: IndexMap<String, Vec<f32>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            buffers: params.iter().map(|(k, t)| (k.to_string(), vec![0.0; t.len()])).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f32]> {
        self.buffers.get(name).map(Vec::as_slice)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f32]> {
        self.buffers.get_mut(name).map(Vec::as_mut_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.buffers.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.buffers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffers.is_empty()
    }

    pub fn zero(&mut self) {
        for b in self.buffers.values_mut() {
            b.fill(0.0);
        }
    }

    pub fn accumulate(&mut self, name: &str, g: &[f32]) -> Result<()> {
        let buf = self
            .buffers
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("no gradient buffer for {name}")))?;
        if buf.len() != g.len() {
            return Err(Error::Shape(format!("gradient for {name} has wrong length")));
        }
        for (a, &v) in buf.iter_mut().zip(g) {
            *a += v;
        }
        Ok(())
    }

    /// `self += factor * other`, parameter by parameter.
    pub fn add_scaled(&mut self, other: &Gradients, factor: f32) -> Result<()> {
        for (name, g) in other.iter() {
            let buf = self
                .buffers
                .get_mut(name)
                .ok_or_else(|| Error::State(format!("no gradient buffer for {name}")))?;
            for (a, &v) in buf.iter_mut().zip(g) {
                *a += factor * v;
            }
        }
        Ok(())
    }
}

/// Activations recorded by [`Network::forward_trace`]: the input of every
/// layer, plus the final output.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Tensor>,
    output: Tensor,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        &self.output
    }

    pub fn into_output(self) -> Tensor {
        self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
    params: ParamStore,
    in_channels: usize,
}

impl Network {
    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn parameter_count(&self) -> usize {
        self.params.parameter_count()
    }

    /// Replaces every parameter tensor with one from `other`, requiring the
    /// same names in the same order with identical shapes.
    pub fn load_params(&mut self, other: ParamStore) -> Result<()> {
        if other.len() != self.params.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                self.params.len(),
                other.len()
            )));
        }
        for ((name, mine), (oname, theirs)) in self.params.iter().zip(other.iter()) {
            if name != oname {
                return Err(Error::Format(format!("expected tensor {name}, found {oname}")));
            }
            if mine.shape() != theirs.shape() {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, architecture needs {:?}",
                    theirs.shape(),
                    mine.shape()
                )));
            }
        }
        self.params = other;
        Ok(())
    }

    /// Static shape propagation; also validates every concat join.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let &[n, mut h, mut w, mut c] = input else {
            return Err(Error::Shape(format!("expected NHWC shape, got {input:?}")));
        };
        if c != self.in_channels {
            return Err(Error::Shape(format!("network takes {} channels, got {c}", self.in_channels)));
        }
        let mut taps: HashMap<&str, (usize, usize, usize)> = HashMap::new();
        for l in &self.layers {
            match l.kind {
                LayerKind::Conv3x3 => c = l.out_channels,
                LayerKind::Conv3x3Stride2 => {
                    h = h.div_ceil(2);
                    w = w.div_ceil(2);
                    c = l.out_channels;
                }
                LayerKind::TConv4x4Stride2 => {
                    h *= 2;
                    w *= 2;
                    c = l.out_channels;
                }
                LayerKind::Tap => {
                    taps.insert(&l.name, (h, w, c));
                }
                LayerKind::Concat => {
                    let (th, tw, tc) = taps[l.name.as_str()];
                    if (th, tw) != (h, w) {
                        return Err(Error::Shape(format!(
                            "concat {} joins {th}x{tw} tap with {h}x{w} activation",
                            l.name
                        )));
                    }
                    c += tc;
                }
                LayerKind::PixelShuffle(r) => {
                    h *= r;
                    w *= r;
                    c /= r * r;
                }
                LayerKind::GlobalAvgPool => {
                    h = 1;
                    w = 1;
                }
                LayerKind::Dense => {
                    if h * w * c != l.in_channels {
                        return Err(Error::Shape(format!(
                            "dense {} expects {} features, gets {}",
                            l.name,
                            l.in_channels,
                            h * w * c
                        )));
                    }
                    h = 1;
                    w = 1;
                    c = l.out_channels;
                }
                _ => {}
            }
        }
        Ok(vec![n, h, w, c])
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.run(input, None)
    }

    /// Forward pass that keeps what [`Network::backward`] needs.
    pub fn forward_trace(&self, input: &Tensor) -> Result<Trace> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let output = self.run(input, Some(&mut inputs))?;
        Ok(Trace { inputs, output })
    }

    fn run(&self, input: &Tensor, mut record: Option<&mut Vec<Tensor>>) -> Result<Tensor> {
        let (_, _, _, c) = input.dims4()?;
        if c != self.in_channels {
            return Err(Error::Shape(format!("network takes {} channels, got {c}", self.in_channels)));
        }
        let mut taps: HashMap<&str, Tensor> = HashMap::new();
        let mut x = input.clone();
        for layer in &self.layers {
            if let Some(r) = record.as_deref_mut() {
                r.push(x.clone());
            }
            x = self.apply(layer, x, &mut taps)?;
            debug_assert!(x.is_finite(), "non-finite activation after layer {}", layer.name);
        }
        Ok(x)
    }

    fn apply<'a>(
        &self,
        layer: &'a LayerSpec,
        x: Tensor,
        taps: &mut HashMap<&'a str, Tensor>,
    ) -> Result<Tensor> {
        let p = |suffix: &str| self.params.require(&format!("{}.{suffix}", layer.name));
        Ok(match layer.kind {
            LayerKind::Conv3x3 => conv2d_forward(&x, p("w")?, p("b")?.data(), 1)?,
            LayerKind::Conv3x3Stride2 => conv2d_forward(&x, p("w")?, p("b")?.data(), 2)?,
            LayerKind::TConv4x4Stride2 => tconv2d_forward(&x, p("w")?, p("b")?.data())?,
            LayerKind::Relu => relu_forward(&x),
            LayerKind::LeakyRelu(s) => leaky_relu_forward(&x, s),
            LayerKind::Tanh => tanh_forward(&x),
            LayerKind::Sigmoid => sigmoid_forward(&x),
            LayerKind::Tap => {
                taps.insert(&layer.name, x.clone());
                x
            }
            LayerKind::Concat => {
                let tap = taps
                    .get(layer.name.as_str())
                    .ok_or_else(|| Error::State(format!("tap {} not set before concat", layer.name)))?;
                concat_channels(tap, &x)?
            }
            LayerKind::PixelShuffle(r) => pixel_shuffle(&x, r)?,
            LayerKind::GlobalAvgPool => global_avg_pool_forward(&x)?,
            LayerKind::Dense => dense_forward(&x, p("w")?, p("b")?.data())?,
        })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the network input.
    pub fn backward(&self, trace: &Trace, grad_output: &Tensor, grads: &mut Gradients) -> Result<Tensor> {
        if trace.inputs.len() != self.layers.len() {
            return Err(Error::State("trace does not belong to this network".into()));
        }
        if grad_output.shape() != trace.output.shape() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} for output {:?}",
                grad_output.shape(),
                trace.output.shape()
            )));
        }
        let mut tap_grads: HashMap<&str, Tensor> = HashMap::new();
        let mut g = grad_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.inputs[i];
            let y = trace.inputs.get(i + 1).unwrap_or(&trace.output);
            g = match layer.kind {
                LayerKind::Conv3x3 | LayerKind::Conv3x3Stride2 | LayerKind::TConv4x4Stride2 => {
                    let w = self.params.require(&layer.weight_name())?;
                    let cg = match layer.kind {
                        LayerKind::Conv3x3 => conv2d_backward(x, w, &g, 1)?,
                        LayerKind::Conv3x3Stride2 => conv2d_backward(x, w, &g, 2)?,
                        _ => tconv2d_backward(x, w, &g)?,
                    };
                    grads.accumulate(&layer.weight_name(), cg.weights.data())?;
                    grads.accumulate(&layer.bias_name(), &cg.bias)?;
                    cg.input
                }
                LayerKind::Dense => {
                    let w = self.params.require(&layer.weight_name())?;
                    let (gx, gw, gb) = dense_backward(x, w, &g)?;
                    grads.accumulate(&layer.weight_name(), gw.data())?;
                    grads.accumulate(&layer.bias_name(), &gb)?;
                    gx
                }
                LayerKind::Relu => relu_backward(x, &g)?,
                LayerKind::LeakyRelu(s) => leaky_relu_backward(x, &g, s)?,
                LayerKind::Tanh => tanh_backward(y, &g)?,
                LayerKind::Sigmoid => sigmoid_backward(y, &g)?,
                LayerKind::Tap => {
                    if let Some(tg) = tap_grads.remove(layer.name.as_str()) {
                        g.add_assign(&tg)?;
                    }
                    g
                }
                LayerKind::Concat => {
                    let current = x.dims4()?.3;
                    let tap_channels = g.dims4()?.3 - current;
                    let (gt, gc) = split_channels(&g, tap_channels)?;
                    match tap_grads.get_mut(layer.name.as_str()) {
                        Some(acc) => acc.add_assign(&gt)?,
                        None => {
                            tap_grads.insert(&layer.name, gt);
                        }
                    }
                    gc
                }
                LayerKind::PixelShuffle(r) => pixel_unshuffle(&g, r)?,
                LayerKind::GlobalAvgPool => global_avg_pool_backward(x.shape(), &g)?,
            };
            debug_assert!(g.is_finite(), "non-finite gradient at layer {}", layer.name);
        }
        Ok(g)
    }
}

/// Incremental construction of a [`Network`] with He-normal (fan-in)
/// initialization and zero biases. Errors are deferred to [`NetworkBuilder::build`].
pub struct NetworkBuilder {
    layers: Vec<LayerSpec>,
    params: ParamStore,
    in_channels: usize,
    channels: usize,
    taps: HashMap<String, usize>,
    rng: ChaCha8Rng,
    error: Option<Error>,
}

impl NetworkBuilder {
    pub fn new(in_channels: usize, seed: u64) -> Self {
        Self {
            layers: Vec::new(),
            params: ParamStore::new(),
            in_channels,
            channels: in_channels,
            taps: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            error: None,
        }
    }

    /// Current channel count at the end of the graph.
    pub fn channels(&self) -> usize {
        self.channels
    }

    fn fail(&mut self, e: Error) {
        if self.error.is_none() {
            self.error = Some(e);
        }
    }

    fn push(&mut self, kind: LayerKind, name: &str, out: usize) {
        self.layers.push(LayerSpec {
            kind,
            name: name.to_string(),
            in_channels: self.channels,
            out_channels: out,
        });
        self.channels = out;
    }

    fn he_tensor(&mut self, shape: Vec<usize>, fan_in: usize) -> Tensor {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive standard deviation");
        let n = shape.iter().product();
        let data = (0..n).map(|_| normal.sample(&mut self.rng) as f32).collect();
        Tensor { shape, data }
    }

    fn parametric(&mut self, kind: LayerKind, name: &str, k: usize, out: usize) -> &mut Self {
        if out == 0 {
            self.fail(Error::Config(format!("layer {name} has zero output channels")));
            return self;
        }
        let wname = format!("{name}.w");
        if self.params.get(&wname).is_some() {
            self.fail(Error::Config(format!("duplicate layer name {name}")));
            return self;
        }
        let cin = self.channels;
        let (shape, fan_in) = if kind == LayerKind::Dense {
            (vec![cin, out], cin)
        } else {
            (vec![k, k, cin, out], k * k * cin)
        };
        let w = self.he_tensor(shape, fan_in);
        self.params.insert(wname, w);
        self.params.insert(format!("{name}.b"), Tensor::zeros(vec![out]));
        self.push(kind, name, out);
        self
    }

    pub fn conv3x3(&mut self, name: &str, out: usize) -> &mut Self {
        self.parametric(LayerKind::Conv3x3, name, 3, out)
    }

    pub fn conv3x3_stride2(&mut self, name: &str, out: usize) -> &mut Self {
        self.parametric(LayerKind::Conv3x3Stride2, name, 3, out)
    }

    pub fn tconv4x4_stride2(&mut self, name: &str, out: usize) -> &mut Self {
        self.parametric(LayerKind::TConv4x4Stride2, name, 4, out)
    }

    /// Fully connected layer over the current channels (use after pooling).
    pub fn dense(&mut self, name: &str, out: usize) -> &mut Self {
        self.parametric(LayerKind::Dense, name, 1, out)
    }

    fn simple(&mut self, kind: LayerKind, name: &str) -> &mut Self {
        let c = self.channels;
        self.push(kind, name, c);
        self
    }

    pub fn relu(&mut self) -> &mut Self {
        self.simple(LayerKind::Relu, "relu")
    }

    pub fn leaky_relu(&mut self, slope: f32) -> &mut Self {
        self.simple(LayerKind::LeakyRelu(slope), "leaky_relu")
    }

    pub fn tanh(&mut self) -> &mut Self {
        self.simple(LayerKind::Tanh, "tanh")
    }

    pub fn sigmoid(&mut self) -> &mut Self {
        self.simple(LayerKind::Sigmoid, "sigmoid")
    }

    pub fn global_avg_pool(&mut self) -> &mut Self {
        self.simple(LayerKind::GlobalAvgPool, "gap")
    }

    pub fn tap(&mut self, name: &str) -> &mut Self {
        if self.taps.insert(name.to_string(), self.channels).is_some() {
            self.fail(Error::Config(format!("duplicate tap {name}")));
        }
        self.simple(LayerKind::Tap, name)
    }

    pub fn concat(&mut self, name: &str) -> &mut Self {
        match self.taps.get(name) {
            Some(&tc) => {
                let out = self.channels + tc;
                self.push(LayerKind::Concat, name, out);
            }
            None => self.fail(Error::Config(format!("concat refers to unknown tap {name}"))),
        }
        self
    }

    pub fn pixel_shuffle(&mut self, r: usize) -> &mut Self {
        if r == 0 || !self.channels.is_multiple_of(r * r) {
            self.fail(Error::Config(format!(
                "{} channels cannot be shuffled by {r}",
                self.channels
            )));
            return self;
        }
        let out = self.channels / (r * r);
        self.push(LayerKind::PixelShuffle(r), "pixel_shuffle", out);
        self
    }

    pub fn build(&mut self) -> Result<Network> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        Ok(Network {
            layers: std::mem::take(&mut self.layers),
            params: std::mem::take(&mut self.params),
            in_channels: self.in_channels,
        })
    }
}
