//! Central finite-difference gradient checks.
//!
//! Every check perturbs one `f32` coordinate by `+-h`, re-evaluates a scalar
//! loss accumulated in `f64`, and divides by the perturbation that was
//! actually representable, `(x + h) - (x - h)` in `f32`.

use super::activation::{
    leaky_relu_backward, leaky_relu_forward, relu_backward, relu_forward, sigmoid_backward,
    sigmoid_forward, tanh_backward, tanh_forward,
};
use super::conv::{conv2d_backward, conv2d_forward, tconv2d_backward, tconv2d_forward};
use super::loss::mae_loss;
use super::network::{Gradients, Network};
use super::shape_ops::{
    concat_channels, dense_backward, dense_forward, global_avg_pool_backward,
    global_avg_pool_forward, pixel_shuffle, pixel_unshuffle, split_channels,
};
use super::Tensor;
use crate::error::{Error, Result};
use crate::training::ragan::{ragan_discriminator_loss, ragan_generator_loss};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRADCHECK_STEP: f32 = 1e-3;
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;
/// Lower bound on the denominator of [`relative_error`].
pub const GRADCHECK_FLOOR: f64 = 1e-2;
/// Minimum number of coordinates examined per check.
pub const GRADCHECK_MIN_COORDINATES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    pub coordinates: usize,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= GRADCHECK_TOLERANCE
    }
}

/// `|a - n| / max(|a|, |n|, GRADCHECK_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

struct Tally {
    coordinates: usize,
    max_rel: f64,
    max_abs: f64,
}

impl Tally {
    fn new() -> Self {
        Self { coordinates: 0, max_rel: 0.0, max_abs: 0.0 }
    }

    fn add(&mut self, analytic: f64, numeric: f64) {
        self.coordinates += 1;
        self.max_rel = self.max_rel.max(relative_error(analytic, numeric));
        self.max_abs = self.max_abs.max((analytic - numeric).abs());
    }

    fn report(self, name: &str) -> GradCheckReport {
        GradCheckReport {
            name: name.to_string(),
            coordinates: self.coordinates,
            max_relative_error: self.max_rel,
            max_abs_error: self.max_abs,
        }
    }
}

/// Perturbs `*slot` by `+-h`, evaluating `f` at both points, and returns the
/// difference quotient. The slot is restored afterwards.
fn central<F>(slot: &mut f32, mut f: F) -> Result<f64>
where
    F: FnMut(&mut f32, f32) -> Result<f64>,
{
    let orig = *slot;
    let plus = orig + GRADCHECK_STEP;
    let minus = orig - GRADCHECK_STEP;
    let lp = f(slot, plus)?;
    let lm = f(slot, minus)?;
    *slot = orig;
    Ok((lp - lm) / (plus as f64 - minus as f64))
}

/// Checks every coordinate of every argument of `f`, which returns the loss
/// and one gradient per argument.
pub fn check_function<F>(name: &str, mut args: Vec<Tensor>, f: F) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    let (_, grads) = f(&args)?;
    if grads.len() != args.len() {
        return Err(Error::State(format!("{name}: expected {} gradients", args.len())));
    }
    let mut tally = Tally::new();
    for a in 0..args.len() {
        for i in 0..args[a].len() {
            let orig = args[a].data()[i];
            let plus = orig + GRADCHECK_STEP;
            let minus = orig - GRADCHECK_STEP;
            args[a].data_mut()[i] = plus;
            let lp = f(&args)?.0;
            args[a].data_mut()[i] = minus;
            let lm = f(&args)?.0;
            args[a].data_mut()[i] = orig;
            let numeric = (lp - lm) / (plus as f64 - minus as f64);
            tally.add(grads[a].data()[i] as f64, numeric);
        }
    }
    Ok(tally.report(name))
}

/// Finite-difference check of a whole network's parameter gradients on a
/// random sample of `fraction` of all coordinates (at least
/// [`GRADCHECK_MIN_COORDINATES`], capped at the total). `loss` returns the
/// scalar loss and its gradient with respect to the network output.
pub fn gradient_check<L>(
    net: &mut Network,
    input: &Tensor,
    loss: L,
    fraction: f64,
    seed: u64,
) -> Result<GradCheckReport>
where
    L: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    let trace = net.forward_trace(input)?;
    let (_, upstream) = loss(trace.output())?;
    let mut grads = Gradients::zeros_like(net.params());
    net.backward(&trace, &upstream, &mut grads)?;

    let sizes: Vec<(String, usize)> =
        net.params().iter().map(|(n, t)| (n.to_string(), t.len())).collect();
    let total: usize = sizes.iter().map(|s| s.1).sum();
    let want = ((total as f64 * fraction).ceil() as usize)
        .max(GRADCHECK_MIN_COORDINATES)
        .min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, total, want).into_vec();
    picks.sort_unstable();

    let mut tally = Tally::new();
    let (mut offset, mut t) = (0usize, 0usize);
    for flat in picks {
        while flat >= offset + sizes[t].1 {
            offset += sizes[t].1;
            t += 1;
        }
        let (name, idx) = (sizes[t].0.clone(), flat - offset);
        let analytic = grads.get(&name).expect("gradient buffer per parameter")[idx] as f64;
        let mut value = net.params().get(&name).expect("parameter").data()[idx];
        let numeric = central(&mut value, |_, v| {
            net.params_mut().get_mut(&name).expect("parameter").data_mut()[idx] = v;
            Ok(loss(&net.forward(input)?)?.0)
        })?;
        net.params_mut().get_mut(&name).expect("parameter").data_mut()[idx] = value;
        tally.add(analytic, numeric);
    }
    Ok(tally.report("network"))
}

fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect())
        .expect("shape matches length")
}

/// Uniform in `[-hi, -gap] U [gap, hi]`, keeping samples away from a kink at 0.
fn away_from_zero(rng: &mut impl Rng, shape: &[usize], gap: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.random_range(gap..hi);
            if rng.random_bool(0.5) { -v } else { v }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches length")
}

/// Projection loss `sum r * y` for a fixed random `r`; its gradient is `r`.
fn project(y: &Tensor, r: &Tensor) -> Result<f64> {
    if y.shape() != r.shape() {
        return Err(Error::Shape(format!("projection {:?} vs {:?}", y.shape(), r.shape())));
    }
    Ok(y.dot(r))
}

fn bias_tensor(b: Vec<f32>) -> Tensor {
    let n = b.len();
    Tensor::new(vec![n], b).expect("rank-1 bias")
}

/// Gradient checks for every layer type and loss, each on at least
/// [`GRADCHECK_MIN_COORDINATES`] coordinates.
///
/// Inputs and weights of the linear layers are drawn from `[-0.1, 0.1]`.
pub fn check_all_layers(seed: u64) -> Result<Vec<GradCheckReport>> {
    const SCALE: f32 = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    for (name, stride, hw) in [("conv3x3", 1usize, 6usize), ("conv3x3_stride2", 2, 7)] {
        let x = uniform(&mut rng, &[1, hw, hw, 3], -SCALE, SCALE);
        let w = uniform(&mut rng, &[3, 3, 3, 4], -SCALE, SCALE);
        let b = uniform(&mut rng, &[4], -0.1 * SCALE, 0.1 * SCALE);
        let oh = hw.div_ceil(stride);
        let r = uniform(&mut rng, &[1, oh, oh, 4], -1.0, 1.0);
        out.push(check_function(name, vec![x, w, b], |a| {
            let y = conv2d_forward(&a[0], &a[1], a[2].data(), stride)?;
            let g = conv2d_backward(&a[0], &a[1], &r, stride)?;
            Ok((project(&y, &r)?, vec![g.input, g.weights, bias_tensor(g.bias)]))
        })?);
    }

    {
        let x = uniform(&mut rng, &[1, 3, 3, 3], -SCALE, SCALE);
        let w = uniform(&mut rng, &[4, 4, 3, 4], -SCALE, SCALE);
        let b = uniform(&mut rng, &[4], -0.1 * SCALE, 0.1 * SCALE);
        let r = uniform(&mut rng, &[1, 6, 6, 4], -1.0, 1.0);
        out.push(check_function("tconv4x4_stride2", vec![x, w, b], |a| {
            let y = tconv2d_forward(&a[0], &a[1], a[2].data())?;
            let g = tconv2d_backward(&a[0], &a[1], &r)?;
            Ok((project(&y, &r)?, vec![g.input, g.weights, bias_tensor(g.bias)]))
        })?);
    }

    {
        let x = uniform(&mut rng, &[1, 4, 4, 8], -1.0, 1.0);
        let r = uniform(&mut rng, &[1, 8, 8, 2], -1.0, 1.0);
        out.push(check_function("pixel_shuffle", vec![x], |a| {
            let y = pixel_shuffle(&a[0], 2)?;
            Ok((project(&y, &r)?, vec![pixel_unshuffle(&r, 2)?]))
        })?);
    }

    let act_shape = [1, 6, 6, 4];
    let r = uniform(&mut rng, &act_shape, -1.0, 1.0);
    let x = away_from_zero(&mut rng, &act_shape, 1e-2, 2.0);
    out.push(check_function("relu", vec![x.clone()], |a| {
        Ok((project(&relu_forward(&a[0]), &r)?, vec![relu_backward(&a[0], &r)?]))
    })?);
    out.push(check_function("leaky_relu", vec![x], |a| {
        let y = leaky_relu_forward(&a[0], 0.2);
        Ok((project(&y, &r)?, vec![leaky_relu_backward(&a[0], &r, 0.2)?]))
    })?);
    let x = uniform(&mut rng, &act_shape, -2.0, 2.0);
    out.push(check_function("tanh", vec![x.clone()], |a| {
        let y = tanh_forward(&a[0]);
        Ok((project(&y, &r)?, vec![tanh_backward(&y, &r)?]))
    })?);
    out.push(check_function("sigmoid", vec![x], |a| {
        let y = sigmoid_forward(&a[0]);
        Ok((project(&y, &r)?, vec![sigmoid_backward(&y, &r)?]))
    })?);

    {
        let a0 = uniform(&mut rng, &[1, 4, 4, 4], -1.0, 1.0);
        let b0 = uniform(&mut rng, &[1, 4, 4, 3], -1.0, 1.0);
        let r = uniform(&mut rng, &[1, 4, 4, 7], -1.0, 1.0);
        out.push(check_function("concat", vec![a0, b0], |a| {
            let y = concat_channels(&a[0], &a[1])?;
            let (ga, gb) = split_channels(&r, 4)?;
            Ok((project(&y, &r)?, vec![ga, gb]))
        })?);
    }

    {
        let x = uniform(&mut rng, &[1, 5, 5, 5], -1.0, 1.0);
        let r = uniform(&mut rng, &[1, 1, 1, 5], -1.0, 1.0);
        out.push(check_function("global_avg_pool", vec![x], |a| {
            let y = global_avg_pool_forward(&a[0])?;
            Ok((project(&y, &r)?, vec![global_avg_pool_backward(a[0].shape(), &r)?]))
        })?);
    }

    {
        let x = uniform(&mut rng, &[2, 1, 1, 16], -SCALE, SCALE);
        let w = uniform(&mut rng, &[16, 6], -SCALE, SCALE);
        let b = uniform(&mut rng, &[6], -0.1 * SCALE, 0.1 * SCALE);
        let r = uniform(&mut rng, &[2, 1, 1, 6], -1.0, 1.0);
        out.push(check_function("dense", vec![x, w, b], |a| {
            let y = dense_forward(&a[0], &a[1], a[2].data())?;
            let (gx, gw, gb) = dense_backward(&a[0], &a[1], &r)?;
            Ok((project(&y, &r)?, vec![gx, gw, bias_tensor(gb)]))
        })?);
    }

    {
        let target = uniform(&mut rng, &[1, 8, 8, 2], -1.0, 1.0);
        let offset = away_from_zero(&mut rng, &[1, 8, 8, 2], 1e-2, 0.5);
        let mut pred = target.clone();
        pred.add_assign(&offset)?;
        out.push(check_function("mae", vec![pred], |a| {
            let (l, g) = mae_loss(&a[0], &target)?;
            Ok((l, vec![g]))
        })?);
    }

    for (name, disc) in [("ragan_generator", false), ("ragan_discriminator", true)] {
        let real = uniform(&mut rng, &[64], -3.0, 3.0);
        let fake = uniform(&mut rng, &[64], -3.0, 3.0);
        out.push(check_function(name, vec![real, fake], |a| {
            let f = if disc { ragan_discriminator_loss } else { ragan_generator_loss };
            let l = f(a[0].data(), a[1].data())?;
            Ok((l.loss, vec![bias_tensor(l.grad_real), bias_tensor(l.grad_fake)]))
        })?);
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-4) - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn every_layer_passes() {
        for seed in 0..3 {
            for r in check_all_layers(seed).unwrap() {
                assert!(r.coordinates >= GRADCHECK_MIN_COORDINATES, "{}", r.name);
                assert!(r.passed(), "seed {seed}: {r:?}");
            }
        }
    }
}
