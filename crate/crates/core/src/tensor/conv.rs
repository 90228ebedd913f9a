use super::Tensor;
use crate::error::{Error, Result};

/// Gradients of a convolution with respect to its three inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Vec<f32>,
}

pub(super) fn kernel_dims(weights: &Tensor) -> Result<(usize, usize, usize)> {
    match weights.shape() {
        &[kh, kw, cin, cout] if kh == kw => Ok((kh, cin, cout)),
        s => Err(Error::Shape(format!("expected square (k, k, cin, cout) kernel, got {s:?}"))),
    }
}

pub(super) fn check_bias(bias: Option<&[f32]>, cout: usize) -> Result<()> {
    match bias {
        Some(b) if b.len() != cout => Err(Error::Shape(format!(
            "bias has {} entries for {cout} output channels",
            b.len()
        ))),
        _ => Ok(()),
    }
}

#[inline]
pub(super) fn out_len(len: usize, k: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - k) / stride + 1
}

#[inline]
fn axpy(acc: &mut [f32], a: f32, x: &[f32]) {
    for (o, &v) in acc.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// `acc += a * x` with a double-precision accumulator.
#[inline]
fn axpy_wide(acc: &mut [f64], a: f32, x: &[f32]) {
    let a = a as f64;
    for (o, &v) in acc.iter_mut().zip(x) {
        *o += a * v as f64;
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    // Eight independent lanes keep the reduction order fixed while letting
    // the compiler vectorize.
    let mut lanes = [0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            lanes[i] += x[i] * y[i];
        }
    }
    let mut tail = 0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    lanes.iter().sum::<f32>() + tail
}

/// Direct-loop zero-padded convolution with a square `k x k` kernel:
/// `out[oy, ox, co] = b[co] + sum in[oy*s + ky - pad, ox*s + kx - pad, ci] * w[ky, kx, ci, co]`.
pub fn conv2d_general(
    input: &Tensor,
    weights: &Tensor,
    bias: Option<&[f32]>,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (n, h, w, cin) = input.dims4()?;
    let (k, wcin, cout) = kernel_dims(weights)?;
    if wcin != cin {
        return Err(Error::Shape(format!("kernel expects {wcin} input channels, got {cin}")));
    }
    check_bias(bias, cout)?;
    if stride == 0 || h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::Shape(format!("input {h}x{w} too small for kernel {k} / stride {stride}")));
    }
    let (oh, ow) = (out_len(h, k, stride, pad), out_len(w, k, stride, pad));
    let x = input.data();
    let wt = weights.data();
    let mut out = vec![0f32; n * oh * ow * cout];
    let mut acc = vec![0f64; cout];

    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                match bias {
                    Some(bias) => acc.iter_mut().zip(bias).for_each(|(a, &v)| *a = v as f64),
                    None => acc.fill(0.0),
                }
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let i0 = ((b * h + iy as usize) * w + ix as usize) * cin;
                        let w0 = (ky * k + kx) * cin * cout;
                        for ci in 0..cin {
                            let v = x[i0 + ci];
                            if v != 0.0 {
                                axpy_wide(&mut acc, v, &wt[w0 + ci * cout..w0 + (ci + 1) * cout]);
                            }
                        }
                    }
                }
                let o0 = ((b * oh + oy) * ow + ox) * cout;
                for (o, &a) in out[o0..o0 + cout].iter_mut().zip(&acc) {
                    *o = a as f32;
                }
            }
        }
    }
    Tensor::nhwc(n, oh, ow, cout, out)
}

/// Direct-loop backward pass of [`conv2d_general`].
pub fn conv2d_general_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_output: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<ConvGrads> {
    let (n, h, w, cin) = input.dims4()?;
    let (k, wcin, cout) = kernel_dims(weights)?;
    if wcin != cin {
        return Err(Error::Shape(format!("kernel expects {wcin} input channels, got {cin}")));
    }
    let (oh, ow) = (out_len(h, k, stride, pad), out_len(w, k, stride, pad));
    if grad_output.shape() != [n, oh, ow, cout] {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match output [{n}, {oh}, {ow}, {cout}]",
            grad_output.shape()
        )));
    }
    let x = input.data();
    let wt = weights.data();
    let g = grad_output.data();
    let mut gx = vec![0f32; x.len()];
    let mut gw = vec![0f32; wt.len()];
    let mut gb = vec![0f32; cout];

    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let o0 = ((b * oh + oy) * ow + ox) * cout;
                let gp = &g[o0..o0 + cout];
                if gp.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for (acc, &v) in gb.iter_mut().zip(gp) {
                    *acc += v;
                }
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let i0 = ((b * h + iy as usize) * w + ix as usize) * cin;
                        let w0 = (ky * k + kx) * cin * cout;
                        for ci in 0..cin {
                            let row = w0 + ci * cout..w0 + (ci + 1) * cout;
                            gx[i0 + ci] += dot(gp, &wt[row.clone()]);
                            let v = x[i0 + ci];
                            if v != 0.0 {
                                axpy(&mut gw[row], v, gp);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        weights: Tensor::new(weights.shape().to_vec(), gw)?,
        bias: gb,
    })
}

fn check_3x3(weights: &Tensor) -> Result<()> {
    match weights.shape() {
        [3, 3, _, _] => Ok(()),
        s => Err(Error::Shape(format!("expected a 3x3 kernel, got {s:?}"))),
    }
}

fn check_stride(stride: usize) -> Result<()> {
    if stride == 1 || stride == 2 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("conv stride must be 1 or 2, got {stride}")))
    }
}

/// 3x3 "same" convolution (zero padding 1). Output spatial size is
/// `ceil(input / stride)`.
pub fn conv2d_forward(input: &Tensor, weights: &Tensor, bias: &[f32], stride: usize) -> Result<Tensor> {
    check_3x3(weights)?;
    check_stride(stride)?;
    super::fast::conv(input, weights, Some(bias), stride, 1)
}

pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_output: &Tensor,
    stride: usize,
) -> Result<ConvGrads> {
    check_3x3(weights)?;
    check_stride(stride)?;
    super::fast::conv_backward(input, weights, grad_output, stride, 1)
}

pub(super) const TCONV_K: usize = 4;
pub(super) const TCONV_STRIDE: usize = 2;
pub(super) const TCONV_PAD: usize = 1;

pub(super) fn check_tconv_kernel(weights: &Tensor, cin: usize) -> Result<usize> {
    match weights.shape() {
        &[TCONV_K, TCONV_K, wcin, cout] if wcin == cin => Ok(cout),
        s => Err(Error::Shape(format!(
            "expected a (4, 4, {cin}, cout) transposed-conv kernel, got {s:?}"
        ))),
    }
}

/// 4x4 stride-2 transposed convolution with padding 1; doubles the spatial
/// size. Input pixel `(iy, ix)` scatters into `(2 iy + ky - 1, 2 ix + kx - 1)`.
pub fn tconv2d_forward(input: &Tensor, weights: &Tensor, bias: &[f32]) -> Result<Tensor> {
    super::fast::tconv(input, weights, bias)
}

pub fn tconv2d_backward(input: &Tensor, weights: &Tensor, grad_output: &Tensor) -> Result<ConvGrads> {
    super::fast::tconv_backward(input, weights, grad_output)
}

/// Direct-loop form of [`tconv2d_forward`].
pub fn tconv2d_forward_reference(input: &Tensor, weights: &Tensor, bias: &[f32]) -> Result<Tensor> {
    let (n, h, w, cin) = input.dims4()?;
    let cout = check_tconv_kernel(weights, cin)?;
    check_bias(Some(bias), cout)?;
    let (oh, ow) = (h * TCONV_STRIDE, w * TCONV_STRIDE);
    let x = input.data();
    let wt = weights.data();
    let mut acc = vec![0f64; n * oh * ow * cout];
    for px in acc.chunks_exact_mut(cout) {
        px.iter_mut().zip(bias).for_each(|(a, &v)| *a = v as f64);
    }
    for b in 0..n {
        for iy in 0..h {
            for ix in 0..w {
                let i0 = ((b * h + iy) * w + ix) * cin;
                let xin = &x[i0..i0 + cin];
                for ky in 0..TCONV_K {
                    let oy = (iy * TCONV_STRIDE + ky) as isize - TCONV_PAD as isize;
                    if oy < 0 || oy >= oh as isize {
                        continue;
                    }
                    for kx in 0..TCONV_K {
                        let ox = (ix * TCONV_STRIDE + kx) as isize - TCONV_PAD as isize;
                        if ox < 0 || ox >= ow as isize {
                            continue;
                        }
                        let o0 = ((b * oh + oy as usize) * ow + ox as usize) * cout;
                        let w0 = (ky * TCONV_K + kx) * cin * cout;
                        let px = &mut acc[o0..o0 + cout];
                        for (ci, &v) in xin.iter().enumerate() {
                            if v != 0.0 {
                                axpy_wide(px, v, &wt[w0 + ci * cout..w0 + (ci + 1) * cout]);
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::nhwc(n, oh, ow, cout, acc.into_iter().map(|v| v as f32).collect())
}

/// Direct-loop form of [`tconv2d_backward`].
pub fn tconv2d_backward_reference(
    input: &Tensor,
    weights: &Tensor,
    grad_output: &Tensor,
) -> Result<ConvGrads> {
    let (n, h, w, cin) = input.dims4()?;
    let cout = check_tconv_kernel(weights, cin)?;
    let (oh, ow) = (h * TCONV_STRIDE, w * TCONV_STRIDE);
    if grad_output.shape() != [n, oh, ow, cout] {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match output [{n}, {oh}, {ow}, {cout}]",
            grad_output.shape()
        )));
    }
    let x = input.data();
    let wt = weights.data();
    let g = grad_output.data();
    let mut gx = vec![0f32; x.len()];
    let mut gw = vec![0f32; wt.len()];
    let mut gb = vec![0f32; cout];
    for gp in g.chunks_exact(cout) {
        for (acc, &v) in gb.iter_mut().zip(gp) {
            *acc += v;
        }
    }
    for b in 0..n {
        for iy in 0..h {
            for ix in 0..w {
                let i0 = ((b * h + iy) * w + ix) * cin;
                for ky in 0..TCONV_K {
                    let oy = (iy * TCONV_STRIDE + ky) as isize - TCONV_PAD as isize;
                    if oy < 0 || oy >= oh as isize {
                        continue;
                    }
                    for kx in 0..TCONV_K {
                        let ox = (ix * TCONV_STRIDE + kx) as isize - TCONV_PAD as isize;
                        if ox < 0 || ox >= ow as isize {
                            continue;
                        }
                        let o0 = ((b * oh + oy as usize) * ow + ox as usize) * cout;
                        let gp = &g[o0..o0 + cout];
                        let w0 = (ky * TCONV_K + kx) * cin * cout;
                        for ci in 0..cin {
                            let row = w0 + ci * cout..w0 + (ci + 1) * cout;
                            gx[i0 + ci] += dot(gp, &wt[row.clone()]);
                            let v = x[i0 + ci];
                            if v != 0.0 {
                                axpy(&mut gw[row], v, gp);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        weights: Tensor::new(weights.shape().to_vec(), gw)?,
        bias: gb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Straight six-loop convolution, 3x3, padding 1.
    fn naive_conv(x: &Tensor, w: &Tensor, b: &[f32], stride: usize) -> Vec<f32> {
        let (n, h, wd, cin) = x.dims4().unwrap();
        let cout = w.shape()[3];
        let (oh, ow) = (h.div_ceil(stride), wd.div_ceil(stride));
        let mut out = Vec::new();
        for bn in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for (co, &bias) in b.iter().enumerate().take(cout) {
                        let mut acc = bias as f64;
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * stride + ky) as i64 - 1;
                                let ix = (ox * stride + kx) as i64 - 1;
                                if iy < 0 || ix < 0 || iy >= h as i64 || ix >= wd as i64 {
                                    continue;
                                }
                                for ci in 0..cin {
                                    let xv = x.data()[((bn * h + iy as usize) * wd + ix as usize) * cin + ci];
                                    let wv = w.data()[((ky * 3 + kx) * cin + ci) * cout + co];
                                    acc += xv as f64 * wv as f64;
                                }
                            }
                        }
                        out.push(acc as f32);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, &[2, 5, 4, 1]);
        let mut k = Tensor::zeros(vec![3, 3, 1, 1]);
        k.data_mut()[4] = 1.0;
        let y = conv2d_forward(&x, &k, &[0.0], 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn box_sum_with_zero_padding() {
        let x = Tensor::filled(vec![1, 4, 4, 1], 0.5);
        let k = Tensor::filled(vec![3, 3, 1, 1], 1.0);
        let y = conv2d_forward(&x, &k, &[0.0], 1).unwrap();
        let at = |r: usize, c: usize| y.data()[r * 4 + c];
        assert_eq!(at(1, 1), 4.5);
        assert_eq!(at(0, 1), 3.0);
        assert_eq!(at(0, 0), 2.0);
    }

    #[test]
    fn matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for stride in [1, 2] {
            let x = random(&mut rng, &[1, 5, 5, 2]);
            let w = random(&mut rng, &[3, 3, 2, 3]);
            let b = [0.1, -0.2, 0.3];
            let y = conv2d_forward(&x, &w, &b, stride).unwrap();
            assert_eq!(y.shape(), &[1, 5usize.div_ceil(stride), 5usize.div_ceil(stride), 3]);
            for (a, e) in y.data().iter().zip(naive_conv(&x, &w, &b, stride)) {
                assert!((a - e).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn stride_two_output_is_ceil() {
        let x = Tensor::zeros(vec![1, 7, 6, 1]);
        let w = Tensor::zeros(vec![3, 3, 1, 2]);
        let y = conv2d_forward(&x, &w, &[0.0, 0.0], 2).unwrap();
        assert_eq!(y.shape(), &[1, 4, 3, 2]);
    }

    #[test]
    fn channel_mismatch() {
        let x = Tensor::zeros(vec![1, 4, 4, 2]);
        let w = Tensor::zeros(vec![3, 3, 3, 1]);
        assert!(matches!(conv2d_forward(&x, &w, &[0.0], 1), Err(Error::Shape(_))));
        let t = Tensor::zeros(vec![4, 4, 3, 1]);
        assert!(matches!(tconv2d_forward(&x, &t, &[0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, &[1, 4, 4, 2]);
        let w = random(&mut rng, &[3, 3, 2, 2]);
        let g = conv2d_backward(&x, &w, &Tensor::zeros(vec![1, 4, 4, 2]), 1).unwrap();
        assert!(g.input.data().iter().chain(g.weights.data()).chain(&g.bias).all(|&v| v == 0.0));
    }

    #[test]
    fn bias_grad_is_channel_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&mut rng, &[2, 4, 4, 2]);
        let w = random(&mut rng, &[3, 3, 2, 3]);
        let up = random(&mut rng, &[2, 2, 2, 3]);
        let g = conv2d_backward(&x, &w, &up, 2).unwrap();
        for c in 0..3 {
            let s: f32 = up.data().iter().skip(c).step_by(3).sum();
            assert!((g.bias[c] - s).abs() < 1e-5);
        }
        let tw = random(&mut rng, &[4, 4, 2, 3]);
        let up = random(&mut rng, &[2, 8, 8, 3]);
        let g = tconv2d_backward(&x, &tw, &up).unwrap();
        for c in 0..3 {
            let s: f32 = up.data().iter().skip(c).step_by(3).sum();
            assert!((g.bias[c] - s).abs() < 1e-4);
        }
    }

    #[test]
    fn tconv_single_pixel_scatter() {
        let x = Tensor::filled(vec![1, 1, 1, 1], 1.0);
        let k = Tensor::filled(vec![4, 4, 1, 1], 1.0);
        let y = tconv2d_forward(&x, &k, &[0.0]).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 1]);
        assert!(y.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn tconv_adjoint_of_strided_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, &[2, 3, 4, 3]);
        let w = random(&mut rng, &[4, 4, 3, 2]);
        let y = random(&mut rng, &[2, 6, 8, 2]);
        let tx = tconv2d_forward(&x, &w, &[0.0, 0.0]).unwrap();
        // swap the channel axes of the kernel: (4, 4, 2, 3)
        let mut wt = vec![0f32; w.len()];
        for k in 0..16 {
            for ci in 0..3 {
                for co in 0..2 {
                    wt[(k * 2 + co) * 3 + ci] = w.data()[(k * 3 + ci) * 2 + co];
                }
            }
        }
        let wt = Tensor::new(vec![4, 4, 2, 3], wt).unwrap();
        let cy = conv2d_general(&y, &wt, None, 2, 1).unwrap();
        let lhs = tx.dot(&y);
        let rhs = x.dot(&cy);
        assert!((lhs - rhs).abs() <= 1e-4 * lhs.abs().max(rhs.abs()));
    }

    #[test]
    fn fast_path_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (stride, hw) in [(1usize, 7usize), (2, 7), (2, 8)] {
            let x = random(&mut rng, &[2, hw, hw + 1, 3]);
            let w = random(&mut rng, &[3, 3, 3, 5]);
            let b: Vec<f32> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = conv2d_forward(&x, &w, &b, stride).unwrap();
            let slow = conv2d_general(&x, &w, Some(&b), stride, 1).unwrap();
            close(fast.data(), slow.data());
            let up = random(&mut rng, fast.shape());
            let gf = conv2d_backward(&x, &w, &up, stride).unwrap();
            let gs = conv2d_general_backward(&x, &w, &up, stride, 1).unwrap();
            close(gf.input.data(), gs.input.data());
            close(gf.weights.data(), gs.weights.data());
            close(&gf.bias, &gs.bias);
        }
        let x = random(&mut rng, &[2, 3, 5, 3]);
        let w = random(&mut rng, &[4, 4, 3, 2]);
        let b = [0.25, -0.5];
        close(
            tconv2d_forward(&x, &w, &b).unwrap().data(),
            tconv2d_forward_reference(&x, &w, &b).unwrap().data(),
        );
        let up = random(&mut rng, &[2, 6, 10, 2]);
        let gf = tconv2d_backward(&x, &w, &up).unwrap();
        let gs = tconv2d_backward_reference(&x, &w, &up).unwrap();
        close(gf.input.data(), gs.input.data());
        close(gf.weights.data(), gs.weights.data());
        close(&gf.bias, &gs.bias);
    }

    fn close(a: &[f32], b: &[f32]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-5 * (1.0 + y.abs()), "{x} vs {y}");
        }
    }
}
