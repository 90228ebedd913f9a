//! Convolution kernels built on `im2col` and single-precision GEMM.

use super::conv::{
    check_bias, check_tconv_kernel, kernel_dims, out_len, ConvGrads, TCONV_K, TCONV_PAD,
    TCONV_STRIDE,
};
use super::Tensor;
use crate::error::{Error, Result};

/// Row-major `C = beta * C + A B` with explicit strides. Slices are checked
/// to cover every addressed element.
#[allow(clippy::too_many_arguments)]
fn gemm(
    (m, k, n): (usize, usize, usize),
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, rsa, csa) < a.len() && last(k, n, rsb, csb) < b.len());
    }
    assert!(last(m, n, rsc, 1) < c.len());
    // SAFETY: the asserts above keep every index the routine touches inside
    // the three slices, and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

struct Geometry {
    h: usize,
    w: usize,
    cin: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn cols(&self) -> usize {
        self.k * self.k * self.cin
    }

    /// Calls `f(row, col_offset, input_offset)` for each in-bounds tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let row = oy * self.ow + ox;
                for ky in 0..self.k {
                    let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                    if iy < 0 || iy >= self.h as isize {
                        continue;
                    }
                    for kx in 0..self.k {
                        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                        if ix < 0 || ix >= self.w as isize {
                            continue;
                        }
                        let col = (ky * self.k + kx) * self.cin;
                        f(row, col, (iy as usize * self.w + ix as usize) * self.cin);
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f32], cols: &mut [f32]) {
        cols.fill(0.0);
        let (kk, cin) = (self.cols(), self.cin);
        self.for_each_tap(|row, col, src| {
            cols[row * kk + col..row * kk + col + cin].copy_from_slice(&x[src..src + cin]);
        });
    }

    fn col2im(&self, cols: &[f32], x: &mut [f32]) {
        let (kk, cin) = (self.cols(), self.cin);
        self.for_each_tap(|row, col, dst| {
            for (d, s) in x[dst..dst + cin].iter_mut().zip(&cols[row * kk + col..]) {
                *d += s;
            }
        });
    }
}

fn geometry(input: &Tensor, weights: &Tensor, stride: usize, pad: usize) -> Result<(usize, Geometry, usize)> {
    let (n, h, w, cin) = input.dims4()?;
    let (k, wcin, cout) = kernel_dims(weights)?;
    if wcin != cin {
        return Err(Error::Shape(format!("kernel expects {wcin} input channels, got {cin}")));
    }
    if stride == 0 || h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::Shape(format!("input {h}x{w} too small for kernel {k} / stride {stride}")));
    }
    let (oh, ow) = (out_len(h, k, stride, pad), out_len(w, k, stride, pad));
    Ok((n, Geometry { h, w, cin, k, stride, pad, oh, ow }, cout))
}

pub(super) fn conv(
    input: &Tensor,
    weights: &Tensor,
    bias: Option<&[f32]>,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (n, g, cout) = geometry(input, weights, stride, pad)?;
    check_bias(bias, cout)?;
    let (m, kk) = (g.oh * g.ow, g.cols());
    let in_len = g.h * g.w * g.cin;
    let mut cols = vec![0f32; m * kk];
    let mut out = vec![0f32; n * m * cout];
    for b in 0..n {
        g.im2col(&input.data()[b * in_len..(b + 1) * in_len], &mut cols);
        let ob = &mut out[b * m * cout..(b + 1) * m * cout];
        let beta = match bias {
            Some(bias) => {
                for px in ob.chunks_exact_mut(cout) {
                    px.copy_from_slice(bias);
                }
                1.0
            }
            None => 0.0,
        };
        gemm((m, kk, cout), &cols, (kk, 1), weights.data(), (cout, 1), beta, ob, cout);
    }
    Tensor::nhwc(n, g.oh, g.ow, cout, out)
}

pub(super) fn conv_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_output: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<ConvGrads> {
    let (n, g, cout) = geometry(input, weights, stride, pad)?;
    if grad_output.shape() != [n, g.oh, g.ow, cout] {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match output [{n}, {}, {}, {cout}]",
            grad_output.shape(),
            g.oh,
            g.ow
        )));
    }
    let (m, kk) = (g.oh * g.ow, g.cols());
    let in_len = g.h * g.w * g.cin;
    let mut cols = vec![0f32; m * kk];
    let mut gcols = vec![0f32; m * kk];
    let mut gx = vec![0f32; input.len()];
    let mut gw = vec![0f32; weights.len()];
    let mut gb = vec![0f32; cout];
    for b in 0..n {
        let gy = &grad_output.data()[b * m * cout..(b + 1) * m * cout];
        for px in gy.chunks_exact(cout) {
            for (a, &v) in gb.iter_mut().zip(px) {
                *a += v;
            }
        }
        g.im2col(&input.data()[b * in_len..(b + 1) * in_len], &mut cols);
        // dW += cols^T gy
        gemm((kk, m, cout), &cols, (1, kk), gy, (cout, 1), 1.0, &mut gw, cout);
        // dcols = gy W^T
        gemm((m, cout, kk), gy, (cout, 1), weights.data(), (1, cout), 0.0, &mut gcols, kk);
        g.col2im(&gcols, &mut gx[b * in_len..(b + 1) * in_len]);
    }
    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        weights: Tensor::new(weights.shape().to_vec(), gw)?,
        bias: gb,
    })
}

/// `(4, 4, cin, cout)` kernel rearranged as a `cin x (16 cout)` matrix whose
/// column `tap * cout + co` holds `w[tap, ci, co]`.
fn tconv_matrix(weights: &Tensor, cin: usize, cout: usize) -> Vec<f32> {
    let taps = TCONV_K * TCONV_K;
    let mut m = vec![0f32; cin * taps * cout];
    for t in 0..taps {
        for ci in 0..cin {
            let src = (t * cin + ci) * cout;
            let dst = ci * taps * cout + t * cout;
            m[dst..dst + cout].copy_from_slice(&weights.data()[src..src + cout]);
        }
    }
    m
}

/// Calls `f(input_pixel, tap, output_pixel)` for each in-bounds scatter of a
/// 4x4 stride-2 pad-1 transposed convolution.
fn for_each_scatter(h: usize, w: usize, mut f: impl FnMut(usize, usize, usize)) {
    let (oh, ow) = (h * TCONV_STRIDE, w * TCONV_STRIDE);
    for iy in 0..h {
        for ky in 0..TCONV_K {
            let oy = (iy * TCONV_STRIDE + ky) as isize - TCONV_PAD as isize;
            if oy < 0 || oy >= oh as isize {
                continue;
            }
            for ix in 0..w {
                for kx in 0..TCONV_K {
                    let ox = (ix * TCONV_STRIDE + kx) as isize - TCONV_PAD as isize;
                    if ox < 0 || ox >= ow as isize {
                        continue;
                    }
                    f(iy * w + ix, ky * TCONV_K + kx, oy as usize * ow + ox as usize);
                }
            }
        }
    }
}

pub(super) fn tconv(input: &Tensor, weights: &Tensor, bias: &[f32]) -> Result<Tensor> {
    let (n, h, w, cin) = input.dims4()?;
    let cout = check_tconv_kernel(weights, cin)?;
    check_bias(Some(bias), cout)?;
    let taps = TCONV_K * TCONV_K;
    let wide = taps * cout;
    let wm = tconv_matrix(weights, cin, cout);
    let (m, om) = (h * w, 4 * h * w);
    let mut prod = vec![0f32; m * wide];
    let mut out = vec![0f32; n * om * cout];
    for px in out.chunks_exact_mut(cout) {
        px.copy_from_slice(bias);
    }
    for b in 0..n {
        let xb = &input.data()[b * m * cin..(b + 1) * m * cin];
        gemm((m, cin, wide), xb, (cin, 1), &wm, (wide, 1), 0.0, &mut prod, wide);
        let ob = &mut out[b * om * cout..(b + 1) * om * cout];
        for_each_scatter(h, w, |ip, t, op| {
            let src = &prod[ip * wide + t * cout..ip * wide + (t + 1) * cout];
            for (d, s) in ob[op * cout..(op + 1) * cout].iter_mut().zip(src) {
                *d += s;
            }
        });
    }
    Tensor::nhwc(n, 2 * h, 2 * w, cout, out)
}

pub(super) fn tconv_backward(input: &Tensor, weights: &Tensor, grad_output: &Tensor) -> Result<ConvGrads> {
    let (n, h, w, cin) = input.dims4()?;
    let cout = check_tconv_kernel(weights, cin)?;
    if grad_output.shape() != [n, 2 * h, 2 * w, cout] {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match output [{n}, {}, {}, {cout}]",
            grad_output.shape(),
            2 * h,
            2 * w
        )));
    }
    let taps = TCONV_K * TCONV_K;
    let wide = taps * cout;
    let wm = tconv_matrix(weights, cin, cout);
    let (m, om) = (h * w, 4 * h * w);
    let mut gathered = vec![0f32; m * wide];
    let mut gx = vec![0f32; input.len()];
    let mut gwm = vec![0f32; wm.len()];
    let mut gb = vec![0f32; cout];
    for px in grad_output.data().chunks_exact(cout) {
        for (a, &v) in gb.iter_mut().zip(px) {
            *a += v;
        }
    }
    for b in 0..n {
        let gy = &grad_output.data()[b * om * cout..(b + 1) * om * cout];
        gathered.fill(0.0);
        for_each_scatter(h, w, |ip, t, op| {
            gathered[ip * wide + t * cout..ip * wide + (t + 1) * cout]
                .copy_from_slice(&gy[op * cout..(op + 1) * cout]);
        });
        let xb = &input.data()[b * m * cin..(b + 1) * m * cin];
        // dX = G Wm^T
        gemm((m, wide, cin), &gathered, (wide, 1), &wm, (1, wide), 0.0, &mut gx[b * m * cin..(b + 1) * m * cin], cin);
        // dWm += X^T G
        gemm((cin, m, wide), xb, (1, cin), &gathered, (wide, 1), 1.0, &mut gwm, wide);
    }
    let mut gw = vec![0f32; weights.len()];
    for t in 0..taps {
        for ci in 0..cin {
            let dst = (t * cin + ci) * cout;
            let src = ci * wide + t * cout;
            gw[dst..dst + cout].copy_from_slice(&gwm[src..src + cout]);
        }
    }
    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        weights: Tensor::new(weights.shape().to_vec(), gw)?,
        bias: gb,
    })
}
