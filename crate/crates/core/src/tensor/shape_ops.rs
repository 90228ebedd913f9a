//! Layout operations (sub-pixel shuffle, channel concat) plus global average
//! pooling and the fully connected layer.

use super::Tensor;
use crate::error::{Error, Result};

/// `(N, H, W, C*r*r) -> (N, rH, rW, C)`. Input channel `c*r*r + dy*r + dx`
/// lands at output pixel `(r*y + dy, r*x + dx)`, channel `c`.
pub fn pixel_shuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let (n, h, w, cin) = input.dims4()?;
    if r == 0 || cin % (r * r) != 0 {
        return Err(Error::Shape(format!(
            "{cin} channels are not divisible by the shuffle factor {r}^2"
        )));
    }
    let c = cin / (r * r);
    let (oh, ow) = (h * r, w * r);
    let x = input.data();
    let mut out = vec![0f32; x.len()];
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let i0 = ((b * h + y) * w + xx) * cin;
                for ch in 0..c {
                    for dy in 0..r {
                        for dx in 0..r {
                            let o = ((b * oh + r * y + dy) * ow + r * xx + dx) * c + ch;
                            out[o] = x[i0 + ch * r * r + dy * r + dx];
                        }
                    }
                }
            }
        }
    }
    Tensor::nhwc(n, oh, ow, c, out)
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(input: &Tensor, r: usize) -> Result<Tensor> {
    let (n, oh, ow, c) = input.dims4()?;
    if r == 0 || oh % r != 0 || ow % r != 0 {
        return Err(Error::Shape(format!("{oh}x{ow} is not divisible by {r}")));
    }
    let (h, w, cin) = (oh / r, ow / r, c * r * r);
    let x = input.data();
    let mut out = vec![0f32; x.len()];
    for b in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let o0 = ((b * h + y) * w + xx) * cin;
                for ch in 0..c {
                    for dy in 0..r {
                        for dx in 0..r {
                            let i = ((b * oh + r * y + dy) * ow + r * xx + dx) * c + ch;
                            out[o0 + ch * r * r + dy * r + dx] = x[i];
                        }
                    }
                }
            }
        }
    }
    Tensor::nhwc(n, h, w, cin, out)
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, h, w, ca) = a.dims4()?;
    let (nb, hb, wb, cb) = b.dims4()?;
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::Shape(format!(
            "concat needs equal N,H,W: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = Vec::with_capacity(a.len() + b.len());
    for (pa, pb) in a.data().chunks_exact(ca).zip(b.data().chunks_exact(cb)) {
        out.extend_from_slice(pa);
        out.extend_from_slice(pb);
    }
    Tensor::nhwc(n, h, w, ca + cb, out)
}

/// Splits off the first `first_channels` channels.
pub fn split_channels(t: &Tensor, first_channels: usize) -> Result<(Tensor, Tensor)> {
    let (n, h, w, c) = t.dims4()?;
    if first_channels > c {
        return Err(Error::Shape(format!("cannot split {first_channels} of {c} channels")));
    }
    let cb = c - first_channels;
    let mut a = Vec::with_capacity(n * h * w * first_channels);
    let mut b = Vec::with_capacity(n * h * w * cb);
    for px in t.data().chunks_exact(c) {
        a.extend_from_slice(&px[..first_channels]);
        b.extend_from_slice(&px[first_channels..]);
    }
    Ok((Tensor::nhwc(n, h, w, first_channels, a)?, Tensor::nhwc(n, h, w, cb, b)?))
}

/// Spatial mean per channel: `(N, H, W, C) -> (N, 1, 1, C)`.
pub fn global_avg_pool_forward(input: &Tensor) -> Result<Tensor> {
    let (n, h, w, c) = input.dims4()?;
    let hw = h * w;
    let mut out = vec![0f32; n * c];
    for b in 0..n {
        let mut acc = vec![0f64; c];
        for px in input.data()[b * hw * c..(b + 1) * hw * c].chunks_exact(c) {
            for (a, &v) in acc.iter_mut().zip(px) {
                *a += v as f64;
            }
        }
        for (o, a) in out[b * c..(b + 1) * c].iter_mut().zip(acc) {
            *o = (a / hw as f64) as f32;
        }
    }
    Tensor::nhwc(n, 1, 1, c, out)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad: &Tensor) -> Result<Tensor> {
    let &[n, h, w, c] = input_shape else {
        return Err(Error::Shape(format!("expected NHWC shape, got {input_shape:?}")));
    };
    if grad.shape() != [n, 1, 1, c] {
        return Err(Error::Shape(format!("pool gradient {:?} for input {input_shape:?}", grad.shape())));
    }
    let inv = 1.0 / (h * w) as f32;
    let mut out = Vec::with_capacity(n * h * w * c);
    for b in 0..n {
        let g = &grad.data()[b * c..(b + 1) * c];
        for _ in 0..h * w {
            out.extend(g.iter().map(|v| v * inv));
        }
    }
    Tensor::nhwc(n, h, w, c, out)
}

fn dense_dims(input: &Tensor, weights: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, h, w, c) = input.dims4()?;
    let features = h * w * c;
    match weights.shape() {
        &[fin, fout] if fin == features => Ok((n, fin, fout)),
        s => Err(Error::Shape(format!("dense weights {s:?} for {features} input features"))),
    }
}

/// Fully connected layer on each sample's flattened features; output is
/// `(N, 1, 1, out)`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &[f32]) -> Result<Tensor> {
    let (n, fin, fout) = dense_dims(input, weights)?;
    if bias.len() != fout {
        return Err(Error::Shape(format!("dense bias has {} entries for {fout}", bias.len())));
    }
    let mut out = Vec::with_capacity(n * fout);
    for x in input.data().chunks_exact(fin) {
        for (o, &b) in bias.iter().enumerate() {
            let mut acc = b as f64;
            for (i, &v) in x.iter().enumerate() {
                acc += v as f64 * weights.data()[i * fout + o] as f64;
            }
            out.push(acc as f32);
        }
    }
    Tensor::nhwc(n, 1, 1, fout, out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn dense_backward(
    input: &Tensor,
    weights: &Tensor,
    grad: &Tensor,
) -> Result<(Tensor, Tensor, Vec<f32>)> {
    let (n, fin, fout) = dense_dims(input, weights)?;
    if grad.len() != n * fout {
        return Err(Error::Shape(format!("dense gradient {:?}", grad.shape())));
    }
    let mut gx = vec![0f32; input.len()];
    let mut gw = vec![0f32; weights.len()];
    let mut gb = vec![0f32; fout];
    for b in 0..n {
        let g = &grad.data()[b * fout..(b + 1) * fout];
        let x = &input.data()[b * fin..(b + 1) * fin];
        for (acc, &v) in gb.iter_mut().zip(g) {
            *acc += v;
        }
        for i in 0..fin {
            let row = &weights.data()[i * fout..(i + 1) * fout];
            gx[b * fin + i] = row.iter().zip(g).map(|(w, g)| w * g).sum();
            for (o, &gv) in g.iter().enumerate() {
                gw[i * fout + o] += x[i] * gv;
            }
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gx)?,
        Tensor::new(weights.shape().to_vec(), gw)?,
        gb,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shuffle_example() {
        let x = Tensor::nhwc(1, 1, 1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 1]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pixel_unshuffle(&y, 2).unwrap(), x);
    }

    #[test]
    fn shuffle_rejects_indivisible() {
        let x = Tensor::zeros(vec![1, 2, 2, 3]);
        assert!(matches!(pixel_shuffle(&x, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn concat_and_split() {
        let a = Tensor::filled(vec![1, 4, 4, 8], 1.0);
        let b = Tensor::filled(vec![1, 4, 4, 8], 2.0);
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), &[1, 4, 4, 16]);
        let (a2, b2) = split_channels(&c, 8).unwrap();
        assert_eq!((&a2, &b2), (&a, &b));
        let bad = Tensor::zeros(vec![1, 2, 4, 8]);
        assert!(concat_channels(&a, &bad).is_err());
    }

    #[test]
    fn pool_values() {
        let x = Tensor::nhwc(1, 2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(global_avg_pool_forward(&x).unwrap().data(), &[1.5]);
        let c = Tensor::filled(vec![2, 3, 5, 2], 0.7);
        assert!(global_avg_pool_forward(&c).unwrap().data().iter().all(|&v| (v - 0.7).abs() < 1e-7));
        let g = global_avg_pool_backward(&[1, 2, 2, 1], &Tensor::filled(vec![1, 1, 1, 1], 1.0)).unwrap();
        assert_eq!(g.data(), &[0.25; 4]);
    }

    #[test]
    fn dense_value() {
        let x = Tensor::nhwc(1, 1, 1, 2, vec![1.0, 2.0]).unwrap();
        let w = Tensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap();
        assert_eq!(dense_forward(&x, &w, &[0.5]).unwrap().data(), &[11.5]);
    }
}
