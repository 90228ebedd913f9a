use super::{PixelRange, Plane, RasterImage};
use crate::error::{Error, Result};

const KEYS_A: f64 = -0.5;

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn keys_weight(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((KEYS_A + 2.0) * t - (KEYS_A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((KEYS_A * t - 5.0 * KEYS_A) * t + 8.0 * KEYS_A) * t - 4.0 * KEYS_A
    } else {
        0.0
    }
}

/// Four source taps and weights for one output coordinate.
#[derive(Debug, Clone, Copy)]
struct Taps {
    index: [usize; 4],
    weight: [f64; 4],
}

fn taps_for_axis(src_len: usize, dst_len: usize) -> Vec<Taps> {
    let ratio = src_len as f64 / dst_len as f64;
    let last = src_len as isize - 1;
    (0..dst_len)
        .map(|d| {
            let s = (d as f64 + 0.5) * ratio - 0.5;
            let base = s.floor();
            let frac = s - base;
            let base = base as isize;
            let mut index = [0usize; 4];
            let mut weight = [0f64; 4];
            for k in 0..4 {
                let offset = k as isize - 1;
                index[k] = (base + offset).clamp(0, last) as usize;
                weight[k] = keys_weight(frac - offset as f64);
            }
            Taps { index, weight }
        })
        .collect()
}

/// Weighted sum written relative to the second tap so that constant runs
/// reproduce exactly, independent of rounding in the weights.
#[inline]
fn apply(taps: &Taps, sample: impl Fn(usize) -> f64) -> f64 {
    let anchor = sample(taps.index[1]);
    let mut acc = 0.0;
    for k in 0..4 {
        acc += taps.weight[k] * (sample(taps.index[k]) - anchor);
    }
    anchor + acc
}

/// Output size for a scale factor: `round(scale * len)`, at least 1.
fn scaled_len(len: usize, scale: f64) -> usize {
    ((len as f64 * scale).round() as usize).max(1)
}

/// Separable Keys bicubic resampling with half-pixel alignment and clamped
/// edges. Output dimensions are `round(scale * input)`.
pub fn bicubic_resize(plane: &Plane, scale: f64) -> Result<Plane> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Parameter(format!("resize scale must be positive, got {scale}")));
    }
    if plane.is_empty() {
        return Err(Error::Shape("cannot resize an empty plane".into()));
    }
    let (h, w) = (plane.height(), plane.width());
    let (oh, ow) = (scaled_len(h, scale), scaled_len(w, scale));
    Ok(resize_to(plane, oh, ow))
}

pub(crate) fn resize_to(plane: &Plane, oh: usize, ow: usize) -> Plane {
    let (h, w) = (plane.height(), plane.width());
    let xt = taps_for_axis(w, ow);
    let yt = taps_for_axis(h, oh);

    let mut horiz = vec![0.0; h * ow];
    for y in 0..h {
        let row = &plane.data()[y * w..(y + 1) * w];
        for (x, t) in xt.iter().enumerate() {
            horiz[y * ow + x] = apply(t, |i| row[i]);
        }
    }
    let mut out = vec![0.0; oh * ow];
    for (y, t) in yt.iter().enumerate() {
        for x in 0..ow {
            out[y * ow + x] = apply(t, |i| horiz[i * ow + x]);
        }
    }
    Plane::from_fn(oh, ow, |y, x| out[y * ow + x])
}

/// Resizes every channel of an image. LDR images are clamped back into
/// `[0, 1]` to absorb kernel overshoot.
pub fn bicubic_resize_image(image: &RasterImage, scale: f64) -> Result<RasterImage> {
    let planes = image
        .planes()
        .iter()
        .map(|p| bicubic_resize(p, scale))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Plane> = planes.iter().collect();
    let out = RasterImage::from_planes(&refs, PixelRange::Signed)?;
    Ok(match image.range() {
        PixelRange::Signed => out,
        range => out.clamp_to(range),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_partition_of_unity() {
        for i in 0..=20 {
            let f = i as f64 / 20.0;
            let s: f64 = (-1..=2).map(|k| keys_weight(f - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
        assert_eq!(keys_weight(0.0), 1.0);
        assert_eq!(keys_weight(1.0), 0.0);
        assert_eq!(keys_weight(2.0), 0.0);
    }

    #[test]
    fn constant_is_exact() {
        let p = Plane::filled(5, 7, 0.372_819);
        for scale in [2.0, 0.5, 1.5, 3.0] {
            let out = bicubic_resize(&p, scale).unwrap();
            assert_eq!(out.height(), (5.0 * scale).round() as usize);
            assert!(out.data().iter().all(|&v| v == 0.372_819));
        }
    }

    #[test]
    fn linear_ramp_interior() {
        let p = Plane::from_fn(8, 8, |y, x| 0.1 * x as f64 + 0.05 * y as f64);
        let out = bicubic_resize(&p, 2.0).unwrap();
        // src coordinate of output d is (d + 0.5) / 2 - 0.5
        for y in 4..12 {
            for x in 4..12 {
                let sx = (x as f64 + 0.5) / 2.0 - 0.5;
                let sy = (y as f64 + 0.5) / 2.0 - 0.5;
                let want = 0.1 * sx + 0.05 * sy;
                assert!((out.get(y, x) - want).abs() < 1e-6, "({y},{x})");
            }
        }
    }

    #[test]
    fn matches_direct_kernel_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = Plane::from_fn(4, 4, |_, _| rng.random::<f64>());
        let out = bicubic_resize(&p, 2.0).unwrap();
        for oy in 0..8 {
            for ox in 0..8 {
                let sy = (oy as f64 + 0.5) / 2.0 - 0.5;
                let sx = (ox as f64 + 0.5) / 2.0 - 0.5;
                let mut acc = 0.0;
                for iy in (sy.floor() as i64 - 1)..=(sy.floor() as i64 + 2) {
                    for ix in (sx.floor() as i64 - 1)..=(sx.floor() as i64 + 2) {
                        let w = keys_weight(sy - iy as f64) * keys_weight(sx - ix as f64);
                        acc += w * p.get(iy.clamp(0, 3) as usize, ix.clamp(0, 3) as usize);
                    }
                }
                assert!((out.get(oy, ox) - acc).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_scale() {
        let p = Plane::filled(2, 2, 1.0);
        assert!(matches!(bicubic_resize(&p, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(bicubic_resize(&p, -2.0), Err(Error::Parameter(_))));
    }
}
