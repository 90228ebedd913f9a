use super::{PixelRange, Plane, RasterImage};
use crate::error::{Error, Result};

const KR: f64 = 0.299;
const KG: f64 = 0.587;
const KB: f64 = 0.114;
const CB_SCALE: f64 = 0.564;
const CR_SCALE: f64 = 0.713;

/// BT.601 luma of a linear or gamma-encoded RGB triple.
#[inline]
pub fn luminance(r: f64, g: f64, b: f64) -> f64 {
    KR * r + KG * g + KB * b
}

/// Luma plane of an image; a single-channel image is returned as is.
pub fn luminance_plane(image: &RasterImage) -> Plane {
    match image.channels() {
        1 => image.channel(0),
        _ => {
            let data = image
                .data()
                .chunks_exact(3)
                .map(|px| luminance(px[0], px[1], px[2]))
                .collect();
            Plane { height: image.height(), width: image.width(), data }
        }
    }
}

/// Full-range BT.601 RGB to YCbCr, chroma centered on 0.5.
pub fn rgb_to_ycbcr(image: &RasterImage) -> Result<(Plane, Plane, Plane)> {
    if image.channels() != 3 {
        return Err(Error::Shape(format!(
            "rgb_to_ycbcr needs 3 channels, got {}",
            image.channels()
        )));
    }
    let n = image.height() * image.width();
    let (mut y, mut cb, mut cr) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for px in image.data().chunks_exact(3) {
        let (r, g, b) = (px[0], px[1], px[2]);
        let luma = luminance(r, g, b);
        y.push(luma);
        cb.push(0.5 + (b - luma) * CB_SCALE);
        cr.push(0.5 + (r - luma) * CR_SCALE);
    }
    let (h, w) = (image.height(), image.width());
    Ok((Plane::new(h, w, y)?, Plane::new(h, w, cb)?, Plane::new(h, w, cr)?))
}

/// Inverse of [`rgb_to_ycbcr`]. The result is not clamped: luminance above 1
/// or chroma at extreme luminance can give samples outside `[0, 1]`, so the
/// image is tagged [`PixelRange::Signed`].
pub fn ycbcr_to_rgb(y: &Plane, cb: &Plane, cr: &Plane) -> Result<RasterImage> {
    y.check_same_shape(cb, "ycbcr_to_rgb Y/Cb")?;
    y.check_same_shape(cr, "ycbcr_to_rgb Y/Cr")?;
    let mut out = Vec::with_capacity(y.len() * 3);
    for ((&luma, &u), &v) in y.data().iter().zip(cb.data()).zip(cr.data()) {
        let r = luma + (v - 0.5) / CR_SCALE;
        let b = luma + (u - 0.5) / CB_SCALE;
        let g = (luma - KR * r - KB * b) / KG;
        out.extend_from_slice(&[r, g, b]);
    }
    RasterImage::new(y.height(), y.width(), 3, PixelRange::Signed, out)
}

/// Per-sample power curve `x -> x^exponent`.
pub fn gamma_map(plane: &Plane, exponent: f64) -> Result<Plane> {
    if !(exponent > 0.0 && exponent.is_finite()) {
        return Err(Error::Parameter(format!("gamma exponent must be positive, got {exponent}")));
    }
    if let Some(v) = plane.data().iter().find(|&&v| v < 0.0) {
        return Err(Error::Range(format!("gamma_map on negative sample {v}")));
    }
    Ok(plane.map(|v| v.powf(exponent)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb(r: f64, g: f64, b: f64) -> RasterImage {
        RasterImage::ldr(1, 1, 3, vec![r, g, b]).unwrap()
    }

    #[test]
    fn gray_axis() {
        let (y, cb, cr) = rgb_to_ycbcr(&rgb(1.0, 1.0, 1.0)).unwrap();
        assert!((y.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((cb.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((cr.get(0, 0) - 0.5).abs() < 1e-12);

        let (y, cb, cr) = rgb_to_ycbcr(&rgb(0.0, 0.0, 0.0)).unwrap();
        assert_eq!((y.get(0, 0), cb.get(0, 0), cr.get(0, 0)), (0.0, 0.5, 0.5));
    }

    #[test]
    fn pure_red() {
        let (y, cb, cr) = rgb_to_ycbcr(&rgb(1.0, 0.0, 0.0)).unwrap();
        assert!((y.get(0, 0) - 0.299).abs() < 1e-12);
        assert!((cb.get(0, 0) - 0.331364).abs() < 1e-12);
        assert!((cr.get(0, 0) - 0.999813).abs() < 1e-12);
    }

    #[test]
    fn gray_axis_inverse_scales_linearly() {
        let half = Plane::filled(1, 1, 0.5);
        for luma in [1.0, 2.0] {
            let out = ycbcr_to_rgb(&Plane::filled(1, 1, luma), &half, &half).unwrap();
            for &v in out.data() {
                assert!((v - luma).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_gray_input() {
        let img = RasterImage::ldr(1, 1, 1, vec![0.5]).unwrap();
        assert!(matches!(rgb_to_ycbcr(&img), Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_mismatched_planes() {
        let a = Plane::filled(2, 2, 0.5);
        let b = Plane::filled(2, 3, 0.5);
        assert!(matches!(ycbcr_to_rgb(&a, &a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn gamma_fixed_points_and_value() {
        let p = Plane::new(1, 3, vec![1.0, 0.0, 0.25]).unwrap();
        let out = gamma_map(&p, 1.0 / 2.2).unwrap();
        assert_eq!(out.get(0, 0), 1.0);
        assert_eq!(out.get(0, 1), 0.0);
        // exp(ln(0.25) / 2.2), evaluated at 30 digits
        assert!((out.get(0, 2) - 0.532_520_544_719_981_3).abs() < 1e-12);
    }

    #[test]
    fn gamma_rejects_negative() {
        let p = Plane::new(1, 1, vec![-0.1]).unwrap();
        assert!(matches!(gamma_map(&p, 2.2), Err(Error::Range(_))));
    }
}
