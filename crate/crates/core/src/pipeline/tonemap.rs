//! Display mappings for HDR irradiance: global Reinhard and linear stretch.

use crate::error::{Error, Result};
use crate::image::{luminance_plane, PixelRange, RasterImage};

/// Offset inside the log-average so black pixels stay finite.
pub const LOG_AVERAGE_DELTA: f64 = 1e-6;
pub const DISPLAY_GAMMA: f64 = 2.2;

fn check_non_negative(hdr: &RasterImage) -> Result<()> {
    match hdr.data().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        Some(v) => Err(Error::Range(format!("HDR sample {v} is not a finite non-negative value"))),
        None => Ok(()),
    }
}

/// Global Reinhard operator with burn-out at the brightest scaled
/// luminance, gamma-encoded with `1/2.2` and clamped into `[0, 1]`.
///
/// `L_m = key * L / exp(mean(ln(L + delta)))`, `L_white = max(L_m)`,
/// `L_d = L_m (1 + L_m / L_white^2) / (1 + L_m)`; each channel is scaled by
/// `L_d / L`.
pub fn reinhard_tonemap(hdr: &RasterImage, key: f64) -> Result<RasterImage> {
    if !(key > 0.0 && key.is_finite()) {
        return Err(Error::Parameter(format!("tonemap key must be positive, got {key}")));
    }
    check_non_negative(hdr)?;
    let lum = luminance_plane(hdr);
    if lum.is_empty() {
        return Err(Error::Shape("cannot tonemap an empty image".into()));
    }
    let log_mean = lum.data().iter().map(|&l| (l + LOG_AVERAGE_DELTA).ln()).sum::<f64>() / lum.len() as f64;
    let scale = key / log_mean.exp();
    let white = lum.max() * scale;
    let c = hdr.channels();
    let mut out = Vec::with_capacity(hdr.data().len());
    for (px, &l) in hdr.data().chunks_exact(c).zip(lum.data()) {
        if l <= 0.0 || white <= 0.0 {
            out.extend(std::iter::repeat_n(0.0, c));
            continue;
        }
        let lm = l * scale;
        let ld = lm * (1.0 + lm / (white * white)) / (1.0 + lm);
        let ratio = ld / l;
        out.extend(px.iter().map(|&v| (v * ratio).powf(1.0 / DISPLAY_GAMMA).clamp(0.0, 1.0)));
    }
    RasterImage::new(hdr.height(), hdr.width(), c, PixelRange::Ldr, out)
}

/// HDR samples scaled for a display with a given peak luminance.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplayImage {
    pub image: RasterImage,
    pub peak_nits: f64,
}

/// Scales the image so that its brightest luminance equals `display_peak`.
/// An all-black image stays black.
pub fn linear_stretch(hdr: &RasterImage, display_peak: f64) -> Result<DisplayImage> {
    if !(display_peak > 0.0 && display_peak.is_finite()) {
        return Err(Error::Parameter(format!("display peak must be positive, got {display_peak}")));
    }
    check_non_negative(hdr)?;
    let peak = luminance_plane(hdr).max();
    let factor = if peak > 0.0 { display_peak / peak } else { 0.0 };
    Ok(DisplayImage { image: hdr.map(PixelRange::Hdr, |v| v * factor)?, peak_nits: display_peak })
}
