//! LDR input to HDR irradiance and display image at twice the resolution.

use crate::error::{Error, Result};
use crate::image::{
    bicubic_resize, gamma_map, rgb_to_ycbcr, ycbcr_to_rgb, PixelRange, Plane, RasterImage,
};
use crate::refnet::{refnet_forward, RefNet};
use crate::retinex::{
    bound_reflectance, decompose, enhance_illumination_with_gamma, recombine, unbound_reflectance,
};
use crate::tensor::Tensor;
use crate::training::BOUND_LIMIT;

use super::{reinhard_tonemap, PipelineConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutput {
    /// Linear irradiance, non-negative.
    pub hdr: RasterImage,
    /// Tonemapped, gamma-encoded display image.
    pub ldr: RasterImage,
    /// Upscaled and compensated illumination.
    pub illumination_hh: Plane,
    /// Predicted high-resolution reflectance (log domain).
    pub reflectance_hh: Plane,
    /// Recombined high-resolution luminance.
    pub luminance_hh: Plane,
}

#[inline]
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Mirror-pads `plane` on the bottom and right up to the next multiple of
/// `multiple` in each dimension.
pub fn reflect_pad(plane: &Plane, multiple: usize) -> Plane {
    let round_up = |n: usize| n.div_ceil(multiple) * multiple;
    let (h, w) = (plane.height(), plane.width());
    Plane::from_fn(round_up(h), round_up(w), |y, x| {
        plane.get(reflect_index(y as isize, h), reflect_index(x as isize, w))
    })
}

/// Runs the generator on bounded reflectance of any size, padding to the
/// network's size multiple and cropping the result back to twice the input.
pub fn predict_reflectance(net: &RefNet, bounded: &Plane) -> Result<Plane> {
    let (h, w) = (bounded.height(), bounded.width());
    let padded = reflect_pad(bounded, net.config.size_multiple());
    let data = padded
        .data()
        .iter()
        .map(|&v| (v as f32).clamp(-BOUND_LIMIT, BOUND_LIMIT))
        .collect();
    let input = Tensor::nhwc(1, padded.height(), padded.width(), 1, data)?;
    let out = refnet_forward(net, &input)?;
    let s = net.config.scale;
    let ow = padded.width() * s;
    let full = Plane::from_fn(padded.height() * s, ow, |y, x| out.data()[y * ow + x] as f64);
    full.crop(0, 0, h * s, w * s)
}

fn as_rgb(input: &RasterImage) -> Result<RasterImage> {
    if input.range() != PixelRange::Ldr {
        return Err(Error::Range(format!("inference expects an LDR image, got {:?}", input.range())));
    }
    match input.channels() {
        3 => Ok(input.clone()),
        _ => {
            let g = input.channel(0);
            RasterImage::from_planes(&[&g, &g, &g], PixelRange::Ldr)
        }
    }
}

/// Full inference: YCbCr split, linearized-luminance decomposition,
/// illumination enhancement, reflectance super-resolution, recombination,
/// bicubic chroma, conversion to irradiance and display tonemapping.
pub fn infer(input: &RasterImage, net: &RefNet, config: &PipelineConfig) -> Result<InferenceOutput> {
    config.validate()?;
    if net.config.scale != config.scale {
        return Err(Error::Config(format!(
            "network upscales by {}, configuration asks for {}",
            net.config.scale, config.scale
        )));
    }
    let rgb = as_rgb(input)?;
    let (y, cb, cr) = rgb_to_ycbcr(&rgb)?;
    let y_lin = gamma_map(&y.map(|v| v.clamp(0.0, 1.0)), config.gamma_linearize)?;
    let parts = decompose(&y_lin, &config.wls)?;
    let scale = config.scale as f64;
    let illumination_hh =
        enhance_illumination_with_gamma(&parts.illumination, scale, config.gamma_illum)?;
    let predicted = predict_reflectance(net, &bound_reflectance(&parts.reflectance))?;
    let reflectance_hh = unbound_reflectance(&predicted);
    let luminance_hh = recombine(&illumination_hh, &reflectance_hh)?;
    let cb_hh = bicubic_resize(&cb, scale)?;
    let cr_hh = bicubic_resize(&cr, scale)?;
    let rgb_hh = ycbcr_to_rgb(&luminance_hh, &cb_hh, &cr_hh)?;
    let gamma = config.gamma_final;
    let hdr = rgb_hh.map(PixelRange::Hdr, |v| v.max(0.0).powf(gamma))?;
    let ldr = reinhard_tonemap(&hdr, config.tonemap_key)?;
    Ok(InferenceOutput { hdr, ldr, illumination_hh, reflectance_hh, luminance_hh })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect_index(i, 3)).collect();
        assert_eq!(got, [1, 2, 1, 0, 1, 2, 1, 0, 1, 2]);
        assert_eq!(reflect_index(5, 1), 0);
    }

    #[test]
    fn pad_keeps_original_block() {
        let p = Plane::from_fn(5, 3, |y, x| (y * 3 + x) as f64);
        let q = reflect_pad(&p, 4);
        assert_eq!((q.height(), q.width()), (8, 4));
        assert_eq!(q.crop(0, 0, 5, 3).unwrap(), p);
        assert_eq!(q.get(5, 0), p.get(3, 0));
        assert_eq!(q.get(0, 3), p.get(0, 1));
    }
}
