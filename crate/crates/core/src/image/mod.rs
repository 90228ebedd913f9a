//! Floating-point image containers, color conversion, resampling and file I/O.
//!
//! Everything on the image side works in `f64`. LDR content lives in `[0, 1]`,
//! HDR content is any finite non-negative value.

mod color;
mod io;
mod resize;
mod rgbe;

pub use color::{gamma_map, luminance, luminance_plane, rgb_to_ycbcr, ycbcr_to_rgb};
pub use io::{read_ldr_image, write_ldr_image};
pub use resize::{bicubic_resize, bicubic_resize_image, keys_weight};
pub use rgbe::{decode_rgbe, encode_rgbe, read_hdr_image, write_hdr_image};

use crate::error::{Error, Result};

/// Single-channel `height x width` map (luminance, illumination, reflectance).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "plane {height}x{width} needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Range(format!("non-finite sample at index {i}")));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self { height, width, data: vec![value; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Plane) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn check_same_shape(&self, other: &Plane, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )))
        }
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Result<Plane> {
        self.check_same_shape(other, "element-wise operation")?;
        Ok(Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Rectangular sub-region copy.
    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Result<Plane> {
        if y0 + height > self.height || x0 + width > self.width {
            return Err(Error::Shape(format!(
                "crop {height}x{width}+{y0}+{x0} exceeds {}x{}",
                self.height, self.width
            )));
        }
        Ok(Plane::from_fn(height, width, |y, x| self.get(y0 + y, x0 + x)))
    }
}

/// Dynamic-range semantics of a [`RasterImage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelRange {
    /// Samples in `[0, 1]`.
    Ldr,
    /// Samples finite and non-negative.
    Hdr,
    /// Any finite sample; intermediate results such as unclamped color
    /// conversions.
    Signed,
}

/// Row-major `height x width x channels` raster with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    range: PixelRange,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        range: PixelRange,
        data: Vec<f64>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("expected 1 or 3 channels, got {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "image {height}x{width}x{channels} needs {} samples, got {}",
                height * width * channels,
                data.len()
            )));
        }
        for (i, &v) in data.iter().enumerate() {
            let ok = match range {
                PixelRange::Ldr => (0.0..=1.0).contains(&v),
                PixelRange::Hdr => v.is_finite() && v >= 0.0,
                PixelRange::Signed => v.is_finite(),
            };
            if !ok {
                return Err(Error::Range(format!(
                    "sample {v} at index {i} invalid for {range:?} image"
                )));
            }
        }
        Ok(Self { height, width, channels, range, data })
    }

    pub fn ldr(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(height, width, channels, PixelRange::Ldr, data)
    }

    pub fn hdr(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(height, width, channels, PixelRange::Hdr, data)
    }

    /// Interleaves equal-shape planes into one image.
    pub fn from_planes(planes: &[&Plane], range: PixelRange) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::Shape("no planes given".into()))?;
        for p in planes {
            first.check_same_shape(p, "interleaving planes")?;
        }
        let c = planes.len();
        let mut data = Vec::with_capacity(first.len() * c);
        for i in 0..first.len() {
            for p in planes {
                data.push(p.data[i]);
            }
        }
        Self::new(first.height, first.width, c, range, data)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn range(&self) -> PixelRange {
        self.range
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Clamps every sample into `range` and retags the image.
    pub fn clamp_to(&self, range: PixelRange) -> RasterImage {
        let (lo, hi) = match range {
            PixelRange::Ldr => (0.0, 1.0),
            PixelRange::Hdr => (0.0, f64::INFINITY),
            PixelRange::Signed => (f64::NEG_INFINITY, f64::INFINITY),
        };
        RasterImage {
            range,
            data: self.data.iter().map(|v| v.clamp(lo, hi)).collect(),
            ..*self
        }
    }

    /// Applies `f` to every sample, retagging as `range`.
    pub fn map(&self, range: PixelRange, f: impl Fn(f64) -> f64) -> Result<RasterImage> {
        RasterImage::new(
            self.height,
            self.width,
            self.channels,
            range,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Extracts channel `c` as a plane.
    pub fn channel(&self, c: usize) -> Plane {
        assert!(c < self.channels, "channel {c} out of range");
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().skip(c).step_by(self.channels).copied().collect(),
        }
    }

    pub fn planes(&self) -> Vec<Plane> {
        (0..self.channels).map(|c| self.channel(c)).collect()
    }
}
