use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageFormat, ImageReader};

use super::{PixelRange, RasterImage};
use crate::error::{Error, Result};

fn format_name(format: Option<ImageFormat>) -> &'static str {
    match format {
        Some(ImageFormat::Png) => "PNG",
        Some(ImageFormat::Pnm) => "PPM",
        Some(_) => "unsupported",
        None => "unknown",
    }
}

/// Reads an 8-bit PNG or binary PPM. Samples are `code / 255`; alpha is
/// dropped.
pub fn read_ldr_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let format = reader.format();
    let name = format_name(format);
    if !matches!(format, Some(ImageFormat::Png | ImageFormat::Pnm)) {
        return Err(Error::Decode {
            format: name,
            message: format!("{} is not a PNG or PPM file", path.display()),
        });
    }
    let decoded = reader.decode().map_err(|e| Error::Decode {
        format: name,
        message: e.to_string(),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, bytes) = match decoded {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageLumaA8(buf) => (1, buf.into_raw().chunks_exact(2).map(|p| p[0]).collect()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        DynamicImage::ImageRgba8(buf) => (
            3,
            buf.into_raw().chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        ),
        other => {
            return Err(Error::Decode {
                format: name,
                message: format!("unsupported pixel layout {:?}, expected 8-bit", other.color()),
            })
        }
    };
    let data = bytes.into_iter().map(|b| b as f64 / 255.0).collect();
    RasterImage::new(h, w, channels, PixelRange::Ldr, data)
}

/// Round-half-up 8-bit quantization of a `[0, 1]` sample.
#[inline]
pub(crate) fn quantize_u8(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor() as u8
}

/// Writes an 8-bit PNG. Every sample must already lie in `[0, 1]`.
pub fn write_ldr_image(image: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(v) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Range(format!("LDR sample {v} outside [0, 1]")));
    }
    let bytes: Vec<u8> = image.data().iter().map(|&v| quantize_u8(v)).collect();
    let color = if image.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(
        path,
        &bytes,
        image.width() as u32,
        image.height() as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("writing {}: {other}", path.display())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize_u8(1.0), 255);
        assert_eq!(quantize_u8(0.0), 0);
        assert_eq!(quantize_u8(0.5), 128);
        for k in 0..=255u32 {
            assert_eq!(quantize_u8(k as f64 / 255.0) as u32, k);
        }
    }

    #[test]
    fn write_rejects_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let img = RasterImage::new(1, 1, 1, PixelRange::Signed, vec![1.5]).unwrap();
        let err = write_ldr_image(&img, dir.path().join("x.png")).unwrap_err();
        assert!(matches!(err, Error::Range(_)));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_ldr_image("/nonexistent/never.png").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn ppm_is_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 51, 0, 102, 255]);
        std::fs::write(&path, bytes).unwrap();
        let img = read_ldr_image(&path).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (1, 2, 3));
        assert_eq!(img.pixel(0, 0), &[1.0, 0.0, 0.2]);
        assert_eq!(img.pixel(0, 1), &[0.0, 0.4, 1.0]);
    }

    #[test]
    fn sixteen_bit_png_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(1, 1, vec![1000u16]).unwrap();
        buf.save(&path).unwrap();
        let err = read_ldr_image(&path).unwrap_err();
        match err {
            Error::Decode { format, .. } => assert_eq!(format, "PNG"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
