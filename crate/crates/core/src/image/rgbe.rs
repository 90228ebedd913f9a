//! Radiance `.hdr` (RGBE) encoding.
//!
//! Files are written uncompressed. The reader also understands the
//! run-length-encoded scanlines that most other tools emit.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{PixelRange, RasterImage};
use crate::error::{Error, Result};

/// Smallest exponent value with a non-zero encoding.
const MIN_EXPONENT: i32 = -127;
const MAX_EXPONENT: i32 = 127;

/// Exponent `e` with `max / 2^e` in `[0.5, 1)`.
fn shared_exponent(max: f64) -> i32 {
    let mut e = max.log2().floor() as i32 + 1;
    while max / 2f64.powi(e) >= 1.0 {
        e += 1;
    }
    while max / 2f64.powi(e) < 0.5 {
        e -= 1;
    }
    e
}

/// Encodes one linear RGB triple as four RGBE bytes.
pub fn encode_rgbe(rgb: [f64; 3]) -> Result<[u8; 4]> {
    if rgb.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::Range(format!("RGBE needs finite non-negative samples, got {rgb:?}")));
    }
    let max = rgb[0].max(rgb[1]).max(rgb[2]);
    if max == 0.0 {
        return Ok([0; 4]);
    }
    let mut e = shared_exponent(max);
    let mantissas = |e: i32| {
        let scale = 256.0 / 2f64.powi(e);
        rgb.map(|c| (c * scale).round() as u32)
    };
    let mut m = mantissas(e);
    if m.iter().any(|&v| v > 255) {
        e += 1;
        m = mantissas(e);
    }
    if e < MIN_EXPONENT {
        return Ok([0; 4]);
    }
    if e > MAX_EXPONENT {
        return Err(Error::Range(format!("sample {max} too large for RGBE")));
    }
    Ok([m[0] as u8, m[1] as u8, m[2] as u8, (e + 128) as u8])
}

/// Decodes four RGBE bytes to linear RGB.
pub fn decode_rgbe(bytes: [u8; 4]) -> [f64; 3] {
    if bytes[3] == 0 {
        return [0.0; 3];
    }
    let scale = 2f64.powi(bytes[3] as i32 - 128) / 256.0;
    [bytes[0] as f64 * scale, bytes[1] as f64 * scale, bytes[2] as f64 * scale]
}

/// Writes a 3-channel non-negative image as an uncompressed Radiance file.
pub fn write_hdr_image(image: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_hdr(image)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn encode_hdr(image: &RasterImage) -> Result<Vec<u8>> {
    if image.channels() != 3 {
        return Err(Error::Shape(format!(
            "Radiance output needs 3 channels, got {}",
            image.channels()
        )));
    }
    let mut out = Vec::with_capacity(64 + image.data().len() / 3 * 4);
    write!(
        out,
        "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {} +X {}\n",
        image.height(),
        image.width()
    )
    .expect("writing to a Vec cannot fail");
    for px in image.data().chunks_exact(3) {
        out.extend_from_slice(&encode_rgbe([px[0], px[1], px[2]])?);
    }
    Ok(out)
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Decode { format: "Radiance HDR", message: msg.into() }
}

/// Reads a Radiance `.hdr` file (flat or new-style RLE scanlines).
pub fn read_hdr_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    decode_hdr(BufReader::new(file))
}

pub(crate) fn decode_hdr(mut reader: impl BufRead) -> Result<RasterImage> {
    let mut line = String::new();
    let read_line = |reader: &mut dyn BufRead, line: &mut String| -> Result<()> {
        line.clear();
        let n = reader.read_line(line).map_err(|e| format_err(e.to_string()))?;
        if n == 0 {
            return Err(format_err("unexpected end of header"));
        }
        Ok(())
    };
    read_line(&mut reader, &mut line)?;
    if !line.starts_with("#?") {
        return Err(format_err("missing #? signature"));
    }
    loop {
        read_line(&mut reader, &mut line)?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some(fmt) = trimmed.strip_prefix("FORMAT=") {
            if fmt != "32-bit_rle_rgbe" {
                return Err(format_err(format!("unsupported pixel format {fmt}")));
            }
        }
    }
    read_line(&mut reader, &mut line)?;
    let parts: Vec<&str> = line.split_whitespace().collect();
    let (height, width) = match parts.as_slice() {
        ["-Y", h, "+X", w] => (
            h.parse::<usize>().map_err(|_| format_err("bad height"))?,
            w.parse::<usize>().map_err(|_| format_err("bad width"))?,
        ),
        _ => return Err(format_err(format!("unsupported resolution line {:?}", line.trim_end()))),
    };

    let mut data = Vec::with_capacity(height * width * 3);
    let mut scan = vec![[0u8; 4]; width];
    for _ in 0..height {
        read_scanline(&mut reader, &mut scan)?;
        for px in &scan {
            data.extend_from_slice(&decode_rgbe(*px));
        }
    }
    RasterImage::new(height, width, 3, PixelRange::Hdr, data)
}

fn read_exact(reader: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    reader
        .read_exact(buf)
        .map_err(|_| format_err("truncated pixel data"))
}

fn read_scanline(reader: &mut impl Read, scan: &mut [[u8; 4]]) -> Result<()> {
    let width = scan.len();
    if width == 0 {
        return Ok(());
    }
    let mut first = [0u8; 4];
    read_exact(reader, &mut first)?;
    let rle = (8..0x8000).contains(&width)
        && first[0] == 2
        && first[1] == 2
        && first[2] & 0x80 == 0;
    if !rle {
        scan[0] = first;
        for px in scan.iter_mut().skip(1) {
            read_exact(reader, px)?;
        }
        return Ok(());
    }
    if ((first[2] as usize) << 8 | first[3] as usize) != width {
        return Err(format_err("RLE scanline width mismatch"));
    }
    for channel in 0..4 {
        let mut x = 0;
        while x < width {
            let mut count = [0u8; 1];
            read_exact(reader, &mut count)?;
            let count = count[0] as usize;
            if count > 128 {
                let run = count - 128;
                if x + run > width {
                    return Err(format_err("RLE run overflows scanline"));
                }
                let mut value = [0u8; 1];
                read_exact(reader, &mut value)?;
                for px in &mut scan[x..x + run] {
                    px[channel] = value[0];
                }
                x += run;
            } else {
                if count == 0 || x + count > width {
                    return Err(format_err("bad RLE literal length"));
                }
                let mut buf = vec![0u8; count];
                read_exact(reader, &mut buf)?;
                for (px, v) in scan[x..x + count].iter_mut().zip(buf) {
                    px[channel] = v;
                }
                x += count;
            }
        }
    }
    Ok(())
}
