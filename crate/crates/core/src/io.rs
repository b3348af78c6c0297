//! PNG and PFM readers/writers.
//!
//! PFM output is the little-endian variant: a `Pf` (gray) or `PF` (RGB)
//! magic line, a `width height` line, the scale line `-1.0`, then 32-bit
//! floats with the bottom row first.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageEncoder};

use crate::color::{linear_to_srgb8, srgb_to_linear};
use crate::error::{Error, Result};
use crate::raster::{LinearImage, Mask};

/// How 8/16-bit PNG code values map to linear samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transfer {
    Srgb,
    Linear,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Loads a PNG (8 or 16 bit) or a PFM file.
pub fn load_image(path: impl AsRef<Path>, transfer: Transfer) -> Result<LinearImage> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"PF") || bytes.starts_with(b"Pf") || has_extension(path, "pfm") {
        return decode_pfm(&bytes);
    }
    decode_png(&bytes, transfer)
}

fn decode_dynamic(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Decode(e.to_string()))
}

/// Decodes PNG bytes. Alpha is dropped; gray stays single-channel.
pub fn decode_png(bytes: &[u8], transfer: Transfer) -> Result<LinearImage> {
    let img = decode_dynamic(bytes)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    let (channels, codes, max): (usize, Vec<u16>, f64) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(u16::from).collect(), 255.0),
        DynamicImage::ImageLumaA8(b) => (
            1,
            b.into_raw().chunks(2).map(|p| u16::from(p[0])).collect(),
            255.0,
        ),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().into_iter().map(u16::from).collect(), 255.0),
        DynamicImage::ImageRgba8(b) => (
            3,
            b.into_raw()
                .chunks(4)
                .flat_map(|p| [p[0], p[1], p[2]].map(u16::from))
                .collect(),
            255.0,
        ),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw(), 65535.0),
        DynamicImage::ImageLumaA16(b) => (1, b.into_raw().chunks(2).map(|p| p[0]).collect(), 65535.0),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw(), 65535.0),
        DynamicImage::ImageRgba16(b) => (
            3,
            b.into_raw().chunks(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            65535.0,
        ),
        other => {
            return Err(Error::UnsupportedBitDepth(format!("{:?}", other.color())));
        }
    };
    let decode = |c: u16| {
        let v = c as f64 / max;
        match transfer {
            Transfer::Srgb => srgb_to_linear(v),
            Transfer::Linear => v,
        }
    };
    LinearImage::from_vec(w, h, channels, codes.into_iter().map(decode).collect())
}

/// Encodes an image as an 8-bit sRGB PNG after multiplying by `exposure`.
/// Samples are clamped to `[0, 1]` before encoding.
pub fn encode_png_srgb(img: &LinearImage, exposure: f64) -> Result<Vec<u8>> {
    let codes: Vec<u8> = img
        .as_slice()
        .iter()
        .map(|&v| linear_to_srgb8(v * exposure))
        .collect();
    encode_png8(img.width(), img.height(), img.channels(), &codes)
}

pub(crate) fn encode_png8(width: usize, height: usize, channels: usize, codes: &[u8]) -> Result<Vec<u8>> {
    let color = if channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(Cursor::new(&mut out))
        .write_image(codes, width as u32, height as u32, color)
        .map_err(|e| Error::Decode(e.to_string()))?;
    Ok(out)
}

pub fn save_png_srgb(img: &LinearImage, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_png_srgb(img, 1.0)?)
}

/// Loads a matte: the alpha channel when present, otherwise the gray level.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    decode_mask_png(&read_bytes(path)?)
}

pub fn decode_mask_png(bytes: &[u8]) -> Result<Mask> {
    let img = decode_dynamic(bytes)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::EmptyImage);
    }
    let values: Vec<f64> = if img.color().has_alpha() {
        img.to_rgba16()
            .into_raw()
            .chunks(4)
            .map(|p| p[3] as f64 / 65535.0)
            .collect()
    } else {
        img.to_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect()
    };
    Mask::from_values(w, h, values)
}

pub fn encode_mask_png(mask: &Mask) -> Result<Vec<u8>> {
    let codes: Vec<u8> = mask
        .values()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    encode_png8(mask.width(), mask.height(), 1, &codes)
}

/// Rounds matte values to the 8-bit levels [`encode_mask_png`] stores, using
/// the same arithmetic as decoding so a saved matte reloads exactly.
pub fn quantize_mask(mask: &Mask) -> Result<Mask> {
    let values = mask
        .values()
        .iter()
        .map(|&v| {
            let code = (v.clamp(0.0, 1.0) * 255.0).round() as u16;
            (code * 257) as f64 / 65535.0
        })
        .collect();
    Mask::from_values(mask.width(), mask.height(), values)
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_mask_png(mask)?)
}

/// Serializes raw `f32` samples as little-endian PFM.
pub fn encode_pfm_raw(width: usize, height: usize, channels: usize, samples: &[f32]) -> Result<Vec<u8>> {
    let magic = match channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::Pfm(format!("{c} channels cannot be stored"))),
    };
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    if samples.len() != width * height * channels {
        return Err(Error::mismatch("PFM sample count"));
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let header = format!("{magic}\n{width} {height}\n-1.0\n");
    let row = width * channels;
    let mut out = Vec::with_capacity(header.len() + samples.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for y in (0..height).rev() {
        for v in &samples[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Serializes an image as PFM. Samples are rounded to `f32`.
pub fn encode_pfm(img: &LinearImage) -> Result<Vec<u8>> {
    let samples: Vec<f32> = img.as_slice().iter().map(|&v| v as f32).collect();
    encode_pfm_raw(img.width(), img.height(), img.channels(), &samples)
}

pub fn save_pfm(img: &LinearImage, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pfm(img)?)
}

pub fn load_pfm(path: impl AsRef<Path>) -> Result<LinearImage> {
    decode_pfm(&read_bytes(path.as_ref())?)
}

/// Parses a PFM byte stream (either endianness).
pub fn decode_pfm(bytes: &[u8]) -> Result<LinearImage> {
    let (width, height, channels, data) = decode_pfm_samples(bytes)?;
    LinearImage::from_vec(width, height, channels, data)
}

/// Parses a PFM byte stream into `(width, height, channels, samples)` in
/// top-down row order, keeping non-finite samples.
pub fn decode_pfm_samples(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f64>)> {
    // Three whitespace-separated header tokens, then exactly one whitespace byte.
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Pfm("truncated header".into()));
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::Pfm("non-ASCII header".into()))?;
        tokens.push(tok.to_owned());
    }
    pos += 1;
    let channels = match tokens[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        m => return Err(Error::Pfm(format!("bad magic {m:?}"))),
    };
    let parse_dim = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| Error::Pfm(format!("bad dimension {t:?}")))
    };
    let width = parse_dim(&tokens[1])?;
    let height = parse_dim(&tokens[2])?;
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| Error::Pfm(format!("bad scale {:?}", tokens[3])))?;
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    let little = scale < 0.0;
    let n = width * height * channels;
    let body = bytes
        .get(pos..pos + 4 * n)
        .ok_or_else(|| Error::Pfm(format!("expected {} bytes of samples", 4 * n)))?;
    let row = width * channels;
    let mut data = vec![0.0f64; n];
    for (k, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let file_row = k / row;
        let y = height - 1 - file_row;
        data[y * row + k % row] = v as f64;
    }
    Ok((width, height, channels, data))
}
