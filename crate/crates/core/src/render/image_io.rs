//! Float image buffers and their PNG / PFM encodings.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Read};
use std::path::{Path, PathBuf};

/// Row-major RGB radiance buffer, top row first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Option<Self> {
        (data.len() == width * height * 3).then_some(Self { width, height, data })
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let o = 3 * (y * self.width + x);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let o = 3 * (y * self.width + x);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum of squared differences, or `None` if the sizes differ.
    pub fn l2_distance(&self, other: &ImageBuffer) -> Option<f64> {
        if self.width != other.width || self.height != other.height {
            return None;
        }
        let ss: f64 = self.data.iter().zip(&other.data).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum();
        Some(ss.sqrt())
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImageFormat {
    Png8Srgb,
    PfmLinear,
}

#[derive(Debug, thiserror::Error)]
pub enum ImageIoError {
    #[error("i/o failure on {path}: {source}")]
    IoFailure { path: PathBuf, source: std::io::Error },
    #[error("image contains non-finite values")]
    NonFinite,
    #[error("malformed PFM: {0}")]
    MalformedPfm(String),
    #[error("png encoding failed: {0}")]
    Png(#[from] image::ImageError),
}

/// sRGB transfer of a linear value, clamped to [0, 1].
pub fn linear_to_srgb(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    if x <= 0.0031308 {
        12.92 * x
    } else {
        1.055 * x.powf(1.0 / 2.4) - 0.055
    }
}

pub fn quantize_srgb(x: f32) -> u8 {
    (linear_to_srgb(x as f64) * 255.0).round() as u8
}

/// 8-bit sRGB pixels, row-major RGB.
pub fn to_srgb8(buf: &ImageBuffer) -> Vec<u8> {
    buf.data.iter().map(|&v| quantize_srgb(v)).collect()
}

pub fn encode_png(buf: &ImageBuffer) -> Result<Vec<u8>, ImageIoError> {
    if !buf.is_finite() {
        return Err(ImageIoError::NonFinite);
    }
    let mut out = Vec::new();
    let encoder = image::codecs::png::PngEncoder::new(&mut out);
    image::ImageEncoder::write_image(
        encoder,
        &to_srgb8(buf),
        buf.width as u32,
        buf.height as u32,
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(out)
}

/// Little-endian PFM; rows are stored bottom to top as the format requires.
pub fn encode_pfm(buf: &ImageBuffer) -> Result<Vec<u8>, ImageIoError> {
    if !buf.is_finite() {
        return Err(ImageIoError::NonFinite);
    }
    let mut out = format!("PF\n{} {}\n-1.0\n", buf.width, buf.height).into_bytes();
    out.reserve(buf.data.len() * 4);
    for y in (0..buf.height).rev() {
        let row = &buf.data[3 * y * buf.width..3 * (y + 1) * buf.width];
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8]) -> Result<ImageBuffer, ImageIoError> {
    let bad = |m: &str| ImageIoError::MalformedPfm(m.to_string());
    let mut cursor = std::io::Cursor::new(bytes);
    let mut line = String::new();
    let mut next_line = |cursor: &mut std::io::Cursor<&[u8]>| -> Result<String, ImageIoError> {
        line.clear();
        cursor.read_line(&mut line).map_err(|_| bad("unreadable header"))?;
        Ok(line.trim().to_string())
    };
    if next_line(&mut cursor)? != "PF" {
        return Err(bad("expected `PF` (RGB) magic"));
    }
    let dims = next_line(&mut cursor)?;
    let mut it = dims.split_whitespace().map(|s| s.parse::<usize>());
    let (width, height) = match (it.next(), it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) => (w, h),
        _ => return Err(bad("bad dimensions line")),
    };
    let scale: f64 = next_line(&mut cursor)?.parse().map_err(|_| bad("bad scale line"))?;
    let little = scale < 0.0;
    let mut raw = Vec::new();
    cursor.read_to_end(&mut raw).map_err(|_| bad("unreadable payload"))?;
    let count = width.checked_mul(height).and_then(|p| p.checked_mul(3)).ok_or_else(|| bad("dimensions overflow"))?;
    if raw.len() != count * 4 {
        return Err(bad(&format!("expected {} payload bytes, found {}", count * 4, raw.len())));
    }
    let mut data = vec![0.0f32; count];
    for (k, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let p = k / 3;
        let (x, y_file) = (p % width, p / width);
        let y = height - 1 - y_file;
        data[3 * (y * width + x) + k % 3] = v;
    }
    Ok(ImageBuffer { width, height, data })
}

/// Writes `buf` to `path`; returns the number of bytes written.
pub fn write_image(buf: &ImageBuffer, path: impl AsRef<Path>, format: ImageFormat) -> Result<u64, ImageIoError> {
    let bytes = match format {
        ImageFormat::Png8Srgb => encode_png(buf)?,
        ImageFormat::PfmLinear => encode_pfm(buf)?,
    };
    let path = path.as_ref();
    std::fs::write(path, &bytes).map_err(|source| ImageIoError::IoFailure { path: path.to_path_buf(), source })?;
    Ok(bytes.len() as u64)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<ImageBuffer, ImageIoError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ImageIoError::IoFailure { path: path.to_path_buf(), source })?;
    decode_pfm(&bytes)
}
