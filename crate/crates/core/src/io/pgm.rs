use std::path::Path;

use super::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::image::Image;

const KIND: &str = "PGM";

/// Reads a binary (P5) or plain (P2) 8-bit graymap.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    decode_pgm(&read_bytes(path)?).map_err(|reason| Error::format(KIND, path, reason))
}

/// Writes an 8-bit binary graymap; pixels are rounded half away from zero
/// and clamped to `[0, 255]`.
pub fn write_pgm(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    write_atomic(path.as_ref(), &encode_pgm(image))
}

pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.as_slice().iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("expected {what} at byte {start}"))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<Image, String> {
    if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'2' | b'5') {
        return Err("missing P5/P2 magic".into());
    }
    let binary = bytes[1] == b'5';
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(format!("empty image {width}x{height}"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval} (8-bit only)"));
    }
    let n = width * height;
    let scale = 255.0 / maxval as f64;
    let data: Vec<f64> = if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = h.pos + 1;
        let raster = bytes
            .get(start..start + n)
            .ok_or_else(|| format!("raster truncated: need {n} bytes after header"))?;
        raster.iter().map(|&b| b as f64 * scale).collect()
    } else {
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let v = h.number("pixel value")?;
            if v > maxval {
                return Err(format!("pixel value {v} exceeds maxval {maxval}"));
            }
            values.push(v as f64 * scale);
        }
        values
    };
    Image::new(height, width, data).map_err(|e| e.to_string())
}
