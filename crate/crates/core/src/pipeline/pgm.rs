//! Binary portable graymap (`P5`) images with 8-bit samples.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::FeatureData;

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> std::result::Result<Header, String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("not a binary PGM (missing P5 magic)".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or("header value out of range")?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing whitespace after header".into());
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval} (8-bit only)"));
    }
    Ok(Header {
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<FeatureData, String> {
    let h = parse_header(bytes)?;
    let n = h.width * h.height;
    let raster = bytes
        .get(h.data_start..h.data_start + n)
        .ok_or_else(|| format!("raster truncated: expected {n} bytes"))?;
    let maxval = h.maxval as f64;
    let pixels = raster
        .iter()
        .map(|&b| (b as f64 / maxval).min(1.0))
        .collect();
    FeatureData::image(h.height, h.width, pixels).map_err(|e| e.to_string())
}

/// Encodes intensities in `[0, 1]` at maxval 255 (rounded to nearest).
pub fn encode_pgm(height: usize, width: usize, pixels: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<FeatureData> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|message| Error::Format {
        path: path.to_owned(),
        message,
    })
}

pub fn write_pgm(path: impl AsRef<Path>, image: &FeatureData) -> Result<()> {
    let path = path.as_ref();
    let FeatureData::Image {
        height,
        width,
        pixels,
    } = image
    else {
        return Err(Error::invalid("only image features can be written as PGM"));
    };
    fs::write(path, encode_pgm(*height, *width, pixels)).map_err(|e| Error::io(path, e))
}
