use std::fs;
use std::path::Path;

use super::{GrayImage, ImagingError};

/// Binary 8-bit PGM (P5) bytes for `image`, values quantized to 0..=255.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImagingError> {
    let bad = |m: &str| ImagingError::Pgm(m.to_string());
    let mut pos = 0;
    let mut token = || -> Result<String, ImagingError> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(bad("expected P5 magic"));
    }
    let mut number = |what: &str| -> Result<usize, ImagingError> {
        token()?.parse().map_err(|_| bad(&format!("bad {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let raster = bytes.get(start..).ok_or_else(|| bad("missing raster"))?;
    if raster.len() != width * height {
        return Err(bad(&format!("raster has {} bytes, expected {}", raster.len(), width * height)));
    }
    GrayImage::new(height, width, raster.iter().map(|&b| b as f64 / 255.0).collect())
}

pub fn write_pgm(path: impl AsRef<Path>, image: &GrayImage) -> Result<(), ImagingError> {
    fs::write(path, encode_pgm(image))?;
    Ok(())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImagingError> {
    decode_pgm(&fs::read(path)?)
}
