//! Raster utilities: stroke rasterization, thinning, exact distance
//! transforms, appearance corruption, column-gap resampling and PGM I/O.

mod corrupt;
mod edt;
mod gaps;
mod pgm;
mod raster;
mod thin;

pub use corrupt::{corrupt, gaussian_blur, CorruptParams};
pub use edt::{distance_transform, DistanceField};
pub use gaps::{gap_runs, resize_gaps, stretch_gaps};
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use raster::rasterize_strokes;
pub use thin::skeletonize;

use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("no polylines to rasterize")]
    EmptyStrokes,
    #[error("stroke point ({x}, {y}) lies outside {width}x{height}")]
    OutOfExtents {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("distance transform of an empty mask")]
    EmptyMask,
    #[error("gap ranges must be sorted, disjoint and inside the image: {0:?}")]
    BadGaps(Vec<Range<usize>>),
    #[error("gap width list has {widths} entries for {gaps} gaps")]
    GapCount { gaps: usize, widths: usize },
    #[error("image data length {len} does not match {width}x{height}")]
    DataLength {
        len: usize,
        width: usize,
        height: usize,
    },
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Grayscale raster with values in [0, 1], row-major, x = column, y = row.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImagingError> {
        if data.len() != height * width {
            return Err(ImagingError::DataLength {
                len: data.len(),
                width,
                height,
            });
        }
        Ok(GrayImage {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        GrayImage {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        GrayImage {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

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

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Values snapped to the 8-bit grid used on disk.
    pub fn quantized(&self) -> GrayImage {
        GrayImage {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
                .collect(),
        }
    }

    pub fn from_mask(mask: &Mask) -> GrayImage {
        GrayImage {
            height: mask.height,
            width: mask.width,
            data: mask.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Pixels strictly above `threshold`.
    pub fn threshold(&self, threshold: f64) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| v > threshold).collect(),
        }
    }
}

/// Binary raster, `true` = foreground.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn from_data(height: usize, width: usize, data: Vec<bool>) -> Result<Self, ImagingError> {
        if data.len() != height * width {
            return Err(ImagingError::DataLength {
                len: data.len(),
                width,
                height,
            });
        }
        Ok(Mask {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-range coordinates read as background.
    #[inline]
    pub fn get_signed(&self, y: isize, x: isize) -> bool {
        y >= 0 && x >= 0 && (y as usize) < self.height && (x as usize) < self.width && self.get(y as usize, x as usize)
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Pixel-wise union of two masks of equal extents.
    pub fn union(&self, other: &Mask) -> Mask {
        assert_eq!((self.height, self.width), (other.height, other.width));
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect(),
        }
    }

    /// Whether any pixel of column `x` is set.
    pub fn column_occupied(&self, x: usize) -> bool {
        (0..self.height).any(|y| self.get(y, x))
    }

    /// Number of 8-connected foreground components.
    pub fn components(&self) -> usize {
        let mut seen = vec![false; self.data.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.data.len() {
            if !self.data[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(p) = stack.pop() {
                let (y, x) = ((p / self.width) as isize, (p % self.width) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (ny, nx) = (y + dy, x + dx);
                        if self.get_signed(ny, nx) {
                            let q = ny as usize * self.width + nx as usize;
                            if !seen[q] {
                                seen[q] = true;
                                stack.push(q);
                            }
                        }
                    }
                }
            }
        }
        count
    }
}
