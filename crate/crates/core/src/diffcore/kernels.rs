//! Raw numeric kernels behind the tape ops. Shapes are validated by the caller.

use super::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

impl ConvGeom {
    /// Output columns `ox` whose tap `kx` lands inside the input row, as a
    /// half-open range; the matching input column is `ox·stride + kx − pad`.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kx).div_ceil(self.stride);
        // ox·stride + kx − pad ≤ width − 1
        let hi = if self.width + self.pad > kx {
            ((self.width + self.pad - kx - 1) / self.stride + 1).min(self.out_w)
        } else {
            0
        };
        (lo.min(hi), hi)
    }
}

/// Unfolds `input` (C×H×W) into a `(C·kh·kw) × (out_h·out_w)` patch matrix.
pub(crate) fn im2col<T: Real>(input: &[T], g: &ConvGeom) -> Vec<T> {
    let n_cols = g.col_cols();
    let mut cols = vec![T::ZERO; g.col_rows() * n_cols];
    for c in 0..g.channels {
        let plane = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * n_cols..(row + 1) * n_cols];
                let (lo, hi) = g.valid_cols(kx);
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize || lo >= hi {
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let dst_row = &mut dst[oy * g.out_w + lo..oy * g.out_w + hi];
                    let first = lo * g.stride + kx - g.pad;
                    if g.stride == 1 {
                        dst_row.copy_from_slice(&src_row[first..first + (hi - lo)]);
                    } else {
                        for (d, &v) in dst_row.iter_mut().zip(src_row[first..].iter().step_by(g.stride)) {
                            *d = v;
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch-matrix gradients back onto the input.
pub(crate) fn col2im_add<T: Real>(cols: &[T], g: &ConvGeom, out: &mut [T]) {
    let n_cols = g.col_cols();
    for c in 0..g.channels {
        let plane = &mut out[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * n_cols..(row + 1) * n_cols];
                let (lo, hi) = g.valid_cols(kx);
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize || lo >= hi {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let src_row = &src[oy * g.out_w + lo..oy * g.out_w + hi];
                    let first = lo * g.stride + kx - g.pad;
                    for (d, &s) in dst_row[first..].iter_mut().step_by(g.stride).zip(src_row) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Bilinear corner weights and integer base for one continuous coordinate pair.
#[inline]
pub(crate) fn bilinear_corners<T: Real>(x: T, y: T) -> (isize, isize, T, T) {
    let x0 = x.floor();
    let y0 = y.floor();
    (x0.to_f64() as isize, y0.to_f64() as isize, x - x0, y - y0)
}

#[inline]
fn fetch<T: Real>(plane: &[T], h: usize, w: usize, x: isize, y: isize) -> T {
    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
        plane[y as usize * w + x as usize]
    } else {
        T::ZERO
    }
}

/// Samples every channel of `image` (C×H×W) at the (x, y) pairs in `grid`.
/// Samples outside the image read as zero.
pub(crate) fn bilinear_forward<T: Real>(
    image: &[T],
    channels: usize,
    h: usize,
    w: usize,
    grid: &[T],
) -> Vec<T> {
    let n = grid.len() / 2;
    let mut out = vec![T::ZERO; channels * n];
    for p in 0..n {
        let (x0, y0, fx, fy) = bilinear_corners(grid[2 * p], grid[2 * p + 1]);
        let w00 = (T::ONE - fx) * (T::ONE - fy);
        let w10 = fx * (T::ONE - fy);
        let w01 = (T::ONE - fx) * fy;
        let w11 = fx * fy;
        for c in 0..channels {
            let plane = &image[c * h * w..(c + 1) * h * w];
            out[c * n + p] = w00 * fetch(plane, h, w, x0, y0)
                + w10 * fetch(plane, h, w, x0 + 1, y0)
                + w01 * fetch(plane, h, w, x0, y0 + 1)
                + w11 * fetch(plane, h, w, x0 + 1, y0 + 1);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn bilinear_backward<T: Real>(
    image: &[T],
    channels: usize,
    h: usize,
    w: usize,
    grid: &[T],
    grad_out: &[T],
    mut grad_image: Option<&mut [T]>,
    mut grad_grid: Option<&mut [T]>,
) {
    let n = grid.len() / 2;
    for p in 0..n {
        let (x0, y0, fx, fy) = bilinear_corners(grid[2 * p], grid[2 * p + 1]);
        let (mut gx, mut gy) = (T::ZERO, T::ZERO);
        for c in 0..channels {
            let g = grad_out[c * n + p];
            let plane = &image[c * h * w..(c + 1) * h * w];
            if grad_grid.is_some() {
                let v00 = fetch(plane, h, w, x0, y0);
                let v10 = fetch(plane, h, w, x0 + 1, y0);
                let v01 = fetch(plane, h, w, x0, y0 + 1);
                let v11 = fetch(plane, h, w, x0 + 1, y0 + 1);
                gx += g * ((T::ONE - fy) * (v10 - v00) + fy * (v11 - v01));
                gy += g * ((T::ONE - fx) * (v01 - v00) + fx * (v11 - v10));
            }
            if let Some(gi) = grad_image.as_deref_mut() {
                let plane = &mut gi[c * h * w..(c + 1) * h * w];
                let corners = [
                    (x0, y0, (T::ONE - fx) * (T::ONE - fy)),
                    (x0 + 1, y0, fx * (T::ONE - fy)),
                    (x0, y0 + 1, (T::ONE - fx) * fy),
                    (x0 + 1, y0 + 1, fx * fy),
                ];
                for (x, y, wt) in corners {
                    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                        plane[y as usize * w + x as usize] += g * wt;
                    }
                }
            }
        }
        if let Some(gg) = grad_grid.as_deref_mut() {
            gg[2 * p] += gx;
            gg[2 * p + 1] += gy;
        }
    }
}

/// Splits a shape at `axis` into (outer, axis extent, inner) element counts.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Row-major strides of `shape`.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// For each output flat index of `permute(shape, axes)`, the source flat index.
pub(crate) fn permute_index(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let len: usize = shape.iter().product();
    let mut idx = Vec::with_capacity(len);
    let mut counter = vec![0usize; out_shape.len()];
    for _ in 0..len {
        let src: usize = counter
            .iter()
            .zip(axes)
            .map(|(&c, &a)| c * in_strides[a])
            .sum();
        idx.push(src);
        for d in (0..counter.len()).rev() {
            counter[d] += 1;
            if counter[d] < out_shape[d] {
                break;
            }
            counter[d] = 0;
        }
    }
    idx
}
