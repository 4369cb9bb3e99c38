use super::{ImagingError, Mask};

/// Per-pixel Euclidean distance to the nearest foreground pixel of a mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    height: usize,
    width: usize,
    squared: Vec<f64>,
}

impl DistanceField {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Squared distance; an exact integer.
    pub fn squared(&self, y: usize, x: usize) -> f64 {
        self.squared[y * self.width + x]
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.squared(y, x).sqrt()
    }

    pub fn squared_values(&self) -> &[f64] {
        &self.squared
    }
}

/// Exact Euclidean distance transform: two separable passes of the
/// lower envelope of parabolas (Felzenszwalb–Huttenlocher).
pub fn distance_transform(mask: &Mask) -> Result<DistanceField, ImagingError> {
    if mask.is_empty() {
        return Err(ImagingError::EmptyMask);
    }
    let (h, w) = (mask.height(), mask.width());
    let mut grid: Vec<f64> = mask
        .data()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();

    let n = h.max(w);
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut sites = vec![0usize; n];
    let mut bounds = vec![0.0; n + 1];

    for x in 0..w {
        for y in 0..h {
            line[y] = grid[y * w + x];
        }
        envelope(&line[..h], &mut out[..h], &mut sites, &mut bounds);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        line[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        envelope(&line[..w], &mut out[..w], &mut sites, &mut bounds);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    Ok(DistanceField {
        height: h,
        width: w,
        squared: grid,
    })
}

/// 1-D squared distance transform of sampled function `f` (infinite = no site).
fn envelope(f: &[f64], out: &mut [f64], sites: &mut [usize], bounds: &mut [f64]) {
    let mut k = 0usize;
    let mut any = false;
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        if !any {
            sites[0] = q;
            bounds[0] = f64::NEG_INFINITY;
            bounds[1] = f64::INFINITY;
            any = true;
            continue;
        }
        // bounds[0] is -inf, so the walk back always stops at k = 0
        let mut s;
        loop {
            let v = sites[k];
            s = ((f[q] + (q * q) as f64) - (f[v] + (v * v) as f64)) / (2.0 * (q as f64 - v as f64));
            if s > bounds[k] {
                break;
            }
            k -= 1;
        }
        k += 1;
        sites[k] = q;
        bounds[k] = s;
        bounds[k + 1] = f64::INFINITY;
    }
    if !any {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut j = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while bounds[j + 1] < q as f64 {
            j += 1;
        }
        let v = sites[j];
        let d = q as f64 - v as f64;
        *o = d * d + f[v];
    }
}
