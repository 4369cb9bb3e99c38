use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::GrayImage;

/// Appearance corruption applied by [`corrupt`], in this order: blur,
/// contrast/brightness about mid-gray, linear shading, additive noise, clamp.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptParams {
    /// Gain about 0.5; 1 is neutral.
    pub contrast: f64,
    pub brightness: f64,
    /// Shading added per pixel of horizontal / vertical offset from the centre.
    pub shading_x: f64,
    pub shading_y: f64,
    pub blur_sigma: f64,
    pub noise_sigma: f64,
}

impl CorruptParams {
    pub const NEUTRAL: CorruptParams = CorruptParams {
        contrast: 1.0,
        brightness: 0.0,
        shading_x: 0.0,
        shading_y: 0.0,
        blur_sigma: 0.0,
        noise_sigma: 0.0,
    };
}

impl Default for CorruptParams {
    fn default() -> Self {
        Self::NEUTRAL
    }
}

/// Applies `params` to `image`; the noise stream is seeded by `seed`.
pub fn corrupt(image: &GrayImage, params: &CorruptParams, seed: u64) -> GrayImage {
    let mut out = if params.blur_sigma > 0.0 {
        gaussian_blur(image, params.blur_sigma)
    } else {
        image.clone()
    };
    if params.contrast != 1.0 || params.brightness != 0.0 {
        for v in out.data_mut() {
            *v = 0.5 + params.contrast * (*v - 0.5) + params.brightness;
        }
    }
    if params.shading_x != 0.0 || params.shading_y != 0.0 {
        let cx = (out.width() as f64 - 1.0) / 2.0;
        let cy = (out.height() as f64 - 1.0) / 2.0;
        let w = out.width();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            *v += params.shading_x * (x - cx) + params.shading_y * (y - cy);
        }
    }
    if params.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, params.noise_sigma).expect("finite noise sigma");
        for v in out.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    out.clamp01();
    out
}

/// Index into `0..n` under whole-sample symmetric reflection (… c b a | a b c …).
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable Gaussian blur with symmetric reflective borders, radius ⌈3σ⌉.
pub fn gaussian_blur(image: &GrayImage, sigma: f64) -> GrayImage {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (h, w) = (image.height(), image.width());
    let src = image.data();
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let xx = reflect(x as isize + k as isize - radius, w);
                acc += kv * src[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let yy = reflect(y as isize + k as isize - radius, h);
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    GrayImage::new(h, w, out).expect("blur preserves extents")
}
