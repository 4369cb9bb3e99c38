use crate::diffcore::Tensor;
use crate::imaging::GrayImage;

use super::{GeometryError, Homography, Point};

/// `height × width × 2` grid whose entry `[y][x]` is `H(x, y)` as `(x, y)`.
pub fn sampling_grid(h: &Homography, height: usize, width: usize) -> Result<Tensor<f64>, GeometryError> {
    let mut data = Vec::with_capacity(height * width * 2);
    for y in 0..height {
        for x in 0..width {
            let p = h.apply(Point::new(x as f64, y as f64))?;
            data.push(p.x);
            data.push(p.y);
        }
    }
    Ok(Tensor::new(&[height, width, 2], data).expect("grid length matches its shape"))
}

/// Pullback warp: `out(p) = src(H(p))`, bilinear, with taps outside `src`
/// (and points mapped to infinity) reading `fill`.
pub fn warp_image(src: &GrayImage, h: &Homography, height: usize, width: usize, fill: f64) -> GrayImage {
    GrayImage::from_fn(height, width, |y, x| match h.apply(Point::new(x as f64, y as f64)) {
        Ok(p) => sample(src, p, fill),
        Err(_) => fill,
    })
}

pub(crate) fn sample(src: &GrayImage, p: Point, fill: f64) -> f64 {
    if !(p.x > -1.0 && p.y > -1.0 && p.x < src.width() as f64 && p.y < src.height() as f64) {
        return fill;
    }
    let (x0, y0) = (p.x.floor(), p.y.floor());
    let (fx, fy) = (p.x - x0, p.y - y0);
    let tap = |yy: f64, xx: f64| {
        if xx < 0.0 || yy < 0.0 || xx >= src.width() as f64 || yy >= src.height() as f64 {
            fill
        } else {
            src.get(yy as usize, xx as usize)
        }
    };
    let top = tap(y0, x0) * (1.0 - fx) + tap(y0, x0 + 1.0) * fx;
    let bottom = tap(y0 + 1.0, x0) * (1.0 - fx) + tap(y0 + 1.0, x0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}
