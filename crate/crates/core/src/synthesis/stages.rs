use std::ops::Range;

use super::{AppearanceParams, SynthesisError};
use crate::geometry::{warp_image, GeometryError, Homography, Quad, DOMAIN_CORNERS, DOMAIN_HEIGHT, DOMAIN_WIDTH};
use crate::imaging::{corrupt, distance_transform, resize_gaps, CorruptParams, GrayImage, Mask};

/// Widest kerned text accepted before the caller must redraw.
pub const MAX_TEXT_WIDTH: usize = 2 * DOMAIN_WIDTH;

/// Widens each gap of `image` by the matching offset (rounded, at least one
/// column left). The image width changes by the total offset.
pub fn apply_kerning(image: &GrayImage, gaps: &[Range<usize>], offsets: &[f64]) -> Result<GrayImage, SynthesisError> {
    if gaps.len() != offsets.len() {
        return Err(SynthesisError::KerningCount {
            expected: gaps.len(),
            got: offsets.len(),
        });
    }
    let widths: Vec<usize> = gaps
        .iter()
        .zip(offsets)
        .map(|(g, &t)| (g.len() as f64 + t).round().max(1.0) as usize)
        .collect();
    let width = image.width() + widths.iter().sum::<usize>() - gaps.iter().map(|g| g.len()).sum::<usize>();
    if width > MAX_TEXT_WIDTH {
        return Err(SynthesisError::WidthOverflow { width });
    }
    Ok(resize_gaps(image, gaps, &widths, None)?)
}

/// Strokes of radius `r` around the skeleton (pixels above 0.5): a pixel is
/// ink when its distance to the skeleton is at most `r − 0.5`, so `r = 0.5`
/// keeps the skeleton itself.
pub fn apply_font(skeleton: &GrayImage, radius: f64) -> Result<GrayImage, SynthesisError> {
    let mask = skeleton.threshold(0.5);
    let field = distance_transform(&mask)?;
    let limit = radius - 0.5;
    let limit2 = limit * limit;
    let inked = Mask::from_data(
        mask.height(),
        mask.width(),
        field.squared_values().iter().map(|&d2| limit >= 0.0 && d2 <= limit2 + 1e-9).collect(),
    )?;
    Ok(GrayImage::from_mask(&inked))
}

/// Text raster after appearance, inside a background margin that gives the
/// geometric warp context around the text box.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatImage {
    pub image: GrayImage,
    pub margin_x: usize,
    pub margin_y: usize,
    pub text_width: usize,
    pub background: f64,
}

impl FlatImage {
    /// Rendering-domain point → pixel of `image`. The domain's 256 columns
    /// span the whole (possibly kerned) text width.
    pub fn domain_to_pixel(&self) -> Result<Homography, GeometryError> {
        let sx = (self.text_width - 1) as f64 / (DOMAIN_WIDTH - 1) as f64;
        Homography::translation(self.margin_x as f64, self.margin_y as f64).compose(&Homography::scaling(sx, 1.0)?)
    }
}

/// Paints ink over the background level, pads with background and corrupts.
pub fn apply_appearance(ink: &GrayImage, params: &AppearanceParams, seed: u64) -> Result<FlatImage, SynthesisError> {
    let (margin_x, margin_y) = (ink.width(), DOMAIN_HEIGHT);
    let (bg, fg) = (params.background, params.ink());
    let (h, w) = (ink.height() + 2 * margin_y, ink.width() + 2 * margin_x);
    let painted = GrayImage::from_fn(h, w, |y, x| {
        let inside = (margin_y..margin_y + ink.height()).contains(&y) && (margin_x..margin_x + ink.width()).contains(&x);
        let a = if inside { ink.get(y - margin_y, x - margin_x) } else { 0.0 };
        bg + (fg - bg) * a
    });
    let corruption = CorruptParams {
        shading_x: params.shading_x,
        shading_y: params.shading_y,
        blur_sigma: params.blur_sigma,
        noise_sigma: params.noise_sigma,
        ..CorruptParams::NEUTRAL
    };
    Ok(FlatImage {
        image: corrupt(&painted, &corruption, seed),
        margin_x,
        margin_y,
        text_width: ink.width(),
        background: bg,
    })
}

/// Pulls the flat image back onto a `height × width` scene through `h`
/// (scene → domain). Returns the scene and the text box, `h⁻¹` of the domain
/// corners, which must lie on the canvas.
pub fn apply_geometry(
    flat: &FlatImage,
    h: &Homography,
    height: usize,
    width: usize,
) -> Result<(GrayImage, Quad), SynthesisError> {
    let inv = h.invert()?;
    let mut corners = DOMAIN_CORNERS;
    for c in &mut corners {
        *c = inv.apply(*c)?;
    }
    let quad = Quad::new(corners)?;
    if !quad.inside(height, width) {
        return Err(GeometryError::Clipped {
            quad: quad.to_array(),
            width,
            height,
        }
        .into());
    }
    let lookup = flat.domain_to_pixel()?.compose(h)?;
    Ok((warp_image(&flat.image, &lookup, height, width, flat.background), quad))
}
