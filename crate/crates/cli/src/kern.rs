//! Test scenes with inter-character gaps widened after kerning.

use std::ops::Range;

use textcomp_core::geometry::{GeometryError, Homography, DOMAIN_HEIGHT, DOMAIN_WIDTH};
use textcomp_core::imaging::{resize_gaps, GrayImage};
use textcomp_core::seed::{derive_seed, stream_rng};
use textcomp_core::synthesis::{
    apply_appearance, apply_font, apply_geometry, apply_kerning, generate, ParamRanges, SynthesisError,
    WordSample, CANVAS_HEIGHT, CANVAS_WIDTH,
};
use textcomp_core::templates::render_template;

use crate::spec::HeightUnits;
use crate::HarnessError;

/// Zoom-out steps tried when a widened text box leaves the canvas.
const MAX_FIT_STEPS: usize = 60;
const FIT_STEP: f64 = 1.05;

/// Gap width multiplier `1 + 0.1·k·H` at stretch level `k`.
pub fn stretch_factor(level: u32, units: HeightUnits) -> f64 {
    let h = match units {
        HeightUnits::Normalized => 1.0,
        HeightUnits::Pixels => DOMAIN_HEIGHT as f64,
    };
    1.0 + 0.1 * level as f64 * h
}

/// Gap column runs of the kerned skeleton, computed from the unkerned runs
/// and offsets with the same rounding as the kerning stage.
pub fn kerned_gaps(gaps: &[Range<usize>], offsets: &[f64]) -> Vec<Range<usize>> {
    let mut out = Vec::with_capacity(gaps.len());
    let mut shift = 0isize;
    for (g, &t) in gaps.iter().zip(offsets) {
        let width = (g.len() as f64 + t).round().max(1.0) as usize;
        let start = (g.start as isize + shift) as usize;
        out.push(start..start + width);
        shift += width as isize - g.len() as isize;
    }
    out
}

/// The sample `generate(word, ranges, seed)` would produce, with every gap
/// of the kerned skeleton widened by `factor`.
///
/// Glyphs keep their pixel size: the text box grows to the right and left
/// of its centre instead of squeezing the wider text into the original box.
/// When the grown box leaves the canvas the whole box is shrunk about its
/// centre in 5% steps until it fits.
pub fn stretched_sample(word: &str, ranges: &ParamRanges, seed: u64, factor: f64) -> Result<WordSample, HarnessError> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(HarnessError::Spec(format!("stretch factor {factor} must be positive")));
    }
    if factor == 1.0 {
        return Ok(generate(word, ranges, seed)?);
    }
    let template = render_template(word)?;
    let gaps = template.skeleton.gaps();
    if gaps.len() + 1 != template.skeleton.columns.len() {
        return Err(HarnessError::MissingGaps(word.to_string()));
    }
    let params = ranges.draw(gaps.len(), &mut stream_rng(seed, 0))?;
    let skeleton = GrayImage::from_mask(&template.skeleton.mask);
    let kerned = apply_kerning(&skeleton, &gaps, &params.kerning)?;
    let runs = kerned_gaps(&gaps, &params.kerning);
    let widths: Vec<usize> = runs.iter().map(|g| (g.len() as f64 * factor).round().max(1.0) as usize).collect();
    let stretched = resize_gaps(&kerned, &runs, &widths, None)?;
    let inked = apply_font(&stretched, params.stroke_radius)?;
    let flat = apply_appearance(&inked, &params.appearance, derive_seed(seed, 1))?;

    let ratio = (kerned.width() - 1) as f64 / (stretched.width() - 1) as f64;
    let (cx, cy) = ((DOMAIN_WIDTH - 1) as f64 / 2.0, (DOMAIN_HEIGHT - 1) as f64 / 2.0);
    let mut zoom = 1.0;
    for _ in 0..MAX_FIT_STEPS {
        let rescale = Homography::translation(cx, cy)
            .compose(&Homography::scaling(ratio * zoom, zoom)?)?
            .compose(&Homography::translation(-cx, -cy))?;
        let h = rescale.compose(&params.homography)?;
        match apply_geometry(&flat, &h, CANVAS_HEIGHT, CANVAS_WIDTH) {
            Ok((scene, quad)) => {
                let mut params = params;
                params.homography = h;
                return Ok(WordSample {
                    scene,
                    quad,
                    transcript: word.to_string(),
                    template,
                    params,
                });
            }
            Err(SynthesisError::Geometry(GeometryError::Clipped { .. })) => zoom *= FIT_STEP,
            Err(e) => return Err(e.into()),
        }
    }
    Err(HarnessError::Spec(format!(
        "stretched {word:?} does not fit the canvas at factor {factor}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use textcomp_core::imaging::gap_runs;

    #[test]
    fn factor_follows_the_height_unit() {
        assert_eq!(stretch_factor(0, HeightUnits::Normalized), 1.0);
        assert!((stretch_factor(2, HeightUnits::Normalized) - 1.2).abs() < 1e-15);
        assert!((stretch_factor(1, HeightUnits::Pixels) - 4.2).abs() < 1e-12);
    }

    #[test]
    fn unit_factor_is_the_plain_sample() {
        let ranges = ParamRanges::default();
        let a = stretched_sample("hotel", &ranges, 17, 1.0).unwrap();
        assert_eq!(a, generate("hotel", &ranges, 17).unwrap());
    }

    #[test]
    fn computed_gap_runs_match_the_kerned_mask() {
        let ranges = ParamRanges::default();
        for (seed, word) in ["desk", "monster", "ham", "toast"].iter().enumerate() {
            let template = render_template(word).unwrap();
            let gaps = template.skeleton.gaps();
            let params = ranges.draw(gaps.len(), &mut stream_rng(seed as u64, 0)).unwrap();
            let kerned = apply_kerning(&GrayImage::from_mask(&template.skeleton.mask), &gaps, &params.kerning).unwrap();
            assert_eq!(kerned_gaps(&gaps, &params.kerning), gap_runs(&kerned.threshold(0.5)), "{word}");
        }
    }

    #[test]
    fn stretching_widens_the_text_box() {
        let ranges = ParamRanges::default();
        let plain = generate("moderns", &ranges, 5).unwrap();
        let wide = stretched_sample("moderns", &ranges, 5, 1.4).unwrap();
        let width = |q: &textcomp_core::geometry::Quad| q.bounding_box().2;
        assert!(width(&wide.quad) > width(&plain.quad));
        assert_eq!(wide.transcript, "moderns");
        assert!(wide.quad.inside(CANVAS_HEIGHT, CANVAS_WIDTH));
    }
}
