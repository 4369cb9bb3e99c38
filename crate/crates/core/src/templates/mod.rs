//! Canonical word skeletons and their Gaussian templates.
//!
//! A word of `n` characters owns the whole 256-column domain, split into `n`
//! equal slots. Each glyph is drawn inside its slot less a 2-px margin,
//! thinned to a skeleton, and the template is `exp(−d²/2)` of the distance to
//! the nearest skeleton pixel of any character.

mod glyphs;

pub use glyphs::GlyphSet;

use std::ops::Range;

use thiserror::Error;

use crate::geometry::{DOMAIN_HEIGHT, DOMAIN_WIDTH};
use crate::imaging::{distance_transform, rasterize_strokes, skeletonize, GrayImage, ImagingError, Mask};

pub const MAX_TRANSCRIPT_LEN: usize = 16;
/// Blank pixels between a slot edge and its glyph box.
pub const SLOT_MARGIN: usize = 2;
/// Width of the stroke drawn before thinning.
pub const STROKE_THICKNESS: f64 = 2.0;
/// Template spread in pixels.
pub const SIGMA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("character {0:?} has no glyph")]
    Unsupported(char),
    #[error("transcript length {0} is outside 1..={MAX_TRANSCRIPT_LEN}")]
    Length(usize),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Splits a dictionary word into its characters, checking each has a glyph.
pub fn transcribe(word: &str) -> Result<Vec<char>, TemplateError> {
    if word.is_empty() {
        return Err(TemplateError::Length(0));
    }
    let glyphs = GlyphSet::embedded();
    word.chars()
        .map(|c| if glyphs.contains(c) { Ok(c) } else { Err(TemplateError::Unsupported(c)) })
        .collect()
}

/// Skeleton of a word in the rendering domain, before any kerning.
#[derive(Clone, Debug, PartialEq)]
pub struct WordSkeleton {
    pub transcript: String,
    /// Union of all character skeletons.
    pub mask: Mask,
    /// Per character, the columns its skeleton occupies.
    pub columns: Vec<Range<usize>>,
}

impl WordSkeleton {
    /// Empty column runs between consecutive characters, left to right.
    pub fn gaps(&self) -> Vec<Range<usize>> {
        self.columns
            .windows(2)
            .map(|w| w[0].end..w[1].start)
            .filter(|g| !g.is_empty())
            .collect()
    }
}

/// Ground-truth template: 32×256 image plus the skeleton it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonTemplate {
    pub image: GrayImage,
    pub skeleton: WordSkeleton,
}

impl SkeletonTemplate {
    pub fn transcript(&self) -> &str {
        &self.skeleton.transcript
    }
}

/// Column range `[start, end)` of slot `k` out of `n`.
pub fn slot(k: usize, n: usize) -> Range<usize> {
    (k * DOMAIN_WIDTH / n)..((k + 1) * DOMAIN_WIDTH / n)
}

fn glyph_mask(strokes: &[Vec<[f64; 2]>], slot: Range<usize>) -> Result<Mask, ImagingError> {
    let left = (slot.start + SLOT_MARGIN) as f64;
    let box_w = (slot.len() - 2 * SLOT_MARGIN - 1) as f64;
    let top = SLOT_MARGIN as f64;
    let box_h = (DOMAIN_HEIGHT - 2 * SLOT_MARGIN - 1) as f64;
    let placed: Vec<Vec<[f64; 2]>> = strokes
        .iter()
        .map(|s| s.iter().map(|&[x, y]| [left + x * box_w, top + y * box_h]).collect())
        .collect();
    rasterize_strokes(&placed, DOMAIN_HEIGHT, DOMAIN_WIDTH, STROKE_THICKNESS)
}

/// Thinned glyph strokes for `transcript`, one equal slot per character.
pub fn render_skeleton(transcript: &str) -> Result<WordSkeleton, TemplateError> {
    let chars = transcribe(transcript)?;
    let n = chars.len();
    if n > MAX_TRANSCRIPT_LEN {
        return Err(TemplateError::Length(n));
    }
    let glyphs = GlyphSet::embedded();
    let mut mask = Mask::new(DOMAIN_HEIGHT, DOMAIN_WIDTH);
    let mut columns = Vec::with_capacity(n);
    for (k, &c) in chars.iter().enumerate() {
        let strokes = glyphs.get(c).ok_or(TemplateError::Unsupported(c))?;
        let skeleton = skeletonize(&glyph_mask(strokes, slot(k, n))?);
        let occupied: Vec<usize> = (0..DOMAIN_WIDTH).filter(|&x| skeleton.column_occupied(x)).collect();
        let (Some(&first), Some(&last)) = (occupied.first(), occupied.last()) else {
            return Err(ImagingError::EmptyMask.into());
        };
        columns.push(first..last + 1);
        mask = mask.union(&skeleton);
    }
    Ok(WordSkeleton {
        transcript: transcript.to_string(),
        mask,
        columns,
    })
}

/// Gaussian template of the word skeleton.
///
/// Each character contributes `exp(−d_k²/2σ²)` and the word takes the
/// per-pixel maximum, which equals the same law applied to the distance to
/// the union of all skeletons.
pub fn render_template(transcript: &str) -> Result<SkeletonTemplate, TemplateError> {
    let skeleton = render_skeleton(transcript)?;
    let image = template_from_mask(&skeleton.mask)?;
    Ok(SkeletonTemplate { image, skeleton })
}

/// `exp(−d²/2σ²)` of the distance to the nearest set pixel of `mask`.
pub fn template_from_mask(mask: &Mask) -> Result<GrayImage, ImagingError> {
    let field = distance_transform(mask)?;
    let data = field
        .squared_values()
        .iter()
        .map(|&d2| (-d2 / (2.0 * SIGMA * SIGMA)).exp())
        .collect();
    GrayImage::new(mask.height(), mask.width(), data)
}
