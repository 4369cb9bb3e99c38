//! Forward word-image model: skeleton, kerning, font, appearance, geometry.
//!
//! [`synthesize`] runs the stages strictly in that order. Every random draw
//! comes from a seed, so a sample is reproducible from its seed alone.

mod dataset;
mod params;
mod perturb;
mod stages;

pub use dataset::{gen_dataset, load_entry, regenerate, Manifest, ManifestEntry, MANIFEST_VERSION};
pub use params::{AppearanceParams, ParamRanges, Polarity, SynthesisParams};
pub use perturb::{perturb_quad, PerturbationParams, MAX_PERTURB_ATTEMPTS};
pub use stages::{apply_appearance, apply_font, apply_geometry, apply_kerning, FlatImage, MAX_TEXT_WIDTH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{GeometryError, Quad};
use crate::imaging::{GrayImage, ImagingError};
use crate::seed::derive_seed;
use crate::templates::{render_template, SkeletonTemplate, TemplateError};

pub const CANVAS_HEIGHT: usize = 64;
pub const CANVAS_WIDTH: usize = 512;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("kerned text is {width} px wide, limit is {MAX_TEXT_WIDTH}")]
    WidthOverflow { width: usize },
    #[error("{expected} kerning offsets needed, got {got}")]
    KerningCount { expected: usize, got: usize },
    #[error("parameter {name} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("no valid perturbed quad after {0} attempts")]
    PersistentDegeneracy(usize),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One observed scene with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct WordSample {
    pub scene: GrayImage,
    /// True text region in scene coordinates.
    pub quad: Quad,
    pub transcript: String,
    pub template: SkeletonTemplate,
    pub params: SynthesisParams,
}

/// Renders `word` under `params`. `seed` drives the appearance noise only.
pub fn synthesize(word: &str, params: &SynthesisParams, seed: u64) -> Result<WordSample, SynthesisError> {
    let template = render_template(word)?;
    let skeleton = GrayImage::from_mask(&template.skeleton.mask);
    let kerned = apply_kerning(&skeleton, &template.skeleton.gaps(), &params.kerning)?;
    let inked = apply_font(&kerned, params.stroke_radius)?;
    let flat = apply_appearance(&inked, &params.appearance, seed)?;
    let (scene, quad) = apply_geometry(&flat, &params.homography, CANVAS_HEIGHT, CANVAS_WIDTH)?;
    Ok(WordSample {
        scene,
        quad,
        transcript: word.to_string(),
        template,
        params: params.clone(),
    })
}

/// Draws parameters from `ranges` and renders; fully determined by `seed`.
pub fn generate(word: &str, ranges: &ParamRanges, seed: u64) -> Result<WordSample, SynthesisError> {
    let gaps = render_template(word)?.skeleton.gaps().len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let params = ranges.draw(gaps, &mut rng)?;
    synthesize(word, &params, derive_seed(seed, 1))
}

#[cfg(test)]
mod tests;
