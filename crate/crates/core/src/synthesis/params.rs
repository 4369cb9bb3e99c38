use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SynthesisError, CANVAS_HEIGHT, CANVAS_WIDTH};
use crate::geometry::{Homography, Point, Quad, DOMAIN_HEIGHT, DOMAIN_WIDTH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    DarkOnLight,
    LightOnDark,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppearanceParams {
    pub polarity: Polarity,
    pub background: f64,
    /// Absolute ink-to-background difference.
    pub contrast: f64,
    pub noise_sigma: f64,
    pub blur_sigma: f64,
    /// Intensity change per pixel along x / y of the flat image.
    pub shading_x: f64,
    pub shading_y: f64,
}

impl AppearanceParams {
    /// Black ink on white, no corruption.
    pub const NEUTRAL: AppearanceParams = AppearanceParams {
        polarity: Polarity::DarkOnLight,
        background: 1.0,
        contrast: 1.0,
        noise_sigma: 0.0,
        blur_sigma: 0.0,
        shading_x: 0.0,
        shading_y: 0.0,
    };

    pub fn ink(&self) -> f64 {
        match self.polarity {
            Polarity::DarkOnLight => self.background - self.contrast,
            Polarity::LightOnDark => self.background + self.contrast,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisParams {
    /// Pixels added to each inter-character gap, left to right.
    pub kerning: Vec<f64>,
    pub stroke_radius: f64,
    pub appearance: AppearanceParams,
    /// Maps scene points to rendering-domain points.
    pub homography: Homography,
}

impl SynthesisParams {
    /// No kerning, medium stroke, neutral appearance, text at the origin.
    pub fn neutral(gaps: usize) -> Self {
        SynthesisParams {
            kerning: vec![0.0; gaps],
            stroke_radius: 1.5,
            appearance: AppearanceParams::NEUTRAL,
            homography: Homography::identity(),
        }
    }
}

/// Sampling ranges for [`SynthesisParams`]; every draw is uniform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamRanges {
    pub kerning: (f64, f64),
    pub stroke_radius: (f64, f64),
    pub light_on_dark_prob: f64,
    /// Background level of dark-on-light text; inverse text uses `1 − level`.
    pub background: (f64, f64),
    pub contrast: (f64, f64),
    pub noise_sigma: (f64, f64),
    pub blur_sigma: (f64, f64),
    /// Bound on |shading slope| per pixel along x and y.
    pub shading_x: f64,
    pub shading_y: f64,
    /// Text box scale relative to the 32×256 domain.
    pub scale: (f64, f64),
    /// Bound on the text box centre shift in pixels along x and y.
    pub shift: (f64, f64),
    /// Bound on independent corner displacement, as a fraction of the box extents.
    pub corner_jitter: f64,
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            kerning: (-2.0, 6.0),
            stroke_radius: (0.5, 2.5),
            light_on_dark_prob: 0.5,
            background: (0.6, 0.95),
            contrast: (0.35, 0.6),
            noise_sigma: (0.0, 0.08),
            blur_sigma: (0.0, 1.5),
            shading_x: 5e-4,
            shading_y: 4e-3,
            scale: (0.8, 1.2),
            shift: (20.0, 4.0),
            corner_jitter: 0.15,
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn check(name: &'static str, value: f64, (lo, hi): (f64, f64)) -> Result<(), SynthesisError> {
    if value.is_finite() && lo <= value && value <= hi {
        Ok(())
    } else {
        Err(SynthesisError::OutOfRange { name, value, lo, hi })
    }
}

impl ParamRanges {
    /// Rejects ranges that could push the text box off the canvas or produce
    /// ink outside [0, 1].
    pub fn validate(&self) -> Result<(), SynthesisError> {
        check("stroke_radius.lo", self.stroke_radius.0, (0.5, 8.0))?;
        check("stroke_radius.hi", self.stroke_radius.1, (self.stroke_radius.0, 8.0))?;
        check("light_on_dark_prob", self.light_on_dark_prob, (0.0, 1.0))?;
        check("background.lo", self.background.0, (0.0, 1.0))?;
        check("background.hi", self.background.1, (self.background.0, 1.0))?;
        check("contrast.lo", self.contrast.0, (0.0, self.background.0))?;
        check("contrast.hi", self.contrast.1, (self.contrast.0, 1.0))?;
        check("noise_sigma.lo", self.noise_sigma.0, (0.0, 1.0))?;
        check("noise_sigma.hi", self.noise_sigma.1, (self.noise_sigma.0, 1.0))?;
        check("blur_sigma.lo", self.blur_sigma.0, (0.0, 10.0))?;
        check("blur_sigma.hi", self.blur_sigma.1, (self.blur_sigma.0, 10.0))?;
        check("corner_jitter", self.corner_jitter, (0.0, 0.4))?;
        check("scale.lo", self.scale.0, (0.25, 4.0))?;
        check("scale.hi", self.scale.1, (self.scale.0, 4.0))?;
        let half_w = self.scale.1 * DOMAIN_WIDTH as f64 / 2.0 + self.corner_jitter * DOMAIN_WIDTH as f64;
        let half_h = self.scale.1 * DOMAIN_HEIGHT as f64 / 2.0 + self.corner_jitter * DOMAIN_HEIGHT as f64;
        check("shift.x", self.shift.0, (0.0, (CANVAS_WIDTH as f64 - 1.0) / 2.0 - half_w))?;
        check("shift.y", self.shift.1, (0.0, (CANVAS_HEIGHT as f64 - 1.0) / 2.0 - half_h))?;
        Ok(())
    }

    /// Draws one parameter set for a word with `gaps` inter-character gaps.
    pub fn draw(&self, gaps: usize, rng: &mut impl Rng) -> Result<SynthesisParams, SynthesisError> {
        self.validate()?;
        let kerning = (0..gaps).map(|_| uniform(rng, self.kerning)).collect();
        let stroke_radius = uniform(rng, self.stroke_radius);
        let polarity = if rng.random_bool(self.light_on_dark_prob) {
            Polarity::LightOnDark
        } else {
            Polarity::DarkOnLight
        };
        let level = uniform(rng, self.background);
        let contrast = uniform(rng, (self.contrast.0, self.contrast.1.min(level)));
        let appearance = AppearanceParams {
            polarity,
            background: if polarity == Polarity::DarkOnLight { level } else { 1.0 - level },
            contrast,
            noise_sigma: uniform(rng, self.noise_sigma),
            blur_sigma: uniform(rng, self.blur_sigma),
            shading_x: uniform(rng, (-self.shading_x, self.shading_x)),
            shading_y: uniform(rng, (-self.shading_y, self.shading_y)),
        };
        let quad = loop {
            if let Ok(q) = self.draw_quad(rng) {
                break q;
            }
        };
        Ok(SynthesisParams {
            kerning,
            stroke_radius,
            appearance,
            homography: quad.to_domain()?.invert()?,
        })
    }

    fn draw_quad(&self, rng: &mut impl Rng) -> Result<Quad, SynthesisError> {
        let scale = uniform(rng, self.scale);
        let cx = (CANVAS_WIDTH as f64 - 1.0) / 2.0 + uniform(rng, (-self.shift.0, self.shift.0));
        let cy = (CANVAS_HEIGHT as f64 - 1.0) / 2.0 + uniform(rng, (-self.shift.1, self.shift.1));
        let (hw, hh) = (scale * (DOMAIN_WIDTH - 1) as f64 / 2.0, scale * (DOMAIN_HEIGHT - 1) as f64 / 2.0);
        let (jx, jy) = (self.corner_jitter * DOMAIN_WIDTH as f64, self.corner_jitter * DOMAIN_HEIGHT as f64);
        let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].map(|(sx, sy)| {
            Point::new(
                cx + sx * hw + uniform(rng, (-jx, jx)),
                cy + sy * hh + uniform(rng, (-jy, jy)),
            )
        });
        Ok(Quad::new(corners)?)
    }
}
