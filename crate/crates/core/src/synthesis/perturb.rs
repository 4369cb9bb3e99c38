use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SynthesisError;
use crate::geometry::{Point, Quad};

pub const MAX_PERTURB_ATTEMPTS: usize = 10;

/// Detector-noise model: per-corner noise with std `sigma_p·(w, h)` plus one
/// shared translation with std `sigma_t·(w, h)`, where `w × h` is the quad's
/// bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct PerturbationParams {
    pub sigma_p: f64,
    pub sigma_t: f64,
}

impl PerturbationParams {
    pub fn new(sigma_p: f64, sigma_t: f64) -> Self {
        PerturbationParams { sigma_p, sigma_t }
    }
}

/// Corrupts `quad`; draws that are not valid quads are retried with
/// `seed + 1`, `seed + 2`, … up to [`MAX_PERTURB_ATTEMPTS`] draws.
pub fn perturb_quad(quad: &Quad, pp: PerturbationParams, seed: u64) -> Result<Quad, SynthesisError> {
    for name_value in [("sigma_p", pp.sigma_p), ("sigma_t", pp.sigma_t)] {
        if !(name_value.1 >= 0.0 && name_value.1.is_finite()) {
            return Err(SynthesisError::OutOfRange {
                name: name_value.0,
                value: name_value.1,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
    }
    if pp.sigma_p == 0.0 && pp.sigma_t == 0.0 {
        return Ok(*quad);
    }
    let (_, _, w, h) = quad.bounding_box();
    for attempt in 0..MAX_PERTURB_ATTEMPTS as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let (tx, ty) = (pp.sigma_t * w * normal(), pp.sigma_t * h * normal());
        let corners = quad
            .corners()
            .map(|c| Point::new(c.x + pp.sigma_p * w * normal() + tx, c.y + pp.sigma_p * h * normal() + ty));
        if let Ok(q) = Quad::new(corners) {
            return Ok(q);
        }
    }
    Err(SynthesisError::PersistentDegeneracy(MAX_PERTURB_ATTEMPTS))
}
