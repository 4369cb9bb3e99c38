//! Inverse-inference recognizer: IC-STN rectifier, residual encoder,
//! kerning LSTM, template decoder and CTC recognition head.
//!
//! Stages are written once against a generic [`Tape`](crate::diffcore::Tape)
//! so the same code trains in `f32` and is gradient-checked in `f64`.

mod checkpoint;
mod config;
mod eval;
pub mod layers;
mod network;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{ModelConfig, Variant};
pub use eval::{evaluate, DecodeMode, EvalExample, EvalReport};
pub use network::{
    decoder_forward, encoder_forward, forward, icstn_rectify, init_params, klstm_forward, klstm_sequence,
    mse_loss, recognition_forward, total_loss, LossParts, ModelInput, Outputs, STN_CONTEXT,
};
pub use train::{
    learning_rate, train, train_step, train_steps, worker_threads, LrSchedule, StepStats, TrainConfig,
    TrainExample, TrainSet,
};

use thiserror::Error;

use crate::ctc::{Codec, CtcError, LogitsMatrix};
use crate::diffcore::{DiffError, Params, Tape};
use crate::geometry::GeometryError;
use crate::imaging::{GrayImage, ImagingError};
use crate::synthesis::SynthesisError;
use crate::templates::TemplateError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input is {height}x{width}, expected {expected_height}x{expected_width}")]
    InputExtents {
        height: usize,
        width: usize,
        expected_height: usize,
        expected_width: usize,
    },
    #[error("checkpoint alphabet {found:?} does not match {expected:?}")]
    CodecMismatch { expected: String, found: String },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite loss at step {step} (sample {index}, {transcript:?}); dumped to {dump}")]
    NonFinite {
        step: u64,
        index: usize,
        transcript: String,
        dump: String,
    },
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Architecture, alphabet and trained weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub codec: Codec,
    pub params: Params<f32>,
}

impl Model {
    /// Freshly initialized weights, determined by `seed`.
    pub fn new(config: ModelConfig, codec: Codec, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = init_params(&config, codec.classes(), seed);
        Ok(Model { config, codec, params })
    }

    /// Per-frame log-probabilities for one scene.
    pub fn logits(&self, input: &ModelInput) -> Result<LogitsMatrix, ModelError> {
        let mut tape = Tape::<f32>::new();
        let bound = self.params.bind(&mut tape);
        let out = forward(&mut tape, &bound, &self.config, input)?;
        let scores = tape.value(out.scores);
        let raw: Vec<f64> = scores.data().iter().map(|&v| v as f64).collect();
        Ok(LogitsMatrix::from_scores(scores.shape()[0], scores.shape()[1], &raw)?)
    }

    /// Predicted skeleton template, when the decoder is part of the model.
    pub fn predict_template(&self, input: &ModelInput) -> Result<Option<GrayImage>, ModelError> {
        let mut tape = Tape::<f32>::new();
        let bound = self.params.bind(&mut tape);
        let out = forward(&mut tape, &bound, &self.config, input)?;
        let Some(s) = out.template else { return Ok(None) };
        let t = tape.value(s);
        let (h, w) = (t.shape()[1], t.shape()[2]);
        Ok(Some(GrayImage::new(h, w, t.data().iter().map(|&v| v as f64).collect())?))
    }

    /// Transcript read from one scene.
    pub fn recognize(&self, input: &ModelInput, mode: &DecodeMode) -> Result<String, ModelError> {
        let logp = self.logits(input)?;
        mode.decode(&logp, &self.codec)
    }
}

#[cfg(test)]
mod tests;
