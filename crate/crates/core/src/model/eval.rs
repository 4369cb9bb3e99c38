use serde::{Deserialize, Serialize};

use super::network::ModelInput;
use super::train::worker_threads;
use super::{Model, ModelError};
use crate::ctc::{beam_decode, edit_distance, greedy_decode, lexicon_decode, Codec, LexiconMode, LogitsMatrix};

/// How per-frame posteriors become a transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Beam {
        width: usize,
    },
    Lexicon {
        words: Vec<String>,
        mode: LexiconMode,
        beam_width: usize,
    },
}

impl DecodeMode {
    pub fn decode(&self, logp: &LogitsMatrix, codec: &Codec) -> Result<String, ModelError> {
        Ok(match self {
            DecodeMode::Greedy => codec.decode(&greedy_decode(logp)),
            DecodeMode::Beam { width } => codec.decode(&beam_decode(logp, *width)),
            DecodeMode::Lexicon {
                words,
                mode,
                beam_width,
            } => lexicon_decode(logp, codec, words, *mode, *beam_width)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalExample {
    pub input: ModelInput,
    pub transcript: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub correct: usize,
    pub word_accuracy: f64,
    /// Edit operations summed over the set.
    pub char_errors: usize,
    pub reference_chars: usize,
    /// `char_errors / reference_chars` (micro-average).
    pub cer: f64,
    pub predictions: Vec<String>,
}

/// Word accuracy and character error rate of `model` on `examples`.
///
/// Work is split over [`worker_threads`] threads sharing the weights; the
/// report does not depend on the split.
pub fn evaluate(model: &Model, examples: &[EvalExample], mode: &DecodeMode) -> Result<EvalReport, ModelError> {
    for ex in examples {
        if model.codec.encode(&ex.transcript).is_err() {
            return Err(ModelError::CodecMismatch {
                expected: model.codec.alphabet(),
                found: ex.transcript.clone(),
            });
        }
    }
    let threads = worker_threads().min(examples.len()).max(1);
    let chunk = examples.len().div_ceil(threads).max(1);
    let predictions: Vec<String> = std::thread::scope(|scope| {
        let handles: Vec<_> = examples
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|ex| model.recognize(&ex.input, mode))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        let mut all = Vec::with_capacity(examples.len());
        for h in handles {
            all.extend(h.join().expect("evaluation worker panicked")?);
        }
        Ok::<_, ModelError>(all)
    })?;
    Ok(score(examples.iter().map(|e| e.transcript.as_str()), predictions))
}

/// Accuracy and micro-averaged CER of `predictions` against `references`.
pub(crate) fn score<'a>(references: impl Iterator<Item = &'a str>, predictions: Vec<String>) -> EvalReport {
    let (mut correct, mut errors, mut chars, mut n) = (0, 0, 0, 0);
    for (reference, predicted) in references.zip(&predictions) {
        let r: Vec<char> = reference.chars().collect();
        let p: Vec<char> = predicted.chars().collect();
        correct += usize::from(r == p);
        errors += edit_distance(&r, &p);
        chars += r.len();
        n += 1;
    }
    EvalReport {
        examples: n,
        correct,
        word_accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
        char_errors: errors,
        reference_chars: chars,
        cer: if chars == 0 { 0.0 } else { errors as f64 / chars as f64 },
        predictions,
    }
}
