//! Connectionist temporal classification: loss, gradient and decoding.
//!
//! Class 0 is the blank; alphabet symbol `i` has class `i + 1`. All
//! probabilities are handled as logarithms.

mod decode;
mod loss;

pub use decode::{beam_decode, edit_distance, greedy_decode, lexicon_decode, LexiconMode, EXACT_LEXICON_LIMIT};
pub use loss::{brute_force_prob, ctc_grad, ctc_loss, ctc_loss_node, CtcOutcome, BRUTE_FORCE_LIMIT};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::DiffError;

pub const BLANK: usize = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtcError {
    #[error("alphabet is empty")]
    EmptyAlphabet,
    #[error("alphabet repeats {0:?}")]
    DuplicateSymbol(char),
    #[error("character {0:?} is not in the codec")]
    UnknownChar(char),
    #[error("class {index} is not a symbol of a {classes}-class codec")]
    InvalidIndex { index: usize, classes: usize },
    #[error("target label is empty")]
    EmptyLabel,
    #[error("label needs {needed} frames, only {frames} available")]
    LabelTooLong { needed: usize, frames: usize },
    #[error("row {row} is not a log-distribution (exp-sum {sum})")]
    NotNormalized { row: usize, sum: f64 },
    #[error("logits are {frames}x{classes} but data has {len} values")]
    Shape { frames: usize, classes: usize, len: usize },
    #[error("enumeration of {0} paths exceeds the brute-force limit")]
    TooManyPaths(f64),
    #[error("constrained decoding needs a non-empty lexicon")]
    EmptyLexicon,
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Ordered alphabet; blank is not part of it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Codec {
    symbols: Vec<char>,
    #[serde(skip)]
    index: HashMap<char, usize>,
}

impl Codec {
    pub fn new(alphabet: &str) -> Result<Self, CtcError> {
        let symbols: Vec<char> = alphabet.chars().collect();
        if symbols.is_empty() {
            return Err(CtcError::EmptyAlphabet);
        }
        let mut index = HashMap::new();
        for (i, &c) in symbols.iter().enumerate() {
            if index.insert(c, i + 1).is_some() {
                return Err(CtcError::DuplicateSymbol(c));
            }
        }
        Ok(Codec { symbols, index })
    }

    /// Number of classes including the blank.
    pub fn classes(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn alphabet(&self) -> String {
        self.symbols.iter().collect()
    }

    pub fn encode(&self, text: &str) -> Result<LabelSeq, CtcError> {
        if text.is_empty() {
            return Err(CtcError::EmptyLabel);
        }
        let ids = text
            .chars()
            .map(|c| self.index.get(&c).copied().ok_or(CtcError::UnknownChar(c)))
            .collect::<Result<_, _>>()?;
        Ok(LabelSeq(ids))
    }

    /// Symbols for non-blank classes; panics on a class outside the codec.
    pub fn decode(&self, label: &[usize]) -> String {
        label.iter().filter(|&&i| i != BLANK).map(|&i| self.symbols[i - 1]).collect()
    }
}

impl TryFrom<String> for Codec {
    type Error = CtcError;

    fn try_from(s: String) -> Result<Self, CtcError> {
        Codec::new(&s)
    }
}

impl From<Codec> for String {
    fn from(c: Codec) -> String {
        c.alphabet()
    }
}

/// Target sequence of non-blank classes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelSeq(Vec<usize>);

impl LabelSeq {
    /// Rejects empty labels, blanks and classes `≥ classes`.
    pub fn new(ids: Vec<usize>, classes: usize) -> Result<Self, CtcError> {
        if ids.is_empty() {
            return Err(CtcError::EmptyLabel);
        }
        if let Some(&index) = ids.iter().find(|&&i| i == BLANK || i >= classes) {
            return Err(CtcError::InvalidIndex { index, classes });
        }
        Ok(LabelSeq(ids))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Frames needed to emit the label: one per symbol plus a blank between
    /// each pair of equal neighbours.
    pub fn min_frames(&self) -> usize {
        self.0.len() + self.0.windows(2).filter(|w| w[0] == w[1]).count()
    }
}

/// `T × K` matrix of per-frame log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitsMatrix {
    frames: usize,
    classes: usize,
    data: Vec<f64>,
}

impl LogitsMatrix {
    /// Normalizes raw scores with a row-wise log-softmax.
    pub fn from_scores(frames: usize, classes: usize, scores: &[f64]) -> Result<Self, CtcError> {
        if scores.len() != frames * classes || classes == 0 {
            return Err(CtcError::Shape {
                frames,
                classes,
                len: scores.len(),
            });
        }
        let mut data = Vec::with_capacity(scores.len());
        for row in scores.chunks(classes) {
            let lse = log_sum_exp(row);
            data.extend(row.iter().map(|v| v - lse));
        }
        Ok(LogitsMatrix { frames, classes, data })
    }

    /// Accepts rows that are already log-distributions (exp-sum 1 ± 1e-6).
    pub fn from_log_probs(frames: usize, classes: usize, data: Vec<f64>) -> Result<Self, CtcError> {
        if data.len() != frames * classes || classes == 0 {
            return Err(CtcError::Shape {
                frames,
                classes,
                len: data.len(),
            });
        }
        for (row, chunk) in data.chunks(classes).enumerate() {
            let sum: f64 = chunk.iter().map(|v| v.exp()).sum();
            if !((sum - 1.0).abs() <= 1e-6) {
                return Err(CtcError::NotNormalized { row, sum });
            }
        }
        Ok(LogitsMatrix { frames, classes, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.data[t * self.classes + k]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.classes..(t + 1) * self.classes]
    }
}

/// The collapse map: merge adjacent repeats, then drop blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != BLANK {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
