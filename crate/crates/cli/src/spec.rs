//! Experiment specification: everything a run depends on, fixed before it
//! starts and written next to its outputs.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use textcomp_core::ctc::{Codec, LexiconMode};
use textcomp_core::model::{DecodeMode, ModelConfig, TrainConfig, Variant};
use textcomp_core::seed::{derive_seed, stream_rng};
use textcomp_core::synthesis::ParamRanges;
use textcomp_core::templates::{transcribe, MAX_TRANSCRIPT_LEN};

use crate::HarnessError;

/// Independent random streams under the master seed.
pub mod streams {
    pub const LEXICON: u64 = 1;
    pub const TRAIN_DATA: u64 = 2;
    pub const TEST_DATA: u64 = 3;
    pub const MODEL_INIT: u64 = 4;
    pub const TRAINING: u64 = 5;
    pub const PERTURB: u64 = 6;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    /// Master seed; every random stream of the run derives from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub model: ModelConfig,
    /// `seed` is overwritten from the master seed when the spec is resolved.
    #[serde(default)]
    pub train: TrainConfig,
    /// Models trained by `train` and evaluated by `eval` and the sweeps.
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub decode: DecodeSpec,
    #[serde(default)]
    pub eval_split: Split,
    #[serde(default)]
    pub perturb: PerturbSpec,
    #[serde(default)]
    pub kern: KernSpec,
    #[serde(default)]
    pub ablation: AblationSpec,
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::Full]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub alphabet: String,
    /// Explicit word list; drawn at random from the alphabet when absent.
    pub lexicon: Option<Vec<String>>,
    pub lexicon_size: usize,
    /// Inclusive length range of drawn words.
    pub word_length: (usize, usize),
    pub train_size: usize,
    pub test_size: usize,
    pub ranges: ParamRanges,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            alphabet: "adehmnorst".into(),
            lexicon: None,
            lexicon_size: 50,
            word_length: (3, 8),
            train_size: 5000,
            test_size: 500,
            ranges: ParamRanges::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    #[default]
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Decoder used by every evaluation; lexicon modes use the dataset lexicon.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecodeSpec {
    #[default]
    Greedy,
    Beam {
        width: usize,
    },
    Lexicon {
        mode: LexiconMode,
        beam_width: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSpec {
    /// Values of σ_p = σ_t.
    pub sigmas: Vec<f64>,
    pub trials: usize,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec {
            sigmas: vec![0.0, 0.025, 0.05, 0.1, 0.15, 0.2],
            trials: 10,
        }
    }
}

/// Unit of `H` in the gap stretch factor `1 + 0.1·k·H`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightUnits {
    /// `H = 1`: gaps grow by 10% per level.
    #[default]
    Normalized,
    /// `H` = domain height in pixels (32).
    Pixels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernSpec {
    pub levels: Vec<u32>,
    pub units: HeightUnits,
    /// Distinct test words shown in the predicted-template grid.
    pub template_words: usize,
}

impl Default for KernSpec {
    fn default() -> Self {
        KernSpec {
            levels: vec![0, 1, 2, 3, 4],
            units: HeightUnits::Normalized,
            template_words: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSpec {
    pub variants: Vec<Variant>,
    /// σ_p = σ_t of the perturbed evaluation.
    pub sigma: f64,
    pub trials: usize,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec {
            variants: Variant::ALL.to_vec(),
            sigma: 0.1,
            trials: 10,
        }
    }
}

impl ExperimentSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Spec(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Spec(format!("{}: {e}", path.display())))
    }

    /// Applies command-line overrides, derives the training seed and checks
    /// the result.
    pub fn resolve(mut self, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self, HarnessError> {
        if let Some(out) = out {
            self.out_dir = out;
        }
        if let Some(seed) = seed {
            self.seed = seed;
        }
        self.train.seed = derive_seed(self.seed, streams::TRAINING);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Spec(msg));
        self.model.validate()?;
        self.dataset.ranges.validate()?;
        self.codec()?;
        if self.variants.is_empty() {
            return bad("no model variants listed".into());
        }
        if self.train.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        let (lo, hi) = self.dataset.word_length;
        if lo == 0 || lo > hi || hi > MAX_TRANSCRIPT_LEN {
            return bad(format!("word_length ({lo}, {hi}) must lie within 1..={MAX_TRANSCRIPT_LEN}"));
        }
        if self.perturb.trials == 0 || self.ablation.trials == 0 {
            return bad("trials must be positive".into());
        }
        let sigmas = self.perturb.sigmas.iter().chain([&self.ablation.sigma]);
        for &s in sigmas {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("perturbation level {s} must be finite and non-negative"));
            }
        }
        if let Some(words) = &self.dataset.lexicon {
            self.check_words(words)?;
        }
        Ok(())
    }

    fn check_words(&self, words: &[String]) -> Result<(), HarnessError> {
        if words.is_empty() {
            return Err(HarnessError::Spec("lexicon is empty".into()));
        }
        let alphabet: BTreeSet<char> = self.dataset.alphabet.chars().collect();
        for w in words {
            transcribe(w)?;
            if let Some(c) = w.chars().find(|c| !alphabet.contains(c)) {
                return Err(HarnessError::Spec(format!("word {w:?} uses {c:?}, which is not in the alphabet")));
            }
        }
        Ok(())
    }

    pub fn codec(&self) -> Result<Codec, HarnessError> {
        let codec = Codec::new(&self.dataset.alphabet).map_err(|e| HarnessError::Spec(format!("alphabet: {e}")))?;
        for c in self.dataset.alphabet.chars() {
            transcribe(&c.to_string())?;
        }
        Ok(codec)
    }

    /// The explicit lexicon, or `lexicon_size` distinct words drawn from the
    /// lexicon stream.
    pub fn lexicon(&self) -> Result<Vec<String>, HarnessError> {
        if let Some(words) = &self.dataset.lexicon {
            self.check_words(words)?;
            return Ok(words.clone());
        }
        let d = &self.dataset;
        let chars: Vec<char> = d.alphabet.chars().collect();
        let mut rng = stream_rng(self.seed, streams::LEXICON);
        let mut words: Vec<String> = Vec::with_capacity(d.lexicon_size);
        // Generous bound; only tiny alphabets with short words run out.
        for _ in 0..1000 * d.lexicon_size.max(1) {
            if words.len() == d.lexicon_size {
                break;
            }
            let len = rng.random_range(d.word_length.0..=d.word_length.1);
            let w: String = (0..len).map(|_| chars[rng.random_range(0..chars.len())]).collect();
            if !words.contains(&w) {
                words.push(w);
            }
        }
        if words.len() < d.lexicon_size || words.is_empty() {
            return Err(HarnessError::Spec(format!(
                "cannot draw {} distinct words of length {:?} from {:?}",
                d.lexicon_size, d.word_length, d.alphabet
            )));
        }
        Ok(words)
    }

    pub fn decode_mode(&self) -> Result<DecodeMode, HarnessError> {
        Ok(match &self.decode {
            DecodeSpec::Greedy => DecodeMode::Greedy,
            DecodeSpec::Beam { width } => DecodeMode::Beam { width: *width },
            DecodeSpec::Lexicon { mode, beam_width } => DecodeMode::Lexicon {
                words: self.lexicon()?,
                mode: *mode,
                beam_width: *beam_width,
            },
        })
    }

    pub fn model_config(&self, variant: Variant) -> ModelConfig {
        self.model.clone().variant(variant)
    }

    pub fn data_dir(&self, split: Split) -> PathBuf {
        self.out_dir.join("data").join(split.name())
    }

    pub fn model_dir(&self, variant: Variant) -> PathBuf {
        self.out_dir.join("models").join(variant.name())
    }

    pub fn checkpoint_path(&self, variant: Variant) -> PathBuf {
        self.model_dir(variant).join("checkpoint.ckpt")
    }

    /// Writes the resolved spec as `<command>.spec.json` under the output
    /// directory.
    pub fn write_resolved(&self, command: &str) -> Result<PathBuf, HarnessError> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(format!("{command}.spec.json"));
        std::fs::write(&path, self.to_json()?)?;
        Ok(path)
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}
