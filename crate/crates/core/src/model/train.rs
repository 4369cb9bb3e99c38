use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::network::{total_loss, ModelInput};
use super::{Model, ModelError};
use crate::diffcore::{AdamConfig, AdamState, DiffError, Tape, Tensor};
use crate::geometry::Quad;
use crate::imaging::{write_pgm, GrayImage};
use crate::seed::{derive_seed, stream_rng};
use crate::synthesis::{perturb_quad, PerturbationParams, WordSample};
use crate::templates::render_template;

/// Stream tags separating the uses of the training seed.
const SHUFFLE_STREAM: u64 = 0x5348_5546;
const AUGMENT_STREAM: u64 = 0x4155_474d;

/// Worker count: `TEXTCOMP_THREADS` when set, otherwise the available
/// parallelism.
pub fn worker_threads() -> usize {
    std::env::var("TEXTCOMP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// `base · factor^⌊step / every⌋`.
    Exponential { base: f64, factor: f64, every: u64 },
    /// `base · factor^(milestones passed)`, milestones in steps.
    Stagewise { base: f64, factor: f64, milestones: Vec<u64> },
}

impl LrSchedule {
    /// 1e-4 decayed by 0.9 every 5000 steps.
    pub fn exponential_default() -> Self {
        LrSchedule::Exponential {
            base: 1e-4,
            factor: 0.9,
            every: 5000,
        }
    }

    /// ×0.1 after epochs 10, 20 and 35 of a 50-epoch run.
    pub fn stagewise_default(steps_per_epoch: u64) -> Self {
        LrSchedule::Stagewise {
            base: 1e-4,
            factor: 0.1,
            milestones: [10, 20, 35].iter().map(|e| e * steps_per_epoch).collect(),
        }
    }
}

/// Learning rate used for the update that follows `step` completed updates.
pub fn learning_rate(schedule: &LrSchedule, step: u64) -> f64 {
    match schedule {
        LrSchedule::Exponential { base, factor, every } => base * factor.powi((step / (*every).max(1)) as i32),
        LrSchedule::Stagewise {
            base,
            factor,
            milestones,
        } => base * factor.powi(milestones.iter().filter(|&&m| step >= m).count() as i32),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Total optimizer updates for [`train`].
    pub steps: u64,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    /// Quad augmentation applied to every training draw.
    pub sigma_p: f64,
    pub sigma_t: f64,
    /// Rescales the summed batch gradient to at most this norm.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub log_every: u64,
    pub checkpoint_every: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            steps: 1000,
            schedule: LrSchedule::exponential_default(),
            adam: AdamConfig::default(),
            sigma_p: 0.025,
            sigma_t: 0.0,
            clip_norm: None,
            seed: 0,
            log_every: 10,
            checkpoint_every: None,
        }
    }
}

/// Training scene stored at 8 bits, as written to disk.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
    pub quad: Quad,
    pub transcript: String,
}

impl TrainExample {
    pub fn new(scene: &GrayImage, quad: Quad, transcript: impl Into<String>) -> Self {
        TrainExample {
            height: scene.height(),
            width: scene.width(),
            pixels: scene.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
            quad,
            transcript: transcript.into(),
        }
    }

    pub fn scene(&self) -> GrayImage {
        let data = self.pixels.iter().map(|&p| p as f64 / 255.0).collect();
        GrayImage::new(self.height, self.width, data).expect("stored extents")
    }
}

/// Examples plus one skeleton template per distinct transcript.
#[derive(Clone, Debug, Default)]
pub struct TrainSet {
    pub examples: Vec<TrainExample>,
    templates: HashMap<String, Tensor<f64>>,
}

impl TrainSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, example: TrainExample) -> Result<(), ModelError> {
        if !self.templates.contains_key(&example.transcript) {
            let t = render_template(&example.transcript)?;
            let tensor = Tensor::new(&[1, t.image.height(), t.image.width()], t.image.into_data())?;
            self.templates.insert(example.transcript.clone(), tensor);
        }
        self.examples.push(example);
        Ok(())
    }

    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a WordSample>) -> Result<Self, ModelError> {
        let mut set = TrainSet::new();
        for s in samples {
            set.push(TrainExample::new(&s.scene, s.quad, s.transcript.clone()))?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn template(&self, transcript: &str) -> Option<&Tensor<f64>> {
        self.templates.get(transcript)
    }
}

/// Batch-mean losses of one update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// Updates completed after this one.
    pub step: u64,
    pub loss: f64,
    pub ctc: f64,
    pub mse: f64,
    pub lr: f64,
}

/// Training-set indices visited by update `step`; each epoch is a fresh
/// permutation drawn from the shuffle stream, so the order depends only on
/// the seed and the step.
fn batch_indices(n: usize, batch: usize, seed: u64, step: u64) -> Vec<usize> {
    let mut cache: Option<(u64, Vec<usize>)> = None;
    (0..batch)
        .map(|b| {
            let g = step * batch as u64 + b as u64;
            let epoch = g / n as u64;
            if cache.as_ref().is_none_or(|(e, _)| *e != epoch) {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut stream_rng(derive_seed(seed, SHUFFLE_STREAM), epoch));
                cache = Some((epoch, perm));
            }
            cache.as_ref().expect("filled above").1[(g % n as u64) as usize]
        })
        .collect()
}

struct SampleResult {
    grads: BTreeMap<String, Tensor<f32>>,
    ctc: f64,
    mse: f64,
}

fn sample_gradient(model: &Model, input: &ModelInput, set: &TrainSet, ex: &TrainExample) -> Result<SampleResult, ModelError> {
    let label = model.codec.encode(&ex.transcript)?;
    let mut tape = Tape::<f32>::new();
    let bound = model.params.bind(&mut tape);
    let template = set.template(&ex.transcript);
    let parts = total_loss(&mut tape, &bound, &model.config, input, &label, template)?;
    let total = tape.value(parts.total).data()[0];
    if !total.is_finite() {
        return Err(DiffError::NonFinite { op: "total_loss" }.into());
    }
    let g = tape.backward(parts.total)?;
    let mut grads = BTreeMap::new();
    model.params.accumulate_grads(&bound, &g, &mut grads);
    Ok(SampleResult {
        grads,
        ctc: parts.ctc,
        mse: parts.mse,
    })
}

fn augmented_input(ex: &TrainExample, config: &TrainConfig, step: u64, slot: usize) -> Result<ModelInput, ModelError> {
    let quad = if config.sigma_p > 0.0 || config.sigma_t > 0.0 {
        let seed = derive_seed(derive_seed(derive_seed(config.seed, AUGMENT_STREAM), step), slot as u64);
        perturb_quad(&ex.quad, PerturbationParams::new(config.sigma_p, config.sigma_t), seed)?
    } else {
        ex.quad
    };
    Ok(ModelInput::new(&ex.scene(), quad))
}

/// Writes the offending scene and its metadata next to the run output.
fn dump_sample(dir: &Path, step: u64, index: usize, ex: &TrainExample, input: &ModelInput) -> PathBuf {
    let base = dir.join(format!("nonfinite_step{step}_sample{index}"));
    let _ = std::fs::create_dir_all(dir);
    let _ = write_pgm(base.with_extension("pgm"), &ex.scene());
    let meta = serde_json::json!({
        "step": step,
        "index": index,
        "transcript": ex.transcript,
        "quad": ex.quad.to_array(),
        "augmented_quad": input.quad.to_array(),
    });
    let _ = std::fs::write(base.with_extension("json"), meta.to_string());
    base
}

fn scale_grads(grads: &mut BTreeMap<String, Tensor<f32>>, factor: f64) {
    for g in grads.values_mut() {
        *g = g.map(|v| (v as f64 * factor) as f32);
    }
}

/// Runs one update on `state`. Per-sample gradients may be computed on
/// several threads but are summed in batch order, so the result does not
/// depend on the thread count.
pub fn train_step(
    state: &mut Checkpoint,
    set: &TrainSet,
    config: &TrainConfig,
    dump_dir: &Path,
) -> Result<StepStats, ModelError> {
    if set.is_empty() {
        return Err(ModelError::Config("empty training set".into()));
    }
    let step = state.optimizer.step;
    let indices = batch_indices(set.len(), config.batch_size.max(1), config.seed, step);
    let inputs: Vec<ModelInput> = indices
        .iter()
        .enumerate()
        .map(|(slot, &i)| augmented_input(&set.examples[i], config, step, slot))
        .collect::<Result<_, _>>()?;
    let model = &state.model;
    let threads = worker_threads().min(indices.len()).max(1);
    let chunk = indices.len().div_ceil(threads);
    let results: Vec<Result<SampleResult, ModelError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = indices
            .chunks(chunk)
            .zip(inputs.chunks(chunk))
            .map(|(idx, inp)| {
                scope.spawn(move || {
                    idx.iter()
                        .zip(inp)
                        .map(|(&i, input)| sample_gradient(model, input, set, &set.examples[i]))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("training worker panicked"))
            .collect()
    });

    let mut sum: BTreeMap<String, Tensor<f32>> = BTreeMap::new();
    let (mut ctc, mut mse) = (0.0, 0.0);
    for (slot, result) in results.into_iter().enumerate() {
        let r = match result {
            Ok(r) => r,
            Err(ModelError::Diff(DiffError::NonFinite { .. })) => {
                let index = indices[slot];
                let ex = &set.examples[index];
                let dump = dump_sample(dump_dir, step, index, ex, &inputs[slot]);
                return Err(ModelError::NonFinite {
                    step,
                    index,
                    transcript: ex.transcript.clone(),
                    dump: dump.display().to_string(),
                });
            }
            Err(e) => return Err(e),
        };
        ctc += r.ctc;
        mse += r.mse;
        for (name, g) in r.grads {
            match sum.get_mut(&name) {
                Some(acc) => {
                    let data = acc.data().iter().zip(g.data()).map(|(a, b)| a + b).collect();
                    *acc = Tensor::new(acc.shape(), data)?;
                }
                None => {
                    sum.insert(name, g);
                }
            }
        }
    }
    let b = indices.len() as f64;
    scale_grads(&mut sum, 1.0 / b);
    if let Some(limit) = config.clip_norm {
        let norm = sum
            .values()
            .flat_map(|g| g.data().iter().map(|&v| (v as f64).powi(2)))
            .sum::<f64>()
            .sqrt();
        if norm > limit {
            scale_grads(&mut sum, limit / norm);
        }
    }
    let lr = learning_rate(&config.schedule, step);
    state.optimizer.step(&mut state.model.params, &sum, lr);
    let (ctc, mse) = (ctc / b, mse / b);
    Ok(StepStats {
        step: state.optimizer.step,
        loss: ctc + state.model.config.lambda * mse,
        ctc,
        mse,
        lr,
    })
}

/// Runs `steps` updates on `state`, calling `on_step` after each.
pub fn train_steps(
    state: &mut Checkpoint,
    set: &TrainSet,
    config: &TrainConfig,
    steps: u64,
    dump_dir: &Path,
    mut on_step: impl FnMut(&StepStats, &Checkpoint) -> Result<(), ModelError>,
) -> Result<(), ModelError> {
    for _ in 0..steps {
        let stats = train_step(state, set, config, dump_dir)?;
        on_step(&stats, state)?;
    }
    Ok(())
}

/// Trains `model` for `config.steps` updates from scratch.
///
/// With `out_dir`, writes `train_log.csv` (step, ctc, mse, lr) every
/// `log_every` updates, `checkpoint.ckpt` every `checkpoint_every` updates
/// and at the end, and dumps any sample whose loss turns non-finite.
pub fn train(model: Model, set: &TrainSet, config: &TrainConfig, out_dir: Option<&Path>) -> Result<Checkpoint, ModelError> {
    let mut state = Checkpoint {
        optimizer: AdamState::new(config.adam),
        model,
    };
    let dump_dir = out_dir.map_or_else(std::env::temp_dir, Path::to_path_buf);
    let mut log = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("train_log.csv"))?);
            writeln!(f, "step,ctc,mse,lr")?;
            Some(f)
        }
        None => None,
    };
    train_steps(&mut state, set, config, config.steps, &dump_dir, |stats, state| {
        if let Some(f) = log.as_mut() {
            if stats.step % config.log_every.max(1) == 0 || stats.step == config.steps {
                writeln!(f, "{},{},{},{}", stats.step, stats.ctc, stats.mse, stats.lr)?;
            }
        }
        if stats.step % config.log_every.max(1) == 0 {
            log::info!(
                "step {}/{}: ctc {:.4} mse {:.4} lr {:.3e}",
                stats.step,
                config.steps,
                stats.ctc,
                stats.mse,
                stats.lr
            );
        }
        if let (Some(dir), Some(every)) = (out_dir, config.checkpoint_every) {
            if every > 0 && stats.step % every == 0 {
                state.save(dir.join("checkpoint.ckpt"))?;
            }
        }
        Ok(())
    })?;
    if let Some(mut f) = log {
        f.flush()?;
    }
    if let Some(dir) = out_dir {
        state.save(dir.join("checkpoint.ckpt"))?;
    }
    Ok(state)
}
