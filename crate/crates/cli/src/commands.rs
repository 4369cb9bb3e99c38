//! Drivers behind the `textcomp` subcommands. Every driver writes its
//! resolved spec next to its outputs before doing any work.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use textcomp_core::geometry::{warp_image, Quad, DOMAIN_HEIGHT, DOMAIN_WIDTH};
use textcomp_core::imaging::{write_pgm, GrayImage};
use textcomp_core::model::{
    evaluate, train, Checkpoint, DecodeMode, EvalExample, EvalReport, Model, ModelInput, TrainExample, TrainSet,
    Variant,
};
use textcomp_core::seed::derive_seed;
use textcomp_core::synthesis::{gen_dataset, load_entry, perturb_quad, Manifest, PerturbationParams};

use crate::kern::{stretch_factor, stretched_sample};
use crate::results::{ResultRow, ResultTable};
use crate::spec::{streams, DatasetSpec, ExperimentSpec, Split};
use crate::HarnessError;

/// Record of what a dataset directory was generated from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DatasetStamp {
    seed: u64,
    dataset: DatasetSpec,
    lexicon: Vec<String>,
    sha256: String,
}

#[derive(Clone, Debug)]
pub struct SynthSummary {
    pub train: Manifest,
    pub test: Manifest,
    /// SHA-256 over both manifests and every image they list.
    pub sha256: String,
}

/// Writes the train and test splits under `<out>/data`, replacing any
/// previous contents.
pub fn cmd_synth(spec: &ExperimentSpec) -> Result<SynthSummary, HarnessError> {
    spec.write_resolved("synth")?;
    let lexicon = spec.lexicon()?;
    let d = &spec.dataset;
    let mut manifests = Vec::new();
    for (split, n, stream) in [
        (Split::Train, d.train_size, streams::TRAIN_DATA),
        (Split::Test, d.test_size, streams::TEST_DATA),
    ] {
        let dir = spec.data_dir(split);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        log::info!("rendering {n} {} samples into {}", split.name(), dir.display());
        manifests.push(gen_dataset(&lexicon, n, &d.ranges, derive_seed(spec.seed, stream), &dir)?);
    }
    let sha256 = dataset_hash(spec)?;
    let stamp = DatasetStamp {
        seed: spec.seed,
        dataset: d.clone(),
        lexicon,
        sha256: sha256.clone(),
    };
    fs::write(stamp_path(spec), serde_json::to_string_pretty(&stamp)? + "\n")?;
    let test = manifests.pop().expect("two splits");
    let train = manifests.pop().expect("two splits");
    Ok(SynthSummary { train, test, sha256 })
}

fn stamp_path(spec: &ExperimentSpec) -> PathBuf {
    spec.out_dir.join("data").join("dataset.json")
}

/// Hex SHA-256 of both splits: manifest bytes, then each listed scene and
/// template file in manifest order.
pub fn dataset_hash(spec: &ExperimentSpec) -> Result<String, HarnessError> {
    let mut hasher = Sha256::new();
    for split in [Split::Train, Split::Test] {
        let dir = spec.data_dir(split);
        let manifest_path = dir.join("manifest.json");
        hasher.update(fs::read(&manifest_path)?);
        for e in &Manifest::read(&manifest_path)?.entries {
            hasher.update(fs::read(dir.join(&e.file))?);
            hasher.update(fs::read(dir.join(&e.template_file))?);
        }
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Reuses the on-disk dataset when it was generated from the same dataset
/// spec and seed, otherwise renders it. Returns the dataset hash.
pub fn ensure_dataset(spec: &ExperimentSpec) -> Result<String, HarnessError> {
    if let Ok(text) = fs::read_to_string(stamp_path(spec)) {
        if let Ok(stamp) = serde_json::from_str::<DatasetStamp>(&text) {
            if stamp.seed == spec.seed && stamp.dataset == spec.dataset && stamp.lexicon == spec.lexicon()? {
                let sha256 = dataset_hash(spec)?;
                if sha256 == stamp.sha256 {
                    return Ok(sha256);
                }
                log::warn!("dataset under {} was modified; rendering again", spec.out_dir.display());
            }
        }
    }
    Ok(cmd_synth(spec)?.sha256)
}

/// One stored scene with its ground truth.
#[derive(Clone, Debug)]
pub struct StoredSample {
    pub scene: GrayImage,
    pub quad: Quad,
    pub transcript: String,
    pub seed: u64,
}

pub fn load_split(spec: &ExperimentSpec, split: Split) -> Result<(Manifest, Vec<StoredSample>), HarnessError> {
    let dir = spec.data_dir(split);
    let manifest = Manifest::read(dir.join("manifest.json"))?;
    let samples = manifest
        .entries
        .iter()
        .map(|e| {
            let (scene, _, quad) = load_entry(&dir, e)?;
            Ok(StoredSample {
                scene,
                quad,
                transcript: e.transcript.clone(),
                seed: e.seed,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    Ok((manifest, samples))
}

pub fn load_train_set(spec: &ExperimentSpec) -> Result<TrainSet, HarnessError> {
    let (_, samples) = load_split(spec, Split::Train)?;
    let mut set = TrainSet::new();
    for s in samples {
        set.push(TrainExample::new(&s.scene, s.quad, s.transcript))?;
    }
    Ok(set)
}

/// Everything the trained weights depend on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TrainKey {
    dataset_sha256: String,
    variant: Variant,
    model: textcomp_core::model::ModelConfig,
    train: textcomp_core::model::TrainConfig,
    init_seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainTiming {
    pub seconds: f64,
    pub steps: u64,
    pub threads: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub variant: Variant,
    pub checkpoint: Checkpoint,
    pub timing: TrainTiming,
    /// The checkpoint was already up to date and was loaded, not trained.
    pub reused: bool,
}

/// Trains one variant into `<out>/models/<variant>`, or loads the existing
/// checkpoint when it was trained from identical inputs.
pub fn train_variant(
    spec: &ExperimentSpec,
    variant: Variant,
    set: &TrainSet,
    dataset_sha256: &str,
) -> Result<TrainOutcome, HarnessError> {
    let dir = spec.model_dir(variant);
    let key = TrainKey {
        dataset_sha256: dataset_sha256.to_string(),
        variant,
        model: spec.model_config(variant),
        train: spec.train.clone(),
        init_seed: derive_seed(spec.seed, streams::MODEL_INIT),
    };
    let key_json = serde_json::to_string_pretty(&key)? + "\n";
    let (key_path, timing_path) = (dir.join("train_key.json"), dir.join("timing.json"));
    if fs::read_to_string(&key_path).ok().as_deref() == Some(key_json.as_str()) {
        if let (Ok(checkpoint), Ok(timing)) = (
            Checkpoint::load(spec.checkpoint_path(variant)),
            fs::read_to_string(&timing_path).map(|t| serde_json::from_str::<TrainTiming>(&t)),
        ) {
            log::info!("{variant}: checkpoint is up to date, skipping training");
            return Ok(TrainOutcome {
                variant,
                checkpoint,
                timing: timing?,
                reused: true,
            });
        }
    }
    fs::create_dir_all(&dir)?;
    let _ = fs::remove_file(&key_path);
    let model = Model::new(key.model.clone(), spec.codec()?, key.init_seed)?;
    log::info!("{variant}: training {} steps on {} samples", spec.train.steps, set.len());
    let start = Instant::now();
    let checkpoint = train(model, set, &spec.train, Some(&dir))?;
    let timing = TrainTiming {
        seconds: start.elapsed().as_secs_f64(),
        steps: spec.train.steps,
        threads: textcomp_core::model::worker_threads(),
    };
    log::info!("{variant}: trained in {:.0} s", timing.seconds);
    fs::write(&timing_path, serde_json::to_string_pretty(&timing)? + "\n")?;
    fs::write(&key_path, key_json)?;
    Ok(TrainOutcome {
        variant,
        checkpoint,
        timing,
        reused: false,
    })
}

pub fn cmd_train(spec: &ExperimentSpec) -> Result<Vec<TrainOutcome>, HarnessError> {
    spec.write_resolved("train")?;
    let sha = ensure_dataset(spec)?;
    let set = load_train_set(spec)?;
    spec.variants.iter().map(|&v| train_variant(spec, v, &set, &sha)).collect()
}

/// The trained model of `variant`, checked against the spec.
pub fn load_model(spec: &ExperimentSpec, variant: Variant) -> Result<Model, HarnessError> {
    let path = spec.checkpoint_path(variant);
    if !path.exists() {
        return Err(HarnessError::MissingCheckpoint { variant, path });
    }
    let model = Checkpoint::load_for(&path, &spec.codec()?)?.model;
    if model.config != spec.model_config(variant) {
        return Err(HarnessError::Spec(format!(
            "checkpoint {} was trained with a different model config",
            path.display()
        )));
    }
    Ok(model)
}

/// Evaluation inputs with each sample's quad replaced by `quad(i, sample)`.
pub fn examples_with(
    samples: &[StoredSample],
    mut quad: impl FnMut(usize, &StoredSample) -> Result<Quad, HarnessError>,
) -> Result<Vec<EvalExample>, HarnessError> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(EvalExample {
                input: ModelInput::new(&s.scene, quad(i, s)?),
                transcript: s.transcript.clone(),
            })
        })
        .collect()
}

/// Detector-noise trial `trial` at σ_p = σ_t = `sigma`. Trials share their
/// noise draws across σ values and model variants.
pub fn perturbed_examples(
    spec: &ExperimentSpec,
    samples: &[StoredSample],
    sigma: f64,
    trial: usize,
) -> Result<Vec<EvalExample>, HarnessError> {
    let base = derive_seed(derive_seed(spec.seed, streams::PERTURB), trial as u64);
    let pp = PerturbationParams::new(sigma, sigma);
    examples_with(samples, |i, s| Ok(perturb_quad(&s.quad, pp, derive_seed(base, i as u64))?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub variant: Variant,
    pub split: Split,
    pub decode: DecodeMode,
    #[serde(flatten)]
    pub report: EvalReport,
}

/// Clean evaluation of every listed variant; writes
/// `<out>/eval/<variant>.json`.
pub fn cmd_eval(spec: &ExperimentSpec) -> Result<Vec<Metrics>, HarnessError> {
    spec.write_resolved("eval")?;
    ensure_dataset(spec)?;
    let (_, samples) = load_split(spec, spec.eval_split)?;
    let examples = examples_with(&samples, |_, s| Ok(s.quad))?;
    let decode = spec.decode_mode()?;
    let dir = spec.out_dir.join("eval");
    fs::create_dir_all(&dir)?;
    let mut all = Vec::new();
    for &variant in &spec.variants {
        let model = load_model(spec, variant)?;
        let report = evaluate(&model, &examples, &decode)?;
        log::info!("{variant}: word accuracy {:.4}, CER {:.4}", report.word_accuracy, report.cer);
        let metrics = Metrics {
            variant,
            split: spec.eval_split,
            decode: decode.clone(),
            report,
        };
        fs::write(
            dir.join(format!("{variant}.json")),
            serde_json::to_string_pretty(&metrics)? + "\n",
        )?;
        all.push(metrics);
    }
    Ok(all)
}

fn push_report(table: &mut ResultTable, variant: Variant, x: f64, trial: usize, r: &EvalReport) -> Result<(), HarnessError> {
    table.push(ResultRow {
        variant: variant.name().to_string(),
        sweep_value: x,
        trial,
        word_acc: r.word_accuracy,
        cer: r.cer,
    })
}

/// Rows grouped by variant in `order`, keeping their measurement order
/// within a variant.
fn grouped(table: ResultTable, order: &[Variant]) -> ResultTable {
    let mut out = ResultTable::new(table.sweep.clone());
    for v in order {
        out.rows.extend(table.rows.iter().filter(|r| r.variant == v.name()).cloned());
    }
    out
}

/// Accuracy of `variants` over `trials` perturbation draws at each σ. At
/// σ = 0 every trial is the clean evaluation, so it is computed once.
pub fn perturb_table(
    spec: &ExperimentSpec,
    models: &[(Variant, Model)],
    samples: &[StoredSample],
    sigmas: &[f64],
    trials: usize,
) -> Result<ResultTable, HarnessError> {
    let decode = spec.decode_mode()?;
    let mut table = ResultTable::new("perturbation sigma (sigma_p = sigma_t)");
    for &sigma in sigmas {
        let mut clean: Vec<Option<EvalReport>> = vec![None; models.len()];
        for trial in 0..trials {
            let examples = if sigma == 0.0 && trial > 0 {
                None
            } else {
                Some(perturbed_examples(spec, samples, sigma, trial)?)
            };
            for (m, (variant, model)) in models.iter().enumerate() {
                let report = match &examples {
                    Some(ex) => evaluate(model, ex, &decode)?,
                    None => clean[m].clone().expect("first trial ran"),
                };
                log::info!("{variant} sigma {sigma} trial {trial}: accuracy {:.4}", report.word_accuracy);
                push_report(&mut table, *variant, sigma, trial, &report)?;
                if sigma == 0.0 {
                    clean[m] = Some(report);
                }
            }
        }
    }
    let order: Vec<Variant> = models.iter().map(|(v, _)| *v).collect();
    Ok(grouped(table, &order))
}

/// Perturbation sweep over the spec grid; writes `<out>/perturb`.
pub fn cmd_perturb_sweep(spec: &ExperimentSpec) -> Result<ResultTable, HarnessError> {
    spec.write_resolved("sweep-perturb")?;
    ensure_dataset(spec)?;
    let models = spec
        .variants
        .iter()
        .map(|&v| Ok((v, load_model(spec, v)?)))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let (_, samples) = load_split(spec, spec.eval_split)?;
    let table = perturb_table(spec, &models, &samples, &spec.perturb.sigmas, spec.perturb.trials)?;
    table.check_trials(spec.perturb.trials)?;
    table.write_all(&spec.out_dir.join("perturb"))?;
    Ok(table)
}

/// Stored samples re-rendered with gaps widened by `factor`, quantized to
/// the on-disk 8-bit grid.
pub fn stretched_split(manifest: &Manifest, samples: &[StoredSample], factor: f64) -> Result<Vec<StoredSample>, HarnessError> {
    samples
        .iter()
        .map(|s| {
            let w = stretched_sample(&s.transcript, &manifest.ranges, s.seed, factor)?;
            Ok(StoredSample {
                scene: w.scene.quantized(),
                quad: w.quad,
                transcript: s.transcript.clone(),
                seed: s.seed,
            })
        })
        .collect()
}

/// Kerning sweep: one deterministic trial per stretch level. Writes
/// `<out>/kern`, including `templates.pgm`, a grid with one row pair per
/// sample word (rectified input above predicted template) and one column
/// per level, when some listed variant has a decoder.
pub fn cmd_kern_sweep(spec: &ExperimentSpec) -> Result<ResultTable, HarnessError> {
    spec.write_resolved("sweep-kern")?;
    ensure_dataset(spec)?;
    let models = spec
        .variants
        .iter()
        .map(|&v| Ok((v, load_model(spec, v)?)))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let (manifest, samples) = load_split(spec, spec.eval_split)?;
    let decode = spec.decode_mode()?;
    let mut table = ResultTable::new(match spec.kern.units {
        crate::spec::HeightUnits::Normalized => "stretch level k (H = 1)",
        crate::spec::HeightUnits::Pixels => "stretch level k (H in pixels)",
    });
    let picks = template_picks(&samples, spec.kern.template_words);
    let decoder = models.iter().find(|(_, m)| m.config.recon_active()).map(|(_, m)| m);
    let mut cells: Vec<Vec<GrayImage>> = vec![Vec::new(); 2 * picks.len()];
    for &level in &spec.kern.levels {
        let factor = stretch_factor(level, spec.kern.units);
        let stretched = stretched_split(&manifest, &samples, factor)?;
        let examples = examples_with(&stretched, |_, s| Ok(s.quad))?;
        for (variant, model) in &models {
            let report = evaluate(model, &examples, &decode)?;
            log::info!("{variant} k {level} (factor {factor}): accuracy {:.4}", report.word_accuracy);
            push_report(&mut table, *variant, level as f64, 0, &report)?;
        }
        if let Some(model) = decoder {
            for (row, &i) in picks.iter().enumerate() {
                let s = &stretched[i];
                let crop = warp_image(&s.scene, &s.quad.to_domain()?, DOMAIN_HEIGHT, DOMAIN_WIDTH, 0.5);
                let template = model
                    .predict_template(&examples[i].input)?
                    .expect("decoder models predict templates");
                cells[2 * row].push(crop);
                cells[2 * row + 1].push(template);
            }
        }
    }
    let order: Vec<Variant> = models.iter().map(|(v, _)| *v).collect();
    let table = grouped(table, &order);
    table.check_trials(1)?;
    let dir = spec.out_dir.join("kern");
    table.write_all(&dir)?;
    if decoder.is_some() && !picks.is_empty() {
        write_pgm(dir.join("templates.pgm"), &image_grid(&cells)?)?;
    }
    Ok(table)
}

/// Index of the first sample of each of the first `n` distinct words.
fn template_picks(samples: &[StoredSample], n: usize) -> Vec<usize> {
    let mut picks: Vec<usize> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        if picks.len() == n {
            break;
        }
        if !picks.iter().any(|&p| samples[p].transcript == s.transcript) {
            picks.push(i);
        }
    }
    picks
}

/// Equal-sized cells tiled row by row with a 2-px mid-gray border.
pub fn image_grid(cells: &[Vec<GrayImage>]) -> Result<GrayImage, HarnessError> {
    const BORDER: usize = 2;
    let (rows, cols) = (cells.len(), cells.iter().map(Vec::len).max().unwrap_or(0));
    let (ch, cw) = cells
        .iter()
        .flatten()
        .next()
        .map_or((0, 0), |c| (c.height(), c.width()));
    let (h, w) = (rows * (ch + BORDER) + BORDER, cols * (cw + BORDER) + BORDER);
    let mut grid = GrayImage::filled(h, w, 0.5);
    for (r, row) in cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            if (cell.height(), cell.width()) != (ch, cw) {
                return Err(HarnessError::Results("grid cells differ in size".into()));
            }
            let (y0, x0) = (BORDER + r * (ch + BORDER), BORDER + c * (cw + BORDER));
            for y in 0..ch {
                for x in 0..cw {
                    grid.set(y0 + y, x0 + x, cell.get(y, x));
                }
            }
        }
    }
    Ok(grid)
}

pub const ABLATION_HEADER: &str = "variant,use_stn,use_klstm,use_recon,lambda,dataset_sha256,clean_acc,clean_cer,perturbed_sigma,perturbed_acc_mean,perturbed_acc_std,perturbed_cer_mean";

/// One line of the ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub use_stn: bool,
    pub use_klstm: bool,
    pub use_recon: bool,
    pub lambda: f64,
    pub dataset_sha256: String,
    pub clean_acc: f64,
    pub clean_cer: f64,
    pub perturbed_sigma: f64,
    pub perturbed_acc_mean: f64,
    pub perturbed_acc_std: f64,
    pub perturbed_cer_mean: f64,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.variant,
            r.use_stn,
            r.use_klstm,
            r.use_recon,
            r.lambda,
            r.dataset_sha256,
            r.clean_acc,
            r.clean_cer,
            r.perturbed_sigma,
            r.perturbed_acc_mean,
            r.perturbed_acc_std,
            r.perturbed_cer_mean
        ));
    }
    out
}

pub fn parse_ablation_csv(text: &str) -> Result<Vec<AblationRow>, HarnessError> {
    let mut lines = text.lines();
    if lines.next() != Some(ABLATION_HEADER) {
        return Err(HarnessError::Results(format!("ablation CSV header must be {ABLATION_HEADER:?}")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || HarnessError::Results(format!("ablation CSV line {}: {line:?}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 12 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            let flag = |s: &str| s.parse::<bool>().map_err(|_| bad());
            Ok(AblationRow {
                variant: Variant::from_name(f[0]).ok_or_else(bad)?,
                use_stn: flag(f[1])?,
                use_klstm: flag(f[2])?,
                use_recon: flag(f[3])?,
                lambda: num(f[4])?,
                dataset_sha256: f[5].to_string(),
                clean_acc: num(f[6])?,
                clean_cer: num(f[7])?,
                perturbed_sigma: num(f[8])?,
                perturbed_acc_mean: num(f[9])?,
                perturbed_acc_std: num(f[10])?,
                perturbed_cer_mean: num(f[11])?,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// Clean rows at σ = 0 plus the perturbed trials.
    pub table: ResultTable,
    pub training: Vec<(Variant, TrainTiming, bool)>,
}

/// Trains every ablation variant from the same seed and data order, then
/// evaluates each clean and under perturbation. Writes `<out>/ablation`.
pub fn cmd_ablate(spec: &ExperimentSpec) -> Result<AblationReport, HarnessError> {
    spec.write_resolved("ablate")?;
    let sha = ensure_dataset(spec)?;
    let variants = &spec.ablation.variants;
    let mut models = Vec::new();
    let mut training = Vec::new();
    {
        let set = load_train_set(spec)?;
        for &v in variants {
            let outcome = train_variant(spec, v, &set, &sha)?;
            training.push((v, outcome.timing, outcome.reused));
            models.push((v, outcome.checkpoint.model));
        }
    }
    let (_, samples) = load_split(spec, spec.eval_split)?;
    let sigma = spec.ablation.sigma;
    let table = perturb_table(spec, &models, &samples, &[0.0, sigma], spec.ablation.trials)?;
    let agg = table.aggregate();
    let rows = models
        .iter()
        .map(|(v, model)| {
            let point = |x: f64| {
                agg.iter()
                    .find(|a| a.variant == v.name() && a.sweep_value == x)
                    .expect("every variant is evaluated at both levels")
            };
            let (clean, noisy) = (point(0.0), point(sigma));
            AblationRow {
                variant: *v,
                use_stn: model.config.use_stn,
                use_klstm: model.config.use_klstm,
                use_recon: model.config.use_recon,
                lambda: model.config.lambda,
                dataset_sha256: sha.clone(),
                clean_acc: clean.acc_mean,
                clean_cer: clean.cer_mean,
                perturbed_sigma: sigma,
                perturbed_acc_mean: noisy.acc_mean,
                perturbed_acc_std: noisy.acc_std,
                perturbed_cer_mean: noisy.cer_mean,
            }
        })
        .collect::<Vec<_>>();
    let dir = spec.out_dir.join("ablation");
    table.write_all(&dir)?;
    fs::write(dir.join("ablation.csv"), ablation_csv(&rows))?;
    Ok(AblationReport { rows, table, training })
}
