use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ctc::{ctc_loss, LabelSeq};
use crate::diffcore::check::{gradient_check, GradReport};
use crate::diffcore::{Bound, DiffError, Params, Tensor, Var};
use crate::geometry::{warp_image, Quad};
use crate::synthesis::{generate, perturb_quad, ParamRanges, PerturbationParams, WordSample};
use crate::templates::render_template;

fn codec() -> Codec {
    Codec::new("abcdefghij").unwrap()
}

fn sample(word: &str, seed: u64) -> WordSample {
    generate(word, &ParamRanges::default(), seed).unwrap()
}

fn template_tensor(word: &str) -> Tensor<f64> {
    let t = render_template(word).unwrap();
    Tensor::new(&[1, 32, 256], t.image.into_data()).unwrap()
}

fn random_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Corner offsets move every sampling point by tens of pixels per unit, so
/// larger steps straddle ReLU and bilinear-cell kinks downstream.
const FD_STEP: f64 = 1e-8;

fn to_diff(e: ModelError) -> DiffError {
    match e {
        ModelError::Diff(d) => d,
        other => DiffError::Custom {
            op: "model",
            reason: other.to_string(),
        },
    }
}

/// Finite-difference check of `loss` with respect to the parameters whose
/// names start with `prefix`; the rest enter the tape as constants.
fn check_group<F>(params: &Params<f64>, prefix: &str, max_probes: usize, loss: F) -> GradReport
where
    F: Fn(&mut Tape<f64>, &Bound) -> Result<Var, ModelError>,
{
    let names: Vec<String> = params.names().filter(|n| n.starts_with(prefix)).cloned().collect();
    assert!(!names.is_empty(), "no parameters under {prefix}");
    let probed: Vec<Tensor<f64>> = names.iter().map(|n| params.get(n).unwrap().clone()).collect();
    gradient_check(&probed, FD_STEP, Some(max_probes), |tape, vars| {
        let mut all: Vec<(String, Var)> = names.iter().cloned().zip(vars.iter().copied()).collect();
        for (name, t) in params.iter() {
            if !name.starts_with(prefix) {
                all.push((name.clone(), tape.constant(t.clone())));
            }
        }
        let bound: Bound = all.into_iter().collect();
        loss(tape, &bound).map_err(to_diff)
    })
    .unwrap()
}

/// Fresh weights in 64-bit with every bias moved off zero. Zero biases put
/// pre-activations exactly on the ReLU kink wherever the input patch is all
/// zero (dead units, out-of-scene context), where one-sided slopes differ.
fn generic_params(config: &ModelConfig, seed: u64) -> Params<f64> {
    let mut params = init_params(config, 11, seed).cast::<f64>();
    for (i, (name, t)) in params.iter_mut().enumerate() {
        if name.ends_with(".b") {
            *t = random_tensor(t.shape(), seed ^ (i as u64 + 1000), 0.1);
        }
    }
    params
}

fn misaligned_input(s: &WordSample, seed: u64) -> ModelInput {
    let quad = perturb_quad(&s.quad, PerturbationParams::new(0.05, 0.02), seed).unwrap();
    ModelInput::new(&s.scene, quad)
}

#[test]
fn encoder_output_shape_and_zero_input() {
    let config = ModelConfig::default();
    let params = init_params(&config, 11, 1);
    let mut tape = Tape::<f32>::new();
    let p = params.bind(&mut tape);
    let zero = tape.constant(Tensor::zeros(&[1, 32, 256]));
    let f = encoder_forward(&mut tape, &p, zero).unwrap();
    assert_eq!(tape.shape(f), [64, 4, 32]);
    assert!(tape.value(f).data().iter().all(|&v| v == 0.0));

    let wrong = tape.constant(Tensor::zeros(&[1, 32, 128]));
    assert!(matches!(
        encoder_forward(&mut tape, &p, wrong),
        Err(ModelError::InputExtents { width: 128, .. })
    ));
}

#[test]
fn encoder_gradient_tiny() {
    let config = ModelConfig {
        encoder_channels: [2, 2, 2],
        ..ModelConfig::tiny()
    };
    let params = generic_params(&config, 2);
    let image = random_tensor(&[1, 32, 256], 3, 1.0);
    let weights = random_tensor(&[2, 4, 32], 4, 1.0);
    let report = check_group(&params, "enc.", 6, |tape, p| {
        let x = tape.constant(image.clone());
        let f = encoder_forward(tape, p, x)?;
        let w = tape.constant(weights.clone());
        let prod = tape.mul(f, w)?;
        Ok(tape.sum(prod)?)
    });
    assert!(report.analytic_norm > 0.0);
    assert!(report.rel_error <= 1e-5, "{report:?}");
}

#[test]
fn klstm_windows_zero_weights_and_shape() {
    let config = ModelConfig::tiny();
    let mut params = init_params(&config, 11, 5);
    let mut tape = Tape::<f32>::new();
    let p = params.bind(&mut tape);
    let x = tape.constant(random_tensor(&[4, 4, 32], 6, 1.0).cast());
    let seq = klstm_sequence(&mut tape, &p, x).unwrap();
    assert_eq!(tape.shape(seq), [31, 16]);
    let out = klstm_forward(&mut tape, &p, x).unwrap();
    assert_eq!(tape.shape(out), [4, 4, 32]);

    for (name, t) in params.iter_mut() {
        if name.starts_with("klstm.") {
            *t = Tensor::zeros(t.shape());
        }
    }
    let mut tape = Tape::<f32>::new();
    let p = params.bind(&mut tape);
    let x = tape.constant(random_tensor(&[4, 4, 32], 6, 1.0).cast());
    let out = klstm_forward(&mut tape, &p, x).unwrap();
    assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
}

/// Reverses the column axis of a `C×H×W` tensor.
fn reverse_columns(t: &Tensor<f64>) -> Tensor<f64> {
    let [c, h, w] = [t.shape()[0], t.shape()[1], t.shape()[2]];
    Tensor::from_fn(&[c, h, w], |i| {
        let (ch, y, x) = (i / (h * w), (i / w) % h, i % w);
        t.data()[(ch * h + y) * w + (w - 1 - x)]
    })
}

/// Swaps the row blocks `[0, n/2)` and `[n/2, n)` of an `n×m` matrix.
fn swap_row_halves(t: &Tensor<f64>) -> Tensor<f64> {
    let (n, m) = (t.shape()[0], t.shape()[1]);
    Tensor::from_fn(&[n, m], |i| {
        let (r, c) = (i / m, i % m);
        t.data()[((r + n / 2) % n) * m + c]
    })
}

#[test]
fn klstm_reversal_symmetry() {
    let config = ModelConfig::tiny();
    let params = init_params(&config, 11, 7).cast::<f64>();
    let features = random_tensor(&[4, 4, 32], 8, 1.0);

    let mut mirrored = params.clone();
    for part in ["wx", "wh", "b"] {
        let fwd = params.get(&format!("klstm.fwd.{part}")).unwrap();
        let bwd = params.get(&format!("klstm.bwd.{part}")).unwrap();
        let (f, b) = if part == "wx" {
            (swap_row_halves(bwd), swap_row_halves(fwd))
        } else {
            (bwd.clone(), fwd.clone())
        };
        mirrored.insert(format!("klstm.fwd.{part}"), f);
        mirrored.insert(format!("klstm.bwd.{part}"), b);
    }

    let run = |params: &Params<f64>, x: Tensor<f64>| {
        let mut tape = Tape::new();
        let p = params.bind(&mut tape);
        let x = tape.constant(x);
        let s = klstm_sequence(&mut tape, &p, x).unwrap();
        tape.value(s).clone()
    };
    let a = run(&params, features.clone());
    let b = run(&mirrored, reverse_columns(&features));
    let hidden = config.klstm_hidden;
    for i in 0..31 {
        for k in 0..hidden {
            let (af, ab) = (a.data()[(30 - i) * 2 * hidden + k], a.data()[(30 - i) * 2 * hidden + hidden + k]);
            let (bf, bb) = (b.data()[i * 2 * hidden + k], b.data()[i * 2 * hidden + hidden + k]);
            assert!((bf - ab).abs() <= 1e-12 && (bb - af).abs() <= 1e-12, "window {i} unit {k}");
        }
    }
}

#[test]
fn decoder_extents_range_and_gradient() {
    let config = ModelConfig::tiny();
    let params = generic_params(&config, 9);
    let features = random_tensor(&[4, 4, 32], 10, 1.0);
    let target = template_tensor("fig");
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let x = tape.constant(features.clone());
    let s = decoder_forward(&mut tape, &p, x).unwrap();
    assert_eq!(tape.shape(s), [1, 32, 256]);
    assert!(tape.value(s).data().iter().all(|&v| v > 0.0 && v < 1.0));

    let report = check_group(&params, "dec.", 4, |tape, p| {
        let x = tape.constant(features.clone());
        let s = decoder_forward(tape, p, x)?;
        let t = tape.constant(target.clone());
        mse_loss(tape, s, t)
    });
    assert!(report.analytic_norm > 0.0);
    assert!(report.rel_error <= 1e-5, "{report:?}");
}

#[test]
fn recognition_frames_normalize_and_repeat() {
    let model = Model::new(ModelConfig::default(), codec(), 12).unwrap();
    let s = sample("jab", 13);
    let input = ModelInput::new(&s.scene, s.quad);
    let logp = model.logits(&input).unwrap();
    assert_eq!((logp.frames(), logp.classes()), (32, 11));
    for t in 0..32 {
        let total: f64 = logp.row(t).iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() <= 1e-6);
    }
    assert_eq!(logp, model.logits(&input).unwrap());
}

#[test]
fn loss_terms() {
    let codec = codec();
    let s = sample("bead", 14);
    let input = ModelInput::new(&s.scene, s.quad);
    let label = codec.encode("bead").unwrap();
    let template = template_tensor("bead");

    // λ = 0: the loss is the CTC value of the scores.
    let config = ModelConfig::default().variant(Variant::NoRecon);
    let params = init_params(&config, codec.classes(), 15).cast::<f64>();
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let parts = total_loss(&mut tape, &p, &config, &input, &label, None).unwrap();
    let out = forward(&mut tape, &p, &config, &input).unwrap();
    let scores = tape.value(out.scores);
    let logp = crate::ctc::LogitsMatrix::from_scores(32, codec.classes(), scores.data()).unwrap();
    let direct = ctc_loss(&logp, &label).unwrap().loss;
    assert_eq!(tape.value(parts.total).data()[0], direct);
    assert_eq!(parts.mse, 0.0);

    // S == T gives zero; all-zero S gives the template's mean square.
    let mut tape = Tape::<f64>::new();
    let t = tape.constant(template.clone());
    let same = tape.constant(template.clone());
    let zero = tape.constant(Tensor::zeros(&[1, 32, 256]));
    let m0 = mse_loss(&mut tape, same, t).unwrap();
    let m1 = mse_loss(&mut tape, zero, t).unwrap();
    assert_eq!(tape.value(m0).data()[0], 0.0);
    let mut direct = 0.0;
    for v in template.data() {
        direct += v * v;
    }
    direct /= template.len() as f64;
    assert!((tape.value(m1).data()[0] - direct).abs() <= 1e-15 * direct);

    // Full model: total = ctc + λ·mse.
    let config = ModelConfig {
        lambda: 0.5,
        ..ModelConfig::default()
    };
    let params = init_params(&config, codec.classes(), 16).cast::<f64>();
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let parts = total_loss(&mut tape, &p, &config, &input, &label, Some(&template)).unwrap();
    let total = tape.value(parts.total).data()[0];
    assert!((total - (parts.ctc + 0.5 * parts.mse)).abs() <= 1e-12 * total);
    assert!(parts.mse > 0.0);
    assert!(total_loss(&mut tape, &p, &config, &input, &label, None).is_err());
}

#[test]
fn zero_regressor_is_the_plain_crop_for_any_iteration_count() {
    let codec = codec();
    let s = sample("chief", 17);
    let input = misaligned_input(&s, 18);
    let crop = |config: &ModelConfig| {
        let params = init_params(config, codec.classes(), 19).cast::<f64>();
        let mut tape = Tape::new();
        let p = params.bind(&mut tape);
        let out = forward(&mut tape, &p, config, &input).unwrap();
        (tape.value(out.rectified).clone(), tape.value(out.homography).clone())
    };
    let plain = crop(&ModelConfig::default().variant(Variant::NoStn));
    let k1 = crop(&ModelConfig {
        stn_iters: 1,
        ..ModelConfig::default()
    });
    let k2 = crop(&ModelConfig::default());
    assert_eq!(plain, k1);
    assert_eq!(k1, k2);
}

#[test]
fn rectifier_gradient_reaches_the_regressor() {
    let codec = codec();
    let config = ModelConfig::tiny();
    let mut params = generic_params(&config, 20);
    params.insert("stn.fc2.w", random_tensor(&[config.stn_hidden, 8], 21, 0.1));
    let s = sample("dice", 22);
    let input = misaligned_input(&s, 23);
    let label = codec.encode("dice").unwrap();
    let template = template_tensor("dice");
    let report = check_group(&params, "stn.", 4, |tape, p| {
        Ok(total_loss(tape, p, &config, &input, &label, Some(&template))?.total)
    });
    assert!(report.analytic_norm > 0.0, "{report:?}");
    assert!(report.rel_error <= 1e-4, "{report:?}");
}

#[test]
fn end_to_end_gradient_every_group() {
    let codec = codec();
    let config = ModelConfig::tiny();
    let mut params = generic_params(&config, 24);
    params.insert("stn.fc2.w", random_tensor(&[config.stn_hidden, 8], 25, 0.1));
    let s = sample("ace", 26);
    let input = misaligned_input(&s, 27);
    let label = codec.encode("ace").unwrap();
    let template = template_tensor("ace");
    for group in ["stn.", "enc.", "klstm.", "head.", "dec."] {
        let report = check_group(&params, group, 3, |tape, p| {
            Ok(total_loss(tape, p, &config, &input, &label, Some(&template))?.total)
        });
        assert!(report.analytic_norm > 0.0, "{group}: {report:?}");
        assert!(report.rel_error <= 1e-4, "{group}: {report:?}");
    }
}

#[test]
fn baseline_equals_plain_pipeline() {
    let codec = codec();
    let config = ModelConfig::default().variant(Variant::Baseline);
    let params = init_params(&config, codec.classes(), 28).cast::<f64>();
    let s = sample("badge", 29);
    let input = ModelInput::new(&s.scene, s.quad);

    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let out = forward(&mut tape, &p, &config, &input).unwrap();
    assert!(out.template.is_none());
    let model_scores = tape.value(out.scores).clone();

    // Crop with the reference warp, then encoder and head only.
    let normalized = crate::imaging::GrayImage::new(64, 512, input.scene.data().to_vec()).unwrap();
    let crop = warp_image(&normalized, &s.quad.to_domain().unwrap(), 32, 256, 0.0);
    let mut tape = Tape::new();
    let p = params.bind(&mut tape);
    let x = tape.constant(Tensor::new(&[1, 32, 256], crop.into_data()).unwrap());
    let f = encoder_forward(&mut tape, &p, x).unwrap();
    let scores = recognition_forward(&mut tape, &p, f).unwrap();
    let plain = tape.value(scores);
    let err = model_scores
        .data()
        .iter()
        .zip(plain.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-9, "max score difference {err}");
}

#[test]
fn learning_rate_schedules() {
    let s = LrSchedule::exponential_default();
    assert_eq!(learning_rate(&s, 0), 1e-4);
    assert_eq!(learning_rate(&s, 4999), 1e-4);
    assert!((learning_rate(&s, 5000) - 0.9e-4).abs() <= 1e-18);
    assert!((learning_rate(&s, 12_000) - 0.81e-4).abs() <= 1e-18);
    let s = LrSchedule::stagewise_default(100);
    let lrs: Vec<f64> = [0, 999, 1000, 2000, 3500, 4999].iter().map(|&k| learning_rate(&s, k)).collect();
    let expected = [1e-4, 1e-4, 1e-5, 1e-6, 1e-7, 1e-7];
    for (a, b) in lrs.iter().zip(expected) {
        assert!((a - b).abs() <= 1e-12 * b);
    }
}

fn train_set(words: &[&str], seed: u64) -> TrainSet {
    let samples: Vec<WordSample> = words.iter().enumerate().map(|(i, w)| sample(w, seed + i as u64)).collect();
    TrainSet::from_samples(&samples).unwrap()
}

#[test]
fn checkpoint_round_trip_and_codec_check() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::new(ModelConfig::tiny(), codec(), 30).unwrap();
    let set = train_set(&["bed", "ice"], 31);
    let config = TrainConfig {
        batch_size: 2,
        steps: 2,
        ..TrainConfig::default()
    };
    let ckpt = train(model, &set, &config, Some(dir.path())).unwrap();
    assert_eq!(ckpt.step(), 2);
    let path = dir.path().join("checkpoint.ckpt");
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ckpt);
    assert!(loaded.optimizer.first.len() == loaded.model.params.len());

    let log = std::fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    assert!(log.starts_with("step,ctc,mse,lr\n"));

    let other = Codec::new("abcdefghijk").unwrap();
    assert!(matches!(Checkpoint::load_for(&path, &other), Err(ModelError::CodecMismatch { .. })));
    assert!(Checkpoint::load_for(&path, &codec()).is_ok());

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 4);
    assert!(Checkpoint::read_from(&bytes[..]).is_err());
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let set = train_set(&["bad", "cab", "jig"], 32);
    let config = TrainConfig {
        batch_size: 2,
        steps: 10,
        seed: 33,
        ..TrainConfig::default()
    };
    let model = Model::new(ModelConfig::tiny(), codec(), 34).unwrap();
    let straight = train(model.clone(), &set, &config, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let first = train(
        model,
        &set,
        &TrainConfig {
            steps: 4,
            ..config.clone()
        },
        Some(dir.path()),
    )
    .unwrap();
    let mut resumed = Checkpoint::load(dir.path().join("checkpoint.ckpt")).unwrap();
    assert_eq!(resumed, first);
    train_steps(&mut resumed, &set, &config, 6, dir.path(), |_, _| Ok(())).unwrap();
    assert_eq!(resumed, straight);
}

#[test]
fn training_is_independent_of_thread_count() {
    let set = train_set(&["bad", "cab", "jig", "hide"], 35);
    let config = TrainConfig {
        batch_size: 4,
        steps: 3,
        seed: 36,
        ..TrainConfig::default()
    };
    let model = Model::new(ModelConfig::tiny(), codec(), 37).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut a = Checkpoint::new(model.clone(), config.adam);
    let mut b = a.clone();
    // Chunks of one and of four samples per worker.
    std::env::set_var("TEXTCOMP_THREADS", "4");
    train_steps(&mut a, &set, &config, 3, dir.path(), |_, _| Ok(())).unwrap();
    std::env::set_var("TEXTCOMP_THREADS", "1");
    train_steps(&mut b, &set, &config, 3, dir.path(), |_, _| Ok(())).unwrap();
    std::env::remove_var("TEXTCOMP_THREADS");
    assert_eq!(a, b);
}

#[test]
fn one_sample_overfits() {
    let set = train_set(&["fade"], 38);
    let config = TrainConfig {
        batch_size: 1,
        sigma_p: 0.0,
        schedule: LrSchedule::Exponential {
            base: 1e-3,
            factor: 0.9,
            every: 5000,
        },
        seed: 39,
        ..TrainConfig::default()
    };
    let mut state = Checkpoint::new(Model::new(ModelConfig::default(), codec(), 40).unwrap(), config.adam);
    let dir = tempfile::tempdir().unwrap();
    let mut last = f64::INFINITY;
    let mut reached = None;
    for step in 0..500 {
        let stats = train_step(&mut state, &set, &config, dir.path()).unwrap();
        last = stats.loss;
        if last < 0.01 {
            reached = Some(step + 1);
            break;
        }
    }
    assert!(reached.is_some(), "loss {last} after 500 steps");
    let ex = &set.examples[0];
    let input = ModelInput::new(&ex.scene(), ex.quad);
    assert_eq!(state.model.recognize(&input, &DecodeMode::Greedy).unwrap(), "fade");
}

#[test]
fn evaluation_metrics() {
    let refs = ["abcde", "fig", "hi"];
    let perfect = eval::score(refs.iter().copied(), refs.iter().map(|s| s.to_string()).collect());
    assert_eq!((perfect.word_accuracy, perfect.cer), (1.0, 0.0));
    let one = eval::score(["abcde"].into_iter(), vec!["abxde".to_string()]);
    assert!((one.cer - 0.2).abs() <= 1e-15);
    assert_eq!(one.word_accuracy, 0.0);
}

#[test]
fn evaluation_is_order_invariant_and_checks_the_alphabet() {
    let model = Model::new(ModelConfig::tiny(), codec(), 41).unwrap();
    let words = ["bad", "cage", "fig", "jib", "head"];
    let mut examples: Vec<EvalExample> = words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let s = sample(w, 42 + i as u64);
            EvalExample {
                input: ModelInput::new(&s.scene, s.quad),
                transcript: w.to_string(),
            }
        })
        .collect();
    let a = evaluate(&model, &examples, &DecodeMode::Greedy).unwrap();
    examples.reverse();
    let b = evaluate(&model, &examples, &DecodeMode::Greedy).unwrap();
    assert_eq!((a.word_accuracy, a.cer), (b.word_accuracy, b.cer));

    examples[0].transcript = "xyz".into();
    assert!(matches!(
        evaluate(&model, &examples, &DecodeMode::Greedy),
        Err(ModelError::CodecMismatch { .. })
    ));
}

#[test]
fn label_lengths_fit_the_frame_count() {
    let codec = codec();
    let label: LabelSeq = codec.encode("abbcddeeffgghhii").unwrap();
    assert!(label.min_frames() <= 32);
}

#[test]
fn config_validation() {
    assert!(ModelConfig::default().validate().is_ok());
    let bad = ModelConfig {
        lambda: -1.0,
        ..ModelConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = ModelConfig {
        stn_iters: 0,
        ..ModelConfig::default()
    };
    assert!(bad.validate().is_err());
    for v in Variant::ALL {
        assert_eq!(Variant::from_name(v.name()), Some(v));
        assert!(ModelConfig::default().variant(v).validate().is_ok());
    }
    let q = Quad::domain();
    assert!(q.to_domain().is_ok());
}
