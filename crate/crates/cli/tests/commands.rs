use std::path::Path;

use textcomp_cli::commands::{
    ablation_csv, cmd_ablate, cmd_eval, cmd_kern_sweep, cmd_perturb_sweep, cmd_synth, cmd_train, parse_ablation_csv,
};
use textcomp_cli::spec::{ExperimentSpec, Split};
use textcomp_cli::HarnessError;
use textcomp_core::imaging::read_pgm;
use textcomp_core::model::{LrSchedule, ModelConfig, Variant};
use textcomp_core::synthesis::Manifest;

const SMOKE: &str = include_str!("../specs/smoke.json");

fn tiny_spec(out: &Path) -> ExperimentSpec {
    let mut spec: ExperimentSpec = serde_json::from_str(SMOKE).unwrap();
    spec.dataset.train_size = 8;
    spec.dataset.test_size = 6;
    spec.train.steps = 2;
    spec.resolve(Some(out.to_path_buf()), None).unwrap()
}

#[test]
fn synth_with_zero_samples_writes_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec(dir.path());
    spec.dataset.train_size = 0;
    spec.dataset.test_size = 0;
    let summary = cmd_synth(&spec).unwrap();
    assert!(summary.train.entries.is_empty());
    let back = Manifest::read(spec.data_dir(Split::Train).join("manifest.json")).unwrap();
    assert!(back.entries.is_empty());
    assert_eq!(back.canvas, [64, 512]);
    assert!(dir.path().join("synth.spec.json").exists());
}

#[test]
fn every_command_writes_its_resolved_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(dir.path());
    cmd_train(&spec).unwrap();
    cmd_eval(&spec).unwrap();
    for name in ["synth", "train", "eval"] {
        let text = std::fs::read_to_string(dir.path().join(format!("{name}.spec.json"))).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec, "{name}");
    }
}

#[test]
fn eval_after_overfitting_one_sample_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec: ExperimentSpec = serde_json::from_str(SMOKE).unwrap();
    spec.dataset.lexicon = Some(vec!["odes".into()]);
    spec.dataset.train_size = 1;
    spec.dataset.test_size = 1;
    spec.model = ModelConfig::default();
    spec.variants = vec![Variant::Full];
    spec.eval_split = Split::Train;
    spec.train.batch_size = 1;
    spec.train.steps = 400;
    spec.train.sigma_p = 0.0;
    spec.train.schedule = LrSchedule::Exponential {
        base: 1e-3,
        factor: 1.0,
        every: 1000,
    };
    let spec = spec.resolve(Some(dir.path().to_path_buf()), None).unwrap();
    cmd_train(&spec).unwrap();
    let metrics = cmd_eval(&spec).unwrap();
    assert_eq!(metrics[0].report.predictions, vec!["odes".to_string()]);
    assert_eq!(metrics[0].report.word_accuracy, 1.0);
}

#[test]
fn rerun_gives_identical_metrics_json() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(dir.path());
    cmd_train(&spec).unwrap();
    cmd_eval(&spec).unwrap();
    let path = dir.path().join("eval/full.json");
    let first = std::fs::read(&path).unwrap();
    let other = tempfile::tempdir().unwrap();
    let spec2 = tiny_spec(other.path());
    cmd_train(&spec2).unwrap();
    cmd_eval(&spec2).unwrap();
    assert_eq!(std::fs::read(other.path().join("eval/full.json")).unwrap(), first);
    assert_eq!(
        std::fs::read(dir.path().join("models/full/checkpoint.ckpt")).unwrap(),
        std::fs::read(other.path().join("models/full/checkpoint.ckpt")).unwrap()
    );
}

#[test]
fn train_skips_up_to_date_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(dir.path());
    let first = cmd_train(&spec).unwrap();
    assert!(first.iter().all(|o| !o.reused));
    let second = cmd_train(&spec).unwrap();
    assert!(second.iter().all(|o| o.reused));
    assert_eq!(first[0].checkpoint, second[0].checkpoint);
    let mut changed = spec.clone();
    changed.train.steps = 3;
    assert!(cmd_train(&changed).unwrap().iter().all(|o| !o.reused));
}

#[test]
fn sweeps_need_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(dir.path());
    assert!(matches!(cmd_perturb_sweep(&spec), Err(HarnessError::MissingCheckpoint { .. })));
    assert!(matches!(cmd_kern_sweep(&spec), Err(HarnessError::MissingCheckpoint { .. })));
}

#[test]
fn perturbation_sweep_rows_and_zero_noise_point() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(dir.path());
    cmd_train(&spec).unwrap();
    let table = cmd_perturb_sweep(&spec).unwrap();
    let trials = spec.perturb.trials;
    assert_eq!(table.rows.len(), spec.variants.len() * spec.perturb.sigmas.len() * trials);
    for a in table.aggregate() {
        assert_eq!(a.trials, trials);
        if a.sweep_value == 0.0 {
            assert_eq!(a.acc_std, 0.0);
            assert_eq!(a.cer_std, 0.0);
        }
    }
    let eval = cmd_eval(&spec).unwrap();
    for m in &eval {
        assert_eq!(table.mean_accuracy(m.variant.name(), 0.0), Some(m.report.word_accuracy));
    }
    let csv = std::fs::read_to_string(dir.path().join("perturb/results.csv")).unwrap();
    assert!(csv.starts_with("variant,sweep_value,trial,word_acc,cer\n"));
    assert!(dir.path().join("perturb/plot.svg").exists());
}

#[test]
fn kerning_sweep_at_level_zero_matches_clean_eval_and_writes_templates() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec(dir.path());
    cmd_train(&spec).unwrap();
    let eval = cmd_eval(&spec).unwrap();
    let table = cmd_kern_sweep(&spec).unwrap();
    for m in &eval {
        assert_eq!(table.mean_accuracy(m.variant.name(), 0.0), Some(m.report.word_accuracy));
    }
    let grid = read_pgm(dir.path().join("kern/templates.pgm")).unwrap();
    let (words, levels) = (spec.kern.template_words, spec.kern.levels.len());
    assert_eq!(grid.height(), 2 * words * (32 + 2) + 2);
    assert_eq!(grid.width(), levels * (256 + 2) + 2);
}

#[test]
fn ablation_records_one_dataset_hash_and_round_trips_flags() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny_spec(dir.path());
    spec.train.steps = 1;
    spec.ablation.trials = 2;
    let report = cmd_ablate(&spec).unwrap();
    assert_eq!(report.rows.len(), 5);
    let hash = &report.rows[0].dataset_sha256;
    assert_eq!(hash.len(), 64);
    assert!(report.rows.iter().all(|r| &r.dataset_sha256 == hash));
    let text = std::fs::read_to_string(dir.path().join("ablation/ablation.csv")).unwrap();
    assert_eq!(text, ablation_csv(&report.rows));
    let parsed = parse_ablation_csv(&text).unwrap();
    assert_eq!(parsed, report.rows);
    for row in &parsed {
        let config = spec.model.clone().variant(row.variant);
        assert_eq!(
            (row.use_stn, row.use_klstm, row.use_recon, row.lambda),
            (config.use_stn, config.use_klstm, config.use_recon, config.lambda)
        );
    }
    report.table.check_trials(2).unwrap();
}

#[test]
fn spec_validation_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let base: ExperimentSpec = serde_json::from_str(SMOKE).unwrap();
    let mut s = base.clone();
    s.dataset.lexicon = Some(vec!["xyz".into()]);
    assert!(s.resolve(Some(dir.path().to_path_buf()), None).is_err());
    let mut s = base.clone();
    s.perturb.sigmas = vec![-0.1];
    assert!(s.resolve(None, None).is_err());
    let mut s = base.clone();
    s.variants.clear();
    assert!(s.resolve(None, None).is_err());
    let mut s = base;
    s.dataset.alphabet = "ab".into();
    s.dataset.word_length = (1, 1);
    s.dataset.lexicon_size = 3;
    assert!(s.lexicon().is_err());
    assert!(serde_json::from_str::<ExperimentSpec>(r#"{"name":"x","seed":1,"out_dir":"o","bogus":1}"#).is_err());
}

#[test]
fn seed_override_changes_the_data() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let base: ExperimentSpec = serde_json::from_str(SMOKE).unwrap();
    let mut small = base.clone();
    small.dataset.train_size = 3;
    small.dataset.test_size = 0;
    let s1 = small.clone().resolve(Some(a.path().to_path_buf()), None).unwrap();
    let s2 = small.resolve(Some(b.path().to_path_buf()), Some(99)).unwrap();
    assert_ne!(s1.train.seed, s2.train.seed);
    assert_ne!(cmd_synth(&s1).unwrap().sha256, cmd_synth(&s2).unwrap().sha256);
}
