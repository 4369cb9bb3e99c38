use std::process::Command;

fn textcomp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_textcomp"))
}

fn spec_file(dir: &std::path::Path) -> std::path::PathBuf {
    let mut spec: serde_json::Value = serde_json::from_str(include_str!("../specs/smoke.json")).unwrap();
    spec["dataset"]["train_size"] = 4.into();
    spec["dataset"]["test_size"] = 2.into();
    spec["train"]["steps"] = 1.into();
    let path = dir.join("spec.json");
    std::fs::write(&path, spec.to_string()).unwrap();
    path
}

#[test]
fn synth_train_eval_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path());
    let out = dir.path().join("run");
    for cmd in ["synth", "train", "eval"] {
        let status = textcomp()
            .args([cmd, "--spec"])
            .arg(&spec)
            .arg("--out")
            .arg(&out)
            .args(["--seed", "11"])
            .env("RUST_LOG", "warn")
            .status()
            .unwrap();
        assert!(status.success(), "{cmd}");
    }
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("eval.spec.json")).unwrap()).unwrap();
    assert_eq!(resolved["seed"], 11);
    assert!(out.join("eval/full.json").exists());
    assert!(out.join("models/baseline/train_log.csv").exists());
}

#[test]
fn missing_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path());
    let output = textcomp()
        .args(["sweep-perturb", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(dir.path().join("run"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("no checkpoint"));
}

#[test]
fn unknown_subcommand_and_missing_spec_fail() {
    assert!(!textcomp().arg("fly").status().unwrap().success());
    let output = textcomp().args(["synth", "--spec", "/nonexistent/spec.json"]).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("cannot read"));
}
