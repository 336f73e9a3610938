use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_tsb");

fn write_config(dir: &Path, teacher: &str, n: usize) -> std::path::PathBuf {
    let text = format!(
        r#"{{"id": "cli", "teacher": {teacher}, "data": {{"n": {n}, "seed": 0}},
            "train": [{{"label": "run", "alpha": {{"policy": "fixed", "alpha": 0.1}},
                        "reg": {{"kind": "path_l1", "lambda": 0.001}},
                        "max_iters": 20, "width": 2, "seed": 0}}],
            "output": "unused"}}"#
    );
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn tsb(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn train_succeeds_then_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"m": 1, "d": 2, "amplitudes": [1.0]}"#, 10);
    let out = dir.path().join("out");
    let args = ["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(tsb(&args).0, 0);
    assert!(out.join("runs/run/trajectory.csv").exists());
    let (code, err) = tsb(&args);
    assert_eq!(code, 1, "{err}");
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(tsb(&forced).0, 0);
}

#[test]
fn invalid_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"m": 3, "d": 2, "amplitudes": [1.0, 1.0, 1.0]}"#, 10);
    let out = dir.path().join("out");
    let (code, err) = tsb(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("teacher.m"), "{err}");
}

#[test]
fn empty_sweep_values_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"m": 1, "d": 2, "amplitudes": [1.0]}"#, 10);
    let out = dir.path().join("out");
    let (code, _) = tsb(&["sweep", "--config", cfg.to_str().unwrap(), "--axis", "lambda", "--values", "", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn rank_deficient_certificate_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"m": 2, "d": 4, "amplitudes": [1.0, 1.0]}"#, 5);
    let out = dir.path().join("cert");
    let (code, err) = tsb(&["certify", "--config", cfg.to_str().unwrap(), "--probes", "100", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(doc["status"], "rank_deficient");
}
