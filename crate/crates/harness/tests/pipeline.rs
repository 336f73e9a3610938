use std::fs;
use std::path::Path;

use tsb_harness::figures::{reproduce_figure, Figure};
use tsb_harness::run::{RunReport, LOSSES_SCHEMA};
use tsb_harness::sweep::{sweep, Axis, SUMMARY_COLUMNS, SUMMARY_SCHEMA};
use tsb_harness::{run_experiment, ExperimentConfig, HarnessError};

const MINIMAL: &str = r#"{
    "id": "minimal",
    "teacher": {"m": 1, "d": 2, "amplitudes": [1.0]},
    "data": {"n": 10, "seed": 0},
    "train": [{"label": "run", "alpha": {"policy": "fixed", "alpha": 0.1},
               "reg": {"kind": "path_l1", "lambda": 0.001},
               "max_iters": 10, "width": 2, "seed": 0, "log_every": 3}],
    "output": "unused"
}"#;

fn minimal(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
    cfg.output = out.to_path_buf();
    cfg
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).skip(1).map(str::to_string).collect()
}

#[test]
fn minimal_run_logs_every_kth_iteration_and_the_last() {
    let dir = tempfile::tempdir().unwrap();
    let art = run_experiment(&minimal(&dir.path().join("out")), false).unwrap();
    let rows = data_lines(&art.trajectories[0]);
    // Iterations 0, 3, 6, 9 and the final 10.
    assert_eq!(rows.len(), 1 + 10usize.div_ceil(3));
    let iters: Vec<&str> = rows.iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(iters, ["0", "3", "6", "9", "10"]);
    for name in ["config.json", "teacher.json", "dataset.json", "runs/run/losses.csv", "runs/run/report.json"] {
        assert!(art.output.join(name).exists(), "missing {name}");
    }
    assert!(fs::read_to_string(&art.losses[0]).unwrap().starts_with(&format!("# schema: {LOSSES_SCHEMA}\n")));

    // report.json reads back into the same value.
    let text = fs::read_to_string(&art.reports[0]).unwrap();
    let report: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&report).unwrap(), text.trim_end());
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let mut cfg = minimal(&a);
    cfg.train[0].max_iters = 500;
    cfg.diagnostics.certificate = true;
    run_experiment(&cfg, false).unwrap();
    cfg.output = b.clone();
    run_experiment(&cfg, false).unwrap();
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert!(!sa.is_empty());
    // config.json echoes the output path; everything else must match exactly.
    let strip = |s: Vec<(String, Vec<u8>)>| s.into_iter().filter(|(n, _)| n != "config.json").collect::<Vec<_>>();
    assert_eq!(strip(sa), strip(sb));
}

#[test]
fn existing_output_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = minimal(&dir.path().join("out"));
    run_experiment(&cfg, false).unwrap();
    assert!(matches!(run_experiment(&cfg, false), Err(HarnessError::OutputExists(_))));
    run_experiment(&cfg, true).unwrap();
}

#[test]
fn fig1_writes_every_node_and_the_teacher() {
    let dir = tempfile::tempdir().unwrap();
    let art = reproduce_figure(Figure::Fig1, 0, &dir.path().join("fig1"), false, Some(1000)).unwrap();
    let meta = art.summary.fig1.as_ref().expect("fig1 metadata");
    assert_eq!(meta.nodes, 15);
    assert_eq!(meta.teacher_directions, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    let nodes = art.tidy.iter().find(|p| p.ends_with("fig1_nodes.csv")).unwrap();
    let rows = data_lines(nodes);
    let iterations = 1 + 20_000 / 1000;
    assert_eq!(rows.len(), 15 * iterations);
}

#[test]
fn fig2_wider_students_fit_better() {
    let dir = tempfile::tempdir().unwrap();
    let art = reproduce_figure(Figure::Fig2, 0, &dir.path().join("fig2"), false, Some(500)).unwrap();
    let loss = |label: &str| art.summary.series.iter().find(|s| s.series == label).unwrap().final_train_loss;
    assert!(loss("M100") < loss("M10") && loss("M10") < loss("M5"), "{:?}", art.summary.series);
}

#[test]
fn fig3_reports_regularizer_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let art = reproduce_figure(Figure::Fig3, 0, &dir.path().join("fig3"), false, Some(500)).unwrap();
    let gaps = art.summary.fig3.as_ref().expect("fig3 gaps");
    assert!(gaps.final_relative_gap_j.is_finite() && gaps.max_relative_gap_train_loss.is_finite());
    assert_eq!(art.summary.series.len(), 2);
    assert!(art.summary_path.exists());
}

#[test]
fn lambda_sweep_writes_one_summary_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let art = sweep(&minimal(&dir.path().join("sweep")), Axis::Lambda, &[1e-3, 1e-2, 1e-1], false).unwrap();
    let text = fs::read_to_string(&art.summary).unwrap();
    assert!(text.starts_with(&format!("# schema: {SUMMARY_SCHEMA}\n")));
    let header = text.lines().nth(1).unwrap();
    assert_eq!(header, SUMMARY_COLUMNS.join(","));
    let col = SUMMARY_COLUMNS.iter().position(|c| *c == "amplitude_error").unwrap();
    let rows = data_lines(&art.summary);
    assert_eq!(rows.len(), 3);
    for r in rows {
        let v: f64 = r.split(',').nth(col).unwrap().parse().unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }
}

#[test]
fn single_value_seed_sweep_equals_a_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = minimal(&dir.path().join("sweep"));
    cfg.train[0].max_iters = 200;
    let art = sweep(&cfg, Axis::Seed, &[7.0], false).unwrap();
    cfg.override_seed(7);
    cfg.output = dir.path().join("plain");
    let plain = run_experiment(&cfg, false).unwrap();
    assert_eq!(art.runs[0].runs, plain.runs);
}

#[test]
fn empty_sweep_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(sweep(&minimal(&dir.path().join("s")), Axis::Alpha, &[], false), Err(HarnessError::Config { .. })));
}
