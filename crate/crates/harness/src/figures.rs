//! Canonical configurations and tidy outputs for the three reproduction
//! figures.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tsb_core::io::parse_f64;
use tsb_core::model::DirectionMode;
use tsb_core::objective::RegKind;
use tsb_core::optimizer::AlphaPolicy;

use crate::config::{DataSpec, Diagnostics, ExperimentConfig, TeacherSpec, TrainSpec};
use crate::error::{HarnessError, Result};
use crate::run::{merge_losses, run_experiment, write_file, RunArtifacts};

pub const FIGURE_LAMBDA: f64 = 1e-3;
/// Fixed step size for the figure runs; see the README for why the safety
/// bound is not used here.
pub const FIGURE_ALPHA: f64 = 0.5;
pub const FIG1_ITERS: usize = 20_000;
pub const FIG23_ITERS: usize = 50_000;
pub const FIG2_WIDTHS: [usize; 3] = [5, 10, 100];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            _ => Err(format!("unknown figure {s:?}")),
        }
    }
}

fn spec(label: &str, reg: RegKind, iters: usize, width: usize, seed: u64, log_every: usize) -> TrainSpec {
    TrainSpec {
        label: label.to_string(),
        alpha: AlphaPolicy::Fixed { alpha: FIGURE_ALPHA },
        reg,
        max_iters: iters,
        width,
        seed,
        log_every,
        positive_nodes: (width % 2 == 1).then_some(width.div_ceil(2)),
        plateau: None,
        continuation: None,
        coincidence_tolerance: 1e-8,
        record_nodes: false,
        j_star: None,
    }
}

fn teacher(m: usize, d: usize) -> TeacherSpec {
    TeacherSpec { m, d, amplitudes: vec![1.0; m], directions: DirectionMode::Canonical }
}

/// Two unit teachers in the plane, fifteen students.
pub fn fig1_config(seed: u64, out: &Path) -> ExperimentConfig {
    let mut run = spec("M15", RegKind::PathL1 { lambda: FIGURE_LAMBDA }, FIG1_ITERS, 15, seed, 20);
    run.record_nodes = true;
    ExperimentConfig {
        id: "fig1".into(),
        teacher: teacher(2, 2),
        data: DataSpec { n: 100, seed },
        train: vec![run],
        diagnostics: Diagnostics::default(),
        output: out.to_path_buf(),
    }
}

/// Five teachers in `d = 5` against widths 5, 10 and 100.
pub fn fig2_config(seed: u64, out: &Path) -> ExperimentConfig {
    let lambda = RegKind::PathL1 { lambda: FIGURE_LAMBDA };
    ExperimentConfig {
        id: "fig2".into(),
        teacher: teacher(5, 5),
        data: DataSpec { n: 100, seed },
        train: FIG2_WIDTHS.iter().map(|&w| spec(&format!("M{w}"), lambda, FIG23_ITERS, w, seed, 50)).collect(),
        diagnostics: Diagnostics::default(),
        output: out.to_path_buf(),
    }
}

/// Path-L1 against L2 regularization at width 10.
pub fn fig3_config(seed: u64, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        id: "fig3".into(),
        teacher: teacher(5, 5),
        data: DataSpec { n: 100, seed },
        train: vec![
            spec("path_l1", RegKind::PathL1 { lambda: FIGURE_LAMBDA }, FIG23_ITERS, 10, seed, 50),
            spec("l2", RegKind::L2 { lambda: FIGURE_LAMBDA }, FIG23_ITERS, 10, seed, 50),
        ],
        diagnostics: Diagnostics::default(),
        output: out.to_path_buf(),
    }
}

pub fn figure_config(which: Figure, seed: u64, out: &Path) -> ExperimentConfig {
    match which {
        Figure::Fig1 => fig1_config(seed, out),
        Figure::Fig2 => fig2_config(seed, out),
        Figure::Fig3 => fig3_config(seed, out),
    }
}

/// One parsed row of a losses CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossPoint {
    pub iter: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub f: f64,
    pub j: f64,
}

pub fn read_losses(path: &Path) -> Result<Vec<LossPoint>> {
    let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
    let bad = |line: usize, msg: String| HarnessError::Core(tsb_core::Error::Parse(format!("{}:{line}: {msg}", path.display())));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad(i + 1, format!("expected 6 columns, got {}", cols.len())));
        }
        let num = |c: &str| parse_f64(c).map_err(|e| bad(i + 1, e.to_string()));
        out.push(LossPoint {
            iter: cols[1].parse().map_err(|_| bad(i + 1, format!("bad iteration {:?}", cols[1])))?,
            train_loss: num(cols[2])?,
            test_loss: num(cols[3])?,
            f: num(cols[4])?,
            j: num(cols[5])?,
        });
    }
    Ok(out)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest pointwise relative gap between two curves logged at the same
/// iterations.
pub fn max_relative_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| relative_gap(*x, *y)).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig1Metadata {
    pub teacher_directions: Vec<Vec<f64>>,
    pub teacher_amplitudes: Vec<f64>,
    pub nodes: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub series: String,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub final_f: f64,
    pub final_j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig3Gaps {
    pub max_relative_gap_train_loss: f64,
    pub max_relative_gap_f: f64,
    pub final_relative_gap_f: f64,
    pub final_relative_gap_j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureSummary {
    pub figure: Figure,
    pub series: Vec<SeriesSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fig1: Option<Fig1Metadata>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fig3: Option<Fig3Gaps>,
}

#[derive(Clone, Debug)]
pub struct FigureArtifacts {
    pub figure: Figure,
    pub run: RunArtifacts,
    /// Tidy CSVs at the top of the output directory.
    pub tidy: Vec<PathBuf>,
    pub summary_path: PathBuf,
    pub summary: FigureSummary,
}

/// Runs the canonical configuration for `which` and writes its tidy CSV and
/// `<fig>_summary.json` next to the per-run artifacts.
pub fn reproduce_figure(which: Figure, seed: u64, out: &Path, force: bool, log_every: Option<usize>) -> Result<FigureArtifacts> {
    let mut cfg = figure_config(which, seed, out);
    if let Some(k) = log_every {
        cfg.override_log_every(k);
    }
    reproduce_with(which, &cfg, force)
}

/// As [`reproduce_figure`] with an explicit, possibly modified, config.
pub fn reproduce_with(which: Figure, cfg: &ExperimentConfig, force: bool) -> Result<FigureArtifacts> {
    let run = run_experiment(cfg, force)?;
    let name = match which {
        Figure::Fig1 => "fig1",
        Figure::Fig2 => "fig2",
        Figure::Fig3 => "fig3",
    };
    let out = &run.output;
    let curves: Vec<Vec<LossPoint>> = run.losses.iter().map(|p| read_losses(p)).collect::<Result<_>>()?;
    let series: Vec<SeriesSummary> = run
        .runs
        .iter()
        .zip(&curves)
        .map(|(r, c)| {
            let last = c.last().copied().expect("every run logs its initial state");
            SeriesSummary { series: r.label.clone(), final_train_loss: last.train_loss, final_test_loss: last.test_loss, final_f: last.f, final_j: last.j }
        })
        .collect();
    let mut tidy = Vec::new();
    let mut summary = FigureSummary { figure: which, series, fig1: None, fig3: None };
    match which {
        Figure::Fig1 => {
            let nodes = out.join("fig1_nodes.csv");
            fs::copy(&run.node_logs[0], &nodes).map_err(HarnessError::io(&nodes))?;
            tidy.push(nodes);
            let t = &cfg.teacher;
            summary.fig1 = Some(Fig1Metadata {
                teacher_directions: (0..t.m).map(|j| (0..t.d).map(|c| if c == j { 1.0 } else { 0.0 }).collect()).collect(),
                teacher_amplitudes: t.amplitudes.clone(),
                nodes: cfg.train[0].width,
                lambda: cfg.train[0].reg.lambda(),
                alpha: run.runs[0].alpha,
                iterations: run.runs[0].iterations,
            });
            if t.directions != DirectionMode::Canonical {
                let teacher = tsb_core::model::make_teacher(t.m, t.d, &t.amplitudes, t.directions)?;
                summary.fig1.as_mut().expect("just set").teacher_directions = teacher.directions().iter().map(|u| u.to_vec()).collect();
            }
        }
        Figure::Fig2 | Figure::Fig3 => {
            let path = out.join(format!("{name}_losses.csv"));
            let parts: Vec<(String, PathBuf)> = run.runs.iter().zip(&run.losses).map(|(r, p)| (r.label.clone(), p.clone())).collect();
            merge_losses(&path, &parts)?;
            tidy.push(path);
            if which == Figure::Fig3 && curves.len() == 2 {
                let (a, b) = (&curves[0], &curves[1]);
                let col = |c: &[LossPoint], f: fn(&LossPoint) -> f64| c.iter().map(f).collect::<Vec<f64>>();
                let (la, lb) = (a.last().expect("nonempty"), b.last().expect("nonempty"));
                summary.fig3 = Some(Fig3Gaps {
                    max_relative_gap_train_loss: max_relative_gap(&col(a, |p| p.train_loss), &col(b, |p| p.train_loss)),
                    max_relative_gap_f: max_relative_gap(&col(a, |p| p.f), &col(b, |p| p.f)),
                    final_relative_gap_f: relative_gap(la.f, lb.f),
                    final_relative_gap_j: relative_gap(la.j, lb.j),
                });
            }
        }
    }
    let summary_path = out.join(format!("{name}_summary.json"));
    write_file(&summary_path, &serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    Ok(FigureArtifacts { figure: which, run, tidy, summary_path, summary })
}
