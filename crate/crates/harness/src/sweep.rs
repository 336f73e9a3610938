//! One-axis parameter sweeps fanned out over a worker pool.

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tsb_core::io::fmt_f64;
use tsb_core::optimizer::AlphaPolicy;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::run::{create, prepare_output, run_experiment, RunArtifacts};

pub const SUMMARY_SCHEMA: &str = "tsb-summary/1";
pub const SUMMARY_COLUMNS: [&str; 21] = [
    "axis",
    "value",
    "run",
    "status",
    "error",
    "alpha",
    "iterations",
    "final_F",
    "final_J",
    "amplitude_error",
    "direction_error",
    "stray_mass",
    "sup_error",
    "l2_distance",
    "sign_changes",
    "aw_violations",
    "phase_k0",
    "phase_linear_rate",
    "phase_fit_r2",
    "phase_fit_ok",
    "output",
];

/// Environment variable capping the number of sweep workers.
pub const THREADS_ENV: &str = "TSB_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Lambda,
    #[serde(rename = "M")]
    Width,
    Alpha,
    Seed,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Lambda => "lambda",
            Axis::Width => "M",
            Axis::Alpha => "alpha",
            Axis::Seed => "seed",
        }
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lambda" => Ok(Axis::Lambda),
            "M" | "m" | "width" => Ok(Axis::Width),
            "alpha" => Ok(Axis::Alpha),
            "seed" => Ok(Axis::Seed),
            _ => Err(format!("unknown sweep axis {s:?} (expected lambda, M, alpha or seed)")),
        }
    }
}

fn as_count(axis: Axis, idx: usize, v: f64) -> Result<u64> {
    if v.fract() != 0.0 || v < 0.0 || v > u64::MAX as f64 {
        return Err(HarnessError::Config { path: format!("values[{idx}]"), msg: format!("{} needs a nonnegative integer, got {v}", axis.name()) });
    }
    Ok(v as u64)
}

/// `cfg` with one axis value applied to every training spec.
pub fn apply_axis(cfg: &ExperimentConfig, axis: Axis, idx: usize, value: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    match axis {
        Axis::Lambda => c.train.iter_mut().for_each(|s| s.reg = s.reg.with_lambda(value)),
        Axis::Width => {
            let w = as_count(axis, idx, value)? as usize;
            for s in &mut c.train {
                s.width = w;
                s.positive_nodes = (w % 2 == 1).then_some(w.div_ceil(2));
            }
        }
        Axis::Alpha => c.train.iter_mut().for_each(|s| s.alpha = AlphaPolicy::Fixed { alpha: value }),
        Axis::Seed => c.override_seed(as_count(axis, idx, value)?),
    }
    c.output = cfg.output.join(format!("{}-{idx:03}", axis.name()));
    c.validate().map_err(|e| match e {
        HarnessError::Config { path, msg } => HarnessError::Config { path: format!("values[{idx}] -> {path}"), msg },
        other => other,
    })?;
    Ok(c)
}

/// One row of the summary CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub axis: Axis,
    pub value: f64,
    pub run: String,
    pub result: std::result::Result<crate::run::RunReport, String>,
    pub output: PathBuf,
}

#[derive(Debug)]
pub struct SweepArtifacts {
    pub summary: PathBuf,
    pub rows: Vec<SummaryRow>,
    /// Successful experiments in value order.
    pub runs: Vec<RunArtifacts>,
}

fn worker_count(jobs: usize) -> usize {
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    cap.unwrap_or(available).min(jobs).max(1)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_summary(path: &std::path::Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| HarnessError::Io { path: path.into(), source: e };
    writeln!(w, "# schema: {SUMMARY_SCHEMA}").map_err(io)?;
    writeln!(w, "{}", SUMMARY_COLUMNS.join(",")).map_err(io)?;
    for row in rows {
        let mut fields = vec![row.axis.name().to_string(), fmt_f64(row.value), csv_field(&row.run)];
        match &row.result {
            Ok(r) => {
                let (k0, rate, r2, ok) = r.phase.as_ref().map_or((String::new(), String::new(), String::new(), String::new()), |p| {
                    (p.k0.to_string(), fmt_f64(p.linear_rate), fmt_f64(p.fit_r2), p.fit_ok.to_string())
                });
                fields.extend([
                    "ok".to_string(),
                    String::new(),
                    fmt_f64(r.alpha),
                    r.iterations.to_string(),
                    fmt_f64(r.final_f),
                    fmt_f64(r.final_j),
                    fmt_f64(r.recovery.amplitude_error),
                    fmt_f64(r.recovery.direction_error),
                    fmt_f64(r.recovery.stray_mass),
                    fmt_f64(r.recovery.sup_error),
                    fmt_f64(r.recovery.l2_distance),
                    r.tally.sign_changes.to_string(),
                    r.tally.aw_violations().to_string(),
                    k0,
                    rate,
                    r2,
                    ok,
                ]);
            }
            Err(msg) => {
                fields.extend(["failed".to_string(), csv_field(msg)]);
                fields.extend(std::iter::repeat_n(String::new(), 15));
            }
        }
        fields.push(csv_field(&row.output.display().to_string()));
        writeln!(w, "{}", fields.join(",")).map_err(io)?;
    }
    w.flush().map_err(HarnessError::io(path))
}

/// Runs `cfg` once per axis value in parallel; each run owns
/// `<output>/<axis>-<index>`. A failed run becomes a `failed` row.
pub fn sweep(cfg: &ExperimentConfig, axis: Axis, values: &[f64], force: bool) -> Result<SweepArtifacts> {
    if values.is_empty() {
        return Err(HarnessError::Config { path: "values".into(), msg: "sweep needs at least one value".into() });
    }
    cfg.validate()?;
    let configs = values.iter().enumerate().map(|(i, &v)| apply_axis(cfg, axis, i, v)).collect::<Result<Vec<_>>>()?;
    prepare_output(&cfg.output, force)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(configs.len()))
        .build()
        .map_err(|e| HarnessError::Config { path: THREADS_ENV.into(), msg: e.to_string() })?;
    let results: Vec<Result<RunArtifacts>> = pool.install(|| configs.par_iter().map(|c| run_experiment(c, false)).collect());

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for ((c, &value), result) in configs.iter().zip(values).zip(results) {
        match result {
            Ok(art) => {
                for r in &art.runs {
                    rows.push(SummaryRow { axis, value, run: r.label.clone(), result: Ok(r.clone()), output: c.output.clone() });
                }
                runs.push(art);
            }
            Err(e) => {
                for s in &c.train {
                    rows.push(SummaryRow { axis, value, run: s.label.clone(), result: Err(e.to_string()), output: c.output.clone() });
                }
            }
        }
    }
    let summary = cfg.output.join("summary.csv");
    write_summary(&summary, &rows)?;
    Ok(SweepArtifacts { summary, rows, runs })
}

/// Parses a comma-separated list of values.
pub fn parse_values(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .enumerate()
        .map(|(i, t)| t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| HarnessError::Config { path: format!("values[{i}]"), msg: format!("not a finite number: {t:?}") }))
        .collect()
}
