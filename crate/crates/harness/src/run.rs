//! Single experiments: teacher, data, every configured run, and their logs.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tsb_core::geometry::UnitVector;
use tsb_core::io::{self as tio, fmt_f64, TrajectoryRow};
use tsb_core::metrics::{self, PhaseReport, RecoveryReport};
use tsb_core::model::{self, AtomicMeasure, Dataset, TeacherNetwork};
use tsb_core::objective;
use tsb_core::optimizer::{self, AlphaPolicy, InvariantTally, TrainOutcome, TrajectoryRecord};

use crate::certify::{self, CertifyDocument};
use crate::config::{Diagnostics, ExperimentConfig, TestLoss, TrainSpec};
use crate::error::{HarnessError, Result};

pub const LOSSES_SCHEMA: &str = "tsb-losses/1";
pub const LOSSES_COLUMNS: [&str; 6] = ["series", "iter", "train_loss", "test_loss", "F", "J"];

/// Everything a run writes, plus in-memory summaries for callers.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    pub output: PathBuf,
    pub config_echo: PathBuf,
    pub trajectories: Vec<PathBuf>,
    pub losses: Vec<PathBuf>,
    pub node_logs: Vec<PathBuf>,
    pub reports: Vec<PathBuf>,
    pub runs: Vec<RunReport>,
    pub certificate: Option<CertifyDocument>,
    /// Not written to any file, so artifacts stay byte-reproducible.
    pub wall_clock: Duration,
}

impl RunArtifacts {
    pub fn iterations(&self) -> Vec<usize> {
        self.runs.iter().map(|r| r.iterations).collect()
    }

    pub fn run(&self, label: &str) -> Option<&RunReport> {
        self.runs.iter().find(|r| r.label == label)
    }
}

/// Per-run summary, written as `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub alpha_policy: AlphaPolicy,
    pub alpha: f64,
    /// `F(Θ₀)` used to resolve `alpha`.
    pub initial_f: f64,
    pub alpha_safety_bound: Option<f64>,
    pub lemma_alpha_bound: Option<f64>,
    pub rho: f64,
    pub rho_margin: f64,
    pub iterations: usize,
    pub stopped_on_plateau: bool,
    pub final_f: f64,
    pub final_j: f64,
    pub final_risk: f64,
    #[serde(deserialize_with = "tsb_core::io::null_as_nan")]
    pub final_test_loss: f64,
    pub j_star: f64,
    pub tally: InvariantTally,
    pub recovery: RecoveryReport,
    pub final_d_rho: Option<f64>,
    pub phase: Option<PhaseReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_error: Option<String>,
}

pub(crate) fn prepare_output(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !force {
            return Err(HarnessError::OutputExists(dir.to_path_buf()));
        }
        fs::remove_dir_all(dir).map_err(HarnessError::io(dir))?;
    }
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(HarnessError::io(path))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(HarnessError::io(path))
}

pub(crate) fn build_teacher(cfg: &ExperimentConfig) -> Result<(TeacherNetwork, Dataset)> {
    let t = &cfg.teacher;
    let teacher = model::make_teacher(t.m, t.d, &t.amplitudes, t.directions)?;
    let data = model::make_dataset(&teacher, cfg.data.n, cfg.data.seed)?;
    Ok((teacher, data))
}

/// Measure carried by a logged record.
pub fn record_measure(d: usize, record: &TrajectoryRecord) -> Result<AtomicMeasure> {
    let mut nu = AtomicMeasure::empty(d);
    for node in &record.nodes {
        nu.push(node.r, UnitVector::new(node.theta.clone())?)?;
    }
    Ok(nu)
}

struct TestLossEval {
    mode: TestLoss,
    reference: AtomicMeasure,
    holdout: Option<Dataset>,
}

impl TestLossEval {
    fn new(mode: TestLoss, teacher: &TeacherNetwork, data_seed: u64) -> Result<Self> {
        let holdout = match mode {
            TestLoss::Analytic => None,
            TestLoss::Holdout { n } => Some(model::make_holdout(teacher, n, data_seed)?),
        };
        Ok(TestLossEval { mode, reference: teacher.measure(), holdout })
    }

    fn eval(&self, nu: &AtomicMeasure) -> Result<f64> {
        Ok(match (&self.mode, &self.holdout) {
            (TestLoss::Holdout { .. }, Some(h)) => objective::empirical_risk(nu, h)?,
            _ => 0.5 * model::analytic_l2_distance(nu, &self.reference)?,
        })
    }
}

struct LossRow {
    iter: usize,
    train: f64,
    test: f64,
    f: f64,
    j: f64,
}

fn write_losses(path: &Path, series: &str, rows: &[LossRow]) -> Result<()> {
    let mut w = create(path)?;
    write_losses_to(&mut w, &[(series, rows)]).map_err(|e| HarnessError::Io { path: path.into(), source: e })?;
    w.flush().map_err(HarnessError::io(path))
}

fn write_losses_to<W: Write>(w: &mut W, series: &[(&str, &[LossRow])]) -> std::io::Result<()> {
    writeln!(w, "# schema: {LOSSES_SCHEMA}")?;
    writeln!(w, "{}", LOSSES_COLUMNS.join(","))?;
    for (name, rows) in series {
        for r in *rows {
            writeln!(w, "{name},{},{},{},{},{}", r.iter, fmt_f64(r.train), fmt_f64(r.test), fmt_f64(r.f), fmt_f64(r.j))?;
        }
    }
    Ok(())
}

/// Concatenates per-run loss files into one tidy CSV, relabelling series.
pub(crate) fn merge_losses(out: &Path, parts: &[(String, PathBuf)]) -> Result<()> {
    let mut w = create(out)?;
    let io = |e| HarnessError::Io { path: out.into(), source: e };
    writeln!(w, "# schema: {LOSSES_SCHEMA}").map_err(io)?;
    writeln!(w, "{}", LOSSES_COLUMNS.join(",")).map_err(io)?;
    for (series, path) in parts {
        let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
        for line in text.lines().skip(2) {
            let rest = line.split_once(',').map_or("", |(_, r)| r);
            writeln!(w, "{series},{rest}").map_err(io)?;
        }
    }
    w.flush().map_err(HarnessError::io(out))
}

fn resolve_alpha(spec: &TrainSpec, data: &Dataset, rho: f64) -> Result<(f64, f64, Option<f64>, Option<f64>)> {
    let cfg = spec.to_train_config(1.0);
    let positive = spec.positive_nodes.unwrap_or(spec.width / 2);
    let init = optimizer::init_params_with_split(spec.width, positive, data.dim(), spec.seed)?;
    let lambda0 = spec.continuation.map_or(spec.reg.lambda(), |c| c.lambda_at(0, spec.reg.lambda()));
    let f0 = objective::objective_f(&init, data, cfg.reg.with_lambda(lambda0))?;
    let lambda = spec.reg.lambda();
    let safety = (lambda > 0.0).then(|| optimizer::alpha_safety_bound(f0, data.len(), lambda, rho)).transpose()?;
    let lemma = (lambda > 0.0).then(|| optimizer::lemma_alpha_bound(f0, data.len(), lambda)).transpose()?;
    let alpha = spec.alpha.resolve(f0, data.len(), lambda, rho)?;
    Ok((alpha, f0, safety, lemma))
}

struct RunContext<'a> {
    teacher: &'a TeacherNetwork,
    data: &'a Dataset,
    diag: &'a Diagnostics,
    rho: f64,
    rho_margin: f64,
    test: &'a TestLossEval,
}

struct RunFiles {
    trajectory: PathBuf,
    losses: PathBuf,
    nodes: Option<PathBuf>,
    report: PathBuf,
}

fn run_one(ctx: &RunContext<'_>, spec: &TrainSpec, dir: &Path) -> Result<(RunReport, RunFiles)> {
    let (alpha, initial_f, alpha_safety_bound, lemma_alpha_bound) = resolve_alpha(spec, ctx.data, ctx.rho)?;
    let cfg = spec.to_train_config(alpha);
    let mut outcome: TrainOutcome = optimizer::train(ctx.data, &cfg)?;
    let d = ctx.data.dim();
    let last = outcome.final_record().clone();
    let j_star = spec.j_star.unwrap_or(last.j);
    outcome.set_reference(j_star);

    let final_measure = model::to_measure(&outcome.final_params);
    let recovery = metrics::recovery_report(&final_measure, ctx.teacher, ctx.diag.recovery_radius)?;

    let mut rows: Vec<TrajectoryRow> = outcome.records.iter().map(TrajectoryRow::from).collect();
    let mut losses = Vec::with_capacity(rows.len());
    let reference = if ctx.diag.d_rho { Some(metrics::collapse_neighborhoods(&final_measure, ctx.teacher, ctx.diag.recovery_radius)?) } else { None };
    for (row, rec) in rows.iter_mut().zip(&outcome.records) {
        let nu = record_measure(d, rec)?;
        if let Some(reference) = &reference {
            row.d_rho = Some(metrics::d_rho(&nu, reference, ctx.diag.recovery_radius)?.total);
        }
        losses.push(LossRow { iter: rec.iter, train: rec.risk, test: ctx.test.eval(&nu)?, f: rec.f, j: rec.j });
    }

    let (phase, phase_error) = if ctx.diag.phase_fit {
        match metrics::phase_fit(&outcome.records, Some(j_star)) {
            Ok(p) => (Some(p), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };

    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let files = RunFiles {
        trajectory: dir.join("trajectory.csv"),
        losses: dir.join("losses.csv"),
        nodes: spec.record_nodes.then(|| dir.join("nodes.csv")),
        report: dir.join("report.json"),
    };
    let mut w = create(&files.trajectory)?;
    tio::write_trajectory_csv(&mut w, &rows)?;
    w.flush().map_err(HarnessError::io(&files.trajectory))?;
    write_losses(&files.losses, &spec.label, &losses)?;
    if let Some(path) = &files.nodes {
        let mut w = create(path)?;
        tio::write_nodes_csv(&mut w, &outcome.records)?;
        w.flush().map_err(HarnessError::io(path))?;
    }

    let report = RunReport {
        label: spec.label.clone(),
        alpha_policy: spec.alpha,
        alpha,
        initial_f,
        alpha_safety_bound,
        lemma_alpha_bound,
        rho: ctx.rho,
        rho_margin: ctx.rho_margin,
        iterations: outcome.iterations,
        stopped_on_plateau: outcome.stopped_on_plateau,
        final_f: last.f,
        final_j: last.j,
        final_risk: last.risk,
        final_test_loss: losses.last().map_or(f64::NAN, |l| l.test),
        j_star,
        tally: outcome.tally.clone(),
        recovery,
        final_d_rho: rows.last().and_then(|r| r.d_rho),
        phase,
        phase_error,
    };
    write_file(&files.report, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    Ok((report, files))
}

/// Runs every training spec of `cfg` and writes its artifacts under
/// `cfg.output`. Fails if that directory exists unless `force` is set.
pub fn run_experiment(cfg: &ExperimentConfig, force: bool) -> Result<RunArtifacts> {
    let start = Instant::now();
    cfg.validate()?;
    let out = cfg.output.clone();
    prepare_output(&out, force)?;
    let (teacher, data) = build_teacher(cfg)?;
    let config_echo = out.join("config.json");
    write_file(&config_echo, &cfg.to_json())?;
    write_file(&out.join("teacher.json"), &tio::teacher_to_json(&teacher))?;
    write_file(&out.join("dataset.json"), &tio::dataset_to_json(&data))?;

    let rho_margin = metrics::rho_margin(teacher.directions(), &data)?;
    let rho = cfg.diagnostics.rho.unwrap_or(rho_margin / 2.0);
    let test = TestLossEval::new(cfg.diagnostics.test_loss, &teacher, cfg.data.seed)?;
    let ctx = RunContext { teacher: &teacher, data: &data, diag: &cfg.diagnostics, rho, rho_margin, test: &test };

    let mut artifacts = RunArtifacts {
        config: cfg.clone(),
        output: out.clone(),
        config_echo,
        trajectories: Vec::new(),
        losses: Vec::new(),
        node_logs: Vec::new(),
        reports: Vec::new(),
        runs: Vec::new(),
        certificate: None,
        wall_clock: Duration::ZERO,
    };
    for spec in &cfg.train {
        let (report, files) = run_one(&ctx, spec, &out.join("runs").join(&spec.label))?;
        artifacts.trajectories.push(files.trajectory);
        artifacts.losses.push(files.losses);
        artifacts.node_logs.extend(files.nodes);
        artifacts.reports.push(files.report);
        artifacts.runs.push(report);
    }
    if cfg.diagnostics.certificate {
        let doc = certify::certify_document(&teacher, &data, cfg)?;
        let path = out.join("certificate.json");
        write_file(&path, &doc.to_json())?;
        artifacts.reports.push(path);
        artifacts.certificate = Some(doc);
    }
    artifacts.wall_clock = start.elapsed();
    Ok(artifacts)
}
