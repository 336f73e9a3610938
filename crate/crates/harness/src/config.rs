//! Experiment configuration documents.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use tsb_core::model::DirectionMode;
use tsb_core::objective::RegKind;
use tsb_core::optimizer::{AlphaPolicy, Continuation, Plateau, TrainConfig};

use crate::error::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherSpec {
    pub m: usize,
    pub d: usize,
    pub amplitudes: Vec<f64>,
    #[serde(default = "canonical")]
    pub directions: DirectionMode,
}

fn canonical() -> DirectionMode {
    DirectionMode::Canonical
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub n: usize,
    pub seed: u64,
}

fn default_log_every() -> usize {
    100
}

fn default_tolerance() -> f64 {
    1e-8
}

/// One training run. `alpha` is a policy resolved against the run's initial
/// objective value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub label: String,
    pub alpha: AlphaPolicy,
    pub reg: RegKind,
    pub max_iters: usize,
    pub width: usize,
    pub seed: u64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub positive_nodes: Option<usize>,
    #[serde(default)]
    pub plateau: Option<Plateau>,
    #[serde(default)]
    pub continuation: Option<Continuation>,
    #[serde(default = "default_tolerance")]
    pub coincidence_tolerance: f64,
    /// Write the per-node long-format CSV.
    #[serde(default)]
    pub record_nodes: bool,
    /// External reference value for `J*`; defaults to the run's final `J`.
    #[serde(default)]
    pub j_star: Option<f64>,
}

impl TrainSpec {
    pub fn to_train_config(&self, alpha: f64) -> TrainConfig {
        TrainConfig {
            alpha,
            reg: self.reg,
            max_iters: self.max_iters,
            width: self.width,
            seed: self.seed,
            coincidence_tolerance: self.coincidence_tolerance,
            log_every: self.log_every,
            positive_nodes: self.positive_nodes,
            plateau: self.plateau,
            continuation: self.continuation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TestLoss {
    /// Exact population distance through the arc-cosine kernel.
    Analytic,
    /// Empirical risk on an independent sample of this size.
    Holdout { n: usize },
}

fn yes() -> bool {
    true
}

fn default_probes() -> usize {
    10_000
}

fn default_cap() -> f64 {
    1e-3
}

fn default_recovery_radius() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    #[serde(default)]
    pub certificate: bool,
    #[serde(default = "yes")]
    pub d_rho: bool,
    #[serde(default = "yes")]
    pub phase_fit: bool,
    /// Neighborhood radius for recovery and `D_ρ` reports.
    #[serde(default = "default_recovery_radius")]
    pub recovery_radius: f64,
    /// Safety-bound `ρ`; defaults to half the teacher's data margin.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_cap")]
    pub cap_radius: f64,
    #[serde(default = "default_test_loss")]
    pub test_loss: TestLoss,
}

fn default_test_loss() -> TestLoss {
    TestLoss::Analytic
}

impl Default for Diagnostics {
    fn default() -> Self {
        Diagnostics {
            certificate: false,
            d_rho: true,
            phase_fit: true,
            recovery_radius: default_recovery_radius(),
            rho: None,
            probes: default_probes(),
            cap_radius: default_cap(),
            test_loss: default_test_loss(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub teacher: TeacherSpec,
    pub data: DataSpec,
    pub train: Vec<TrainSpec>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    pub output: PathBuf,
}

fn cfg_err(path: impl Into<String>, msg: impl Into<String>) -> HarnessError {
    HarnessError::Config { path: path.into(), msg: msg.into() }
}

macro_rules! check {
    ($cond:expr, $path:expr, $($arg:tt)*) => {{
        let holds: bool = $cond;
        if !holds {
            return Err(cfg_err($path, format!($($arg)*)));
        }
    }};
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| cfg_err(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        check!(!self.id.is_empty(), "id", "must not be empty");
        let t = &self.teacher;
        check!(t.d >= 2, "teacher.d", "must be >= 2, got {}", t.d);
        check!(t.m >= 1, "teacher.m", "must be positive");
        check!(t.m <= t.d, "teacher.m", "{} orthogonal directions do not fit in dimension {}", t.m, t.d);
        check!(t.amplitudes.len() == t.m, "teacher.amplitudes", "expected {} values, got {}", t.m, t.amplitudes.len());
        for (i, a) in t.amplitudes.iter().enumerate() {
            check!(a.is_finite() && *a > 0.0, format!("teacher.amplitudes[{i}]"), "must be positive, got {a}");
        }
        check!(self.data.n >= 1, "data.n", "must be positive");
        check!(!self.train.is_empty(), "train", "needs at least one run");
        let mut labels = std::collections::HashSet::new();
        for (i, s) in self.train.iter().enumerate() {
            let p = |f: &str| format!("train[{i}].{f}");
            check!(
                !s.label.is_empty() && s.label.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)),
                p("label"),
                "must be a nonempty name of [A-Za-z0-9._-], got {:?}",
                s.label
            );
            check!(labels.insert(s.label.clone()), p("label"), "duplicate label {:?}", s.label);
            match s.alpha {
                AlphaPolicy::Fixed { alpha } => check!(alpha.is_finite() && alpha > 0.0, p("alpha.alpha"), "must be positive"),
                AlphaPolicy::SafetyBound { cap } | AlphaPolicy::LemmaBound { cap } => {
                    check!(cap.is_finite() && cap > 0.0, p("alpha.cap"), "must be positive")
                }
            }
            check!(s.reg.lambda().is_finite() && s.reg.lambda() >= 0.0, p("reg.lambda"), "must be nonnegative");
            if let AlphaPolicy::SafetyBound { .. } = s.alpha {
                check!(s.reg.lambda() > 0.0, p("reg.lambda"), "the safety-bound policy needs lambda > 0");
            }
            if let Some(j) = s.j_star {
                check!(j.is_finite(), p("j_star"), "must be finite");
            }
            s.to_train_config(1.0).validate().map_err(|e| cfg_err(format!("train[{i}]"), e.to_string()))?;
        }
        let d = &self.diagnostics;
        check!(d.recovery_radius > 0.0 && d.recovery_radius < std::f64::consts::PI / 4.0, "diagnostics.recovery_radius", "must lie in (0, π/4)");
        if let Some(rho) = d.rho {
            check!(rho.is_finite() && rho > 0.0, "diagnostics.rho", "must be positive");
        }
        check!(d.probes >= 1, "diagnostics.probes", "must be positive");
        check!(d.cap_radius > 0.0 && d.cap_radius < std::f64::consts::PI / 4.0, "diagnostics.cap_radius", "must lie in (0, π/4)");
        if let TestLoss::Holdout { n } = d.test_loss {
            check!(n >= 1, "diagnostics.test_loss.holdout.n", "must be positive");
        }
        Ok(())
    }

    /// Replaces the data seed and every run seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        for s in &mut self.train {
            s.seed = seed;
        }
    }

    pub fn override_log_every(&mut self, log_every: usize) {
        for s in &mut self.train {
            s.log_every = log_every;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "id": "minimal",
        "teacher": {"m": 1, "d": 2, "amplitudes": [1.0]},
        "data": {"n": 10, "seed": 0},
        "train": [{"label": "run", "alpha": {"policy": "fixed", "alpha": 0.1},
                   "reg": {"kind": "path_l1", "lambda": 0.001},
                   "max_iters": 10, "width": 2, "seed": 0, "log_every": 3}],
        "output": "out"
    }"#;

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.teacher.directions, DirectionMode::Canonical);
        assert_eq!(cfg.train[0].log_every, 3);
        assert!(cfg.diagnostics.phase_fit);
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad = MINIMAL.replace(r#""m": 1, "d": 2, "amplitudes": [1.0]"#, r#""m": 3, "d": 2, "amplitudes": [1.0, 1.0, 1.0]"#);
        match ExperimentConfig::from_json(&bad) {
            Err(HarnessError::Config { path, .. }) => assert_eq!(path, "teacher.m"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = MINIMAL.replace(r#""width": 2"#, r#""width": 3"#);
        match ExperimentConfig::from_json(&bad) {
            Err(HarnessError::Config { path, .. }) => assert_eq!(path, "train[0]"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = MINIMAL.replace(r#""alpha": 0.1"#, r#""alpha": -1"#);
        match ExperimentConfig::from_json(&bad) {
            Err(HarnessError::Config { path, .. }) => assert_eq!(path, "train[0].alpha.alpha"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(ExperimentConfig::from_json(&MINIMAL.replace("\"id\"", "\"idd\"")).is_err());
    }
}
