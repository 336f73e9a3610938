//! Pre-certificate construction and its comparison with the population
//! certificate.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsb_core::certificate::{self, CertificateReport, Conditioning};
use tsb_core::geometry::UnitVector;
use tsb_core::io as tio;
use tsb_core::metrics;
use tsb_core::model::{Dataset, TeacherNetwork};

use crate::config::{DataSpec, ExperimentConfig, TeacherSpec};
use crate::error::{HarnessError, Result};
use crate::run::{build_teacher, create, prepare_output, write_file};

/// Tolerance on `f*(p†)(θ_j∘) = 1` and the gradient identity.
pub const NDSC_TOLERANCE: f64 = 1e-8;

/// Landscape samples written for `d = 3`.
const LANDSCAPE_POINTS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifySettings {
    pub probes: usize,
    pub cap_radius: f64,
    pub seed: u64,
}

impl CertifySettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        CertifySettings { probes: cfg.diagnostics.probes, cap_radius: cfg.diagnostics.cap_radius, seed: cfg.data.seed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertifyStatus {
    Ok,
    RankDeficient,
}

/// Contents of `certificate.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyDocument {
    pub teacher: Option<TeacherSpec>,
    pub data: Option<DataSpec>,
    pub probes: usize,
    pub cap_radius: f64,
    pub seed: u64,
    pub status: CertifyStatus,
    pub conditioning: Conditioning,
    pub report: Option<CertificateReport>,
    pub ndsc_satisfied: Option<bool>,
    /// Sampled `sup_θ |f*(p†)(θ) − f̄(θ)|`.
    pub sup_gap_to_population: Option<f64>,
}

impl CertifyDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate document serializes")
    }
}

/// Builds `p†` and evaluates it. A rank-deficient `X₀` is reported through
/// `status` rather than as an error.
pub fn certify_data(teacher: &TeacherNetwork, data: &Dataset, s: &CertifySettings) -> Result<CertifyDocument> {
    let dirs = teacher.directions();
    let mut doc = CertifyDocument {
        teacher: None,
        data: None,
        probes: s.probes,
        cap_radius: s.cap_radius,
        seed: s.seed,
        status: CertifyStatus::Ok,
        conditioning: Conditioning { dim: 0, rank: 0, min_eigenvalue: 0.0, max_eigenvalue: 0.0, condition: 0.0 },
        report: None,
        ndsc_satisfied: None,
        sup_gap_to_population: None,
    };
    match certificate::precertificate_with_conditioning(dirs, data) {
        Ok((p, cond)) => {
            let report = certificate::ndsc_report(&p, dirs, s.probes, s.cap_radius, s.seed)?;
            doc.conditioning = cond;
            doc.ndsc_satisfied = Some(report.satisfies_ndsc(NDSC_TOLERANCE));
            doc.report = Some(report);
            doc.sup_gap_to_population = Some(certificate::sup_gap_to_population(&p, dirs, s.probes, s.seed)?);
        }
        Err(tsb_core::Error::RankDeficient { .. }) => {
            let (_, cond) = certificate::precertificate_pinv(dirs, data)?;
            doc.conditioning = cond;
            doc.status = CertifyStatus::RankDeficient;
        }
        Err(e) => return Err(e.into()),
    }
    Ok(doc)
}

pub(crate) fn certify_document(teacher: &TeacherNetwork, data: &Dataset, cfg: &ExperimentConfig) -> Result<CertifyDocument> {
    let mut doc = certify_data(teacher, data, &CertifySettings::from_config(cfg))?;
    doc.teacher = Some(cfg.teacher.clone());
    doc.data = Some(cfg.data);
    Ok(doc)
}

#[derive(Clone, Debug)]
pub struct CertifyArtifacts {
    pub output: PathBuf,
    pub report: PathBuf,
    pub landscape: Option<PathBuf>,
    pub document: CertifyDocument,
}

fn landscape_points(teacher: &TeacherNetwork, data: &Dataset, seed: u64) -> Result<Vec<(Vec<f64>, f64)>> {
    let (p, _) = certificate::precertificate_pinv(teacher.directions(), data)?;
    let thetas: Vec<UnitVector> = if data.dim() == 2 {
        (0..720)
            .map(|i| {
                let t = i as f64 * std::f64::consts::PI / 360.0;
                UnitVector::new(vec![t.cos(), t.sin()])
            })
            .collect::<std::result::Result<_, _>>()?
    } else {
        metrics::probe_set(data.dim(), LANDSCAPE_POINTS, seed)?
    };
    thetas
        .into_iter()
        .map(|t| {
            let v = certificate::dual_eval(&p, &t)?.0;
            Ok((t.into_inner(), v))
        })
        .collect()
}

/// Writes `certificate.json` (and `landscape.csv` for `d ≤ 3`) under `out`.
pub fn certify(cfg: &ExperimentConfig, out: &Path, force: bool) -> Result<CertifyArtifacts> {
    cfg.validate()?;
    prepare_output(out, force)?;
    let (teacher, data) = build_teacher(cfg)?;
    let document = certify_document(&teacher, &data, cfg)?;
    let report = out.join("certificate.json");
    write_file(&report, &document.to_json())?;
    let landscape = if data.dim() <= 3 {
        let path = out.join("landscape.csv");
        let mut w = create(&path)?;
        tio::write_landscape_csv(&mut w, &landscape_points(&teacher, &data, cfg.data.seed)?)?;
        w.flush().map_err(HarnessError::io(&path))?;
        Some(path)
    } else {
        None
    };
    Ok(CertifyArtifacts { output: out.to_path_buf(), report, landscape, document })
}
