//! File formats: teacher/dataset JSON documents and trajectory CSV logs.
//!
//! Reals are written as decimal strings with 17 significant digits, which
//! round-trip every `f64` exactly. Readers also accept plain JSON numbers.

use std::io::{Read, Write};

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{ensure, Error, Result};
use crate::geometry::UnitVector;
use crate::model::{Dataset, Network, TeacherNetwork};
use crate::optimizer::TrajectoryRecord;

pub const TEACHER_SCHEMA: &str = "tsb-teacher/1";
pub const DATASET_SCHEMA: &str = "tsb-dataset/1";
pub const TRAJECTORY_SCHEMA: &str = "tsb-trajectory/1";
pub const NODES_SCHEMA: &str = "tsb-nodes/1";
pub const LANDSCAPE_SCHEMA: &str = "tsb-landscape/1";

/// `{:.16e}` formatting: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

/// An `f64` stored as exact decimal text.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_f64(self.0))
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Real(x)),
            Raw::Text(s) => s.trim().parse::<f64>().map(Real).map_err(|_| de::Error::custom(format!("not a number: {s:?}"))),
        }
    }
}

/// Reads `null`, which JSON writers emit for NaN, as NaN.
pub fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Reads `null` as `+∞`, for quantities that can only overflow upward.
pub fn null_as_infinity<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().copied().map(Real).collect()
}

fn unreal(v: Vec<Real>) -> Vec<f64> {
    v.into_iter().map(|r| r.0).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TeacherDoc {
    schema: String,
    d: usize,
    m: usize,
    /// Row-major `m x d`.
    directions: Vec<Real>,
    amplitudes: Vec<Real>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetDoc {
    schema: String,
    d: usize,
    n: usize,
    /// Row-major `n x d`.
    inputs: Vec<Real>,
    targets: Vec<Real>,
}

fn check_schema(found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Parse(format!("unsupported schema {found:?}, expected {expected:?}")));
    }
    Ok(())
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Parse(e.to_string())
}

pub fn teacher_to_json(t: &TeacherNetwork) -> String {
    let doc = TeacherDoc {
        schema: TEACHER_SCHEMA.into(),
        d: t.dim(),
        m: t.width(),
        directions: t.directions().iter().flat_map(|v| reals(v)).collect(),
        amplitudes: reals(t.amplitudes()),
    };
    serde_json::to_string_pretty(&doc).expect("teacher document serializes")
}

pub fn teacher_from_json(s: &str) -> Result<TeacherNetwork> {
    let doc: TeacherDoc = serde_json::from_str(s).map_err(json_err)?;
    check_schema(&doc.schema, TEACHER_SCHEMA)?;
    ensure!(doc.d >= 2, "teacher dimension must be >= 2, got {}", doc.d);
    ensure!(doc.m >= 1, "teacher width must be positive");
    ensure!(
        doc.directions.len() == doc.m.saturating_mul(doc.d),
        "expected {} direction coordinates, got {}",
        doc.m.saturating_mul(doc.d),
        doc.directions.len()
    );
    let flat = unreal(doc.directions);
    let dirs = flat.chunks(doc.d).map(|c| UnitVector::new(c.to_vec())).collect::<Result<Vec<_>>>()?;
    TeacherNetwork::new(dirs, unreal(doc.amplitudes))
}

pub fn dataset_to_json(data: &Dataset) -> String {
    let doc = DatasetDoc {
        schema: DATASET_SCHEMA.into(),
        d: data.dim(),
        n: data.len(),
        inputs: reals(data.inputs_flat()),
        targets: reals(data.targets()),
    };
    serde_json::to_string(&doc).expect("dataset document serializes")
}

pub fn dataset_from_json(s: &str) -> Result<Dataset> {
    let doc: DatasetDoc = serde_json::from_str(s).map_err(json_err)?;
    check_schema(&doc.schema, DATASET_SCHEMA)?;
    ensure!(doc.n >= 1, "dataset must contain at least one sample");
    ensure!(doc.targets.len() == doc.n, "expected {} targets, got {}", doc.n, doc.targets.len());
    Dataset::new(doc.d, unreal(doc.inputs), unreal(doc.targets))
}

/// One row of the trajectory CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub iter: usize,
    pub lambda: f64,
    pub f: f64,
    pub j: f64,
    pub risk: f64,
    pub excess_proxy: f64,
    pub min_abs_a: f64,
    pub max_beta: f64,
    pub max_eta: f64,
    pub c_f: f64,
    pub sign_violations: usize,
    pub aw_violations: usize,
    pub conic_r_violations: usize,
    pub conic_theta_violations: usize,
    pub d_rho: Option<f64>,
}

impl From<&TrajectoryRecord> for TrajectoryRow {
    fn from(r: &TrajectoryRecord) -> Self {
        TrajectoryRow {
            iter: r.iter,
            lambda: r.lambda,
            f: r.f,
            j: r.j,
            risk: r.risk,
            excess_proxy: r.excess_proxy,
            min_abs_a: r.min_abs_a,
            max_beta: r.max_beta,
            max_eta: r.max_eta,
            c_f: r.c_f,
            sign_violations: r.sign_violations,
            aw_violations: r.aw_violations,
            conic_r_violations: r.conic_r_violations,
            conic_theta_violations: r.conic_theta_violations,
            d_rho: None,
        }
    }
}

pub const TRAJECTORY_COLUMNS: [&str; 15] = [
    "iter",
    "lambda",
    "F",
    "J",
    "risk",
    "excess_proxy",
    "min_abs_a",
    "max_beta",
    "max_eta",
    "C_F",
    "sign_violations",
    "aw_violations",
    "conic_r_violations",
    "conic_theta_violations",
    "d_rho",
];

fn schema_line<W: Write>(w: &mut W, schema: &str) -> Result<()> {
    writeln!(w, "# schema: {schema}")?;
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(mut w: W, rows: &[TrajectoryRow]) -> Result<()> {
    schema_line(&mut w, TRAJECTORY_SCHEMA)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRAJECTORY_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.iter.to_string(),
            fmt_f64(r.lambda),
            fmt_f64(r.f),
            fmt_f64(r.j),
            fmt_f64(r.risk),
            fmt_f64(r.excess_proxy),
            fmt_f64(r.min_abs_a),
            fmt_f64(r.max_beta),
            fmt_f64(r.max_eta),
            fmt_f64(r.c_f),
            r.sign_violations.to_string(),
            r.aw_violations.to_string(),
            r.conic_r_violations.to_string(),
            r.conic_theta_violations.to_string(),
            r.d_rho.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Splits off and checks the `# schema:` line.
fn strip_schema<'a>(text: &'a str, schema: &str) -> Result<&'a str> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let found = first.trim_end_matches('\r').strip_prefix("# schema: ").ok_or_else(|| Error::Parse("missing '# schema:' line".into()))?;
    check_schema(found.trim(), schema)?;
    Ok(rest)
}

/// Header lookup for CSV readers.
struct Columns {
    names: Vec<String>,
}

impl Columns {
    fn index(&self, name: &str) -> Result<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| Error::Parse(format!("missing column {name:?}")))
    }
}

fn field<'r>(rec: &'r csv::StringRecord, i: usize, name: &str, line: usize) -> Result<&'r str> {
    rec.get(i).ok_or_else(|| Error::Parse(format!("row {line}: missing value for {name:?}")))
}

fn parse_usize(s: &str, name: &str, line: usize) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Parse(format!("row {line}: {name:?} is not a count: {s:?}")))
}

fn parse_real(s: &str, name: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("row {line}: {name:?} is not a number: {s:?}")))
}

pub fn read_trajectory_csv<R: Read>(mut r: R) -> Result<Vec<TrajectoryRow>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let body = strip_schema(&text, TRAJECTORY_SCHEMA)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let cols = Columns { names: rdr.headers()?.iter().map(str::to_owned).collect() };
    let idx: Vec<usize> = TRAJECTORY_COLUMNS.iter().map(|c| cols.index(c)).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let g = |k: usize| field(&rec, idx[k], TRAJECTORY_COLUMNS[k], line);
        let real = |k: usize| g(k).and_then(|s| parse_real(s, TRAJECTORY_COLUMNS[k], line));
        let count = |k: usize| g(k).and_then(|s| parse_usize(s, TRAJECTORY_COLUMNS[k], line));
        let d_rho = g(14)?;
        rows.push(TrajectoryRow {
            iter: count(0)?,
            lambda: real(1)?,
            f: real(2)?,
            j: real(3)?,
            risk: real(4)?,
            excess_proxy: real(5)?,
            min_abs_a: real(6)?,
            max_beta: real(7)?,
            max_eta: real(8)?,
            c_f: real(9)?,
            sign_violations: count(10)?,
            aw_violations: count(11)?,
            conic_r_violations: count(12)?,
            conic_theta_violations: count(13)?,
            d_rho: if d_rho.trim().is_empty() { None } else { Some(parse_real(d_rho, "d_rho", line)?) },
        });
    }
    Ok(rows)
}

/// Long-format per-node log: one row per (iteration, node).
pub fn write_nodes_csv<W: Write>(mut w: W, records: &[TrajectoryRecord]) -> Result<()> {
    schema_line(&mut w, NODES_SCHEMA)?;
    let mut out = csv::Writer::from_writer(w);
    let d = records.first().and_then(|r| r.nodes.first()).map_or(0, |n| n.theta.len());
    let mut header: Vec<String> = ["iter", "node", "a", "w_norm", "r"].iter().map(|s| s.to_string()).collect();
    header.extend((0..d).map(|c| format!("theta_{c}")));
    header.extend(["eta".to_string(), "beta".to_string()]);
    out.write_record(&header)?;
    for rec in records {
        for (j, n) in rec.nodes.iter().enumerate() {
            let mut row = vec![rec.iter.to_string(), j.to_string(), fmt_f64(n.a), fmt_f64(n.w_norm), fmt_f64(n.r)];
            row.extend(n.theta.iter().map(|&t| fmt_f64(t)));
            row.extend([fmt_f64(n.eta), fmt_f64(n.beta)]);
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `(θ, f*(p)(θ))` samples for plotting a certificate in low dimension.
pub fn write_landscape_csv<W: Write>(mut w: W, points: &[(Vec<f64>, f64)]) -> Result<()> {
    schema_line(&mut w, LANDSCAPE_SCHEMA)?;
    let mut out = csv::Writer::from_writer(w);
    let d = points.first().map_or(0, |p| p.0.len());
    let mut header: Vec<String> = (0..d).map(|c| format!("theta_{c}")).collect();
    header.push("f_star".into());
    out.write_record(&header)?;
    for (theta, v) in points {
        ensure!(theta.len() == d, "landscape points differ in dimension");
        let mut row: Vec<String> = theta.iter().map(|&t| fmt_f64(t)).collect();
        row.push(fmt_f64(*v));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
