//! Teacher and student networks, their measure representation, datasets and
//! exact population distances.
//!
//! A width-`M` network `x ↦ Σ a_j σ(⟨w_j, x⟩)` is 1-homogeneous in each
//! `w_j`, so it equals `∫ σ(⟨θ, x⟩) dν(θ)` for the signed atomic measure
//! `ν = Σ a_j‖w_j‖ δ_{w_j/‖w_j‖}` on the sphere.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::geometry::{self, dot, norm, relu, UnitVector};
use crate::rng::{seeded_rng, Stream};

/// Anything that can be evaluated as a ReLU network on `R^d`.
pub trait Network {
    fn dim(&self) -> usize;

    /// Evaluates at `x` without checking its dimension.
    fn eval(&self, x: &[f64]) -> f64;
}

/// The planted network: orthonormal directions with positive amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherNetwork {
    directions: Vec<UnitVector>,
    amplitudes: Vec<f64>,
}

/// Orthogonality tolerance for teacher directions.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-10;

impl TeacherNetwork {
    pub fn new(directions: Vec<UnitVector>, amplitudes: Vec<f64>) -> Result<Self> {
        ensure!(!directions.is_empty(), "teacher needs at least one direction");
        ensure!(
            directions.len() == amplitudes.len(),
            "{} directions but {} amplitudes",
            directions.len(),
            amplitudes.len()
        );
        let d = directions[0].dim();
        ensure!(directions.iter().all(|t| t.dim() == d), "teacher directions differ in dimension");
        ensure!(directions.len() <= d, "cannot fit {} orthogonal directions in dimension {d}", directions.len());
        for (j, r) in amplitudes.iter().enumerate() {
            ensure!(r.is_finite() && *r > 0.0, "teacher amplitude {j} must be positive, got {r}");
        }
        check_orthogonal(&directions)?;
        Ok(TeacherNetwork { directions, amplitudes })
    }

    pub fn width(&self) -> usize {
        self.directions.len()
    }

    pub fn directions(&self) -> &[UnitVector] {
        &self.directions
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// `ν∘ = Σ r_j∘ δ_{θ_j∘}`.
    pub fn measure(&self) -> AtomicMeasure {
        AtomicMeasure {
            d: self.dim(),
            atoms: self
                .directions
                .iter()
                .zip(&self.amplitudes)
                .map(|(t, &r)| Atom { mass: r, direction: t.clone() })
                .collect(),
        }
    }
}

impl Network for TeacherNetwork {
    fn dim(&self) -> usize {
        self.directions[0].dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.directions.iter().zip(&self.amplitudes).map(|(t, r)| r * relu(dot(t, x))).sum()
    }
}

pub(crate) fn check_orthogonal(dirs: &[UnitVector]) -> Result<()> {
    for a in 0..dirs.len() {
        for b in a + 1..dirs.len() {
            let c = dot(&dirs[a], &dirs[b]);
            ensure!(
                c.abs() <= ORTHOGONALITY_TOLERANCE,
                "directions {a} and {b} are not orthogonal (inner product {c:e})"
            );
        }
    }
    Ok(())
}

/// How teacher directions are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DirectionMode {
    /// The first `m` canonical basis vectors.
    Canonical,
    /// Gram-Schmidt orthonormalization of seeded Gaussian vectors.
    Random { seed: u64 },
}

pub fn make_teacher(m: usize, d: usize, amplitudes: &[f64], mode: DirectionMode) -> Result<TeacherNetwork> {
    ensure!(m >= 1, "teacher width must be positive");
    ensure!(d >= 2, "dimension must be >= 2, got {d}");
    ensure!(m <= d, "teacher width {m} exceeds dimension {d}: orthogonality impossible");
    ensure!(amplitudes.len() == m, "expected {m} amplitudes, got {}", amplitudes.len());
    let directions = match mode {
        DirectionMode::Canonical => (0..m).map(|j| UnitVector::basis(d, j)).collect::<Result<Vec<_>>>()?,
        DirectionMode::Random { seed } => random_orthonormal(m, d, seed)?,
    };
    TeacherNetwork::new(directions, amplitudes.to_vec())
}

fn random_orthonormal(m: usize, d: usize, seed: u64) -> Result<Vec<UnitVector>> {
    let mut rng = seeded_rng(seed, Stream::Teacher);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    while basis.len() < m {
        let mut v = geometry::sample_one(d, &mut rng).into_inner();
        // Two passes of modified Gram-Schmidt keep the frame orthogonal to
        // machine precision.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = norm(&v);
        if n < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }
    basis.into_iter().map(UnitVector::new).collect()
}

/// Trainable student parameters `(a_j, w_j)`, stored flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentParams {
    d: usize,
    a: Vec<f64>,
    /// Row-major `M x d`.
    w: Vec<f64>,
}

impl StudentParams {
    pub fn new(d: usize, a: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        ensure!(d >= 1, "dimension must be positive");
        ensure!(w.len() == a.len() * d, "expected {} input weights, got {}", a.len() * d, w.len());
        Ok(StudentParams { d, a, w })
    }

    /// Builds from `(a_j, w_j)` pairs.
    pub fn from_nodes<'a>(d: usize, nodes: impl IntoIterator<Item = (f64, &'a [f64])>) -> Result<Self> {
        let mut a = Vec::new();
        let mut w = Vec::new();
        for (aj, wj) in nodes {
            ensure!(wj.len() == d, "input weight has dimension {} instead of {d}", wj.len());
            a.push(aj);
            w.extend_from_slice(wj);
        }
        StudentParams::new(d, a, w)
    }

    pub fn width(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn w(&self, j: usize) -> &[f64] {
        &self.w[j * self.d..(j + 1) * self.d]
    }

    pub fn w_flat(&self) -> &[f64] {
        &self.w
    }

    pub fn w_norm(&self, j: usize) -> f64 {
        norm(self.w(j))
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.a, &mut self.w)
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.w).all(|v| v.is_finite())
    }
}

impl Network for StudentParams {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.a.iter().enumerate().map(|(j, aj)| aj * relu(dot(self.w(j), x))).sum()
    }
}

pub fn forward_params(params: &StudentParams, x: &UnitVector) -> Result<f64> {
    ensure!(x.dim() == params.dim(), "input dimension {} != {}", x.dim(), params.dim());
    Ok(params.eval(x))
}

/// A single Dirac atom `r δ_θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mass: f64,
    pub direction: UnitVector,
}

/// Signed atomic measure `Σ r_j δ_{θ_j}` on `S^{d-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    d: usize,
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn empty(d: usize) -> Self {
        AtomicMeasure { d, atoms: Vec::new() }
    }

    pub fn new(d: usize, atoms: Vec<Atom>) -> Result<Self> {
        ensure!(d >= 2, "dimension must be >= 2, got {d}");
        for (j, at) in atoms.iter().enumerate() {
            ensure!(at.direction.dim() == d, "atom {j} has dimension {} instead of {d}", at.direction.dim());
            ensure!(at.mass.is_finite(), "atom {j} has non-finite mass");
        }
        Ok(AtomicMeasure { d, atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn push(&mut self, mass: f64, direction: UnitVector) -> Result<()> {
        ensure!(direction.dim() == self.d, "atom dimension {} != {}", direction.dim(), self.d);
        self.atoms.push(Atom { mass, direction });
        Ok(())
    }

    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass.abs()).sum()
    }

    /// Atoms with strictly positive mass (the Hahn–Jordan positive part).
    pub fn positive_part(&self) -> AtomicMeasure {
        self.filtered(|m| m > 0.0)
    }

    /// Atoms with strictly negative mass, kept with their negative sign.
    pub fn negative_part(&self) -> AtomicMeasure {
        self.filtered(|m| m < 0.0)
    }

    fn filtered(&self, keep: impl Fn(f64) -> bool) -> AtomicMeasure {
        AtomicMeasure { d: self.d, atoms: self.atoms.iter().filter(|a| keep(a.mass)).cloned().collect() }
    }

    /// `self - other` as a concatenated atom list.
    pub fn difference(&self, other: &AtomicMeasure) -> Result<AtomicMeasure> {
        ensure!(self.d == other.d, "measure dimensions differ: {} vs {}", self.d, other.d);
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().map(|a| Atom { mass: -a.mass, direction: a.direction.clone() }));
        Ok(AtomicMeasure { d: self.d, atoms })
    }
}

impl Network for AtomicMeasure {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.atoms.iter().map(|a| a.mass * relu(dot(&a.direction, x))).sum()
    }
}

pub fn forward_measure(measure: &AtomicMeasure, x: &UnitVector) -> Result<f64> {
    ensure!(x.dim() == measure.dim(), "input dimension {} != {}", x.dim(), measure.dim());
    Ok(measure.eval(x))
}

/// Direction assigned to a node with `w = 0`; its mass is zero.
pub fn fallback_direction(d: usize) -> UnitVector {
    UnitVector::basis(d.max(2), 0).expect("basis vector")
}

/// `ν = Σ a_j‖w_j‖ δ_{w_j/‖w_j‖}`.
pub fn to_measure(params: &StudentParams) -> AtomicMeasure {
    let d = params.dim();
    let atoms = (0..params.width())
        .map(|j| {
            let w = params.w(j);
            let n = norm(w);
            if n > 0.0 {
                let dir = w.iter().map(|c| c / n).collect::<Vec<_>>();
                // Normalizing a finite nonzero vector lands within rounding of
                // the sphere; re-normalize once more if it does not.
                let direction = UnitVector::new(dir.clone()).or_else(|_| UnitVector::normalize(dir)).unwrap_or_else(|_| fallback_direction(d));
                Atom { mass: params.a()[j] * n, direction }
            } else {
                Atom { mass: 0.0, direction: fallback_direction(d) }
            }
        })
        .collect();
    AtomicMeasure { d, atoms }
}

/// Inputs on the unit sphere with noiseless targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    d: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(d: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        ensure!(d >= 2, "dimension must be >= 2, got {d}");
        ensure!(inputs.len() == targets.len() * d, "expected {} input coordinates, got {}", targets.len() * d, inputs.len());
        ensure!(targets.iter().all(|y| y.is_finite()), "targets must be finite");
        for (i, x) in inputs.chunks(d).enumerate() {
            let n = norm(x);
            ensure!(
                (n - 1.0).abs() <= UnitVector::NORM_TOLERANCE,
                "input {i} has norm {n}, expected 1"
            );
        }
        Ok(Dataset { d, inputs, targets })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d..(i + 1) * self.d]
    }

    pub fn inputs_flat(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.inputs.chunks(self.d).zip(self.targets.iter().copied())
    }
}

/// Samples `n` uniform inputs and labels them with the teacher.
pub fn make_dataset(teacher: &TeacherNetwork, n: usize, seed: u64) -> Result<Dataset> {
    make_dataset_on_stream(teacher, n, seed, Stream::Data)
}

pub(crate) fn make_dataset_on_stream(teacher: &TeacherNetwork, n: usize, seed: u64, stream: Stream) -> Result<Dataset> {
    ensure!(n >= 1, "dataset size must be positive");
    let d = teacher.dim();
    let mut rng = seeded_rng(seed, stream);
    let inputs = geometry::sample_flat(d, n, &mut rng);
    let targets = inputs.chunks(d).map(|x| teacher.eval(x)).collect();
    Dataset::new(d, inputs, targets)
}

/// An independent sample from the same teacher, for held-out evaluation.
pub fn make_holdout(teacher: &TeacherNetwork, n: usize, seed: u64) -> Result<Dataset> {
    make_dataset_on_stream(teacher, n, seed, Stream::Holdout)
}

/// Raw quadratic form `Σ_a Σ_b r_a r_b k(θ_a, θ_b)` of a signed measure.
/// Nonnegative up to rounding because the kernel is positive semidefinite.
pub fn kernel_energy(measure: &AtomicMeasure) -> f64 {
    let atoms = measure.atoms();
    let mut total = 0.0;
    for (i, a) in atoms.iter().enumerate() {
        total += a.mass * a.mass * geometry::relu_kernel_from_angle(0.0, measure.dim());
        for b in &atoms[i + 1..] {
            total += 2.0 * a.mass * b.mass * geometry::relu_kernel_raw(&a.direction, &b.direction);
        }
    }
    total
}

/// `‖f(·; m1) − f(·; m2)‖²` in `L₂(Unif(S^{d-1}))`, exact via the arc-cosine
/// kernel. Rounding below zero is clamped.
pub fn analytic_l2_distance(m1: &AtomicMeasure, m2: &AtomicMeasure) -> Result<f64> {
    let diff = m1.difference(m2)?;
    Ok(kernel_energy(&diff).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_uniform_sphere;

    fn uv(v: &[f64]) -> UnitVector {
        UnitVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn forward_params_examples() {
        let p = StudentParams::new(2, vec![0.0, 0.0], vec![1.0, 2.0, -3.0, 0.5]).unwrap();
        assert_eq!(forward_params(&p, &uv(&[1.0, 0.0])).unwrap(), 0.0);
        let p = StudentParams::new(2, vec![2.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(forward_params(&p, &uv(&[1.0, 0.0])).unwrap(), 2.0);
        assert_eq!(forward_params(&p, &uv(&[-1.0, 0.0])).unwrap(), 0.0);
        assert!(forward_params(&p, &uv(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn to_measure_examples() {
        let p = StudentParams::new(2, vec![2.0, 5.0, -1.0], vec![3.0, 4.0, 0.0, 0.0, 0.0, 2.0]).unwrap();
        let m = to_measure(&p);
        let at = m.atoms();
        assert!((at[0].mass - 10.0).abs() < 1e-15);
        assert!((at[0].direction[0] - 0.6).abs() < 1e-15 && (at[0].direction[1] - 0.8).abs() < 1e-15);
        assert_eq!(at[1].mass, 0.0);
        assert_eq!(at[1].direction.as_slice(), &[1.0, 0.0]);
        assert_eq!(at[2].mass, -2.0);
        assert_eq!(at[2].direction.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn forward_measure_examples() {
        let empty = AtomicMeasure::empty(3);
        assert_eq!(forward_measure(&empty, &uv(&[0.0, 0.0, 1.0])).unwrap(), 0.0);
        let mut m = AtomicMeasure::empty(2);
        m.push(10.0, uv(&[0.6, 0.8])).unwrap();
        assert!((forward_measure(&m, &uv(&[0.6, 0.8])).unwrap() - 10.0).abs() < 1e-14);
    }

    #[test]
    fn measure_representation_is_exact() {
        let d = 4;
        let ws = sample_uniform_sphere(d, 6, 2).unwrap();
        let scales = [0.3, 1.7, 0.0, 2.2, 0.9, 4.0];
        let a = vec![0.5, -1.2, 3.0, 0.7, -0.1, 0.25];
        let w: Vec<f64> = ws.iter().zip(scales).flat_map(|(v, s)| v.iter().map(move |c| c * s)).collect();
        let p = StudentParams::new(d, a, w).unwrap();
        let nu = to_measure(&p);
        for x in sample_uniform_sphere(d, 100, 3).unwrap() {
            let lhs = forward_params(&p, &x).unwrap();
            let rhs = forward_measure(&nu, &x).unwrap();
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn teacher_construction() {
        let t = make_teacher(2, 2, &[1.0, 1.0], DirectionMode::Canonical).unwrap();
        assert_eq!(t.directions()[0].as_slice(), &[1.0, 0.0]);
        assert_eq!(t.directions()[1].as_slice(), &[0.0, 1.0]);
        assert!(make_teacher(3, 2, &[1.0; 3], DirectionMode::Canonical).is_err());
        assert!(make_teacher(2, 3, &[1.0, 0.0], DirectionMode::Canonical).is_err());
        assert!(make_teacher(2, 3, &[1.0, -1.0], DirectionMode::Canonical).is_err());
        for seed in 0..5 {
            let t = make_teacher(5, 7, &[1.0; 5], DirectionMode::Random { seed }).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    let g = dot(&t.directions()[i], &t.directions()[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn dataset_from_single_relu() {
        let t = make_teacher(1, 3, &[1.0], DirectionMode::Canonical).unwrap();
        let data = make_dataset(&t, 500, 4).unwrap();
        for (x, y) in data.iter() {
            assert_eq!(y, x[0].max(0.0));
            assert!(y >= 0.0);
        }
        assert!(data.targets().iter().any(|&y| y > 0.0));
        let again = make_dataset(&t, 500, 4).unwrap();
        assert_eq!(data, again);
    }

    #[test]
    fn dataset_mean_matches_monte_carlo_oracle() {
        // E[σ(⟨θ,X⟩)] estimated independently from fresh sphere samples.
        let t = make_teacher(2, 4, &[1.0, 2.0], DirectionMode::Random { seed: 9 }).unwrap();
        let data = make_dataset(&t, 100_000, 1).unwrap();
        let mean_y = data.targets().iter().sum::<f64>() / data.len() as f64;
        let probes = sample_uniform_sphere(4, 400_000, 77).unwrap();
        let c_d = probes.iter().map(|x| x[0].max(0.0)).sum::<f64>() / probes.len() as f64;
        let want = 3.0 * c_d;
        // sd of y is below 2, so 4 standard errors at n=1e5 is < 0.03.
        assert!((mean_y - want).abs() < 0.03, "{mean_y} vs {want}");
    }

    #[test]
    fn l2_distance_examples() {
        let d = 3;
        let th = uv(&[0.0, 1.0, 0.0]);
        let anti = uv(&[0.0, -1.0, 0.0]);
        let mut a = AtomicMeasure::empty(d);
        a.push(1.0, th.clone()).unwrap();
        assert_eq!(analytic_l2_distance(&a, &a).unwrap(), 0.0);
        let mut b = AtomicMeasure::empty(d);
        b.push(1.0, anti).unwrap();
        let dist = analytic_l2_distance(&a, &b).unwrap();
        assert!((dist - 1.0 / d as f64).abs() < 1e-15);
        assert!(analytic_l2_distance(&a, &AtomicMeasure::empty(2)).is_err());
    }

    #[test]
    fn l2_distance_matches_monte_carlo() {
        let d = 4;
        let dirs = sample_uniform_sphere(d, 10, 21).unwrap();
        let masses = [0.7, -0.3, 1.1, 0.4, -0.9, 0.2, 0.5, -1.4, 0.8, 0.3];
        let mk = |r: std::ops::Range<usize>| {
            AtomicMeasure::new(d, r.map(|i| Atom { mass: masses[i], direction: dirs[i].clone() }).collect()).unwrap()
        };
        let (m1, m2) = (mk(0..5), mk(5..10));
        let exact = analytic_l2_distance(&m1, &m2).unwrap();
        let xs = sample_uniform_sphere(d, 1_000_000, 22).unwrap();
        let (mut s, mut s2) = (0.0, 0.0);
        for x in &xs {
            let v = (m1.eval(x) - m2.eval(x)).powi(2);
            s += v;
            s2 += v * v;
        }
        let n = xs.len() as f64;
        let mean = s / n;
        let se = ((s2 / n - mean * mean) / n).sqrt();
        assert!((mean - exact).abs() < 4.0 * se, "mc {mean} vs {exact} (se {se})");
    }
}
