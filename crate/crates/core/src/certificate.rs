//! Dual certificates for the teacher's support.
//!
//! For a dual vector `p ∈ R^n` the induced function on the sphere is
//! `f*(p)(θ) = (1/n) Σ p_i σ(⟨θ, x_i⟩)`. The pre-certificate `p†` is the
//! minimum-norm `p` with `f*(p)(θ_j∘) = 1` and `∇f*(p)(θ_j∘) = θ_j∘` for every
//! teacher direction; it certifies exact support recovery as `λ → 0` when
//! `|f*(p†)| < 1` away from the teacher directions.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::geometry::{self, arc_cosine_profile, dot, norm, UnitVector};
use crate::model::{check_orthogonal, Dataset};
use crate::objective::project_tangent;
use crate::rng::{seeded_rng, Stream};

/// Systems with a larger condition number are treated as rank-deficient.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative singular-value cutoff of the pseudo-inverse fallback.
pub const PINV_CUTOFF: f64 = 1e-10;

fn check_dirs(teacher_dirs: &[UnitVector], d: usize) -> Result<()> {
    ensure!(!teacher_dirs.is_empty(), "need at least one teacher direction");
    for (j, t) in teacher_dirs.iter().enumerate() {
        ensure!(t.dim() == d, "teacher direction {j} has dimension {} instead of {d}", t.dim());
    }
    ensure!(teacher_dirs.len() <= d, "{} teacher directions exceed dimension {d}", teacher_dirs.len());
    Ok(())
}

/// The `md x n` matrix whose block row `j`, column `i` is
/// `x_i 1{⟨θ_j, x_i⟩ ≥ 0}`.
pub fn build_x0(teacher_dirs: &[UnitVector], data: &Dataset) -> Result<DMatrix<f64>> {
    let d = data.dim();
    check_dirs(teacher_dirs, d)?;
    let m = teacher_dirs.len();
    let mut x0 = DMatrix::zeros(m * d, data.len());
    for (i, (x, _)) in data.iter().enumerate() {
        for (j, t) in teacher_dirs.iter().enumerate() {
            if dot(t, x) >= 0.0 {
                for (c, xc) in x.iter().enumerate() {
                    x0[(j * d + c, i)] = *xc;
                }
            }
        }
    }
    Ok(x0)
}

fn stacked(teacher_dirs: &[UnitVector]) -> DVector<f64> {
    DVector::from_iterator(teacher_dirs.len() * teacher_dirs[0].dim(), teacher_dirs.iter().flat_map(|t| t.iter().copied()))
}

/// Spectrum summary of `X₀X₀ᵀ`, from the singular values of `X₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conditioning {
    pub dim: usize,
    /// Number of singular values above `PINV_CUTOFF` times the largest.
    pub rank: usize,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Condition number of `X₀X₀ᵀ`.
    #[serde(deserialize_with = "crate::io::null_as_infinity")]
    pub condition: f64,
}

fn conditioning(sigma: &DVector<f64>, dim: usize) -> Conditioning {
    let max = sigma.iter().cloned().fold(0.0, f64::max);
    // A wide X₀ has fewer singular values than rows; the rest are zero.
    let min = if sigma.len() < dim { 0.0 } else { sigma.iter().cloned().fold(f64::INFINITY, f64::min) };
    let rank = sigma.iter().filter(|&&s| s > PINV_CUTOFF * max).count();
    let condition = if min > 0.0 { (max / min).powi(2) } else { f64::INFINITY };
    Conditioning { dim, rank, min_eigenvalue: min * min, max_eigenvalue: max * max, condition }
}

/// A dual vector together with the inputs that define `f*(p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualVector<'a> {
    pub p: Vec<f64>,
    data: &'a Dataset,
}

impl<'a> DualVector<'a> {
    pub fn new(p: Vec<f64>, data: &'a Dataset) -> Result<Self> {
        ensure!(p.len() == data.len(), "dual vector has length {} but the dataset has {} samples", p.len(), data.len());
        Ok(DualVector { p, data })
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    /// `‖p‖₂ / √n`.
    pub fn rms(&self) -> f64 {
        norm(&self.p) / (self.p.len() as f64).sqrt()
    }

    fn eval_raw(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let mut grad = vec![0.0; self.data.dim()];
        for ((x, _), p) in self.data.iter().zip(&self.p) {
            let u = dot(theta, x);
            if u >= 0.0 {
                value += p * u;
                grad.iter_mut().zip(x).for_each(|(g, xc)| *g += p * xc);
            }
        }
        let inv_n = 1.0 / self.p.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv_n);
        (value * inv_n, grad)
    }
}

/// `p† = n X₀ᵀ (X₀X₀ᵀ)⁻¹ [θ₁∘; …; θ_m∘]`, solved by Cholesky.
pub fn precertificate<'a>(teacher_dirs: &[UnitVector], data: &'a Dataset) -> Result<DualVector<'a>> {
    let (p, _) = precertificate_with_conditioning(teacher_dirs, data)?;
    Ok(p)
}

/// As [`precertificate`], also returning the spectrum summary.
pub fn precertificate_with_conditioning<'a>(
    teacher_dirs: &[UnitVector],
    data: &'a Dataset,
) -> Result<(DualVector<'a>, Conditioning)> {
    let x0 = build_x0(teacher_dirs, data)?;
    let cond = conditioning(&x0.singular_values(), x0.nrows());
    let k = &x0 * x0.transpose();
    if cond.rank < cond.dim || cond.condition.partial_cmp(&MAX_CONDITION).is_none_or(|o| o.is_gt()) {
        return Err(Error::RankDeficient { rank: cond.rank, dim: cond.dim, condition: cond.condition });
    }
    let chol = k.cholesky().ok_or(Error::RankDeficient { rank: cond.rank, dim: cond.dim, condition: cond.condition })?;
    let z = chol.solve(&stacked(teacher_dirs));
    let p = (x0.transpose() * z) * data.len() as f64;
    Ok((DualVector { p: p.iter().copied().collect(), data }, cond))
}

/// Minimum-norm version of `p†` through the pseudo-inverse of `X₀X₀ᵀ`, for
/// rank-deficient systems: with `X₀ = UΣVᵀ`, `p = n V Σ⁺ Uᵀ [θ₁∘; …]`.
pub fn precertificate_pinv<'a>(teacher_dirs: &[UnitVector], data: &'a Dataset) -> Result<(DualVector<'a>, Conditioning)> {
    let x0 = build_x0(teacher_dirs, data)?;
    let svd = x0.clone().svd(true, true);
    let cond = conditioning(&svd.singular_values, x0.nrows());
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let rhs = u.transpose() * stacked(teacher_dirs);
    let scaled = DVector::from_iterator(
        rhs.len(),
        rhs.iter().zip(svd.singular_values.iter()).map(|(r, &s)| if s > PINV_CUTOFF * max { r / s } else { 0.0 }),
    );
    let p = (v_t.transpose() * scaled) * data.len() as f64;
    Ok((DualVector { p: p.iter().copied().collect(), data }, cond))
}

/// `f*(p)(θ)` and its Euclidean gradient `(1/n) Σ p_i x_i 1{⟨θ,x_i⟩ ≥ 0}`.
pub fn dual_eval(p: &DualVector<'_>, theta: &UnitVector) -> Result<(f64, Vec<f64>)> {
    ensure!(theta.dim() == p.data.dim(), "theta dimension {} != data dimension {}", theta.dim(), p.data.dim());
    Ok(p.eval_raw(theta))
}

/// Coefficients of the population certificate
/// `E[(1/n)X(θ)X₀ᵀ] E[(1/n)X₀X₀ᵀ]⁻¹` restricted to the teacher frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationConstants {
    pub m: usize,
    pub a: f64,
    pub b: f64,
}

pub fn population_constants(m: usize) -> Result<PopulationConstants> {
    ensure!(m >= 1, "teacher width must be positive");
    let mf = m as f64;
    let den = 2.0 * PI * mf * mf + (PI * PI - 2.0 * PI + 4.0) * mf + PI * PI + 4.0 * PI - 4.0;
    Ok(PopulationConstants { m, a: 2.0 * PI * (PI * mf + PI + 2.0) / den, b: -2.0 * PI * PI / den })
}

/// The large-`n` limit `f̄` of `f*(p†)` for an orthonormal teacher.
pub fn population_certificate(theta: &UnitVector, teacher_dirs: &[UnitVector]) -> Result<f64> {
    check_dirs(teacher_dirs, theta.dim())?;
    check_orthogonal(teacher_dirs)?;
    let c = population_constants(teacher_dirs.len())?;
    Ok(population_certificate_unchecked(theta, teacher_dirs, &c))
}

pub(crate) fn population_certificate_unchecked(theta: &[f64], teacher_dirs: &[UnitVector], c: &PopulationConstants) -> f64 {
    let phis: Vec<f64> = teacher_dirs.iter().map(|t| geometry::angle_between(theta, t)).collect();
    let own: f64 = phis.iter().map(|&p| arc_cosine_profile(p)).sum();
    // Σ_j Σ_{j'≠j} (π−φ_j)/π cos φ_{j'} = Σ_j (π−φ_j)/π (C − cos φ_j).
    let cos_sum: f64 = phis.iter().map(|p| p.cos()).sum();
    let cross: f64 = phis.iter().map(|&p| (PI - p) / PI * (cos_sum - p.cos())).sum();
    (c.a + c.b) * own + c.b * cross
}

/// `E[(1/n) X₀X₀ᵀ]` in closed form.
pub fn expected_k0(teacher_dirs: &[UnitVector], d: usize) -> Result<DMatrix<f64>> {
    check_dirs(teacher_dirs, d)?;
    check_orthogonal(teacher_dirs)?;
    let m = teacher_dirs.len();
    let df = d as f64;
    let mut k = DMatrix::zeros(m * d, m * d);
    for j1 in 0..m {
        for j2 in 0..m {
            for r in 0..d {
                for c in 0..d {
                    let v = if j1 == j2 {
                        if r == c { 0.5 / df } else { 0.0 }
                    } else {
                        let (t1, t2) = (&teacher_dirs[j1], &teacher_dirs[j2]);
                        let diag = if r == c { 0.25 / df } else { 0.0 };
                        diag + (t1[r] * t2[c] + t2[r] * t1[c]) / (2.0 * PI * df)
                    };
                    k[(j1 * d + r, j2 * d + c)] = v;
                }
            }
        }
    }
    Ok(k)
}

/// Lower bound `(1/d)(1/4 − 1/2π)` on the smallest eigenvalue of
/// [`expected_k0`].
pub fn expected_k0_floor(d: usize) -> f64 {
    (0.25 - 0.5 / PI) / d as f64
}

/// Evaluation of a dual vector against the non-degenerate source condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateReport {
    /// `f*(p)(θ_j∘)` for each teacher direction.
    pub values_at_teacher: Vec<f64>,
    /// `‖∇f*(p)(θ_j∘) − θ_j∘‖`.
    pub gradient_residuals: Vec<f64>,
    /// Sampled supremum of `|f*(p)|` over probes outside the caps.
    pub max_off_support: f64,
    pub probe_count: usize,
    pub cap_radius: f64,
    /// Largest `f*(p)` along the geodesic rays leaving each teacher
    /// direction (start points excluded).
    pub max_local_ray: f64,
    /// Largest `|f*(p)(θ) − ⟨θ, θ_j∘⟩|` along the rays.
    pub max_local_linear_gap: f64,
    pub ray_points: usize,
    pub seed: u64,
}

impl CertificateReport {
    pub fn satisfies_ndsc(&self, tolerance: f64) -> bool {
        self.values_at_teacher.iter().all(|v| (v - 1.0).abs() <= tolerance)
            && self.gradient_residuals.iter().all(|g| *g <= tolerance)
            && self.max_off_support < 1.0
            && self.max_local_ray < 1.0
    }
}

/// Points per geodesic ray in [`ndsc_report`].
pub const RAY_POINTS: usize = 64;
/// Rays leaving each teacher direction in [`ndsc_report`].
pub const RAYS_PER_DIRECTION: usize = 8;

/// Point at angle `t` along the great circle from `theta` in tangent
/// direction `u` (unit, orthogonal to `theta`).
fn geodesic_point(theta: &[f64], u: &[f64], t: f64) -> Vec<f64> {
    let (s, c) = t.sin_cos();
    theta.iter().zip(u).map(|(a, b)| c * a + s * b).collect()
}

fn random_tangent(theta: &[f64], rng: &mut crate::rng::SeededRng) -> Vec<f64> {
    loop {
        let v = geometry::sample_one(theta.len(), rng).into_inner();
        let t = project_tangent(theta, &v);
        let n = norm(&t);
        if n > 1e-3 {
            return t.into_iter().map(|c| c / n).collect();
        }
    }
}

pub fn ndsc_report(
    p: &DualVector<'_>,
    teacher_dirs: &[UnitVector],
    probes: usize,
    cap_radius: f64,
    seed: u64,
) -> Result<CertificateReport> {
    let d = p.data.dim();
    check_dirs(teacher_dirs, d)?;
    ensure!(probes >= 1, "probe count must be positive");
    ensure!(cap_radius > 0.0 && cap_radius < PI / 4.0, "cap radius must lie in (0, π/4), got {cap_radius}");
    let mut values_at_teacher = Vec::new();
    let mut gradient_residuals = Vec::new();
    for t in teacher_dirs {
        let (v, g) = p.eval_raw(t);
        values_at_teacher.push(v);
        gradient_residuals.push(norm(&g.iter().zip(t.iter()).map(|(a, b)| a - b).collect::<Vec<_>>()));
    }
    let mut rng = seeded_rng(seed, Stream::Probes);
    let cos_cap = cap_radius.cos();
    let mut max_off = 0.0f64;
    let mut probe_count = 0;
    for _ in 0..probes {
        let theta = geometry::sample_one(d, &mut rng);
        if teacher_dirs.iter().any(|t| dot(t, &theta) > cos_cap) {
            continue;
        }
        probe_count += 1;
        max_off = max_off.max(p.eval_raw(&theta).0.abs());
    }
    let mut max_ray = f64::NEG_INFINITY;
    let mut max_gap = 0.0f64;
    for t in teacher_dirs {
        for _ in 0..RAYS_PER_DIRECTION {
            let u = random_tangent(t, &mut rng);
            for i in 1..=RAY_POINTS {
                let s = 2.0 * cap_radius * i as f64 / RAY_POINTS as f64;
                let theta = geodesic_point(t, &u, s);
                let v = p.eval_raw(&theta).0;
                max_ray = max_ray.max(v);
                max_gap = max_gap.max((v - dot(&theta, t)).abs());
            }
        }
    }
    Ok(CertificateReport {
        values_at_teacher,
        gradient_residuals,
        max_off_support: max_off,
        probe_count,
        cap_radius,
        max_local_ray: max_ray,
        max_local_linear_gap: max_gap,
        ray_points: RAY_POINTS * RAYS_PER_DIRECTION * teacher_dirs.len(),
        seed,
    })
}

/// Sampled `sup_θ |f*(p)(θ) − f̄(θ)|` over uniform probes.
pub fn sup_gap_to_population(p: &DualVector<'_>, teacher_dirs: &[UnitVector], probes: usize, seed: u64) -> Result<f64> {
    let d = p.data.dim();
    check_dirs(teacher_dirs, d)?;
    check_orthogonal(teacher_dirs)?;
    ensure!(probes >= 1, "probe count must be positive");
    let c = population_constants(teacher_dirs.len())?;
    let mut rng = seeded_rng(seed, Stream::Probes);
    let mut sup = 0.0f64;
    for _ in 0..probes {
        let theta = geometry::sample_one(d, &mut rng);
        let gap = (p.eval_raw(&theta).0 - population_certificate_unchecked(&theta, teacher_dirs, &c)).abs();
        sup = sup.max(gap);
    }
    Ok(sup)
}

/// Spectral norm of a symmetric matrix.
pub fn symmetric_op_norm(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().fold(0.0, |a, l| a.max(l.abs()))
}
