//! Unit-sphere primitives: sampling, geodesic distance and the ReLU
//! arc-cosine kernel.
//!
//! Vectors are plain `f64` slices; [`UnitVector`] is the validated owned form
//! used at API boundaries.

use std::f64::consts::PI;
use std::ops::Deref;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::rng::{seeded_rng, Stream};

/// A point on the unit sphere `S^{d-1}`, `d >= 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    pub const NORM_TOLERANCE: f64 = 1e-12;

    pub fn new(coords: Vec<f64>) -> Result<Self> {
        ensure!(coords.len() >= 2, "unit vector needs dimension >= 2, got {}", coords.len());
        ensure!(coords.iter().all(|c| c.is_finite()), "unit vector has non-finite coordinates");
        let n = norm(&coords);
        ensure!(
            (n - 1.0).abs() <= Self::NORM_TOLERANCE,
            "vector norm {n} is not 1 within {}",
            Self::NORM_TOLERANCE
        );
        Ok(UnitVector(coords))
    }

    /// Rescales a nonzero vector onto the sphere.
    pub fn normalize(mut coords: Vec<f64>) -> Result<Self> {
        ensure!(coords.len() >= 2, "unit vector needs dimension >= 2, got {}", coords.len());
        let n = norm(&coords);
        ensure!(n.is_finite() && n > 0.0, "cannot normalize a zero or non-finite vector");
        coords.iter_mut().for_each(|c| *c /= n);
        Ok(UnitVector(coords))
    }

    /// The canonical basis vector `e_{axis}` in dimension `d`.
    pub fn basis(d: usize, axis: usize) -> Result<Self> {
        ensure!(d >= 2, "dimension must be >= 2, got {d}");
        ensure!(axis < d, "axis {axis} out of range for dimension {d}");
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        Ok(UnitVector(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for UnitVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        UnitVector::new(v)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(v: UnitVector) -> Vec<f64> {
        v.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn relu(u: f64) -> f64 {
    u.max(0.0)
}

/// `arccos` of an inner product clamped to `[-1, 1]`.
#[inline]
pub fn angle_from_cos(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos()
}

/// Geodesic angle between two unit-norm slices, no validation.
#[inline]
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    angle_from_cos(dot(a, b))
}

pub fn geodesic_dist(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    ensure!(a.dim() == b.dim(), "dimension mismatch: {} vs {}", a.dim(), b.dim());
    Ok(angle_between(a, b))
}

/// Draws `count` i.i.d. uniform points on `S^{d-1}` by normalizing standard
/// Gaussian vectors.
pub fn sample_uniform_sphere(d: usize, count: usize, seed: u64) -> Result<Vec<UnitVector>> {
    ensure!(d >= 2, "dimension must be >= 2, got {d}");
    ensure!(count >= 1, "sample count must be positive");
    let mut rng = seeded_rng(seed, Stream::Sphere);
    Ok((0..count).map(|_| sample_one(d, &mut rng)).collect())
}

pub(crate) fn sample_one<R: Rng + ?Sized>(d: usize, rng: &mut R) -> UnitVector {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-300 {
            v.iter_mut().for_each(|c| *c /= n);
            return UnitVector(v);
        }
    }
}

/// Flat row-major `count x d` block of uniform sphere samples.
pub(crate) fn sample_flat<R: Rng + ?Sized>(d: usize, count: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(d * count);
    for _ in 0..count {
        out.extend_from_slice(&sample_one(d, rng));
    }
    out
}

/// `(π − φ)/π · cos φ + sin φ / π`, the normalized arc-cosine profile.
///
/// Equals `2d · E[σ(⟨θ₁,X⟩)σ(⟨θ₂,X⟩)]` for `X ~ Unif(S^{d-1})` and
/// `φ = dist(θ₁, θ₂)`.
#[inline]
pub fn arc_cosine_profile(phi: f64) -> f64 {
    (PI - phi) / PI * phi.cos() + phi.sin() / PI
}

/// Same profile written in terms of `k = cos φ`.
#[inline]
pub fn arc_cosine_profile_cos(k: f64) -> f64 {
    let k = k.clamp(-1.0, 1.0);
    (PI - k.acos()) / PI * k + (1.0 - k * k).max(0.0).sqrt() / PI
}

/// `E_{X~Unif(S^{d-1})}[σ(⟨θ₁,X⟩) σ(⟨θ₂,X⟩)]` in closed form.
pub fn relu_kernel(theta1: &UnitVector, theta2: &UnitVector) -> Result<f64> {
    let phi = geodesic_dist(theta1, theta2)?;
    Ok(relu_kernel_from_angle(phi, theta1.dim()))
}

#[inline]
pub fn relu_kernel_from_angle(phi: f64, d: usize) -> f64 {
    arc_cosine_profile(phi) / (2.0 * d as f64)
}

/// Unchecked kernel on raw unit-norm slices.
#[inline]
pub(crate) fn relu_kernel_raw(a: &[f64], b: &[f64]) -> f64 {
    relu_kernel_from_angle(angle_between(a, b), a.len())
}

/// Slack forms of the vector and trigonometric inequalities the conic-update
/// analysis relies on. Each function returns `bound - value`, so a valid
/// inequality shows up as a nonnegative number (up to rounding).
pub mod bounds {
    use super::{angle_between, arc_cosine_profile_cos, dot, norm};
    use std::f64::consts::PI;

    /// `‖w−Δw‖ − (‖w‖ − ⟨w,Δw⟩/‖w‖)` together with its two bounds
    /// `0 <= gap <= ‖Δw‖²/‖w‖`. Valid for `‖Δw‖ <= ‖w‖/2`.
    pub fn norm_linearization(w: &[f64], dw: &[f64]) -> (f64, f64) {
        let nw = norm(w);
        let shifted: Vec<f64> = w.iter().zip(dw).map(|(a, b)| a - b).collect();
        let gap = norm(&shifted) - (nw - dot(w, dw) / nw);
        (gap, dot(dw, dw) / nw)
    }

    /// Norm of the second-order remainder of the direction map
    /// `w ↦ w/‖w‖` and the bound `5‖Δw‖²/‖w‖²`.
    pub fn direction_linearization(w: &[f64], dw: &[f64]) -> (f64, f64) {
        let nw = norm(w);
        let shifted: Vec<f64> = w.iter().zip(dw).map(|(a, b)| a - b).collect();
        let ns = norm(&shifted);
        let wdw = dot(w, dw);
        let rem: Vec<f64> = (0..w.len())
            .map(|i| {
                let proj = dw[i] - wdw / (nw * nw) * w[i];
                shifted[i] / ns - w[i] / nw + proj / nw
            })
            .collect();
        (norm(&rem), 5.0 * dot(dw, dw) / (nw * nw))
    }

    /// Returns `(dist²/6, 1 − ⟨θ,θ'⟩, dist²/2)`.
    pub fn chord_vs_angle(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
        let phi = angle_between(a, b);
        (phi * phi / 6.0, 1.0 - dot(a, b), phi * phi / 2.0)
    }

    /// `1/π + k/2 + (1/2 − 1/π)k² − profile(k)`, nonnegative on `[-1, 1]`.
    pub fn profile_quadratic_slack(k: f64) -> f64 {
        1.0 / PI + k / 2.0 + (0.5 - 1.0 / PI) * k * k - arc_cosine_profile_cos(k)
    }

    /// `(k₁+k₂−r)/2 − [profile(k₁) + profile(k₂) − profile(r) − 1/π]` with
    /// `r = √(k₁²+k₂²) <= 1`.
    pub fn profile_split_slack(k1: f64, k2: f64) -> f64 {
        let r = (k1 * k1 + k2 * k2).sqrt().min(1.0);
        let lhs = arc_cosine_profile_cos(k1) + arc_cosine_profile_cos(k2)
            - arc_cosine_profile_cos(r)
            - 1.0 / PI;
        0.5 * (k1 + k2 - r) - lhs
    }

    /// `(k₁+k₂−r) − [−arccos k₁ − arccos k₂ + arccos r + π/2]`.
    pub fn arccos_split_slack(k1: f64, k2: f64) -> f64 {
        let r = (k1 * k1 + k2 * k2).sqrt().min(1.0);
        let lhs = -k1.acos() - k2.acos() + r.acos() + PI / 2.0;
        (k1 + k2 - r) - lhs
    }

    /// `arccos(r) + π/2 − arccos k₁ − arccos k₂`, nonnegative for
    /// `k₁, k₂ >= 0`.
    pub fn arccos_sum_slack(k1: f64, k2: f64) -> f64 {
        let r = (k1 * k1 + k2 * k2).sqrt().min(1.0);
        r.acos() + PI / 2.0 - k1.acos() - k2.acos()
    }
}
