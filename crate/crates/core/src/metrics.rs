//! Recovery and convergence diagnostics on measures and trajectories.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::geometry::{self, angle_between, dot, UnitVector};
use crate::model::{analytic_l2_distance, AtomicMeasure, Dataset, Network, TeacherNetwork};
use crate::optimizer::TrajectoryRecord;
use crate::rng::{seeded_rng, Stream};

/// `min_{i,j} |dist(θ_j, x_i) − π/2|`: how close any input sits to a
/// teacher's activation boundary.
pub fn rho_margin(teacher_dirs: &[UnitVector], data: &Dataset) -> Result<f64> {
    ensure!(!data.is_empty(), "dataset is empty");
    ensure!(!teacher_dirs.is_empty(), "need at least one teacher direction");
    let mut margin = f64::INFINITY;
    for t in teacher_dirs {
        ensure!(t.dim() == data.dim(), "teacher dimension {} != data dimension {}", t.dim(), data.dim());
        for (x, _) in data.iter() {
            // |arccos c − π/2| = arcsin |c|
            margin = margin.min(dot(t, x).abs().min(1.0).asin());
        }
    }
    Ok(margin)
}

/// `Γ(x + 1/2) / Γ(x + 1)`-style ratio `Γ((d−1)/2) / Γ(d/2)`, exact by recursion
/// from `Γ(1/2) = √π` and `Γ(1) = 1`.
fn gamma_half_ratio(d: usize) -> f64 {
    fn gamma_half_integer(twice: usize) -> f64 {
        // Γ(twice / 2) for twice >= 1.
        let (mut v, mut x) = if twice % 2 == 1 { (PI.sqrt(), 0.5) } else { (1.0, 1.0) };
        while 2.0 * x < twice as f64 - 0.5 {
            v *= x;
            x += 1.0;
        }
        v
    }
    gamma_half_integer(d - 1) / gamma_half_integer(d)
}

/// Typical size `√π Γ((d−1)/2) / (2nm Γ(d/2))` of [`rho_margin`] for uniform
/// inputs.
pub fn rho_margin_scale(n: usize, m: usize, d: usize) -> f64 {
    PI.sqrt() * gamma_half_ratio(d) / (2.0 * n as f64 * m as f64)
}

/// Contribution of one reference atom's neighborhood to [`d_rho`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodTerms {
    /// Reference mass `r_j*`.
    pub target: f64,
    /// Signed mass inside the ball, `r̄_j`.
    pub rbar: f64,
    /// `Σ |r| dist²(θ, θ_j*)` over same-sign atoms in the ball.
    pub delta_theta: f64,
    /// `Σ |r|` over opposite-sign atoms in the ball.
    pub delta_r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DRhoBreakdown {
    pub rho: f64,
    pub terms: Vec<NeighborhoodTerms>,
    /// TV mass outside every ball.
    pub r0: f64,
    pub total: f64,
}

impl DRhoBreakdown {
    pub fn amplitude_part(&self) -> f64 {
        self.terms.iter().map(|t| (t.rbar - t.target).powi(2)).sum()
    }
}

/// Index of the ball (of radius `rho` around `centers`) containing `theta`.
fn ball_index(theta: &[f64], centers: &[&UnitVector], rho: f64) -> Option<(usize, f64)> {
    centers.iter().enumerate().find_map(|(j, c)| {
        let dist = angle_between(theta, c);
        (dist < rho).then_some((j, dist))
    })
}

fn check_separated(centers: &[&UnitVector], rho: f64) -> Result<()> {
    for a in 0..centers.len() {
        for b in a + 1..centers.len() {
            let dist = angle_between(centers[a], centers[b]);
            ensure!(dist > 2.0 * rho, "reference atoms {a} and {b} are {dist} apart, not more than 2ρ = {}", 2.0 * rho);
        }
    }
    Ok(())
}

/// Local-mass distance between an iterate and a sparse reference measure.
pub fn d_rho(student: &AtomicMeasure, optimal: &AtomicMeasure, rho: f64) -> Result<DRhoBreakdown> {
    ensure!(rho.is_finite() && rho > 0.0, "rho must be positive, got {rho}");
    ensure!(student.dim() == optimal.dim(), "measure dimensions differ");
    let centers: Vec<&UnitVector> = optimal.atoms().iter().map(|a| &a.direction).collect();
    check_separated(&centers, rho)?;
    let mut terms: Vec<NeighborhoodTerms> = optimal
        .atoms()
        .iter()
        .map(|a| NeighborhoodTerms { target: a.mass, rbar: 0.0, delta_theta: 0.0, delta_r: 0.0 })
        .collect();
    let mut r0 = 0.0;
    for atom in student.atoms() {
        if atom.mass == 0.0 {
            continue;
        }
        match ball_index(&atom.direction, &centers, rho) {
            Some((j, dist)) => {
                let t = &mut terms[j];
                t.rbar += atom.mass;
                if atom.mass * t.target > 0.0 {
                    t.delta_theta += atom.mass.abs() * dist * dist;
                } else {
                    t.delta_r += atom.mass.abs();
                }
            }
            None => r0 += atom.mass.abs(),
        }
    }
    let total = terms.iter().map(|t| (t.rbar - t.target).powi(2) + t.delta_theta + t.delta_r).sum::<f64>() + r0;
    Ok(DRhoBreakdown { rho, terms, r0, total })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherMatch {
    /// Student atom indices inside this teacher's neighborhood.
    pub atoms: Vec<usize>,
    pub rbar: f64,
    pub target: f64,
    /// Mass-weighted RMS angle `√(Σ|r| dist² / Σ|r|)` of the matched atoms.
    pub direction_rms: f64,
    /// `|r|` of matched atoms whose sign differs from the teacher's.
    pub opposite_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub rho: f64,
    pub matches: Vec<TeacherMatch>,
    /// `Σ_j (r̄_j − r_j∘)²`
    pub amplitude_error: f64,
    /// `Σ_j Σ_{i ∈ N_j} |r_i| dist²(θ_i, θ_j∘)`
    pub direction_error: f64,
    pub stray_mass: f64,
    /// `2√2 (Σ_j |r̄_j − r_j∘| + Σ_j Σ_{i∈N_j} |r_i| ‖θ_i − θ_j∘‖ + r₀)`, an
    /// upper bound on `sup_x |f(x;ν) − f∘(x)|` over the unit sphere.
    pub sup_error: f64,
    /// Exact `‖f(·;ν) − f∘‖²` in `L₂(Unif(S^{d−1}))`.
    pub l2_distance: f64,
}

pub fn recovery_report(student: &AtomicMeasure, teacher: &TeacherNetwork, rho: f64) -> Result<RecoveryReport> {
    ensure!(rho.is_finite() && rho > 0.0, "rho must be positive, got {rho}");
    let reference = teacher.measure();
    ensure!(student.dim() == reference.dim(), "measure dimensions differ");
    let centers: Vec<&UnitVector> = teacher.directions().iter().collect();
    check_separated(&centers, rho)?;
    let mut matches: Vec<TeacherMatch> = teacher
        .amplitudes()
        .iter()
        .map(|&r| TeacherMatch { atoms: Vec::new(), rbar: 0.0, target: r, direction_rms: 0.0, opposite_mass: 0.0 })
        .collect();
    let mut sq = vec![0.0; matches.len()];
    let mut tv = vec![0.0; matches.len()];
    let mut chord = 0.0;
    let mut stray = 0.0;
    for (i, atom) in student.atoms().iter().enumerate() {
        if atom.mass == 0.0 {
            continue;
        }
        match ball_index(&atom.direction, &centers, rho) {
            Some((j, dist)) => {
                let m = &mut matches[j];
                m.atoms.push(i);
                m.rbar += atom.mass;
                if atom.mass < 0.0 {
                    m.opposite_mass += atom.mass.abs();
                }
                sq[j] += atom.mass.abs() * dist * dist;
                tv[j] += atom.mass.abs();
                chord += atom.mass.abs() * 2.0 * (dist / 2.0).sin();
            }
            None => stray += atom.mass.abs(),
        }
    }
    for (j, m) in matches.iter_mut().enumerate() {
        m.direction_rms = if tv[j] > 0.0 { (sq[j] / tv[j]).sqrt() } else { 0.0 };
    }
    let amplitude_error = matches.iter().map(|m| (m.rbar - m.target).powi(2)).sum();
    let amp_l1: f64 = matches.iter().map(|m| (m.rbar - m.target).abs()).sum();
    Ok(RecoveryReport {
        rho,
        amplitude_error,
        direction_error: sq.iter().sum(),
        stray_mass: stray,
        sup_error: 2.0 * 2f64.sqrt() * (amp_l1 + chord + stray),
        l2_distance: analytic_l2_distance(student, &reference)?,
        matches,
    })
}

/// Sparse stand-in for an optimal measure: every teacher neighborhood of
/// `student` collapsed to one atom of mass `r̄_j` at the mass-weighted mean
/// direction (the teacher direction when the neighborhood is empty).
pub fn collapse_neighborhoods(student: &AtomicMeasure, teacher: &TeacherNetwork, rho: f64) -> Result<AtomicMeasure> {
    let report = recovery_report(student, teacher, rho)?;
    let d = student.dim();
    let mut out = AtomicMeasure::empty(d);
    for (m, t) in report.matches.iter().zip(teacher.directions()) {
        let mut mean = vec![0.0; d];
        for &i in &m.atoms {
            let atom = &student.atoms()[i];
            mean.iter_mut().zip(atom.direction.iter()).for_each(|(s, c)| *s += atom.mass.abs() * c);
        }
        out.push(m.rbar, UnitVector::normalize(mean).unwrap_or_else(|_| t.clone()))?;
    }
    Ok(out)
}

/// Does a perfect matching exist in the bipartite graph `adj`?
fn has_perfect_matching(adj: &[Vec<bool>]) -> bool {
    fn augment(u: usize, adj: &[Vec<bool>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for v in 0..adj[u].len() {
            if adj[u][v] && !seen[v] {
                seen[v] = true;
                if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                    owner[v] = Some(u);
                    return true;
                }
            }
        }
        false
    }
    let n = adj.len();
    let mut owner = vec![None; n];
    (0..n).all(|u| augment(u, adj, &mut vec![false; n], &mut owner))
}

/// Bottleneck (max geodesic displacement) matching cost between the positive
/// parts of two measures with equally many positive atoms.
pub fn bottleneck_distance(m1: &AtomicMeasure, m2: &AtomicMeasure) -> Result<f64> {
    ensure!(m1.dim() == m2.dim(), "measure dimensions differ");
    let (p1, p2) = (m1.positive_part(), m2.positive_part());
    ensure!(!p1.is_empty() && !p2.is_empty(), "bottleneck distance needs nonempty positive parts");
    ensure!(
        p1.len() == p2.len(),
        "positive parts have {} and {} atoms; bottleneck matching needs equal counts",
        p1.len(),
        p2.len()
    );
    let n = p1.len();
    let dist: Vec<Vec<f64>> = p1
        .atoms()
        .iter()
        .map(|a| p2.atoms().iter().map(|b| angle_between(&a.direction, &b.direction)).collect())
        .collect();
    let mut candidates: Vec<f64> = dist.iter().flatten().copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    // Smallest threshold admitting a perfect matching.
    let (mut lo, mut hi) = (0, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        let adj: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| dist[i][j] <= candidates[mid]).collect()).collect();
        if has_perfect_matching(&adj) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(candidates[lo])
}

/// Uniform probe set used by [`covering_radius`].
pub fn probe_set(d: usize, probes: usize, seed: u64) -> Result<Vec<UnitVector>> {
    ensure!(d >= 2, "dimension must be >= 2, got {d}");
    ensure!(probes >= 1, "probe count must be positive");
    let mut rng = seeded_rng(seed, Stream::Probes);
    Ok((0..probes).map(|_| geometry::sample_one(d, &mut rng)).collect())
}

/// Largest geodesic distance from a probe in [`probe_set`] to its nearest
/// point.
pub fn covering_radius(points: &[UnitVector], probes: usize, seed: u64) -> Result<f64> {
    ensure!(!points.is_empty(), "point set is empty");
    let d = points[0].dim();
    ensure!(points.iter().all(|p| p.dim() == d), "points differ in dimension");
    let mut worst = 0.0f64;
    for x in probe_set(d, probes, seed)? {
        // Chord length keeps full precision for nearly coincident points.
        let chord = points
            .iter()
            .map(|p| p.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(2.0 * (chord / 2.0).min(1.0).asin());
    }
    Ok(worst)
}

/// Empirical two-phase summary of a convergence curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub k0: usize,
    pub j0_hat: f64,
    /// Fitted per-iteration contraction `1 − κ₀` of the excess.
    #[serde(deserialize_with = "crate::io::null_as_nan")]
    pub linear_rate: f64,
    pub fit_r2: f64,
    pub fit_ok: bool,
    pub j_star: f64,
    pub window_start: usize,
    pub window_end: usize,
    pub points_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Minimum number of records [`phase_fit`] accepts.
pub const MIN_PHASE_RECORDS: usize = 100;

/// Excess values at or below this multiple of `ε |J*|` count as converged
/// and end the fit window.
const NOISE_FLOOR: f64 = 1024.0 * f64::EPSILON;

/// Phase split and tail rate for `(iteration, J)` pairs.
pub fn phase_fit_series(iters: &[usize], values: &[f64], j_star: Option<f64>) -> Result<PhaseReport> {
    ensure!(iters.len() == values.len(), "got {} iterations but {} values", iters.len(), values.len());
    ensure!(iters.len() >= MIN_PHASE_RECORDS, "phase fit needs at least {MIN_PHASE_RECORDS} records, got {}", iters.len());
    ensure!(iters.windows(2).all(|w| w[0] < w[1]), "iterations must be strictly increasing");
    ensure!(values.iter().all(|v| v.is_finite()), "objective values must be finite");
    let last = values.len() - 1;
    let j_star = j_star.unwrap_or(values[last]);
    let k_final = iters[last];
    let end_iter = (0.95 * k_final as f64).floor() as usize;
    let end = iters.iter().rposition(|&k| k <= end_iter).unwrap_or(0);
    let excess: Vec<f64> = values.iter().map(|v| v - j_star).collect();
    // With J* taken from the run itself the final excess is zero, so the
    // threshold uses the excess at the end of the fit window instead.
    let tail = if excess[last] > 0.0 { excess[last] } else { excess[end] };
    let threshold = E * (tail.max(0.0) * excess[0].max(0.0)).sqrt();
    let idx0 = excess.iter().position(|&x| x <= threshold).unwrap_or(last);
    let mut report = PhaseReport {
        k0: iters[idx0],
        j0_hat: values[idx0],
        linear_rate: f64::NAN,
        fit_r2: 0.0,
        fit_ok: false,
        j_star,
        window_start: iters[idx0],
        window_end: iters[end],
        points_used: 0,
        failure: None,
    };
    let floor = NOISE_FLOOR * j_star.abs().max(f64::MIN_POSITIVE);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in idx0..=end.max(idx0) {
        if excess[i] <= floor {
            break;
        }
        xs.push(iters[i] as f64);
        ys.push(excess[i].ln());
    }
    report.points_used = xs.len();
    if let Some(&x) = xs.last() {
        report.window_end = x as usize;
    }
    if xs.len() < 3 {
        report.failure = Some("fewer than 3 points with positive excess in the fit window".into());
        return Ok(report);
    }
    let (slope, r2) = least_squares(&xs, &ys);
    report.linear_rate = slope.exp();
    report.fit_r2 = r2;
    report.fit_ok = r2 >= 0.5 && report.linear_rate > 0.0 && report.linear_rate < 1.0;
    if !report.fit_ok {
        report.failure = Some(format!("log-linear fit rejected (r² = {r2:.3}, rate = {:.6})", report.linear_rate));
    }
    Ok(report)
}

pub fn phase_fit(trajectory: &[TrajectoryRecord], j_star: Option<f64>) -> Result<PhaseReport> {
    let iters: Vec<usize> = trajectory.iter().map(|r| r.iter).collect();
    let values: Vec<f64> = trajectory.iter().map(|r| r.j).collect();
    phase_fit_series(&iters, &values, j_star)
}

/// Slope and coefficient of determination of the least-squares line.
fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 0.0 };
    (slope, r2)
}

/// Spearman rank correlation (average ranks for ties).
pub fn rank_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    ensure!(a.len() == b.len() && a.len() >= 2, "need two equally long series of length >= 2");
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let (_, r2) = least_squares(&ra, &rb);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    Ok(r2.sqrt() * cov.signum())
}
