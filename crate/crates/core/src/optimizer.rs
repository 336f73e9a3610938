//! Norm-dependent gradient descent.
//!
//! Every node `(a_j, w_j)` moves along its subgradient with its own step
//! `η_j = α|a_j|‖w_j‖ / (a_j² + ‖w_j‖²)`. To first order in `α` the induced
//! atom `(r, θ) = (a‖w‖, w/‖w‖)` then follows the conic update
//!
//! ```text
//! r' = r − α|r| G(θ)
//! θ' = θ − α sgn(r) a²/(a² + ‖w‖²) ∇_S G(θ)
//! ```
//!
//! and [`train`] measures the gap between the two along the whole run.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::geometry::{self, dot, norm};
use crate::model::{Dataset, Network, StudentParams};
use crate::objective::{self, project_tangent, sgn, Evaluation, NodeSums, RegKind};
use crate::rng::{seeded_rng, Stream};

/// Relative size of the deterministic step perturbation for coincident nodes.
pub const TIE_BREAK: f64 = 1e-9;

/// Stop when `F` has not decreased by more than `rel_tol` (relative) over the
/// last `window` iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plateau {
    pub window: usize,
    pub rel_tol: f64,
}

impl Default for Plateau {
    fn default() -> Self {
        Plateau { window: 500, rel_tol: 1e-12 }
    }
}

/// Geometric λ schedule `λ_k = max(λ, λ_start γ^⌊k / stage_iters⌋)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Continuation {
    pub lambda_start: f64,
    pub gamma: f64,
    pub stage_iters: usize,
}

impl Continuation {
    pub fn lambda_at(&self, k: usize, target: f64) -> f64 {
        let stage = (k / self.stage_iters).min(i32::MAX as usize) as i32;
        (self.lambda_start * self.gamma.powi(stage)).max(target)
    }
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_log_every() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub reg: RegKind,
    pub max_iters: usize,
    pub width: usize,
    pub seed: u64,
    /// Angle below which two nodes count as coincident and get their step
    /// sizes nudged apart.
    #[serde(default = "default_tolerance")]
    pub coincidence_tolerance: f64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Number of nodes initialized with positive output weight. Defaults to
    /// `width / 2`, which requires an even width.
    #[serde(default)]
    pub positive_nodes: Option<usize>,
    #[serde(default)]
    pub plateau: Option<Plateau>,
    #[serde(default)]
    pub continuation: Option<Continuation>,
}

impl TrainConfig {
    pub fn new(alpha: f64, reg: RegKind, max_iters: usize, width: usize, seed: u64) -> Self {
        TrainConfig {
            alpha,
            reg,
            max_iters,
            width,
            seed,
            coincidence_tolerance: default_tolerance(),
            log_every: default_log_every(),
            positive_nodes: None,
            plateau: Some(Plateau::default()),
            continuation: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.alpha.is_finite() && self.alpha > 0.0, "alpha must be positive, got {}", self.alpha);
        self.reg.validate()?;
        ensure!(self.width >= 2, "student width must be >= 2, got {}", self.width);
        match self.positive_nodes {
            None => ensure!(self.width.is_multiple_of(2), "student width must be even, got {}", self.width),
            Some(p) => ensure!(p <= self.width, "positive_nodes {p} exceeds width {}", self.width),
        }
        ensure!(self.log_every >= 1, "log_every must be positive");
        ensure!(
            self.coincidence_tolerance.is_finite() && self.coincidence_tolerance >= 0.0,
            "coincidence_tolerance must be nonnegative"
        );
        if let Some(p) = &self.plateau {
            ensure!(p.window >= 1, "plateau window must be positive");
            ensure!(p.rel_tol >= 0.0, "plateau tolerance must be nonnegative");
        }
        if let Some(c) = &self.continuation {
            ensure!(c.lambda_start.is_finite() && c.lambda_start >= 0.0, "continuation lambda_start must be nonnegative");
            ensure!(c.gamma > 0.0 && c.gamma <= 1.0, "continuation gamma must lie in (0, 1]");
            ensure!(c.stage_iters >= 1, "continuation stage_iters must be positive");
        }
        Ok(())
    }

    fn lambda_at(&self, k: usize) -> f64 {
        let target = self.reg.lambda();
        self.continuation.map_or(target, |c| c.lambda_at(k, target))
    }
}

/// Sign-balanced initialization: `a_j = 2/M` for the first half, `-2/M` for
/// the second, `w_j` uniform on the sphere.
pub fn init_params(width: usize, d: usize, seed: u64) -> Result<StudentParams> {
    ensure!(width >= 2 && width.is_multiple_of(2), "student width must be even and >= 2, got {width}");
    init_params_with_split(width, width / 2, d, seed)
}

/// Like [`init_params`] with an explicit number of positive nodes, for odd
/// widths.
pub fn init_params_with_split(width: usize, positive: usize, d: usize, seed: u64) -> Result<StudentParams> {
    ensure!(width >= 1, "student width must be positive");
    ensure!(positive <= width, "positive node count {positive} exceeds width {width}");
    ensure!(d >= 2, "dimension must be >= 2, got {d}");
    let scale = 2.0 / width as f64;
    let a = (0..width).map(|j| if j < positive { scale } else { -scale }).collect();
    let mut rng = seeded_rng(seed, Stream::Init);
    let w = geometry::sample_flat(d, width, &mut rng);
    StudentParams::new(d, a, w)
}

/// `α|a|‖w‖ / (a² + ‖w‖²)`, and 0 for a null node.
pub fn step_size_eta(a: f64, w_norm: f64, alpha: f64) -> f64 {
    let den = a * a + w_norm * w_norm;
    if den == 0.0 {
        0.0
    } else {
        alpha * a.abs() * w_norm / den
    }
}

/// Measure-space step `α a² / (a² + ‖w‖²)`.
pub fn measure_step_beta(a: f64, w_norm: f64, alpha: f64) -> f64 {
    let den = a * a + w_norm * w_norm;
    if den == 0.0 {
        0.0
    } else {
        alpha * a * a / den
    }
}

/// `(C₁, C₂) = (2√n C_F + λ, 2√n C_F)`.
pub fn gradient_constants(c_f: f64, n: usize, lambda: f64) -> (f64, f64) {
    let c2 = 2.0 * (n as f64).sqrt() * c_f;
    (c2 + lambda, c2)
}

/// `min{1/(8C₁), 1/(10C₂), ρ/C₂, λ²/(8C_F²)}`.
pub fn alpha_safety_bound(c_f: f64, n: usize, lambda: f64, rho: f64) -> Result<f64> {
    ensure!(c_f.is_finite() && c_f > 0.0, "C_F must be positive, got {c_f}");
    ensure!(n >= 1, "sample count must be positive");
    ensure!(lambda.is_finite() && lambda > 0.0, "lambda must be positive, got {lambda}");
    ensure!(rho.is_finite() && rho > 0.0, "rho must be positive, got {rho}");
    let (c1, c2) = gradient_constants(c_f, n, lambda);
    Ok((1.0 / (8.0 * c1)).min(1.0 / (10.0 * c2)).min(rho / c2).min(lambda * lambda / (8.0 * c_f * c_f)))
}

/// The two step-size conditions that keep the conic remainders second order:
/// `min{1/(8C₁), 1/(10C₂)}`.
pub fn lemma_alpha_bound(c_f: f64, n: usize, lambda: f64) -> Result<f64> {
    ensure!(c_f.is_finite() && c_f > 0.0, "C_F must be positive, got {c_f}");
    ensure!(n >= 1, "sample count must be positive");
    ensure!(lambda.is_finite() && lambda >= 0.0, "lambda must be nonnegative, got {lambda}");
    let (c1, c2) = gradient_constants(c_f, n, lambda);
    Ok((1.0 / (8.0 * c1)).min(1.0 / (10.0 * c2)))
}

/// How a run's `α` is chosen from its initial objective value `C_F = F(Θ₀)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaPolicy {
    Fixed { alpha: f64 },
    /// [`alpha_safety_bound`] with `ρ` supplied by the caller, capped.
    SafetyBound { cap: f64 },
    /// [`lemma_alpha_bound`], capped.
    LemmaBound { cap: f64 },
}

impl AlphaPolicy {
    pub fn resolve(&self, c_f: f64, n: usize, lambda: f64, rho: f64) -> Result<f64> {
        let alpha = match *self {
            AlphaPolicy::Fixed { alpha } => alpha,
            AlphaPolicy::SafetyBound { cap } => alpha_safety_bound(c_f, n, lambda, rho)?.min(cap),
            AlphaPolicy::LemmaBound { cap } => lemma_alpha_bound(c_f, n, lambda)?.min(cap),
        };
        ensure!(alpha.is_finite() && alpha > 0.0, "resolved alpha must be positive, got {alpha}");
        Ok(alpha)
    }
}

/// Per-node snapshot inside a [`TrajectoryRecord`].
#[derive(Clone, Debug, PartialEq)]
pub struct NodeRecord {
    pub a: f64,
    pub w_norm: f64,
    pub r: f64,
    pub theta: Vec<f64>,
    pub eta: f64,
    pub beta: f64,
}

/// One logged iteration. Violation counters are cumulative up to `iter`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub iter: usize,
    pub lambda: f64,
    pub f: f64,
    pub j: f64,
    pub risk: f64,
    /// `J − J*` against the best available proxy for `J*`.
    pub excess_proxy: f64,
    pub min_abs_a: f64,
    pub max_beta: f64,
    pub max_eta: f64,
    pub c_f: f64,
    pub sign_violations: usize,
    pub aw_violations: usize,
    pub conic_r_violations: usize,
    pub conic_theta_violations: usize,
    pub nodes: Vec<NodeRecord>,
}

/// Whole-run tallies, checked at every step rather than only logged ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantTally {
    pub steps: usize,
    /// Nodes whose output weight changed sign (or reached zero).
    pub sign_changes: usize,
    /// Node-iterations with `|a| > ‖w‖`.
    pub abs_a_exceeds_norm: usize,
    /// Node-iterations with `‖w‖² > a² + 1`.
    pub norm_sq_exceeds: usize,
    pub conic_checks: usize,
    pub conic_r_violations: usize,
    pub conic_theta_violations: usize,
    /// Largest `|δr| / (C₁α²|G r|)` seen.
    pub max_conic_r_ratio: f64,
    /// Largest `‖δθ‖ / (5C₂α β ‖∇_S G‖)` seen.
    pub max_conic_theta_ratio: f64,
    /// Node-iterations with `|G| > C₁` or `‖∇G‖ > C₂`.
    pub gradient_bound_violations: usize,
    pub f_increases: usize,
    pub max_f_increase: f64,
}

impl InvariantTally {
    pub fn aw_violations(&self) -> usize {
        self.abs_a_exceeds_norm + self.norm_sq_exceeds
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub alpha: f64,
    pub records: Vec<TrajectoryRecord>,
    pub final_params: StudentParams,
    pub tally: InvariantTally,
    /// Number of steps actually taken.
    pub iterations: usize,
    pub stopped_on_plateau: bool,
}

impl TrainOutcome {
    pub fn final_record(&self) -> &TrajectoryRecord {
        self.records.last().expect("a run always logs its initial state")
    }

    /// Recomputes `excess_proxy` against an external `J*`.
    pub fn set_reference(&mut self, j_star: f64) {
        set_reference(&mut self.records, j_star);
    }
}

pub fn set_reference(records: &mut [TrajectoryRecord], j_star: f64) {
    for r in records {
        r.excess_proxy = r.j - j_star;
    }
}

/// Rounding allowance for the comparisons below.
const SLACK: f64 = 64.0 * f64::EPSILON;

/// One step of the method. `lambda` overrides the regularization strength.
struct Step {
    next: StudentParams,
    etas: Vec<f64>,
}

fn tie_break_factors(params: &StudentParams, tol: f64) -> Vec<f64> {
    let m = params.width();
    let mut factor = vec![1.0; m];
    if tol <= 0.0 {
        return factor;
    }
    let cos_tol = tol.cos();
    let norms: Vec<f64> = (0..m).map(|j| params.w_norm(j)).collect();
    for j in 0..m {
        if norms[j] == 0.0 {
            continue;
        }
        for l in j + 1..m {
            if norms[l] == 0.0 {
                continue;
            }
            let c = dot(params.w(j), params.w(l)) / (norms[j] * norms[l]);
            if c >= cos_tol {
                factor[j] *= 1.0 + TIE_BREAK;
                factor[l] *= 1.0 - TIE_BREAK;
            }
        }
    }
    factor
}

fn take_step(params: &StudentParams, sums: &NodeSums, alpha: f64, reg: RegKind, tol: f64) -> Step {
    let sg = objective::subgradients_from(params, sums, reg);
    let factor = tie_break_factors(params, tol);
    let mut next = params.clone();
    let d = params.dim();
    let mut etas = Vec::with_capacity(params.width());
    {
        let (a, w) = next.parts_mut();
        for j in 0..a.len() {
            let eta = step_size_eta(a[j], norm(&w[j * d..(j + 1) * d]), alpha) * factor[j];
            etas.push(eta);
            if eta == 0.0 {
                continue;
            }
            a[j] -= eta * sg.g[j];
            w[j * d..(j + 1) * d].iter_mut().zip(sg.h(j)).for_each(|(wc, hc)| *wc -= eta * hc);
        }
    }
    Step { next, etas }
}

/// A single update of every node.
pub fn gd_step(params: &StudentParams, data: &Dataset, cfg: &TrainConfig) -> Result<StudentParams> {
    cfg.validate()?;
    let eval = Evaluation::new(params, data)?;
    let sums = NodeSums::new(&eval, data, params.width());
    let step = take_step(params, &sums, cfg.alpha, cfg.reg, cfg.coincidence_tolerance);
    if !step.next.is_finite() {
        return Err(Error::NumericalFailure {
            iter: 0,
            detail: "non-finite parameter after one step".into(),
            last_good: Some(Box::new(params.clone())),
        });
    }
    Ok(step.next)
}

/// Gap between an exact step and the first-order conic update for node `j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConicResidual {
    pub delta_r: f64,
    pub delta_theta: f64,
    /// `|G r|`
    pub g_r: f64,
    /// `‖∇_S G‖`
    pub grad_norm: f64,
    pub beta: f64,
}

/// Conic residuals for every node with nonzero mass. Meaningful for the
/// path-norm penalty only, where the update is exactly conic to first order.
fn conic_residuals(
    params: &StudentParams,
    next: &StudentParams,
    sums: &NodeSums,
    alpha: f64,
    lambda: f64,
    factor: &[f64],
) -> Vec<Option<ConicResidual>> {
    let d = params.dim();
    (0..params.width())
        .map(|j| {
            let a = params.a()[j];
            let wn = params.w_norm(j);
            let r = a * wn;
            if r == 0.0 {
                return None;
            }
            let theta: Vec<f64> = params.w(j).iter().map(|c| c / wn).collect();
            let g = sums.s[j] / wn + lambda * sgn(r);
            let grad = project_tangent(&theta, sums.v(j, d));
            let beta = measure_step_beta(a, wn, alpha) * factor[j];
            let a_eff = alpha * factor[j];
            let r_lin = r - a_eff * r.abs() * g;
            let theta_lin: Vec<f64> = theta.iter().zip(&grad).map(|(t, gr)| t - sgn(r) * beta * gr).collect();
            let wn_next = next.w_norm(j);
            let r_next = next.a()[j] * wn_next;
            let delta_theta = if wn_next > 0.0 {
                let t: Vec<f64> = next.w(j).iter().zip(&theta_lin).map(|(c, l)| c / wn_next - l).collect();
                norm(&t)
            } else {
                norm(&theta_lin)
            };
            Some(ConicResidual { delta_r: r_next - r_lin, delta_theta, g_r: (g * r).abs(), grad_norm: norm(&grad), beta })
        })
        .collect()
}

struct Tracker<'a> {
    data: &'a Dataset,
    tally: InvariantTally,
    c_f: f64,
}

impl Tracker<'_> {
    fn check_step(
        &mut self,
        params: &StudentParams,
        next: &StudentParams,
        sums: &NodeSums,
        alpha: f64,
        reg: RegKind,
        factor: &[f64],
    ) {
        let t = &mut self.tally;
        t.steps += 1;
        for j in 0..params.width() {
            let (a0, a1) = (params.a()[j], next.a()[j]);
            if a0 != 0.0 && sgn(a1) != sgn(a0) {
                t.sign_changes += 1;
            }
            let wn = next.w_norm(j);
            if a1.abs() > wn * (1.0 + SLACK) + f64::MIN_POSITIVE {
                t.abs_a_exceeds_norm += 1;
            }
            if wn * wn > (a1 * a1 + 1.0) * (1.0 + SLACK) {
                t.norm_sq_exceeds += 1;
            }
        }
        let lambda = reg.lambda();
        let (c1, c2) = gradient_constants(self.c_f, self.data.len(), lambda);
        let d = params.dim();
        for j in 0..params.width() {
            let wn = params.w_norm(j);
            if wn == 0.0 {
                continue;
            }
            let g = sums.s[j] / wn + lambda * sgn(params.a()[j]);
            if g.abs() > c1 * (1.0 + SLACK) || norm(sums.v(j, d)) > c2 * (1.0 + SLACK) {
                t.gradient_bound_violations += 1;
            }
        }
        if let RegKind::PathL1 { .. } = reg {
            for (j, res) in conic_residuals(params, next, sums, alpha, lambda, factor).into_iter().enumerate() {
                let Some(res) = res else { continue };
                t.conic_checks += 1;
                let r_scale = params.a()[j].abs() * params.w_norm(j) + next.a()[j].abs() * next.w_norm(j);
                let r_bound = c1 * alpha * alpha * res.g_r;
                if res.delta_r.abs() > r_bound + SLACK * r_scale {
                    t.conic_r_violations += 1;
                }
                if r_bound > 0.0 {
                    t.max_conic_r_ratio = t.max_conic_r_ratio.max(res.delta_r.abs() / r_bound);
                }
                let th_bound = 5.0 * c2 * alpha * res.beta * res.grad_norm;
                if res.delta_theta > th_bound + SLACK {
                    t.conic_theta_violations += 1;
                }
                if th_bound > 0.0 {
                    t.max_conic_theta_ratio = t.max_conic_theta_ratio.max(res.delta_theta / th_bound);
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn snapshot(
    k: usize,
    params: &StudentParams,
    eval: &Evaluation,
    f: f64,
    lambda: f64,
    alpha: f64,
    c_f: f64,
    tally: &InvariantTally,
) -> TrajectoryRecord {
    let measure = crate::model::to_measure(params);
    let nodes: Vec<NodeRecord> = measure
        .atoms()
        .iter()
        .enumerate()
        .map(|(j, atom)| {
            let a = params.a()[j];
            let wn = params.w_norm(j);
            NodeRecord {
                a,
                w_norm: wn,
                r: atom.mass,
                theta: atom.direction.as_slice().to_vec(),
                eta: step_size_eta(a, wn, alpha),
                beta: measure_step_beta(a, wn, alpha),
            }
        })
        .collect();
    let j = eval.risk + lambda * measure.total_variation();
    TrajectoryRecord {
        iter: k,
        lambda,
        f,
        j,
        risk: eval.risk,
        excess_proxy: f64::NAN,
        min_abs_a: params.a().iter().fold(f64::INFINITY, |m, a| m.min(a.abs())),
        max_beta: nodes.iter().fold(0.0, |m, n| m.max(n.beta)),
        max_eta: nodes.iter().fold(0.0, |m, n| m.max(n.eta)),
        c_f,
        sign_violations: tally.sign_changes,
        aw_violations: tally.aw_violations(),
        conic_r_violations: tally.conic_r_violations,
        conic_theta_violations: tally.conic_theta_violations,
        nodes,
    }
}

/// Initializes a student per `cfg` and trains it on `data`.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let positive = cfg.positive_nodes.unwrap_or(cfg.width / 2);
    let init = init_params_with_split(cfg.width, positive, data.dim(), cfg.seed)?;
    train_from(init, data, cfg)
}

/// Trains from the given starting parameters.
pub fn train_from(init: StudentParams, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure!(init.dim() == data.dim(), "student dimension {} != data dimension {}", init.dim(), data.dim());
    let mut params = init;
    let mut records = Vec::new();
    let mut tracker = Tracker { data, tally: InvariantTally::default(), c_f: 0.0 };
    let mut history: VecDeque<f64> = VecDeque::new();
    let mut prev_f: Option<f64> = None;
    let mut stopped_on_plateau = false;
    let mut k = 0;
    loop {
        let lambda = cfg.lambda_at(k);
        let reg = cfg.reg.with_lambda(lambda);
        let eval = Evaluation::new(&params, data)?;
        let f = eval.risk + objective::regularizer(&params, reg);
        if !f.is_finite() {
            return Err(Error::NumericalFailure { iter: k, detail: format!("objective is {f}"), last_good: None });
        }
        // Increases caused by a λ stage change are not descent failures.
        if let Some(p) = prev_f.filter(|_| k == 0 || cfg.lambda_at(k - 1) == lambda) {
            if f > p {
                tracker.tally.f_increases += 1;
                tracker.tally.max_f_increase = tracker.tally.max_f_increase.max(f - p);
            }
        }
        prev_f = Some(f);
        tracker.c_f = tracker.c_f.max(f);

        if let Some(p) = &cfg.plateau {
            history.push_back(f);
            if history.len() > p.window + 1 {
                history.pop_front();
            }
            let settled = cfg.continuation.is_none_or(|_| lambda == cfg.reg.lambda());
            if settled && history.len() == p.window + 1 {
                let old = history[0];
                if (old - f) <= p.rel_tol * f.abs().max(f64::MIN_POSITIVE) {
                    stopped_on_plateau = true;
                }
            }
        }
        let last = k == cfg.max_iters || stopped_on_plateau;
        if k % cfg.log_every == 0 || last {
            records.push(snapshot(k, &params, &eval, f, lambda, cfg.alpha, tracker.c_f, &tracker.tally));
        }
        if last {
            break;
        }

        let sums = NodeSums::new(&eval, data, params.width());
        let step = take_step(&params, &sums, cfg.alpha, reg, cfg.coincidence_tolerance);
        if !step.next.is_finite() {
            return Err(Error::NumericalFailure {
                iter: k + 1,
                detail: "non-finite parameter".into(),
                last_good: Some(Box::new(params)),
            });
        }
        let factor = tie_break_factors(&params, cfg.coincidence_tolerance);
        debug_assert!(step.etas.len() == params.width());
        tracker.check_step(&params, &step.next, &sums, cfg.alpha, reg, &factor);
        params = step.next;
        k += 1;
    }
    let j_final = records.last().map(|r| r.j).unwrap_or(f64::NAN);
    set_reference(&mut records, j_final);
    Ok(TrainOutcome {
        alpha: cfg.alpha,
        records,
        final_params: params,
        tally: tracker.tally,
        iterations: k,
        stopped_on_plateau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_dataset, make_teacher, DirectionMode};

    #[test]
    fn init_examples() {
        let p = init_params(4, 3, 0).unwrap();
        assert_eq!(p.a(), &[0.5, 0.5, -0.5, -0.5]);
        for j in 0..4 {
            assert!((p.w_norm(j) - 1.0).abs() < 1e-12);
        }
        let p = init_params(100, 5, 1).unwrap();
        assert!(p.a().iter().sum::<f64>().abs() < 1e-14);
        assert!(init_params(5, 2, 0).is_err());
        let p = init_params_with_split(15, 8, 2, 0).unwrap();
        assert_eq!(p.a().iter().filter(|a| **a > 0.0).count(), 8);
        assert_eq!(init_params(6, 4, 9).unwrap(), init_params(6, 4, 9).unwrap());
    }

    #[test]
    fn eta_examples() {
        assert_eq!(step_size_eta(0.7, 0.7, 0.2), 0.1);
        assert_eq!(step_size_eta(0.0, 3.0, 0.2), 0.0);
        assert_eq!(step_size_eta(0.0, 0.0, 0.2), 0.0);
        for (a, w) in [(1e-3, 1.0), (-5.0, 0.1), (2.0, 2.0000001), (-1e8, 1e-8)] {
            assert!(step_size_eta(a, w, 0.3) <= 0.15 + 1e-17);
        }
    }

    #[test]
    fn safety_bound_examples() {
        let b = alpha_safety_bound(1.0, 100, 0.1, 0.01).unwrap();
        assert!((b - 5e-4).abs() < 1e-15);
        let b10 = alpha_safety_bound(10.0, 100, 0.1, 0.01).unwrap();
        assert!(b10 <= b / 10.0);
        assert!(alpha_safety_bound(1.0, 100, 1e-6, 0.01).unwrap() <= 1e-12 / 8.0 + 1e-30);
        assert!(alpha_safety_bound(0.0, 100, 0.1, 0.01).is_err());
        assert!(alpha_safety_bound(1.0, 100, 0.1, -1.0).is_err());
        assert!((lemma_alpha_bound(1.0, 100, 0.1).unwrap() - 1.0 / 200.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_when_interpolating_without_penalty() {
        let t = make_teacher(2, 3, &[1.0, 1.0], DirectionMode::Canonical).unwrap();
        let data = make_dataset(&t, 50, 0).unwrap();
        let p = StudentParams::from_nodes(3, [(1.0, &[1.0, 0.0, 0.0][..]), (1.0, &[0.0, 1.0, 0.0][..])]).unwrap();
        let cfg = TrainConfig::new(0.1, RegKind::PathL1 { lambda: 0.0 }, 1, 2, 0);
        let next = gd_step(&p, &data, &cfg).unwrap();
        assert_eq!(next.a(), p.a());
        assert!(next.w_flat().iter().zip(p.w_flat()).all(|(x, y)| (x - y).abs() < 1e-15));
    }

    #[test]
    fn zero_iterations_logs_only_the_start() {
        let t = make_teacher(1, 2, &[1.0], DirectionMode::Canonical).unwrap();
        let data = make_dataset(&t, 10, 0).unwrap();
        let cfg = TrainConfig::new(0.1, RegKind::PathL1 { lambda: 1e-3 }, 0, 2, 0);
        let out = train(&data, &cfg).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].iter, 0);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn record_count_contract() {
        let t = make_teacher(1, 2, &[1.0], DirectionMode::Canonical).unwrap();
        let data = make_dataset(&t, 10, 0).unwrap();
        for log_every in [1, 3, 4, 10, 25] {
            let mut cfg = TrainConfig::new(0.05, RegKind::PathL1 { lambda: 1e-3 }, 10, 2, 0);
            cfg.log_every = log_every;
            cfg.plateau = None;
            let out = train(&data, &cfg).unwrap();
            assert_eq!(out.records.len(), 1 + 10usize.div_ceil(log_every));
            assert_eq!(out.final_record().iter, 10);
        }
    }

    #[test]
    fn coincident_nodes_are_separated() {
        let p = StudentParams::from_nodes(2, [(0.5, &[1.0, 0.0][..]), (0.5, &[2.0, 0.0][..]), (-0.5, &[0.0, 1.0][..])]).unwrap();
        let f = tie_break_factors(&p, 1e-8);
        assert_eq!(f, vec![1.0 + TIE_BREAK, 1.0 - TIE_BREAK, 1.0]);
        assert_eq!(tie_break_factors(&p, 0.0), vec![1.0; 3]);
    }

    #[test]
    fn continuation_schedule() {
        let c = Continuation { lambda_start: 0.1, gamma: 0.5, stage_iters: 10 };
        assert_eq!(c.lambda_at(0, 0.01), 0.1);
        assert_eq!(c.lambda_at(19, 0.01), 0.05);
        assert_eq!(c.lambda_at(1000, 0.01), 0.01);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::new(0.1, RegKind::PathL1 { lambda: 1e-3 }, 10, 15, 0);
        assert!(cfg.validate().is_err());
        cfg.positive_nodes = Some(8);
        assert!(cfg.validate().is_ok());
        cfg.alpha = 0.0;
        assert!(cfg.validate().is_err());
    }
}
