//! Regularized empirical risk in parameter space, the BLASSO objective in
//! measure space, and the subgradient selections used by training.
//!
//! Residuals are always `f(x_i) - y_i`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::geometry::{dot, norm, relu, UnitVector};
use crate::model::{AtomicMeasure, Dataset, Network, StudentParams};

/// Which penalty is added to the risk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegKind {
    /// `λ Σ |a_j| ‖w_j‖`
    PathL1 { lambda: f64 },
    /// `(λ/2) Σ (a_j² + ‖w_j‖²)`
    L2 { lambda: f64 },
}

impl RegKind {
    pub fn lambda(&self) -> f64 {
        match *self {
            RegKind::PathL1 { lambda } | RegKind::L2 { lambda } => lambda,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> RegKind {
        match self {
            RegKind::PathL1 { .. } => RegKind::PathL1 { lambda },
            RegKind::L2 { .. } => RegKind::L2 { lambda },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.lambda();
        ensure!(l.is_finite() && l >= 0.0, "lambda must be finite and nonnegative, got {l}");
        Ok(())
    }
}

/// Sign of an atom, selecting the TV subgradient value at that atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    /// `None` for zero or NaN.
    pub fn of(x: f64) -> Option<Sign> {
        if x > 0.0 {
            Some(Sign::Positive)
        } else if x < 0.0 {
            Some(Sign::Negative)
        } else {
            None
        }
    }
}

/// `sgn` with `sgn(0) = 0`.
pub fn sgn(x: f64) -> f64 {
    Sign::of(x).map_or(0.0, Sign::value)
}

/// Partial subgradients with respect to each `a_j` and `w_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubgradientSet {
    pub g: Vec<f64>,
    d: usize,
    h: Vec<f64>,
}

impl SubgradientSet {
    pub fn h(&self, j: usize) -> &[f64] {
        &self.h[j * self.d..(j + 1) * self.d]
    }

    pub fn h_flat(&self) -> &[f64] {
        &self.h
    }

    pub fn width(&self) -> usize {
        self.g.len()
    }
}

fn check_data<N: Network + ?Sized>(net: &N, data: &Dataset) -> Result<()> {
    ensure!(!data.is_empty(), "dataset is empty");
    ensure!(net.dim() == data.dim(), "network dimension {} != data dimension {}", net.dim(), data.dim());
    Ok(())
}

/// `f(x_i) - y_i` for every sample.
pub fn residuals<N: Network + ?Sized>(net: &N, data: &Dataset) -> Result<Vec<f64>> {
    check_data(net, data)?;
    Ok(data.iter().map(|(x, y)| net.eval(x) - y).collect())
}

fn half_mean_square(res: &[f64]) -> f64 {
    res.iter().map(|r| r * r).sum::<f64>() / (2.0 * res.len() as f64)
}

/// `(1/2n) Σ (y_i - f(x_i))²` for a parameter vector or a measure.
pub fn empirical_risk<N: Network + ?Sized>(net: &N, data: &Dataset) -> Result<f64> {
    Ok(half_mean_square(&residuals(net, data)?))
}

pub fn regularizer(params: &StudentParams, reg: RegKind) -> f64 {
    match reg {
        RegKind::PathL1 { lambda } => {
            lambda * (0..params.width()).map(|j| params.a()[j].abs() * params.w_norm(j)).sum::<f64>()
        }
        RegKind::L2 { lambda } => {
            let sq = params.a().iter().map(|a| a * a).sum::<f64>() + params.w_flat().iter().map(|w| w * w).sum::<f64>();
            0.5 * lambda * sq
        }
    }
}

/// Regularized empirical risk `F(Θ)`.
pub fn objective_f(params: &StudentParams, data: &Dataset, reg: RegKind) -> Result<f64> {
    Ok(empirical_risk(params, data)? + regularizer(params, reg))
}

/// BLASSO objective `J(ν) = (1/2n) Σ (y_i - f(x_i; ν))² + λ ‖ν‖_TV`.
pub fn blasso_j(measure: &AtomicMeasure, data: &Dataset, lambda: f64) -> Result<f64> {
    Ok(empirical_risk(measure, data)? + lambda * measure.total_variation())
}

/// Shared per-step quantities: pre-activations and residuals.
#[derive(Clone, Debug)]
pub(crate) struct Evaluation {
    /// Row-major `M x n`: `⟨w_j, x_i⟩`.
    pub preact: Vec<f64>,
    pub residuals: Vec<f64>,
    pub risk: f64,
}

impl Evaluation {
    pub fn new(params: &StudentParams, data: &Dataset) -> Result<Self> {
        check_data(params, data)?;
        let n = data.len();
        let mut preact = Vec::with_capacity(params.width() * n);
        for j in 0..params.width() {
            let w = params.w(j);
            preact.extend((0..n).map(|i| dot(w, data.input(i))));
        }
        let mut residuals: Vec<f64> = data.targets().iter().map(|y| -y).collect();
        for (j, a) in params.a().iter().enumerate() {
            for (r, u) in residuals.iter_mut().zip(&preact[j * n..(j + 1) * n]) {
                *r += a * relu(*u);
            }
        }
        let risk = half_mean_square(&residuals);
        Ok(Evaluation { preact, residuals, risk })
    }
}

/// Per-node data-fit sums: `s_j = (1/n) Σ res_i σ(⟨w_j,x_i⟩)` and
/// `v_j = (1/n) Σ res_i x_i 1{⟨w_j,x_i⟩ ≥ 0}`.
#[derive(Clone, Debug)]
pub(crate) struct NodeSums {
    pub s: Vec<f64>,
    /// Row-major `M x d`.
    pub v: Vec<f64>,
}

impl NodeSums {
    pub fn new(eval: &Evaluation, data: &Dataset, width: usize) -> Self {
        let n = data.len();
        let d = data.dim();
        let inv_n = 1.0 / n as f64;
        let mut s = vec![0.0; width];
        let mut v = vec![0.0; width * d];
        for j in 0..width {
            let pre = &eval.preact[j * n..(j + 1) * n];
            let vj = &mut v[j * d..(j + 1) * d];
            let mut sj = 0.0;
            for (i, (&u, &r)) in pre.iter().zip(&eval.residuals).enumerate() {
                if u >= 0.0 {
                    sj += r * u;
                    vj.iter_mut().zip(data.input(i)).for_each(|(acc, x)| *acc += r * x);
                }
            }
            s[j] = sj * inv_n;
            vj.iter_mut().for_each(|c| *c *= inv_n);
        }
        NodeSums { s, v }
    }

    pub fn v(&self, j: usize, d: usize) -> &[f64] {
        &self.v[j * d..(j + 1) * d]
    }
}

pub(crate) fn subgradients_from(params: &StudentParams, sums: &NodeSums, reg: RegKind) -> SubgradientSet {
    let d = params.dim();
    let m = params.width();
    let mut g = Vec::with_capacity(m);
    let mut h = Vec::with_capacity(m * d);
    for j in 0..m {
        let a = params.a()[j];
        let w = params.w(j);
        let wn = norm(w);
        let v = sums.v(j, d);
        match reg {
            RegKind::PathL1 { lambda } => {
                g.push(sums.s[j] + lambda * sgn(a) * wn);
                let scale = if wn > 0.0 { lambda * a.abs() / wn } else { 0.0 };
                h.extend(v.iter().zip(w).map(|(vc, wc)| a * vc + scale * wc));
            }
            RegKind::L2 { lambda } => {
                g.push(sums.s[j] + lambda * a);
                h.extend(v.iter().zip(w).map(|(vc, wc)| a * vc + lambda * wc));
            }
        }
    }
    SubgradientSet { g, d, h }
}

/// The subgradient selection `(g_j, h_j)` of `F` used by training.
pub fn subgradients(params: &StudentParams, data: &Dataset, reg: RegKind) -> Result<SubgradientSet> {
    reg.validate()?;
    let eval = Evaluation::new(params, data)?;
    let sums = NodeSums::new(&eval, data, params.width());
    Ok(subgradients_from(params, &sums, reg))
}

/// `G(θ)` and its spherical gradient for a measure, taking the TV subgradient
/// value `sign_hint` at `θ`.
pub fn blasso_g(
    measure: &AtomicMeasure,
    data: &Dataset,
    lambda: f64,
    theta: &UnitVector,
    sign_hint: Sign,
) -> Result<(f64, Vec<f64>)> {
    ensure!(theta.dim() == data.dim(), "theta dimension {} != data dimension {}", theta.dim(), data.dim());
    let res = residuals(measure, data)?;
    let (fit, v) = data_fit_and_gradient(&res, data, theta);
    Ok((fit + lambda * sign_hint.value(), project_tangent(theta, &v)))
}

/// `(1/n) Σ res_i σ(⟨θ,x_i⟩)` and `(1/n) Σ res_i x_i 1{⟨θ,x_i⟩ ≥ 0}`.
pub(crate) fn data_fit_and_gradient(res: &[f64], data: &Dataset, theta: &[f64]) -> (f64, Vec<f64>) {
    let inv_n = 1.0 / data.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; data.dim()];
    for ((x, _), r) in data.iter().zip(res) {
        let u = dot(theta, x);
        if u >= 0.0 {
            value += r * u;
            grad.iter_mut().zip(x).for_each(|(g, xc)| *g += r * xc);
        }
    }
    grad.iter_mut().for_each(|g| *g *= inv_n);
    (value * inv_n, grad)
}

/// `(I - θθᵀ) v`.
pub fn project_tangent(theta: &[f64], v: &[f64]) -> Vec<f64> {
    let c = dot(theta, v);
    v.iter().zip(theta).map(|(vi, ti)| vi - c * ti).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_dataset, make_teacher, to_measure, DirectionMode};

    fn fig2_data() -> (crate::model::TeacherNetwork, Dataset) {
        let t = make_teacher(5, 5, &[1.0; 5], DirectionMode::Canonical).unwrap();
        let data = make_dataset(&t, 100, 3).unwrap();
        (t, data)
    }

    fn teacher_embedding(t: &crate::model::TeacherNetwork, pad: usize) -> StudentParams {
        let d = t.dim();
        let zero = vec![0.0; d];
        let nodes: Vec<(f64, &[f64])> = t
            .directions()
            .iter()
            .zip(t.amplitudes())
            .map(|(th, r)| (*r, th.as_slice()))
            .chain((0..pad).map(|_| (0.0, zero.as_slice())))
            .collect();
        StudentParams::from_nodes(d, nodes).unwrap()
    }

    #[test]
    fn risk_examples() {
        let (t, data) = fig2_data();
        let emb = teacher_embedding(&t, 3);
        assert!(empirical_risk(&emb, &data).unwrap() < 1e-28);
        let zero = StudentParams::new(5, vec![0.0; 2], vec![0.0; 10]).unwrap();
        let want = data.targets().iter().map(|y| y * y).sum::<f64>() / 200.0;
        assert!((empirical_risk(&zero, &data).unwrap() - want).abs() < 1e-15);
        assert!((half_mean_square(&[1.0, -1.0]) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn regularizer_examples() {
        let p = StudentParams::new(2, vec![2.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(regularizer(&p, RegKind::PathL1 { lambda: 0.0 }), 0.0);
        assert_eq!(regularizer(&p, RegKind::PathL1 { lambda: 1.0 }), 10.0);
        assert_eq!(regularizer(&p, RegKind::L2 { lambda: 1.0 }), 14.5);
        // Rebalanced to |a| = ‖w‖ with the same product.
        let s = (10.0f64).sqrt();
        let b = StudentParams::new(2, vec![s], vec![0.6 * s, 0.8 * s]).unwrap();
        let l1 = regularizer(&b, RegKind::PathL1 { lambda: 1.0 });
        let l2 = regularizer(&b, RegKind::L2 { lambda: 1.0 });
        assert!((l1 - 10.0).abs() < 1e-12 && (l2 - l1).abs() < 1e-12);
    }

    #[test]
    fn objective_examples() {
        let (t, data) = fig2_data();
        let emb = teacher_embedding(&t, 2);
        assert!(objective_f(&emb, &data, RegKind::PathL1 { lambda: 0.0 }).unwrap() < 1e-28);
        let f = objective_f(&emb, &data, RegKind::PathL1 { lambda: 0.01 }).unwrap();
        assert!((f - 0.05).abs() < 1e-14);
        let j = blasso_j(&t.measure(), &data, 0.01).unwrap();
        assert!((j - 0.05).abs() < 1e-14);
        let want = data.targets().iter().map(|y| y * y).sum::<f64>() / 200.0;
        assert!((blasso_j(&AtomicMeasure::empty(5), &data, 0.3).unwrap() - want).abs() < 1e-15);
        let other = make_dataset(&make_teacher(1, 3, &[1.0], DirectionMode::Canonical).unwrap(), 4, 0).unwrap();
        assert!(blasso_j(&t.measure(), &other, 0.1).is_err());
    }

    #[test]
    fn f_equals_j_of_measure() {
        let (_, data) = fig2_data();
        let p = crate::optimizer::init_params(10, 5, 4).unwrap();
        let mut a = p.a().to_vec();
        a.iter_mut().enumerate().for_each(|(j, x)| *x *= 1.0 + j as f64);
        let p = StudentParams::new(5, a, p.w_flat().iter().map(|w| 1.3 * w).collect()).unwrap();
        let f = objective_f(&p, &data, RegKind::PathL1 { lambda: 0.02 }).unwrap();
        let j = blasso_j(&to_measure(&p), &data, 0.02).unwrap();
        assert!((f - j).abs() < 1e-12);
    }

    #[test]
    fn subgradient_examples() {
        let (t, data) = fig2_data();
        let emb = teacher_embedding(&t, 1);
        let sg = subgradients(&emb, &data, RegKind::PathL1 { lambda: 0.0 }).unwrap();
        assert!(sg.g.iter().chain(sg.h_flat()).all(|v| v.abs() < 1e-15));

        let x = UnitVector::basis(2, 0).unwrap();
        let data = Dataset::new(2, x.as_slice().to_vec(), vec![0.0]).unwrap();
        let p = StudentParams::new(2, vec![1.0], vec![1.0, 0.0]).unwrap();
        let sg = subgradients(&p, &data, RegKind::PathL1 { lambda: 0.0 }).unwrap();
        assert_eq!(sg.g, vec![1.0]);
        assert_eq!(sg.h(0), &[1.0, 0.0]);
    }

    #[test]
    fn dead_node_has_no_regularizer_pull() {
        let x = UnitVector::basis(2, 0).unwrap();
        let data = Dataset::new(2, x.as_slice().to_vec(), vec![0.0]).unwrap();
        let p = StudentParams::new(2, vec![0.0, 0.7], vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let sg = subgradients(&p, &data, RegKind::PathL1 { lambda: 0.5 }).unwrap();
        assert_eq!(sg.g, vec![0.0, 0.0]);
        assert!(sg.h_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blasso_g_examples() {
        let (t, data) = fig2_data();
        let theta = UnitVector::normalize(vec![0.3, -0.2, 0.5, 0.1, 0.7]).unwrap();
        let (v, grad) = blasso_g(&t.measure(), &data, 0.0, &theta, Sign::Positive).unwrap();
        assert!(v.abs() < 1e-15 && grad.iter().all(|g| g.abs() < 1e-15));
        let mut nu = t.measure();
        nu.push(-0.4, theta.clone()).unwrap();
        let (_, grad) = blasso_g(&nu, &data, 0.1, &theta, Sign::Negative).unwrap();
        assert!(dot(&grad, &theta).abs() < 1e-12);
        assert!(norm(&grad) > 0.0);
    }
}
