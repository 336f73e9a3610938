use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsb_core::geometry::{dot, sample_uniform_sphere, UnitVector};
use tsb_core::model::{make_dataset, make_teacher, to_measure, Atom, AtomicMeasure, Dataset, DirectionMode, Network, StudentParams};
use tsb_core::objective::{blasso_g, blasso_j, objective_f, subgradients, RegKind, Sign};
use tsb_core::optimizer::{gd_step, TrainConfig};

fn dataset(m: usize, d: usize, n: usize, seed: u64) -> Dataset {
    let t = make_teacher(m, d, &vec![1.0; m], DirectionMode::Canonical).unwrap();
    make_dataset(&t, n, seed).unwrap()
}

fn random_params(width: usize, d: usize, rng: &mut ChaCha8Rng) -> StudentParams {
    let a = (0..width).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = (0..width * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    StudentParams::new(d, a, w).unwrap()
}

fn is_smooth(p: &StudentParams, data: &Dataset) -> bool {
    (0..p.width()).all(|j| p.a()[j].abs() > 1e-3 && p.w_norm(j) > 1e-3 && data.iter().all(|(x, _)| dot(p.w(j), x).abs() > 1e-4))
}

fn perturbed(p: &StudentParams, idx: usize, delta: f64) -> StudentParams {
    let mut a = p.a().to_vec();
    let mut w = p.w_flat().to_vec();
    if idx < a.len() {
        a[idx] += delta;
    } else {
        w[idx - a.len()] += delta;
    }
    StudentParams::new(p.dim(), a, w).unwrap()
}

#[test]
fn subgradients_match_finite_differences_at_smooth_points() {
    let data = dataset(2, 3, 20, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for reg in [RegKind::PathL1 { lambda: 0.01 }, RegKind::L2 { lambda: 0.01 }] {
        let (mut checked, mut attempts) = (0, 0);
        while checked < 10 && attempts < 500 {
            attempts += 1;
            let p = random_params(4, 3, &mut rng);
            if !is_smooth(&p, &data) {
                continue;
            }
            checked += 1;
            let sg = subgradients(&p, &data, reg).unwrap();
            let analytic: Vec<f64> = sg.g.iter().copied().chain(sg.h_flat().iter().copied()).collect();
            let h = 1e-6;
            for (idx, an) in analytic.iter().enumerate() {
                let fd = (objective_f(&perturbed(&p, idx, h), &data, reg).unwrap() - objective_f(&perturbed(&p, idx, -h), &data, reg).unwrap()) / (2.0 * h);
                let scale = an.abs().max(1e-3);
                assert!((fd - an).abs() / scale < 1e-4, "{reg:?} coordinate {idx}: analytic {an}, finite difference {fd}");
            }
        }
        assert_eq!(checked, 10, "too few smooth points drawn");
    }
}

#[test]
fn single_node_step_matches_hand_computation() {
    // n = 1, M = 1, d = 2, PathL1: the update rule written out by hand.
    let x = UnitVector::new(vec![0.6, 0.8]).unwrap();
    let data = Dataset::new(2, x.to_vec(), vec![0.3]).unwrap();
    let (a, w) = (0.7, [0.5, 0.2]);
    let (lambda, alpha) = (0.05, 0.1);
    let p = StudentParams::new(2, vec![a], w.to_vec()).unwrap();
    let cfg = TrainConfig::new(alpha, RegKind::PathL1 { lambda }, 1, 2, 0);
    let next = gd_step(&p, &data, &cfg).unwrap();

    let pre = w[0] * 0.6 + w[1] * 0.8;
    let res = a * pre - 0.3;
    let wn = (w[0] * w[0] + w[1] * w[1]).sqrt();
    let g = res * pre + lambda * wn;
    let h = [res * a * 0.6 + lambda * a * w[0] / wn, res * a * 0.8 + lambda * a * w[1] / wn];
    let eta = alpha * a * wn / (a * a + wn * wn);
    assert!((next.a()[0] - (a - eta * g)).abs() < 1e-15);
    assert!((next.w(0)[0] - (w[0] - eta * h[0])).abs() < 1e-15);
    assert!((next.w(0)[1] - (w[1] - eta * h[1])).abs() < 1e-15);
}

#[test]
fn path_l1_objective_equals_measure_objective() {
    let data = dataset(2, 4, 30, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let p = random_params(6, 4, &mut rng);
        let lambda = rng.random_range(0.0..0.1);
        let f = objective_f(&p, &data, RegKind::PathL1 { lambda }).unwrap();
        let j = blasso_j(&to_measure(&p), &data, lambda).unwrap();
        assert!((f - j).abs() <= 1e-12 * f.abs().max(1.0), "F = {f}, J = {j}");
    }
}

#[test]
fn objective_is_two_homogeneous_in_each_node_path() {
    // d/dt F(tΘ) at t = 1 equals Σ a g + ⟨w, h⟩ = 2⟨res, f⟩/n + 2λ Σ|a|‖w‖.
    let data = dataset(2, 3, 25, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lambda = 0.02;
    for _ in 0..20 {
        let p = random_params(5, 3, &mut rng);
        let sg = subgradients(&p, &data, RegKind::PathL1 { lambda }).unwrap();
        let lhs: f64 = (0..p.width()).map(|j| p.a()[j] * sg.g[j] + dot(p.w(j), sg.h(j))).sum();
        let n = data.len() as f64;
        let fit: f64 = data.iter().map(|(x, y)| {
            let f = p.eval(x);
            (f - y) * f
        }).sum::<f64>() / n;
        let reg: f64 = (0..p.width()).map(|j| p.a()[j].abs() * p.w_norm(j)).sum();
        let rhs = 2.0 * fit + 2.0 * lambda * reg;
        assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn sphere_gradient_is_tangent() {
    let data = dataset(2, 5, 40, 2);
    let nu = AtomicMeasure::new(5, vec![Atom { mass: 0.8, direction: UnitVector::basis(5, 0).unwrap() }]).unwrap();
    for theta in sample_uniform_sphere(5, 200, 8).unwrap() {
        let (_, grad) = blasso_g(&nu, &data, 0.01, &theta, Sign::Positive).unwrap();
        assert!(dot(&grad, &theta).abs() < 1e-12);
    }
}

fn grid_measure(d: usize, grid: &[UnitVector], masses: &[f64]) -> AtomicMeasure {
    AtomicMeasure::new(d, grid.iter().zip(masses).map(|(t, &m)| Atom { mass: m, direction: t.clone() }).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn blasso_objective_is_convex_on_a_shared_grid(
        m1 in prop::collection::vec(-1.0f64..1.0, 6),
        m2 in prop::collection::vec(-1.0f64..1.0, 6),
        lambda in 0.0f64..0.1,
    ) {
        let data = dataset(2, 3, 20, 11);
        let grid = sample_uniform_sphere(3, 6, 12).unwrap();
        let j1 = blasso_j(&grid_measure(3, &grid, &m1), &data, lambda).unwrap();
        let j2 = blasso_j(&grid_measure(3, &grid, &m2), &data, lambda).unwrap();
        for t in [0.25, 0.5, 0.75] {
            let mix: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            let jt = blasso_j(&grid_measure(3, &grid, &mix), &data, lambda).unwrap();
            prop_assert!(jt <= t * j1 + (1.0 - t) * j2 + 1e-12);
        }
    }
}
