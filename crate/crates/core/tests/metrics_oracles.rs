use proptest::prelude::*;
use tsb_core::geometry::{angle_between, sample_uniform_sphere, UnitVector};
use tsb_core::metrics::{
    bottleneck_distance, collapse_neighborhoods, covering_radius, d_rho, probe_set, rank_correlation, recovery_report, rho_margin, rho_margin_scale,
};
use tsb_core::model::{forward_measure, make_dataset, make_teacher, to_measure, Atom, AtomicMeasure, DirectionMode};
use tsb_core::objective::RegKind;
use tsb_core::optimizer::{train, TrainConfig};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn positive_measure(dirs: &[UnitVector]) -> AtomicMeasure {
    AtomicMeasure::new(dirs[0].dim(), dirs.iter().map(|t| Atom { mass: 1.0, direction: t.clone() }).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bottleneck_matches_brute_force(n in 1usize..=5, seed in any::<u64>()) {
        let a = sample_uniform_sphere(3, n, seed).unwrap();
        let b = sample_uniform_sphere(3, n, seed.wrapping_add(1)).unwrap();
        let brute = permutations(n)
            .into_iter()
            .map(|p| (0..n).map(|i| angle_between(&a[i], &b[p[i]])).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        let fast = bottleneck_distance(&positive_measure(&a), &positive_measure(&b)).unwrap();
        prop_assert_eq!(fast, brute);
    }
}

#[test]
fn bottleneck_ignores_negative_atoms() {
    let e = |i| UnitVector::basis(3, i).unwrap();
    let mut atoms: Vec<Atom> = (0..3).map(|i| Atom { mass: 0.5, direction: e(i) }).collect();
    atoms.push(Atom { mass: -2.0, direction: UnitVector::new(vec![0.0, 0.6, 0.8]).unwrap() });
    let with_negative = AtomicMeasure::new(3, atoms).unwrap();
    let plain = positive_measure(&[e(2), e(0), e(1)]);
    assert_eq!(bottleneck_distance(&with_negative, &plain).unwrap(), 0.0);
}

#[test]
fn rho_margin_has_the_predicted_scale() {
    let (n, m, d) = (100, 5, 5);
    let teacher = make_teacher(m, d, &vec![1.0; m], DirectionMode::Canonical).unwrap();
    let margins: Vec<f64> = (0..20).map(|s| rho_margin(teacher.directions(), &make_dataset(&teacher, n, s).unwrap()).unwrap()).collect();
    let ratio = median(margins) / rho_margin_scale(n, m, d);
    assert!((0.1..=10.0).contains(&ratio), "median margin is {ratio} times the predicted scale");
}

#[test]
fn covering_radius_shrinks_like_inverse_square_root_on_the_two_sphere() {
    let radius = |count: usize, seed: u64| covering_radius(&sample_uniform_sphere(3, count, seed).unwrap(), 20_000, seed).unwrap();
    let small: Vec<f64> = (0..10).map(|s| radius(100, s)).collect();
    let large: Vec<f64> = (0..10).map(|s| radius(1000, s)).collect();
    assert!(small.iter().zip(&large).all(|(s, l)| l < s));
    let ratio = median(large) / median(small);
    let expected = 10f64.powf(-0.5);
    assert!(ratio > expected / 2.0 && ratio < expected * 2.0, "ratio {ratio}");
}

#[test]
fn covering_radius_of_the_probes_themselves_is_zero() {
    let probes = probe_set(4, 50, 3).unwrap();
    assert_eq!(covering_radius(&probes, 50, 3).unwrap(), 0.0);
}

#[test]
fn d_rho_hand_computed() {
    // Reference: e1 with mass 1. Student: 0.6 at angle 0.1, 0.5 at angle 0.2
    // (other side), −0.05 at e1, and 0.2 far away.
    let e1 = UnitVector::basis(2, 0).unwrap();
    let at = |t: f64| UnitVector::new(vec![t.cos(), t.sin()]).unwrap();
    let reference = AtomicMeasure::new(2, vec![Atom { mass: 1.0, direction: e1.clone() }]).unwrap();
    let student = AtomicMeasure::new(
        2,
        vec![
            Atom { mass: 0.6, direction: at(0.1) },
            Atom { mass: 0.5, direction: at(-0.2) },
            Atom { mass: -0.05, direction: e1 },
            Atom { mass: 0.2, direction: at(2.0) },
        ],
    )
    .unwrap();
    let b = d_rho(&student, &reference, 0.25).unwrap();
    let rbar: f64 = 0.6 + 0.5 - 0.05;
    let expected = (rbar - 1.0).powi(2) + (0.6 * 0.01 + 0.5 * 0.04) + 0.05 + 0.2;
    assert!((b.total - expected).abs() < 1e-15, "{} vs {expected}", b.total);
    assert!((b.r0 - 0.2).abs() < 1e-15);
}

#[test]
fn converged_run_recovers_the_teacher() {
    let lambda = 1e-3;
    let teacher = make_teacher(2, 2, &[1.0, 1.0], DirectionMode::Canonical).unwrap();
    let data = make_dataset(&teacher, 100, 0).unwrap();
    let mut cfg = TrainConfig::new(0.5, RegKind::PathL1 { lambda }, 400_000, 15, 0);
    cfg.positive_nodes = Some(8);
    cfg.log_every = 1000;
    cfg.plateau = None;
    let out = train(&data, &cfg).unwrap();
    let final_measure = to_measure(&out.final_params);
    let rho = 0.25;

    let report = recovery_report(&final_measure, &teacher, rho).unwrap();
    let m = 2.0;
    assert!(report.stray_mass < 1e-8, "stray mass {}", report.stray_mass);
    assert!(report.direction_error <= 10.0 * lambda * lambda * m, "direction error {}", report.direction_error);
    // Squared amplitude error sits at about 20 λ² m at the optimum.
    assert!(report.amplitude_error <= 100.0 * lambda * lambda * m, "amplitude error {}", report.amplitude_error);

    // The reported sup bound dominates the sampled sup error.
    let teacher_measure = teacher.measure();
    let sampled = probe_set(2, 10_000, 1)
        .unwrap()
        .iter()
        .map(|x| {
            (forward_measure(&final_measure, x).unwrap() - forward_measure(&teacher_measure, x).unwrap()).abs()
        })
        .fold(0.0, f64::max);
    assert!(sampled <= report.sup_error, "sampled {sampled} > bound {}", report.sup_error);

    // Along the tail, D_ρ to the collapsed limit tracks the objective gap.
    let reference = collapse_neighborhoods(&final_measure, &teacher, rho).unwrap();
    let j_star = out.records.last().unwrap().j;
    let tail: Vec<_> = out.records.iter().filter(|r| r.iter >= 20_000 && r.iter < 300_000).collect();
    let gaps: Vec<f64> = tail.iter().map(|r| r.j - j_star).collect();
    let dists: Vec<f64> = tail
        .iter()
        .map(|r| {
            let atoms = r.nodes.iter().map(|n| Atom { mass: n.r, direction: UnitVector::new(n.theta.clone()).unwrap() }).collect();
            d_rho(&AtomicMeasure::new(2, atoms).unwrap(), &reference, rho).unwrap().total
        })
        .collect();
    let corr = rank_correlation(&gaps, &dists).unwrap();
    assert!(corr > 0.9, "rank correlation {corr}");
}
