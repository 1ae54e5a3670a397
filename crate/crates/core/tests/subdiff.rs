mod common;

use common::{central_gradient, qualified_samples, relative_error};
use proptest::prelude::*;
use rand::Rng;
use subchain_core::dense::{dot, DenseMatrix};
use subchain_core::fmdata::{build_qualified, fm_predict, SparseSample};
use subchain_core::maps::{map_names, sample_instance, FactorMap, GmfMap, MfMap};
use subchain_core::rng::substream;
use subchain_core::subdiff::{
    chainrule_upper, fm_train_subdiff, gmf_subdiff, max_inclusion_residual, sample_gradients,
    support_gap, support_gap_along, Composite, GmfObjective, Interval, LossKind, Objective,
    ProductDifferenceLoss, ScalarLoss, SeparableLoss, SubgradientZonotope,
};
use subchain_core::Error;

fn composite(map: Box<dyn FactorMap>, loss: ScalarLoss) -> Composite {
    let p = map.output_dim();
    Composite::new(map, Box::new(SeparableLoss::uniform(loss, p))).unwrap()
}

#[test]
fn loss_catalog_parses_and_rejects_unknown_names() {
    for kind in LossKind::ALL {
        assert_eq!(kind.as_str().parse::<LossKind>().unwrap(), kind);
    }
    assert!(matches!("huber".parse::<LossKind>(), Err(Error::UnsupportedLoss(_))));
}

#[test]
fn clarke_intervals_at_kinks() {
    assert_eq!(ScalarLoss::Absolute { target: 0.5 }.clarke(0.5), Interval::new(-1.0, 1.0));
    assert_eq!(ScalarLoss::ShiftedRelu { shift: 1.0 }.clarke(1.0), Interval::new(0.0, 1.0));
    assert_eq!(ScalarLoss::Hinge { label: 1.0 }.clarke(1.0), Interval::new(-1.0, 0.0));
    assert_eq!(ScalarLoss::Hinge { label: -2.0 }.clarke(-0.5), Interval::new(0.0, 2.0));
    assert_eq!(ScalarLoss::ShiftedRelu { shift: 1.0 }.clarke(0.0), Interval::point(0.0));
}

#[test]
fn differentiable_composite_has_no_generators() {
    let map = MfMap::new(2, 2, 3);
    let x: Vec<f64> = (0..map.input_dim()).map(|i| (i as f64 * 0.7).cos()).collect();
    let f = composite(Box::new(map), ScalarLoss::Square { target: 0.3 });
    let z = f.upper(&x).unwrap();
    assert!(z.generators.is_empty());
    let fd = central_gradient(|p| f.value(p), &x, 1e-5);
    assert!(relative_error(&z.center, &fd) <= 1e-8);
}

#[test]
fn absolute_loss_on_scalar_mf_is_a_segment() {
    let f = composite(Box::new(MfMap::new(1, 1, 1)), ScalarLoss::Absolute { target: 1.0 });
    let z = f.upper(&[1.0, 1.0]).unwrap();
    assert_eq!(z.center, vec![0.0, 0.0]);
    assert_eq!(z.generators.len(), 1);
    assert_eq!(z.generators[0].vector, vec![1.0, 1.0]);
    assert_eq!((z.generators[0].lo, z.generators[0].hi), (-1.0, 1.0));
    assert_eq!(z.support(&[1.0, 1.0]), 2.0);
}

#[test]
fn origin_upper_sets_are_zero_for_every_loss() {
    for name in ["mf", "fm", "cp"] {
        let inst = sample_instance(name, &mut substream(1, name, 0)).unwrap();
        let origin = vec![0.0; inst.map.input_dim()];
        for kind in LossKind::ALL {
            // Put the kink at the origin output where the loss has one.
            let loss = match kind {
                LossKind::ShiftedRelu => kind.with_param(0.0),
                LossKind::Hinge => kind.with_default(),
                _ => kind.with_param(0.0),
            };
            let upper = chainrule_upper(inst.map.as_ref(), &origin, &SeparableLoss::uniform(loss, inst.map.output_dim())).unwrap();
            assert!(upper.center.iter().all(|v| *v == 0.0), "{name} {kind}");
            assert!(upper.generators.is_empty(), "{name} {kind}");
            assert!(upper.contains_zero().contains);
        }
    }
}

#[test]
fn contains_zero_examples() {
    let mut z = SubgradientZonotope::singleton(vec![2.0, 0.0]);
    z.push(vec![1.0, 0.0], Interval::new(-1.0, 1.0));
    let t = z.contains_zero();
    assert!(!t.contains);
    assert!((t.min_norm - 1.0).abs() < 1e-12);
    assert_eq!(t.witness, vec![-1.0]);
    let mut z = SubgradientZonotope::zeros(3);
    z.push(vec![1.0, 2.0, 3.0], Interval::new(0.5, 2.0));
    z.push(vec![-1.0, 0.0, 1.0], Interval::new(-1.0, 1.0));
    z.center = z.point(&[1.0, 0.0]).iter().map(|v| -v).collect();
    assert!(z.contains_zero().contains);
}

#[test]
fn distance_to_a_segment_matches_the_closed_form() {
    let mut rng = substream(2, "segment", 0);
    for _ in 0..100 {
        let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (lo, hi) = (rng.random_range(-2.0..0.0), rng.random_range(0.0..2.0));
        let mut z = SubgradientZonotope::singleton(c.clone());
        z.push(g.clone(), Interval::new(lo, hi));
        let target: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let diff: Vec<f64> = target.iter().zip(&c).map(|(t, ci)| t - ci).collect();
        let s = (dot(&diff, &g) / dot(&g, &g)).clamp(lo, hi);
        let nearest: Vec<f64> = c.iter().zip(&g).map(|(ci, gi)| ci + s * gi).collect();
        let want = nearest.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!((z.distance_to(&target).unwrap().distance - want).abs() <= 1e-9);
    }
    let z = SubgradientZonotope::zeros(2);
    assert!(matches!(z.distance_to(&[0.0]), Err(Error::Shape(_))));
}

#[test]
fn zonotope_json_layout() {
    let mut z = SubgradientZonotope::singleton(vec![1.0]);
    z.push(vec![2.0], Interval::new(-1.0, 0.0));
    let doc = serde_json::to_value(&z).unwrap();
    assert_eq!(doc, serde_json::json!({"center": [1.0], "generators": [{"vector": [2.0], "lo": -1.0, "hi": 0.0}]}));
}

#[test]
fn example_composite_gradients_vanish_but_the_upper_set_does_not() {
    let f = Composite::new(Box::new(MfMap::new(1, 2, 2)), Box::new(ProductDifferenceLoss::default())).unwrap();
    let ones = [1.0; 4];
    let lower = sample_gradients(&f, &ones, 0.25, 200, 3).unwrap();
    assert!(lower.max_gradient_norm() <= 1e-12);
    let upper = f.upper(&ones).unwrap();
    let half = vec![0.5; 4];
    let gap = support_gap_along(&upper, &lower.gradients, &[half.clone(), half.iter().map(|v| -v).collect()]).unwrap();
    assert!((gap.max_gap - 2.0).abs() <= 1e-12);
    assert!((gap.min_gap - 2.0).abs() <= 1e-12);
}

#[test]
fn sampling_is_deterministic_and_stays_in_the_ball() {
    let f = composite(Box::new(MfMap::new(2, 2, 2)), ScalarLoss::Absolute { target: 0.1 });
    let x = [0.3, -0.2, 0.5, 0.1, 0.4, 0.2, -0.3, 0.6];
    let a = sample_gradients(&f, &x, 0.1, 300, 9).unwrap();
    let b = sample_gradients(&f, &x, 0.1, 300, 9).unwrap();
    assert_eq!(a, b);
    for p in &a.points {
        let d = p.iter().zip(&x).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        assert!(d <= 0.1);
    }
    assert_ne!(a, sample_gradients(&f, &x, 0.1, 300, 10).unwrap());
}

#[test]
fn kink_saturation_is_degenerate_sampling() {
    // Outputs of order r² = 1e-14 all sit within the kink tolerance.
    let f = composite(Box::new(MfMap::new(2, 2, 2)), ScalarLoss::Absolute { target: 0.0 });
    let err = sample_gradients(&f, &[0.0; 8], 1e-7, 10, 0).unwrap_err();
    assert!(matches!(err, Error::DegenerateSampling { .. }));
    assert!(matches!(sample_gradients(&f, &[0.0; 8], 0.0, 10, 0), Err(Error::Invariant(_))));
}

#[test]
fn gap_vanishes_for_a_smooth_overparameterized_mf() {
    let (m, n) = (2, 2);
    let map = MfMap::new(m + n + m.min(n), m, n);
    let x: Vec<f64> = (0..map.input_dim()).map(|i| (i as f64 * 1.3).sin()).collect();
    let f = composite(Box::new(map), ScalarLoss::Square { target: 0.2 });
    let lower = sample_gradients(&f, &x, 1e-9, 50, 4).unwrap();
    let gap = support_gap(&f.upper(&x).unwrap(), &lower, 32, 4).unwrap();
    assert!(gap.max_gap <= 1e-6);
    assert!(gap.min_gap >= -1e-6);
}

#[test]
fn zero_sets_have_zero_gap() {
    let f = composite(Box::new(MfMap::new(1, 1, 1)), ScalarLoss::Square { target: 0.0 });
    let lower = sample_gradients(&f, &[0.0, 0.0], 1e-300, 5, 0).unwrap();
    let gap = support_gap(&SubgradientZonotope::zeros(2), &lower, 8, 0).unwrap();
    assert!(gap.max_gap.abs() <= 1e-12 && gap.min_gap.abs() <= 1e-12);
}

#[test]
fn sampled_gradients_lie_in_the_upper_set_at_kinks() {
    for name in map_names() {
        let inst = sample_instance(name, &mut substream(5, name, 0)).unwrap();
        let z = inst.map.eval(&inst.point);
        let losses = z.iter().map(|t| ScalarLoss::Absolute { target: *t }).collect();
        let f = Composite::new(inst.map, Box::new(SeparableLoss::new(losses))).unwrap();
        let lower = sample_gradients(&f, &inst.point, 1e-10, 100, 5).unwrap();
        let upper = f.upper(&inst.point).unwrap();
        assert!(!upper.generators.is_empty(), "{name}");
        assert!(max_inclusion_residual(&upper, &lower.gradients).unwrap() <= 1e-8, "{name}");
    }
}

#[test]
fn fm_training_set_examples() {
    let p = DenseMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64 * 0.3 - 0.4);
    let zero = SparseSample::new(vec![], 1.0).unwrap();
    let q = build_qualified(&[zero], 2).unwrap();
    let z = fm_train_subdiff(&q, &p, &[ScalarLoss::Hinge { label: 1.0 }]).unwrap().zonotope;
    assert!(z.center.iter().all(|v| *v == 0.0) && z.generators.is_empty());

    let sample = SparseSample::new(vec![(0, 1.5), (1, -0.5)], 0.7).unwrap();
    let q = build_qualified(std::slice::from_ref(&sample), 2).unwrap();
    let loss = ScalarLoss::Square { target: 0.7 };
    let out = fm_train_subdiff(&q, &p, &[loss]).unwrap();
    assert_eq!(out.warnings.len(), 0);
    let fd = central_gradient(
        |x| loss.value(fm_predict(&sample, &DenseMatrix::from_vec(3, 2, x).unwrap()).unwrap()),
        &p.vec(),
        1e-5,
    );
    assert!(relative_error(&out.zonotope.center, &fd) <= 1e-8);
    assert!(out.zonotope.generators.is_empty());

    // Hinge exactly at its kink: prediction 1 with label 1.
    let p1 = DenseMatrix::new(1, 2, vec![1.0, 1.0]).unwrap();
    let kink = SparseSample::new(vec![(0, 1.0), (1, 1.0)], 1.0).unwrap();
    let q = build_qualified(&[kink], 2).unwrap();
    let z = fm_train_subdiff(&q, &p1, &[ScalarLoss::Hinge { label: 1.0 }]).unwrap().zonotope;
    assert_eq!(z.generators.len(), 1);
    assert_eq!((z.generators[0].lo, z.generators[0].hi), (-1.0, 0.0));
}

#[test]
fn fm_training_warns_below_the_threshold() {
    let sample = SparseSample::new(vec![(0, 1.0), (2, 1.0)], 0.0).unwrap();
    let q = build_qualified(&[sample], 3).unwrap();
    let out = fm_train_subdiff(&q, &DenseMatrix::zeros(2, 3), &[ScalarLoss::Square { target: 0.0 }]).unwrap();
    assert_eq!(out.warnings.len(), 1);
}

#[test]
fn fm_training_center_matches_central_differences() {
    for k in 0..20 {
        let rng = &mut substream(6, "fm-train", k);
        let (d0, d) = (6, 11);
        let samples = qualified_samples(rng, d0, 20);
        let q = build_qualified(&samples, d0).unwrap();
        let p = DenseMatrix::from_fn(d, d0, |_, _| rng.random_range(-1.0..1.0));
        let losses: Vec<ScalarLoss> = samples.iter().map(|s| ScalarLoss::Square { target: s.y }).collect();
        let z = fm_train_subdiff(&q, &p, &losses).unwrap().zonotope;
        let objective = |x: &[f64]| {
            let p = DenseMatrix::from_vec(d, d0, x).unwrap();
            samples.iter().zip(&losses).map(|(s, l)| l.value(fm_predict(s, &p).unwrap())).sum::<f64>()
        };
        assert!(relative_error(&z.center, &central_gradient(objective, &p.vec(), 1e-5)) <= 1e-6);
        let composite = q.training_objective(d, &losses).unwrap();
        assert!(relative_error(&composite.upper(&p.vec()).unwrap().center, &z.center) <= 1e-12);
    }
}

#[test]
fn gmf_examples() {
    let (d, m, n) = (2, 2, 2);
    let p = DenseMatrix::from_fn(d, m, |i, j| (i + j) as f64 + 0.5);
    let q = DenseMatrix::from_fn(d, n, |i, j| (i * j) as f64 - 0.5);
    let pairs = [(0, 0), (1, 1)];
    let sq = [ScalarLoss::Square { target: 1.0 }; 2];
    let z = gmf_subdiff(1.5, &[0.0; 2], &p, &q, &pairs, ScalarLoss::ShiftedRelu { shift: 1.0 }, &sq).unwrap();
    assert!(z.generators.is_empty());
    assert!(z.center.iter().all(|v| *v == 0.0));
    let abs = [ScalarLoss::Absolute { target: 1.0 }; 2];
    assert!(matches!(
        gmf_subdiff(1.0, &[0.0; 2], &p, &q, &pairs, ScalarLoss::ShiftedRelu { shift: 1.0 }, &abs),
        Err(Error::UnsupportedLoss(_))
    ));
}

#[test]
fn gmf_center_matches_central_differences_at_smooth_points() {
    let map = GmfMap::new(1, 1, 1, vec![(0, 0)]).unwrap();
    let f = GmfObjective::new(map, ScalarLoss::ShiftedRelu { shift: 1.0 }, vec![ScalarLoss::Square { target: 0.4 }]).unwrap();
    // v, h, p, q with h·p·q = 2.4 past the shift.
    let x = [0.8, 1.2, 2.0, 1.0];
    let z = f.upper(&x).unwrap();
    assert!(z.generators.is_empty());
    assert!(relative_error(&z.center, &central_gradient(|y| f.value(y), &x, 1e-5)) <= 1e-6);
    assert!(relative_error(&z.center, &f.gradient(&x, 1e-12).unwrap()) <= 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn clarke_matches_derivative_off_the_kink(kind in 0usize..5, param in -2.0f64..2.0, t in -3.0f64..3.0) {
        let loss = LossKind::ALL[kind].with_param(if kind == 2 && param == 0.0 { 1.0 } else { param });
        prop_assume!(loss.kink_distance(t) > 1e-4);
        let i = loss.clarke(t);
        prop_assert!(i.lo <= i.hi && i.is_point());
        let h = 1e-6;
        let fd = (loss.value(t + h) - loss.value(t - h)) / (2.0 * h);
        prop_assert!((i.lo - fd).abs() <= 1e-6);
        prop_assert!((loss.derivative(t).unwrap() - i.lo).abs() <= 1e-12);
    }

    #[test]
    fn support_is_sublinear_and_matches_vertices(seed in any::<u64>(), k in 0usize..8, alpha in 0.01f64..10.0) {
        let rng = &mut substream(seed, "zono", 0);
        let dim = 3;
        let mut z = SubgradientZonotope::singleton((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
        for _ in 0..k {
            let lo = rng.random_range(-1.0..0.5);
            z.push((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(), Interval::new(lo, lo + rng.random_range(0.1..1.0)));
        }
        let u: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = u.iter().map(|x| alpha * x).collect();
        let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        prop_assert!((z.support(&scaled) - alpha * z.support(&u)).abs() <= 1e-12 * (1.0 + alpha));
        prop_assert!(z.support(&sum) <= z.support(&u) + z.support(&v) + 1e-12);
        prop_assert!(z.support(&u) + z.support(&neg) >= -1e-12);
        let g = z.generators.len();
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..(1 << g) {
            let s: Vec<f64> = (0..g).map(|b| if mask >> b & 1 == 1 { z.generators[b].hi } else { z.generators[b].lo }).collect();
            best = best.max(dot(&z.point(&s), &u));
        }
        prop_assert!((z.support(&u) - best).abs() <= 1e-12);
    }
}
