use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use subchain_core::dense::{DenseMatrix, DenseTensor3};
use subchain_core::maps::{FMPoint, FactorPoint, PairVector};
use subchain_core::preimage::{
    complement_basis, cp_certified_radius, dim_condition_mf, fm_tower_radius, general_position, mf_at_epsilon,
    mf_origin_radius, numerical_rank, rank_condition, solve_cp_dagger_at, solve_cp_origin,
    solve_fm_at, solve_fm_tower, solve_mf_at, solve_mf_origin, tower_row_bound, DaggerPoint, Mode,
};
use subchain_core::rng::substream;
use subchain_core::Error;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn on_sphere(rng: &mut ChaCha8Rng, rows: usize, cols: usize, radius: f64) -> DenseMatrix {
    let raw = random(rng, rows, cols);
    raw.scaled(radius / raw.frobenius_norm())
}

/// `XᵀY` by explicit sums.
fn product(x: &DenseMatrix, y: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(x.cols(), y.cols(), |i, j| (0..x.rows()).map(|s| x.get(s, i) * y.get(s, j)).sum())
}

fn fm_image(p: &DenseMatrix, a: &PairVector) -> Vec<f64> {
    let d0 = p.cols();
    let mut out = Vec::new();
    for i in 0..d0 {
        for j in i + 1..d0 {
            out.push(a.get(i, j) * (0..p.rows()).map(|s| p.get(s, i) * p.get(s, j)).sum::<f64>());
        }
    }
    out
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn unit_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let mut m = random(rng, rows, cols);
    for j in 0..cols {
        let c = m.col(j);
        let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        m.set_col(j, &c.iter().map(|v| v / n).collect::<Vec<_>>());
    }
    m
}

fn coefficients(rng: &mut ChaCha8Rng, d0: usize) -> PairVector {
    PairVector::from_fn(d0, |_, _| {
        let mag = rng.random_range(0.5..2.0);
        if rng.random_bool(0.5) { mag } else { -mag }
    })
}

#[test]
fn mf_origin_follows_the_closed_form() {
    let target = DenseMatrix::new(1, 1, vec![2.0]).unwrap();
    let s = solve_mf_origin(&target, 2.0, 1, Mode::Strict).unwrap();
    assert!((s.point.x.get(0, 0) - 2f64.sqrt()).abs() < 1e-15);
    assert!((s.point.y.get(0, 0) - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(s.certified_radius, 2.0);
}

#[test]
fn mf_origin_reconstructs_on_the_boundary() {
    let (m, n, d, t) = (4, 3, 3, 1.0);
    for k in 0..100 {
        let rng = &mut substream(1, "mf-origin", k);
        let target = on_sphere(rng, m, n, mf_origin_radius(t, m, n));
        let s = solve_mf_origin(&target, t, d, Mode::Strict).unwrap();
        let r = product(&s.point.x, &s.point.y).sub(&target).unwrap().frobenius_norm();
        assert!(r <= 1e-12);
        assert!(s.point.x.frobenius_norm().hypot(s.point.y.frobenius_norm()) <= t * (1.0 + 1e-12));
        assert!(s.guaranteed);
    }
}

#[test]
fn mf_origin_wide_targets_use_the_transpose() {
    let rng = &mut substream(2, "wide", 0);
    let target = on_sphere(rng, 2, 5, mf_origin_radius(1.0, 2, 5));
    let s = solve_mf_origin(&target, 1.0, 2, Mode::Strict).unwrap();
    assert!(product(&s.point.x, &s.point.y).sub(&target).unwrap().frobenius_norm() <= 1e-12);
}

#[test]
fn mf_origin_errors() {
    let rng = &mut substream(3, "err", 0);
    let outside = on_sphere(rng, 3, 3, 1.01 * mf_origin_radius(1.0, 3, 3));
    assert!(matches!(solve_mf_origin(&outside, 1.0, 3, Mode::Strict), Err(Error::Admissibility { .. })));
    let s = solve_mf_origin(&outside, 1.0, 3, Mode::BestEffort).unwrap();
    assert!(!s.guaranteed && s.residual <= 1e-12);
    assert!(matches!(solve_mf_origin(&outside, 1.0, 2, Mode::Strict), Err(Error::Dimension(_))));
    assert!(matches!(solve_mf_origin(&outside, 0.0, 3, Mode::Strict), Err(Error::Invariant(_))));
    assert!(matches!(solve_mf_origin(&outside, f64::NAN, 3, Mode::Strict), Err(Error::NonFinite(_))));
}

#[test]
fn mf_at_cancels_cross_terms() {
    let (m, n, d, t) = (3, 3, 9, 1.0);
    let eps = mf_at_epsilon(t, m, n);
    for k in 0..50 {
        let rng = &mut substream(4, "mf-at", k);
        let base = FactorPoint::new(unit_columns(rng, d, m), unit_columns(rng, d, n)).unwrap();
        let image = product(&base.x, &base.y);
        let target = image.add(&on_sphere(rng, m, n, eps * eps / 2.0)).unwrap();
        let s = solve_mf_at(&base, &target, t, Mode::Strict).unwrap();
        let (w, z) = (s.point.x.sub(&base.x).unwrap(), s.point.y.sub(&base.y).unwrap());
        assert!(product(&base.x, &z).frobenius_norm() <= 1e-12);
        assert!(product(&w, &base.y).frobenius_norm() <= 1e-12);
        assert!(product(&s.point.x, &s.point.y).sub(&target).unwrap().frobenius_norm() <= 1e-10);
        assert!(s.perturbation_norm <= t);
    }
}

#[test]
fn mf_at_the_origin_matches_the_origin_solver() {
    let rng = &mut substream(5, "consistency", 0);
    let (m, n, t) = (3, 2, 1.0);
    let eps = mf_at_epsilon(t, m, n);
    let target = on_sphere(rng, m, n, eps * eps / 2.0);
    let at = solve_mf_at(&FactorPoint::zeros(3, m, n), &target, t, Mode::Strict).unwrap();
    let origin = solve_mf_origin(&target, t, 3, Mode::Strict).unwrap();
    let (a, b) = (product(&at.point.x, &at.point.y), product(&origin.point.x, &origin.point.y));
    assert!(a.sub(&b).unwrap().frobenius_norm() <= 1e-12);
}

#[test]
fn mf_at_rejects_a_crowded_base() {
    let rng = &mut substream(6, "crowded", 0);
    let base = FactorPoint::new(random(rng, 6, 3), random(rng, 6, 3)).unwrap();
    let target = product(&base.x, &base.y);
    assert!(matches!(solve_mf_at(&base, &target, 1.0, Mode::Strict), Err(Error::Dimension(_))));
}

#[test]
fn tower_examples() {
    let a = PairVector::new(2, vec![1.0]).unwrap();
    assert_eq!(fm_tower_radius(&a), 0.5);
    let w = solve_fm_tower(&a, &[0.5], 1, Mode::Strict).unwrap();
    assert!((w.get(0, 0) * w.get(0, 1) - 0.5).abs() < 1e-15);
    let a5 = PairVector::from_fn(5, |_, _| 1.0);
    let w = solve_fm_tower(&a5, &[0.0; 10], 4, Mode::Strict).unwrap();
    for k in 0..4 {
        for j in 0..5 {
            let want = if k == j { 0.5f64.powf((4 - k) as f64 / 2.0) } else { 0.0 };
            assert_eq!(w.get(k, j), want);
        }
    }
}

#[test]
fn tower_reconstructs_within_the_box() {
    let d0 = 5;
    let rng = &mut substream(7, "tower", 0);
    let a = coefficients(rng, d0);
    let rho = fm_tower_radius(&a);
    for _ in 0..200 {
        let y: Vec<f64> = (0..10).map(|_| rng.random_range(-rho..=rho)).collect();
        let w = solve_fm_tower(&a, &y, d0 - 1, Mode::Strict).unwrap();
        assert!(diff_norm(&fm_image(&w, &a), &y) <= 1e-12);
        for j in 0..d0 {
            for k in 0..d0 - 1 {
                let bound = 0.5f64.powf((d0 - 1 - k) as f64 / 2.0);
                assert!(w.get(k, j).abs() <= bound * (1.0 + 1e-12));
                if k > j {
                    assert_eq!(w.get(k, j), 0.0);
                }
            }
            assert!(w.col(j).iter().map(|v| v * v).sum::<f64>() <= 1.0);
        }
    }
}

#[test]
fn tower_row_bounds_halve_per_row() {
    assert_eq!(tower_row_bound(4, 3), 1.0);
    assert!((tower_row_bound(4, 1) - 0.5).abs() < 1e-15);
}

#[test]
fn fm_at_reconstructs_from_a_unit_column_base() {
    let (d0, d, t) = (4, 7, 1.0);
    for k in 0..50 {
        let rng = &mut substream(8, "fm-at", k);
        let a = coefficients(rng, d0);
        let base = FMPoint::new(unit_columns(rng, d, d0), a.clone()).unwrap();
        let eps = t / ((2 * d0) as f64).sqrt();
        let r = eps * eps * fm_tower_radius(&a) / 2.0;
        let target: Vec<f64> = fm_image(&base.p, &a).iter().map(|v| v + rng.random_range(-r..r)).collect();
        let s = solve_fm_at(&base, &target, t, Mode::Strict).unwrap();
        assert!(diff_norm(&fm_image(&s.point.p, &a), &target) <= 1e-10);
        assert!(s.perturbation_norm <= t);
        let w = s.point.p.sub(&base.p).unwrap();
        assert!(product(&base.p, &w).max_abs() <= 1e-10);
    }
}

#[test]
fn fm_at_origin_at_the_threshold_is_the_tower() {
    let d0 = 4;
    let a = PairVector::from_fn(d0, |i, j| if (i + j) % 2 == 0 { 1.0 } else { -1.5 });
    let rng = &mut substream(9, "fm-origin", 0);
    let eps2 = 1.0 / (2 * d0) as f64;
    let rho = fm_tower_radius(&a);
    let y: Vec<f64> = (0..6).map(|_| rng.random_range(-rho..rho) * eps2).collect();
    let base = FMPoint::new(DenseMatrix::zeros(d0 - 1, d0), a.clone()).unwrap();
    let s = solve_fm_at(&base, &y, 1.0, Mode::Strict).unwrap();
    assert!(diff_norm(&fm_image(&s.point.p, &a), &y) <= 1e-12);
    let short = FMPoint::new(DenseMatrix::zeros(d0 - 2, d0), a).unwrap();
    assert!(matches!(solve_fm_at(&short, &y, 1.0, Mode::Strict), Err(Error::Dimension(_))));
}

fn cp_image(x: &DenseMatrix, y: &DenseMatrix, z: &DenseMatrix) -> DenseTensor3 {
    DenseTensor3::from_fn([x.cols(), y.cols(), z.cols()], |i, j, k| {
        (0..x.rows()).map(|s| x.get(s, i) * y.get(s, j) * z.get(s, k)).sum()
    })
}

#[test]
fn cp_origin_reconstructs_admissible_targets() {
    let (shape, d, t) = ([2, 3, 2], 4, 1.0);
    let radius = cp_certified_radius(t, shape);
    for k in 0..50 {
        let rng = &mut substream(10, "cp", k);
        let raw = DenseTensor3::from_fn(shape, |_, _, _| rng.random_range(-1.0..1.0));
        let target = DenseTensor3::new(shape, raw.data().iter().map(|v| v * radius / raw.frobenius_norm()).collect()).unwrap();
        let s = solve_cp_origin(&target, t, d, Mode::Strict).unwrap();
        let img = cp_image(&s.point.x, &s.point.y, &s.point.z);
        assert!(img.sub(&target).unwrap().frobenius_norm() <= 1e-10);
        assert!(s.perturbation_norm <= t);
    }
}

#[test]
fn cp_origin_slices_are_independent() {
    let (shape, d, t) = ([2, 3, 2], 4, 1.0);
    let radius = cp_certified_radius(t, shape);
    let rng = &mut substream(11, "slices", 0);
    let mut target = DenseTensor3::from_fn(shape, |_, _, _| rng.random_range(-1.0..1.0) * radius / 6.0);
    let before = solve_cp_origin(&target, t, d, Mode::Strict).unwrap().point;
    for j in 0..3 {
        for k in 0..2 {
            target.set(0, j, k, target.get(0, j, k) * 0.5);
        }
    }
    let after = solve_cp_origin(&target, t, d, Mode::Strict).unwrap().point;
    // Mode 1 has two slices, one per pair of latent rows; slice 2 owns rows 2..4.
    for s in 2..4 {
        for j in 0..3 {
            assert_eq!(before.y.get(s, j), after.y.get(s, j));
        }
        for k in 0..2 {
            assert_eq!(before.z.get(s, k), after.z.get(s, k));
        }
    }
}

#[test]
fn cp_scalar_and_dimension_errors() {
    let target = DenseTensor3::new([1, 1, 1], vec![0.5 * cp_certified_radius(1.0, [1, 1, 1])]).unwrap();
    let s = solve_cp_origin(&target, 1.0, 1, Mode::Strict).unwrap();
    let v = s.point.x.get(0, 0) * s.point.y.get(0, 0) * s.point.z.get(0, 0);
    assert!((v - target.data()[0]).abs() < 1e-15);
    let big = DenseTensor3::zeros([2, 3, 2]);
    assert!(matches!(solve_cp_origin(&big, 1.0, 3, Mode::Strict), Err(Error::Dimension(_))));
}

fn dagger_image(p: &DaggerPoint) -> DenseMatrix {
    DenseMatrix::from_fn(p.y.cols(), p.z.cols(), |i, j| {
        (0..p.x.len()).map(|s| p.y.get(s, i) * p.x[s] * p.z.get(s, j)).sum()
    })
}

#[test]
fn dagger_with_a_zero_weight_reconstructs() {
    let (d, t) = (8, 1.0);
    for k in 0..50 {
        let rng = &mut substream(12, "dagger", k);
        let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
        x[3] = 0.0;
        let base = DaggerPoint::new(x.clone(), random(rng, d, 2), random(rng, d, 2)).unwrap();
        // Admissibility is measured from the point after the general-position step.
        let (moved, _) = general_position(&x, t);
        let shifted = DaggerPoint::new(moved, base.y.clone(), base.z.clone()).unwrap();
        let target = dagger_image(&shifted).add(&on_sphere(rng, 2, 2, 1e-4)).unwrap();
        let s = solve_cp_dagger_at(&base, &target, t, Mode::Strict).unwrap();
        assert!(dagger_image(&s.point).sub(&target).unwrap().frobenius_norm() <= 1e-9);
        assert!(s.perturbation_norm <= t);
        assert!(s.point.x.iter().all(|v| *v != 0.0));
    }
}

#[test]
fn dagger_with_unit_weights_is_mf_at() {
    let rng = &mut substream(13, "dagger-ones", 0);
    let (y, z) = (random(rng, 8, 2), random(rng, 8, 2));
    let base = DaggerPoint::new(vec![1.0; 8], y.clone(), z.clone()).unwrap();
    let eps = mf_at_epsilon(1.0, 2, 2);
    let target = product(&y, &z).add(&on_sphere(rng, 2, 2, eps * eps / 2.0)).unwrap();
    let dagger = solve_cp_dagger_at(&base, &target, 1.0, Mode::Strict).unwrap();
    let mf = solve_mf_at(&FactorPoint::new(y, z).unwrap(), &target, 1.0, Mode::Strict).unwrap();
    assert!(dagger.point.y.sub(&mf.point.x).unwrap().max_abs() <= 1e-12);
    assert!(dagger.point.z.sub(&mf.point.y).unwrap().max_abs() <= 1e-12);
    let same = solve_cp_dagger_at(&base, &dagger_image(&base), 1.0, Mode::Strict).unwrap();
    assert_eq!(same.perturbation_norm, 0.0);
}

#[test]
fn complement_is_orthonormal_and_orthogonal() {
    for k in 0..20 {
        let rng = &mut substream(14, "complement", k);
        let cols = rng.random_range(0..10);
        let inputs: Vec<Vec<f64>> = (0..cols).map(|_| random(rng, 10, 1).col(0)).collect();
        let b = complement_basis(&inputs, 10).unwrap();
        assert_eq!(b.dim(), 10 - cols);
        let q = b.basis();
        let gram = product(q, q);
        assert!(gram.sub(&DenseMatrix::identity(b.dim())).unwrap().max_abs() <= 1e-12);
        if cols > 0 {
            let v = DenseMatrix::from_columns(10, &inputs).unwrap();
            assert!(product(q, &v).max_abs() <= 1e-10);
        }
    }
    assert_eq!(complement_basis(&[], 3).unwrap().basis(), &DenseMatrix::identity(3));
    let e1 = complement_basis(&[vec![1.0, 0.0, 0.0]], 3).unwrap();
    assert_eq!(e1.dim(), 2);
    assert!(e1.basis().col(0)[0].abs() < 1e-15 && e1.basis().col(1)[0].abs() < 1e-15);
}

#[test]
fn rank_and_dimension_conditions() {
    // X rank one, Y zero, d = min(m, n) + 1.
    let x = DenseMatrix::from_fn(3, 2, |s, _| if s == 0 { 1.0 } else { 0.0 });
    let base = FactorPoint::new(x, DenseMatrix::zeros(3, 2)).unwrap();
    assert!(!rank_condition(&base));
    assert!(dim_condition_mf(&base));
    let origin = FactorPoint::zeros(2, 2, 3);
    assert!(rank_condition(&origin) && dim_condition_mf(&origin));
    let rng = &mut substream(15, "rank", 0);
    let x = random(rng, 9, 3);
    let full = FactorPoint::new(x.clone(), x).unwrap();
    assert!(rank_condition(&full) && dim_condition_mf(&full));
    assert_eq!(numerical_rank(&DenseMatrix::zeros(3, 3)), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn doubling_t_quadruples_the_radius(t in 0.01f64..10.0, m in 1usize..6, n in 1usize..6) {
        let ratio = mf_origin_radius(2.0 * t, m, n) / mf_origin_radius(t, m, n);
        prop_assert!((ratio - 4.0).abs() < 1e-12);
    }

    #[test]
    fn origin_solutions_stay_in_the_ball(seed in any::<u64>(), m in 1usize..6, n in 1usize..6, frac in 0.0f64..1.0) {
        let rng = &mut substream(seed, "ball", 0);
        let t = 0.7;
        let target = on_sphere(rng, m, n, frac * mf_origin_radius(t, m, n));
        let s = solve_mf_origin(&target, t, m.min(n), Mode::Strict).unwrap();
        prop_assert!(s.perturbation_norm <= t);
        prop_assert!(s.residual <= 1e-9 * (1.0 + target.frobenius_norm()));
    }

    #[test]
    fn tower_bounds_hold(seed in any::<u64>(), d0 in 2usize..8) {
        let rng = &mut substream(seed, "tower-prop", 0);
        let a = coefficients(rng, d0);
        let rho = fm_tower_radius(&a);
        let y: Vec<f64> = (0..d0 * (d0 - 1) / 2).map(|_| rng.random_range(-rho..=rho)).collect();
        let w = solve_fm_tower(&a, &y, d0 - 1, Mode::Strict).unwrap();
        for j in 0..d0 {
            for k in 0..d0 - 1 {
                prop_assert!(w.get(k, j).abs() <= tower_row_bound(d0, k) * (1.0 + 1e-12));
            }
        }
    }
}
