mod common;

use common::qualified_samples;
use proptest::prelude::*;
use rand::Rng;
use subchain_core::dense::DenseMatrix;
use subchain_core::fmdata::{build_qualified, check_qualification, fm_predict, Dataset, SparseSample};
use subchain_core::maps::FactorMap;
use subchain_core::rng::substream;
use subchain_core::subdiff::{Objective, ScalarLoss};
use subchain_core::Error;

fn sample(entries: &[(usize, f64)], y: f64) -> SparseSample {
    SparseSample::new(entries.to_vec(), y).unwrap()
}

/// `Σ_{i<j} (PᵀP)_ij x_i x_j` with a dense `x`.
fn dense_predict(x: &[f64], p: &DenseMatrix) -> f64 {
    let gram = p.t_matmul(p).unwrap();
    let mut total = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            total += gram.get(i, j) * x[i] * x[j];
        }
    }
    total
}

fn dense(s: &SparseSample, d0: usize) -> Vec<f64> {
    let mut x = vec![0.0; d0];
    for &(i, v) in s.entries() {
        x[i] = v;
    }
    x
}

#[test]
fn overlapping_samples_are_reported_one_based() {
    let samples = [sample(&[(0, 1.0), (1, 1.0), (2, 1.0)], 0.0), sample(&[(1, 2.0), (2, 2.0)], 0.0)];
    let report = check_qualification(&samples, 3).unwrap();
    assert!(!report.qualified);
    let doc = serde_json::to_value(&report).unwrap();
    assert_eq!(doc["violations"][0]["samples"], serde_json::json!([1, 2]));
    assert_eq!(doc["violations"][0]["shared_features"], serde_json::json!([2, 3]));
    assert!(matches!(build_qualified(&samples, 3), Err(Error::Qualification(1))));
}

#[test]
fn sharing_one_feature_is_allowed() {
    let samples = [sample(&[(0, 1.0), (1, 2.0)], 0.0), sample(&[(1, 3.0), (3, 4.0)], 0.0), sample(&[(2, 5.0)], 0.0)];
    let q = build_qualified(&samples, 4).unwrap();
    assert_eq!(q.indexer().pairs(), &[(0, 1), (1, 3)]);
    assert_eq!(q.coefficients(), &[2.0, 12.0]);
    assert_eq!(q.groups(), vec![vec![0], vec![1], vec![]]);
}

#[test]
fn features_beyond_d0_are_rejected() {
    assert!(matches!(check_qualification(&[sample(&[(4, 1.0)], 0.0)], 3), Err(Error::Schema { .. })));
    assert!(SparseSample::new(vec![(1, 1.0), (1, 2.0)], 0.0).is_err());
    assert!(SparseSample::new(vec![(1, f64::NAN)], 0.0).is_err());
}

#[test]
fn dataset_files_report_the_failing_line() {
    for (text, line) in [
        ("", 1),
        ("{\"d0\": 3}\n{\"y\": 1.0, \"x\": {\"0\": 1.0}}\n", 2),
        ("{\"d0\": 3}\n{\"y\": 1.0, \"x\": {\"1\": 1.0}}\n{\"y\": 1.0, \"x\": {\"a\": 1.0}}\n", 3),
        ("{\"d0\": 3}\n{\"y\": 1.0, \"x\": {\"1\": \"big\"}}\n", 2),
        ("{\"d0\": 3}\n{\"x\": {\"1\": 1.0}}\n", 2),
    ] {
        match Dataset::parse_jsonl(text) {
            Err(Error::Schema { line: got, .. }) => assert_eq!(got, line, "{text}"),
            other => panic!("expected a schema error for {text:?}, got {other:?}"),
        }
    }
    let dir = std::env::temp_dir().join("subchain-fmdata-missing.jsonl");
    assert!(matches!(Dataset::read(&dir), Err(Error::Schema { .. })));
}

#[test]
fn restricted_map_outputs_sum_to_predictions() {
    for k in 0..20 {
        let rng = &mut substream(1, "restricted", k);
        let samples = qualified_samples(rng, 7, 12);
        let q = build_qualified(&samples, 7).unwrap();
        let d = 5;
        let p = DenseMatrix::from_fn(d, 7, |_, _| rng.random_range(-1.0..1.0));
        let out = q.restricted_map(d).eval(&p.vec());
        for (s, group) in samples.iter().zip(q.groups()) {
            let via_map: f64 = group.iter().map(|g| out[*g]).sum();
            let direct = fm_predict(s, &p).unwrap();
            assert!((via_map - direct).abs() <= 1e-12);
            assert!((direct - dense_predict(&dense(s, 7), &p)).abs() <= 1e-12);
        }
        let losses: Vec<ScalarLoss> = samples.iter().map(|s| ScalarLoss::Absolute { target: s.y }).collect();
        let objective = q.training_objective(d, &losses).unwrap();
        let want: f64 = samples.iter().map(|s| (fm_predict(s, &p).unwrap() - s.y).abs()).sum();
        assert!((objective.value(&p.vec()) - want).abs() <= 1e-12);
    }
}

#[test]
fn training_objective_checks_loss_count() {
    let q = build_qualified(&[sample(&[(0, 1.0), (1, 1.0)], 0.0)], 2).unwrap();
    assert!(matches!(q.training_objective(3, &[]), Err(Error::Shape(_))));
}

#[test]
fn prediction_checks_columns() {
    assert!(fm_predict(&sample(&[(3, 1.0)], 0.0), &DenseMatrix::zeros(2, 3)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_datasets_qualify_and_round_trip(seed in any::<u64>(), d0 in 3usize..9) {
        let rng = &mut substream(seed, "gen", 0);
        let samples = qualified_samples(rng, d0, 20);
        prop_assert!(check_qualification(&samples, d0).unwrap().qualified);
        let q = build_qualified(&samples, d0).unwrap();
        let count: usize = q.pair_sets().iter().map(|s| s.len()).sum();
        prop_assert_eq!(count, q.indexer().len());
        let data = Dataset { d0, samples };
        prop_assert_eq!(Dataset::parse_jsonl(&data.to_jsonl()).unwrap(), data);
    }

    #[test]
    fn qualification_is_symmetric_in_sample_order(seed in any::<u64>()) {
        let rng = &mut substream(seed, "order", 0);
        let samples: Vec<SparseSample> = (0..6)
            .map(|_| {
                let entries = (0..5).filter(|_| rng.random_bool(0.4)).map(|f| (f, 1.0)).collect();
                SparseSample::new(entries, 0.0).unwrap()
            })
            .collect();
        let mut reversed = samples.clone();
        reversed.reverse();
        let a = check_qualification(&samples, 5).unwrap();
        let b = check_qualification(&reversed, 5).unwrap();
        prop_assert_eq!(a.qualified, b.qualified);
        prop_assert_eq!(a.violations.len(), b.violations.len());
    }
}
