#![allow(dead_code)]

use rand::Rng;
use subchain_core::fmdata::SparseSample;

/// Random samples over `d0` features in which any two supports share at most
/// one feature. Supports have two or three features; values avoid zero.
pub fn qualified_samples(rng: &mut impl Rng, d0: usize, max_samples: usize) -> Vec<SparseSample> {
    let mut supports: Vec<Vec<usize>> = Vec::new();
    for _ in 0..200 {
        if supports.len() == max_samples {
            break;
        }
        let size = rng.random_range(2..=3.min(d0));
        let mut s: Vec<usize> = Vec::new();
        while s.len() < size {
            let f = rng.random_range(0..d0);
            if !s.contains(&f) {
                s.push(f);
            }
        }
        if supports.iter().all(|o| o.iter().filter(|f| s.contains(f)).count() <= 1) {
            supports.push(s);
        }
    }
    supports
        .into_iter()
        .map(|s| {
            let entries = s
                .into_iter()
                .map(|f| {
                    let mag = rng.random_range(0.5..2.0);
                    (f, if rng.random_bool(0.5) { mag } else { -mag })
                })
                .collect();
            SparseSample::new(entries, rng.random_range(-1.0..1.0)).unwrap()
        })
        .collect()
}

/// Central difference of `f` at `x` along every coordinate.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += h;
            minus[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1.0)
}
