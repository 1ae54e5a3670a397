use rayon::prelude::*;
use serde::Serialize;

use crate::dense::{dot, sub_vec};
use crate::maps::FactorMap;
use crate::rng::substream;
use crate::subdiff::uniform_in_ball;

/// Settings for the randomized local minimization of `‖F(x) − target‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub halvings: usize,
    /// A run whose residual drops to this level counts as a preimage.
    pub success_tol: f64,
}

impl Default for StressConfig {
    fn default() -> Self {
        Self {
            restarts: 100,
            max_iter: 10_000,
            halvings: 10,
            success_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StressResult {
    pub best_residual: f64,
    pub worst_residual: f64,
    pub successes: usize,
    pub iterates_in_set: usize,
    pub iterations: usize,
    pub restarts: usize,
}

const STALL_RATIO: f64 = 1e-15;
const STALL_LIMIT: usize = 25;

struct Run {
    residual: f64,
    in_set: usize,
    iterations: usize,
}

/// Gradient descent with backtracking from `restarts` random starts in the
/// unit ball. `in_set` is evaluated on the image at every accepted iterate.
pub fn stress_minimize(
    map: &dyn FactorMap,
    target: &[f64],
    cfg: &StressConfig,
    seed: u64,
    stream: &str,
    in_set: &(dyn Fn(&[f64]) -> bool + Sync),
) -> StressResult {
    let runs: Vec<Run> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, stream, r as u64);
            let start = uniform_in_ball(&mut rng, &vec![0.0; map.input_dim()], 1.0);
            descend(map, target, cfg, start, in_set)
        })
        .collect();
    StressResult {
        best_residual: runs.iter().map(|r| r.residual).fold(f64::INFINITY, f64::min),
        worst_residual: runs.iter().map(|r| r.residual).fold(0.0, f64::max),
        successes: runs.iter().filter(|r| r.residual <= cfg.success_tol).count(),
        iterates_in_set: runs.iter().map(|r| r.in_set).sum(),
        iterations: runs.iter().map(|r| r.iterations).sum(),
        restarts: cfg.restarts,
    }
}

fn descend(
    map: &dyn FactorMap,
    target: &[f64],
    cfg: &StressConfig,
    mut x: Vec<f64>,
    in_set: &(dyn Fn(&[f64]) -> bool + Sync),
) -> Run {
    let objective = |p: &[f64]| {
        let r = sub_vec(&map.eval(p), target);
        (dot(&r, &r), r)
    };
    let (mut f, mut r) = objective(&x);
    let mut step = 1.0;
    let mut stalled = 0;
    let mut in_set_count = usize::from(in_set(&map.eval(&x)));
    let mut iterations = 0;
    let stop = (cfg.success_tol * 1e-2).powi(2);
    while iterations < cfg.max_iter && f > stop {
        iterations += 1;
        let grad: Vec<f64> = map.vjp(&x, &r).into_iter().map(|g| 2.0 * g).collect();
        let mut trial = step * 2.0;
        let mut accepted = None;
        for _ in 0..=cfg.halvings {
            let cand: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - trial * gi).collect();
            let (fc, rc) = objective(&cand);
            if fc < f {
                accepted = Some((cand, fc, rc));
                break;
            }
            trial /= 2.0;
        }
        let Some((cand, fc, rc)) = accepted else { break };
        stalled = if f - fc <= STALL_RATIO * f { stalled + 1 } else { 0 };
        x = cand;
        f = fc;
        r = rc;
        step = trial;
        let image: Vec<f64> = r.iter().zip(target).map(|(ri, ti)| ri + ti).collect();
        in_set_count += usize::from(in_set(&image));
        if stalled >= STALL_LIMIT {
            break;
        }
    }
    Run {
        residual: f.sqrt(),
        in_set: in_set_count,
        iterations,
    }
}
