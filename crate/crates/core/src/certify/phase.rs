use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use super::cases::{fm_adversarial_target, is_in_o_fm, is_in_o_mf, mf_adversarial_target};
use super::{random_coefficients, stress_minimize, StressConfig, PREIMAGE_TOL};
use crate::dense::{max_abs, DenseMatrix};
use crate::error::{Error, Result};
use crate::maps::{FMPoint, FactorMap, FmMap, MfMap, PairVector};
use crate::preimage::{fm_tower_radius, mf_origin_radius, solve_fm_at, solve_mf_origin, Mode};
use crate::rng::substream;

/// Map family and size for a phase sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMap {
    Mf { m: usize, n: usize },
    Fm { d0: usize },
}

impl SweepMap {
    /// Smallest latent dimension at which the origin is locally surjective.
    pub fn threshold(&self) -> usize {
        match *self {
            SweepMap::Mf { m, n } => m.min(n),
            SweepMap::Fm { d0 } => d0 - 1,
        }
    }
}

impl fmt::Display for SweepMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepMap::Mf { .. } => f.write_str("mf"),
            SweepMap::Fm { .. } => f.write_str("fm"),
        }
    }
}

impl Serialize for SweepMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            SweepMap::Mf { m, n } => serde_json::json!({"map": "mf", "m": m, "n": n}),
            SweepMap::Fm { d0 } => serde_json::json!({"map": "fm", "d0": d0}),
        }
        .serialize(s)
    }
}

/// Map family name only; sizes are supplied separately.
impl FromStr for SweepMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mf" => Ok(SweepMap::Mf { m: 2, n: 2 }),
            "fm" => Ok(SweepMap::Fm { d0: 3 }),
            other => Err(Error::UnknownMap(format!("{other} (phase sweeps support mf and fm)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRow {
    pub d: usize,
    pub method: &'static str,
    pub successes: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub min_residual: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTable {
    pub map: SweepMap,
    pub threshold: usize,
    pub adversarial: bool,
    pub seed: u64,
    pub rows: Vec<PhaseRow>,
}

impl PhaseTable {
    pub fn rate(&self, d: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.d == d).map(|r| r.success_rate)
    }
}

enum Targets {
    Mf(Vec<DenseMatrix>),
    Fm(PairVector, Vec<PairVector>),
}

fn random_sign_target(rng: &mut impl Rng, m: usize, n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

/// Targets shared by every `d` in the sweep, scaled onto the certified
/// radius at `t = 1`. Adversarial targets are used when the target sets
/// exist for the given size; otherwise targets are uniform in a box.
fn build_targets(map: SweepMap, trials: usize, seed: u64) -> Result<(Targets, bool)> {
    match map {
        SweepMap::Mf { m, n } => {
            let k = m.min(n);
            let radius = mf_origin_radius(1.0, m, n);
            let targets = (0..trials)
                .map(|trial| {
                    let rng = &mut substream(seed, "sweep-mf-target", trial as u64);
                    let raw = if k >= 2 {
                        let block = mf_adversarial_target(k, rng)?;
                        DenseMatrix::from_fn(m, n, |i, j| if i < k && j < k { block.get(i, j) } else { 0.0 })
                    } else {
                        random_sign_target(rng, m, n)
                    };
                    Ok(raw.scaled(radius / raw.frobenius_norm()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((Targets::Mf(targets), k >= 2))
        }
        SweepMap::Fm { d0 } => {
            let a = random_coefficients(d0, seed);
            let radius = fm_tower_radius(&a) / (2.0 * d0 as f64);
            let targets = (0..trials)
                .map(|trial| {
                    let rng = &mut substream(seed, "sweep-fm-target", trial as u64);
                    let raw = if d0 >= 3 {
                        fm_adversarial_target(&a, rng)?
                    } else {
                        PairVector::from_fn(d0, |_, _| rng.random_range(-1.0..1.0))
                    };
                    let scale = radius / max_abs(raw.values());
                    PairVector::new(d0, raw.values().iter().map(|v| v * scale).collect())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((Targets::Fm(a, targets), d0 >= 3))
        }
    }
}

/// Success rate of reaching each target from near the origin, for every
/// `d` in `d_range`.
///
/// At or above the threshold the constructive solver runs in strict mode
/// with `t = 1`; below it, `restarts` gradient-descent runs per target.
/// A trial succeeds when its residual is at most 1e-8.
pub fn phase_sweep(
    map: SweepMap,
    d_range: &[usize],
    trials: usize,
    restarts: usize,
    seed: u64,
) -> Result<PhaseTable> {
    match map {
        SweepMap::Mf { m, n } if m == 0 || n == 0 => {
            return Err(Error::shape("MF sweep needs m, n >= 1"));
        }
        SweepMap::Fm { d0 } if d0 < 2 => return Err(Error::shape("FM sweep needs d0 >= 2")),
        _ => {}
    }
    if d_range.is_empty() || d_range.contains(&0) {
        return Err(Error::Invariant("latent dimensions must be positive".into()));
    }
    if trials == 0 || restarts == 0 {
        return Err(Error::Invariant("trials and restarts must be positive".into()));
    }
    let (targets, adversarial) = build_targets(map, trials, seed)?;
    let threshold = map.threshold();
    let cfg = StressConfig {
        restarts,
        ..StressConfig::default()
    };
    let mut rows = Vec::with_capacity(d_range.len());
    for &d in d_range {
        let constructive = d >= threshold;
        let residuals: Vec<f64> = match &targets {
            Targets::Mf(ts) => {
                let SweepMap::Mf { m, n } = map else { unreachable!() };
                let stress_map = MfMap::new(d, m, n);
                let k = m.min(n);
                let in_set = |image: &[f64]| {
                    let full = DenseMatrix::from_vec(m, n, image).expect("m x n image");
                    k >= 2 && is_in_o_mf(&DenseMatrix::from_fn(k, k, |i, j| full.get(i, j)))
                };
                ts.iter()
                    .enumerate()
                    .map(|(trial, t)| {
                        if constructive {
                            solve_mf_origin(t, 1.0, d, Mode::Strict).map(|s| s.residual)
                        } else {
                            Ok(stress(&stress_map, &t.vec(), &cfg, seed, d, trial, &in_set))
                        }
                    })
                    .collect::<Result<_>>()?
            }
            Targets::Fm(a, ts) => {
                let stress_map = FmMap::new(d, a)?;
                let base = FMPoint::new(DenseMatrix::zeros(d, a.d0()), a.clone())?;
                let in_set = |image: &[f64]| is_in_o_fm(image, a);
                ts.iter()
                    .enumerate()
                    .map(|(trial, y)| {
                        if constructive {
                            solve_fm_at(&base, y.values(), 1.0, Mode::Strict).map(|s| s.residual)
                        } else {
                            Ok(stress(&stress_map, y.values(), &cfg, seed, d, trial, &in_set))
                        }
                    })
                    .collect::<Result<_>>()?
            }
        };
        let successes = residuals.iter().filter(|r| **r <= PREIMAGE_TOL).count();
        rows.push(PhaseRow {
            d,
            method: if constructive { "constructive" } else { "stress" },
            successes,
            trials,
            success_rate: successes as f64 / trials as f64,
            min_residual: residuals.iter().cloned().fold(f64::INFINITY, f64::min),
            max_residual: residuals.iter().cloned().fold(0.0, f64::max),
        });
    }
    Ok(PhaseTable {
        map,
        threshold,
        adversarial,
        seed,
        rows,
    })
}

fn stress(
    map: &dyn FactorMap,
    target: &[f64],
    cfg: &StressConfig,
    seed: u64,
    d: usize,
    trial: usize,
    in_set: &(dyn Fn(&[f64]) -> bool + Sync),
) -> f64 {
    let result = stress_minimize(map, target, cfg, seed, &format!("sweep-stress/{d}/{trial}"), in_set);
    // An iterate inside the target set would itself contradict the sweep.
    if result.iterates_in_set > 0 {
        0.0
    } else {
        result.best_residual
    }
}
