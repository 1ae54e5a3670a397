use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::{stress_minimize, CertificateReport, StressConfig, StressResult, Verdict, PREIMAGE_TOL};
use crate::dense::{max_abs, DenseMatrix, DenseTensor3};
use crate::error::{Error, Result};
use crate::maps::{
    eval_neumf, random_matrix, FMPoint, FmMap, MfMap, PairIndexer, PairVector,
};
use crate::preimage::{fm_tower_radius, solve_fm_at, solve_mf_origin, Mode};
use crate::rng::substream;
use crate::subdiff::{
    sample_gradients, support_gap_along, uniform_in_ball, Composite, Objective,
    ProductDifferenceLoss,
};

/// Margin for strict sign tests and zero tests in the target sets.
pub const SET_TOL: f64 = 1e-12;
const ZERO_TOL: f64 = 1e-12;
const GAP_TOL: f64 = 1e-12;
const IDENTITY_TOL: f64 = 1e-10;
const IDENTITY_POINTS: usize = 100_000;
const NEGATIVE_SAMPLE_RADIUS: f64 = 0.5;
const ORTHANT_MIN_TRIALS: usize = 10_000;
const ORTHANT_FRACTION: f64 = 1.0 / 16.0;
const NEUMF_LATENT: usize = 3;
const CHUNK: usize = 4096;

/// Runs `f(rng, count)` over chunks of `total` draws, one sub-stream per chunk.
fn chunked<T: Send>(
    total: usize,
    seed: u64,
    stream: &str,
    f: impl Fn(&mut ChaCha8Rng, usize) -> T + Sync,
) -> Vec<T> {
    (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(total - c * CHUNK);
            f(&mut substream(seed, stream, c as u64), count)
        })
        .collect()
}

fn positive(rng: &mut impl Rng) -> f64 {
    rng.random_range(0.1..=1.0)
}

fn negative_composite() -> Composite {
    Composite::new(
        Box::new(MfMap::new(1, 2, 2)),
        Box::new(ProductDifferenceLoss::default()),
    )
    .expect("four outputs")
}

/// `f(x, y) = σ(x₁y₁x₂y₂) − σ(x₂y₁x₁y₂)` with `σ(u) = max(u − 1, 0)`.
///
/// `f` vanishes identically, yet the chain-rule upper set at the all-ones
/// point is the segment `[−1, 1]·(1, 1, 1, 1)`. `samples` gradients are
/// drawn within radius 0.5 of that point.
pub fn certify_example_negative(samples: usize, seed: u64) -> Result<CertificateReport> {
    let f = negative_composite();
    let identity = chunked(IDENTITY_POINTS, seed, "negative-identity", |rng, count| {
        let mut worst: f64 = 0.0;
        let mut bad = 0;
        for _ in 0..count {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v = f.value(&x).abs();
            worst = worst.max(v);
            bad += usize::from(v > ZERO_TOL);
        }
        (worst, bad)
    });
    let max_value = identity.iter().map(|r| r.0).fold(0.0, f64::max);
    let value_violations: usize = identity.iter().map(|r| r.1).sum();

    let one = vec![1.0; 4];
    let upper = f.upper(&one)?;
    let sample = sample_gradients(&f, &one, NEGATIVE_SAMPLE_RADIUS, samples, seed)?;
    let gap = support_gap_along(&upper, &sample.gradients, &[vec![0.5; 4]])?.max_gap;
    let gap_neg = support_gap_along(&upper, &sample.gradients, &[vec![-0.5; 4]])?.max_gap;
    let max_grad = sample.max_gradient_norm();
    let grad_violations = sample
        .gradients
        .iter()
        .filter(|g| max_abs(g) > ZERO_TOL)
        .count();

    let mut report = CertificateReport::new("ex-negative", seed, IDENTITY_POINTS);
    report.violations = value_violations + grad_violations;
    let gaps_ok = (gap - 2.0).abs() <= GAP_TOL && (gap_neg - 2.0).abs() <= GAP_TOL;
    report.verdict = match (report.violations, gaps_ok) {
        (0, true) => Verdict::Confirmed,
        (0, false) => Verdict::Inconclusive,
        _ => Verdict::Refuted,
    };
    report.statistics = json!({
        "identity_points": IDENTITY_POINTS,
        "max_abs_value": max_value,
        "value_at_twos": f.value(&[2.0; 4]),
        "gap": gap,
        "gap_negative_direction": gap_neg,
        "gradient_samples": samples,
        "sample_radius": NEGATIVE_SAMPLE_RADIUS,
        "max_gradient_norm": max_grad,
        "rejected_draws": sample.rejected,
    });
    report.data = json!({
        "point": one,
        "direction": [0.5, 0.5, 0.5, 0.5],
        "upper_set": {
            "center": upper.center,
            "generators": upper.generators.iter().map(|g| json!({
                "vector": g.vector, "lo": g.lo, "hi": g.hi,
            })).collect::<Vec<_>>(),
        },
    });
    Ok(report)
}

fn in_open_orthant(z: &[f64; 4]) -> bool {
    z[0] > 0.0 && z[1] > 0.0 && z[2] > 0.0 && z[3] < 0.0
}

fn rank_one_products(x: [f64; 2], y: [f64; 2]) -> [f64; 4] {
    [x[0] * y[0], x[1] * y[0], x[0] * y[1], x[1] * y[1]]
}

/// Checks all sign patterns of `(x₁, x₂, y₁, y₂)`: whenever the first three
/// products are positive, so is the fourth. Returns the number of patterns
/// and whether the implication held for each.
pub fn orthant_sign_enumeration() -> (usize, bool) {
    let sign = |bit: usize| if bit == 0 { 1.0 } else { -1.0 };
    let ok = (0..16usize).all(|mask| {
        let x = [sign(mask & 1), sign(mask >> 1 & 1)];
        let y = [sign(mask >> 2 & 1), sign(mask >> 3 & 1)];
        let z = rank_one_products(x, y);
        !(z[0] > 0.0 && z[1] > 0.0 && z[2] > 0.0) || z[3] > 0.0
    });
    (16, ok)
}

/// `vec(x yᵀ)` for `x, y ∈ R²` never enters the open orthant `R³₊ × R₋`,
/// which holds a sixteenth of the unit ball of `R⁴`.
pub fn certify_mf_orthant(trials: usize, mc_samples: usize, seed: u64) -> Result<CertificateReport> {
    if trials < ORTHANT_MIN_TRIALS {
        return Err(Error::Invariant(format!(
            "orthant certificate needs at least {ORTHANT_MIN_TRIALS} trials, got {trials}"
        )));
    }
    if mc_samples == 0 {
        return Err(Error::Invariant("ball estimate needs at least one sample".into()));
    }
    let violations: usize = chunked(trials, seed, "orthant-products", |rng, count| {
        (0..count)
            .filter(|_| {
                let mut draw = || rng.random_range(-1.0..1.0);
                let x = [draw(), draw()];
                let y = [draw(), draw()];
                in_open_orthant(&rank_one_products(x, y))
            })
            .count()
    })
    .into_iter()
    .sum();
    let (patterns, logic_ok) = orthant_sign_enumeration();

    let hits: usize = chunked(mc_samples, seed, "orthant-ball", |rng, count| {
        (0..count)
            .filter(|_| {
                let z = uniform_in_ball(rng, &[0.0; 4], 1.0);
                in_open_orthant(&[z[0], z[1], z[2], z[3]])
            })
            .count()
    })
    .into_iter()
    .sum();
    let fraction = hits as f64 / mc_samples as f64;
    let std_error = (ORTHANT_FRACTION * (1.0 - ORTHANT_FRACTION) / mc_samples as f64).sqrt();
    let within = (fraction - ORTHANT_FRACTION).abs() <= 3.0 * std_error;

    let mut report = CertificateReport::new("mf-orthant", seed, trials);
    report.violations = violations;
    report.verdict = if violations > 0 || !logic_ok {
        Verdict::Refuted
    } else if within {
        Verdict::Confirmed
    } else {
        Verdict::Inconclusive
    };
    report.statistics = json!({
        "sign_patterns_checked": patterns,
        "sign_logic_holds": logic_ok,
        "ball_samples": mc_samples,
        "ball_fraction": fraction,
        "expected_fraction": ORTHANT_FRACTION,
        "standard_error": std_error,
        "within_three_standard_errors": within,
    });
    report.data = json!({"orthant": ["+", "+", "+", "-"]});
    Ok(report)
}

/// A member of the MF target set for `n x n` targets reachable only with
/// `d ≥ n`: rows 1 and 2 are free in columns `1..n−2`, the last two columns
/// read `(+, +)` and `(+, −)`, and row `i ≥ 3` is positive at column `i − 2`
/// and zero elsewhere.
pub fn mf_adversarial_target(n: usize, rng: &mut impl Rng) -> Result<DenseMatrix> {
    if n < 2 {
        return Err(Error::dimension(format!("target set needs n >= 2, got {n}")));
    }
    let mut t = DenseMatrix::zeros(n, n);
    for j in 0..n - 2 {
        t.set(0, j, rng.random_range(-1.0..1.0));
        t.set(1, j, rng.random_range(-1.0..1.0));
    }
    t.set(0, n - 2, positive(rng));
    t.set(0, n - 1, positive(rng));
    t.set(1, n - 2, positive(rng));
    t.set(1, n - 1, -positive(rng));
    for i in 2..n {
        t.set(i, i - 2, positive(rng));
    }
    Ok(t)
}

/// Membership of a square matrix in the MF target set; signs are strict
/// beyond [`SET_TOL`] and zeros must be within it.
pub fn is_in_o_mf(t: &DenseMatrix) -> bool {
    let (n, cols) = t.shape();
    if n != cols || n < 2 {
        return false;
    }
    (0..n).all(|i| {
        (0..n).all(|j| {
            let v = t.get(i, j);
            match (i, j) {
                (0 | 1, j) if j + 2 < n => true,
                (1, j) if j == n - 1 => v < -SET_TOL,
                (0 | 1, _) => v > SET_TOL,
                (i, j) if j + 2 == i => v > SET_TOL,
                _ => v.abs() <= SET_TOL,
            }
        })
    })
}

/// A member of the FM target set for `a`: component `(1, j)` positive for
/// `j ∈ [2, d0−2]`, components `(1, d0−1)` and `(1, d0)` with the sign of the
/// matching coefficient, every other pair zero.
pub fn fm_adversarial_target(a: &PairVector, rng: &mut impl Rng) -> Result<PairVector> {
    let d0 = a.d0();
    if d0 < 3 {
        return Err(Error::dimension(format!("target set needs d0 >= 3, got {d0}")));
    }
    a.check_nonzero()?;
    Ok(PairVector::from_fn(d0, |i, j| match (i, j) {
        (0, j) if j + 3 <= d0 => positive(rng),
        (0, j) => a.get(0, j).signum() * positive(rng),
        _ => 0.0,
    }))
}

/// Membership of an FM output in the target set for `a`.
pub fn is_in_o_fm(y: &[f64], a: &PairVector) -> bool {
    let d0 = a.d0();
    if d0 < 3 || y.len() != a.values().len() {
        return false;
    }
    PairIndexer::full(d0)
        .pairs()
        .iter()
        .zip(y)
        .all(|(&(i, j), &v)| match (i, j) {
            (0, j) if j + 3 <= d0 => v > SET_TOL,
            (0, j) => a.get(0, j).signum() * v > SET_TOL,
            _ => v.abs() <= SET_TOL,
        })
}

struct GeneralTrial {
    target: Value,
    stress: StressResult,
    control_residual: f64,
    control_guaranteed: bool,
}

fn general_report(
    case_id: &str,
    seed: u64,
    stress_dim: usize,
    control_dim: usize,
    runs: Vec<GeneralTrial>,
    extra: Value,
) -> CertificateReport {
    let mut report = CertificateReport::new(case_id, seed, runs.len());
    report.violations = runs
        .iter()
        .filter(|r| r.stress.successes > 0 || r.stress.iterates_in_set > 0)
        .count();
    let floor = runs.iter().map(|r| r.stress.best_residual).fold(f64::INFINITY, f64::min);
    let controls_ok = runs.iter().all(|r| r.control_residual <= PREIMAGE_TOL);
    report.min_residual = Some(floor);
    report.verdict = if report.violations > 0 {
        Verdict::Refuted
    } else if controls_ok && floor > 0.0 {
        Verdict::Confirmed
    } else {
        Verdict::Inconclusive
    };
    report.statistics = json!({
        "stress_latent_dim": stress_dim,
        "control_latent_dim": control_dim,
        "residual_floor": floor,
        "controls_succeeded": controls_ok,
        "trials": runs.iter().map(|r| json!({
            "stress": r.stress,
            "control_residual": r.control_residual,
            "control_guaranteed": r.control_guaranteed,
        })).collect::<Vec<_>>(),
    });
    report.data = json!({
        "targets": runs.iter().map(|r| r.target.clone()).collect::<Vec<_>>(),
        "parameters": extra,
    });
    report
}

/// Stress test at `d = n − 1` on targets from the MF target set, with a
/// constructive control at `d = n`.
pub fn certify_mf_general(
    n: usize,
    trials: usize,
    restarts: usize,
    seed: u64,
) -> Result<CertificateReport> {
    if n < 2 {
        return Err(Error::dimension(format!("n must be at least 2, got {n}")));
    }
    if trials == 0 || restarts == 0 {
        return Err(Error::Invariant("trials and restarts must be positive".into()));
    }
    let map = MfMap::new(n - 1, n, n);
    let cfg = StressConfig {
        restarts,
        ..StressConfig::default()
    };
    let in_set = |image: &[f64]| is_in_o_mf(&DenseMatrix::from_vec(n, n, image).expect("n x n image"));
    let mut runs = Vec::with_capacity(trials);
    for trial in 0..trials {
        let target = mf_adversarial_target(n, &mut substream(seed, "mf-general-target", trial as u64))?;
        debug_assert!(is_in_o_mf(&target));
        let stress = stress_minimize(
            &map,
            &target.vec(),
            &cfg,
            seed,
            &format!("mf-general-stress/{trial}"),
            &in_set,
        );
        let t = (target.frobenius_norm() * (4.0 * (n * n) as f64).sqrt()).sqrt();
        let control = solve_mf_origin(&target, t, n, Mode::BestEffort)?;
        runs.push(GeneralTrial {
            target: serde_json::to_value(&target).expect("matrix"),
            stress,
            control_residual: control.residual,
            control_guaranteed: control.guaranteed,
        });
    }
    Ok(general_report(
        "mf-general",
        seed,
        n - 1,
        n,
        runs,
        json!({"n": n, "restarts": restarts}),
    ))
}

/// Stress test at `d = d0 − 2` on targets from the FM target set for `a`,
/// with a constructive control at `d = d0 − 1`.
pub fn certify_fm_general(
    d0: usize,
    a: &PairVector,
    trials: usize,
    restarts: usize,
    seed: u64,
) -> Result<CertificateReport> {
    if d0 < 3 {
        return Err(Error::dimension(format!("d0 must be at least 3, got {d0}")));
    }
    if a.d0() != d0 {
        return Err(Error::shape(format!("coefficients over {} features, d0 = {d0}", a.d0())));
    }
    a.check_nonzero()?;
    if trials == 0 || restarts == 0 {
        return Err(Error::Invariant("trials and restarts must be positive".into()));
    }
    let map = FmMap::new(d0 - 2, a)?;
    let cfg = StressConfig {
        restarts,
        ..StressConfig::default()
    };
    let in_set = |image: &[f64]| is_in_o_fm(image, a);
    let base = FMPoint::new(DenseMatrix::zeros(d0 - 1, d0), a.clone())?;
    let rho = fm_tower_radius(a);
    let mut runs = Vec::with_capacity(trials);
    for trial in 0..trials {
        let target = fm_adversarial_target(a, &mut substream(seed, "fm-general-target", trial as u64))?;
        let stress = stress_minimize(
            &map,
            target.values(),
            &cfg,
            seed,
            &format!("fm-general-stress/{trial}"),
            &in_set,
        );
        let t = (2.0 * d0 as f64 * max_abs(target.values()) / rho).sqrt();
        let control = solve_fm_at(&base, target.values(), t, Mode::BestEffort)?;
        runs.push(GeneralTrial {
            target: serde_json::to_value(&target).expect("pair vector"),
            stress,
            control_residual: control.residual,
            control_guaranteed: control.guaranteed,
        });
    }
    Ok(general_report(
        "fm-general",
        seed,
        d0 - 2,
        d0 - 1,
        runs,
        json!({"d0": d0, "a": a, "restarts": restarts}),
    ))
}

/// `T[i,i,k] + T[j,j,k] − T[i,j,k] − T[j,i,k]`, a linear functional that
/// vanishes on the NeuMF range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExchangeFunctional {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl ExchangeFunctional {
    pub fn apply(&self, t: &DenseTensor3) -> f64 {
        let (i, j, k) = (self.i, self.j, self.k);
        t.get(i, i, k) + t.get(j, j, k) - t.get(i, j, k) - t.get(j, i, k)
    }

    /// 1-based terms `[i, j, k, coefficient]`.
    pub fn to_json(&self) -> Value {
        let (i, j, k) = (self.i + 1, self.j + 1, self.k + 1);
        json!({
            "i": i, "j": j, "k": k,
            "terms": [[i, i, k, 1], [j, j, k, 1], [i, j, k, -1], [j, i, k, -1]],
        })
    }
}

/// One functional per head and pair `i < j < min(m, n)`.
pub fn exchange_functionals(m: usize, n: usize, h: usize) -> Vec<ExchangeFunctional> {
    let r = m.min(n);
    let mut out = Vec::new();
    for k in 0..h {
        for i in 0..r {
            for j in i + 1..r {
                out.push(ExchangeFunctional { i, j, k });
            }
        }
    }
    out
}

/// Evaluates the exchange functionals on `trials` random NeuMF images and on
/// a target that no image can reach.
pub fn certify_neumf_defect(
    m: usize,
    n: usize,
    h: usize,
    trials: usize,
    seed: u64,
) -> Result<CertificateReport> {
    if m.min(n) < 2 {
        return Err(Error::Inapplicable(format!(
            "the exchange identity needs min(m, n) >= 2, got {m}x{n}"
        )));
    }
    if h == 0 {
        return Err(Error::shape("NeuMF needs at least one head"));
    }
    let functionals = exchange_functionals(m, n, h);
    let d = NEUMF_LATENT;
    let worst = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = substream(seed, "neumf-point", trial as u64);
            let w = random_matrix(&mut rng, d, h);
            let x = random_matrix(&mut rng, d, m);
            let s = random_matrix(&mut rng, d, h);
            let y = random_matrix(&mut rng, d, n);
            let b: Vec<f64> = (0..h).map(|_| rng.random_range(-1.0..1.0)).collect();
            let image = eval_neumf(&w, &x, &s, &y, &b)?;
            Ok(functionals.iter().map(|f| f.apply(&image).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_violation = worst.iter().cloned().fold(0.0, f64::max);
    let violations = worst.iter().filter(|v| **v > IDENTITY_TOL).count();

    let mut unreachable = DenseTensor3::zeros([m, n, h]);
    unreachable.set(0, 0, 0, 1.0);
    let target_value = functionals[0].apply(&unreachable);
    let flagged = violations == 0 && target_value.abs() > IDENTITY_TOL;

    let mut report = CertificateReport::new("neumf-defect", seed, trials);
    report.violations = violations;
    report.verdict = if violations > 0 {
        Verdict::Refuted
    } else if flagged {
        Verdict::Confirmed
    } else {
        Verdict::Inconclusive
    };
    report.statistics = json!({
        "max_identity_violation": max_violation,
        "identity_tolerance": IDENTITY_TOL,
        "functionals": functionals.len(),
        "latent_dim": d,
    });
    report.data = json!({
        "shape": [m, n, h],
        "functionals": functionals.iter().map(|f| f.to_json()).collect::<Vec<_>>(),
        "unreachable_target": {
            "tensor": unreachable,
            "functional": functionals[0].to_json(),
            "functional_value": target_value,
            "unreachable": flagged,
        },
    });
    Ok(report)
}
