use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::{Objective, SubgradientZonotope};
use crate::dense::{dot, norm};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Points within this distance of a kink are rejected and redrawn.
pub const KINK_TOL: f64 = 1e-12;
const MAX_TRIES: usize = 1000;

/// Gradients taken at random points of a ball around `base`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientSample {
    pub base: Vec<f64>,
    pub radius: f64,
    pub seed: u64,
    pub points: Vec<Vec<f64>>,
    pub gradients: Vec<Vec<f64>>,
    pub rejected: usize,
    pub attempted: usize,
}

impl GradientSample {
    pub fn max_gradient_norm(&self) -> f64 {
        self.gradients.iter().map(|g| norm(g)).fold(0.0, f64::max)
    }
}

/// Uniform point in the ball of the given radius around `center`.
pub fn uniform_in_ball(rng: &mut impl Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let n = center.len();
    let dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let len = norm(&dir);
    let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
    center
        .iter()
        .zip(&dir)
        .map(|(c, u)| if len > 0.0 { c + r * u / len } else { *c })
        .collect()
}

/// Unit vector drawn uniformly from the sphere.
pub fn unit_direction(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm(&v);
        if len > 0.0 {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}

/// Samples `n_samples` gradients of `f` uniformly in the ball of `radius`
/// around `point`, redrawing points that land within [`KINK_TOL`] of a kink.
///
/// Sample `i` uses its own sub-stream of `seed`, so the result does not
/// depend on the number of worker threads.
pub fn sample_gradients(
    f: &dyn Objective,
    point: &[f64],
    radius: f64,
    n_samples: usize,
    seed: u64,
) -> Result<GradientSample> {
    if point.len() != f.dim() {
        return Err(Error::shape(format!("point of dimension {} for an objective on R^{}", point.len(), f.dim())));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Invariant(format!("sample radius must be positive, got {radius}")));
    }
    let draws: Vec<(Option<(Vec<f64>, Vec<f64>)>, usize)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, "gradient-sample", i as u64);
            for tries in 0..MAX_TRIES {
                let y = uniform_in_ball(&mut rng, point, radius);
                if let Some(g) = f.gradient(&y, KINK_TOL) {
                    return (Some((y, g)), tries);
                }
            }
            (None, MAX_TRIES)
        })
        .collect();

    let rejected: usize = draws.iter().map(|(_, r)| r).sum();
    let attempted = rejected + draws.iter().filter(|(d, _)| d.is_some()).count();
    if draws.iter().any(|(d, _)| d.is_none()) || rejected * 10 > attempted * 9 {
        return Err(Error::DegenerateSampling { rejected, attempted });
    }
    let (points, gradients) = draws.into_iter().map(|(d, _)| d.unwrap()).unzip();
    Ok(GradientSample {
        base: point.to_vec(),
        radius,
        seed,
        points,
        gradients,
        rejected,
        attempted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub max_gap: f64,
    pub min_gap: f64,
    pub directions_checked: usize,
}

/// `h_upper(v) − max_g ⟨g, v⟩` over the given directions.
pub fn support_gap_along(
    upper: &SubgradientZonotope,
    gradients: &[Vec<f64>],
    directions: &[Vec<f64>],
) -> Result<GapReport> {
    if gradients.is_empty() {
        return Err(Error::shape("no sampled gradients to compare"));
    }
    if gradients.iter().chain(directions).any(|g| g.len() != upper.dim()) {
        return Err(Error::shape(format!("vectors must live in R^{}", upper.dim())));
    }
    let gaps: Vec<f64> = directions
        .iter()
        .map(|v| {
            let lower = gradients.iter().map(|g| dot(g, v)).fold(f64::NEG_INFINITY, f64::max);
            upper.support(v) - lower
        })
        .collect();
    Ok(GapReport {
        max_gap: gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        min_gap: gaps.iter().cloned().fold(f64::INFINITY, f64::min),
        directions_checked: gaps.len(),
    })
}

/// Support gap over `directions` random unit directions.
pub fn support_gap(
    upper: &SubgradientZonotope,
    lower: &GradientSample,
    directions: usize,
    seed: u64,
) -> Result<GapReport> {
    let dirs: Vec<Vec<f64>> = (0..directions)
        .map(|k| unit_direction(&mut substream(seed, "gap-direction", k as u64), upper.dim()))
        .collect();
    support_gap_along(upper, &lower.gradients, &dirs)
}

/// Largest distance from a sampled gradient to the zonotope.
pub fn max_inclusion_residual(upper: &SubgradientZonotope, gradients: &[Vec<f64>]) -> Result<f64> {
    let residuals = gradients
        .par_iter()
        .map(|g| upper.distance_to(g).map(|p| p.distance))
        .collect::<Result<Vec<f64>>>()?;
    Ok(residuals.into_iter().fold(0.0, f64::max))
}
