use serde::{Deserialize, Serialize};

use super::Interval;
use crate::dense::{dot, norm};
use crate::error::{Error, Result};

/// Generator `g` with coefficient range `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub vector: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl Generator {
    pub fn interval(&self) -> Interval {
        Interval::new(self.lo, self.hi)
    }
}

/// The set `{center + Σ s_k g_k : s_k ∈ [lo_k, hi_k]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgradientZonotope {
    pub center: Vec<f64>,
    pub generators: Vec<Generator>,
}

/// Result of minimizing `‖center + Σ s_k g_k − target‖` over the box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxProjection {
    pub distance: f64,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
}

/// Outcome of [`SubgradientZonotope::contains_zero`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroTest {
    pub contains: bool,
    pub min_norm: f64,
    pub witness: Vec<f64>,
}

/// Squared-norm threshold for membership.
pub const MEMBERSHIP_TOL_SQ: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const MIN_DECREASE: f64 = 1e-18;

impl SubgradientZonotope {
    pub fn singleton(center: Vec<f64>) -> Self {
        Self {
            center,
            generators: Vec::new(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::singleton(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Adds `interval · vector`. Degenerate intervals fold into the center;
    /// zero vectors are dropped.
    pub fn push(&mut self, vector: Vec<f64>, interval: Interval) {
        debug_assert_eq!(vector.len(), self.dim());
        if interval.is_point() {
            for (c, v) in self.center.iter_mut().zip(&vector) {
                *c += interval.lo * v;
            }
        } else if vector.iter().any(|v| *v != 0.0) {
            self.generators.push(Generator {
                vector,
                lo: interval.lo,
                hi: interval.hi,
            });
        }
    }

    /// Minkowski sum.
    pub fn add(&mut self, other: &SubgradientZonotope) {
        for (c, o) in self.center.iter_mut().zip(&other.center) {
            *c += o;
        }
        self.generators.extend(other.generators.iter().cloned());
    }

    /// Image under a linear map.
    pub fn map_linear(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> SubgradientZonotope {
        let mut out = SubgradientZonotope::singleton(f(&self.center));
        for g in &self.generators {
            out.push(f(&g.vector), g.interval());
        }
        out
    }

    /// Support function `h(v) = max over the set of ⟨z, v⟩`.
    pub fn support(&self, v: &[f64]) -> f64 {
        dot(&self.center, v)
            + self
                .generators
                .iter()
                .map(|g| {
                    let p = dot(&g.vector, v);
                    (g.lo * p).max(g.hi * p)
                })
                .sum::<f64>()
    }

    /// Point of the set with coefficients `s`.
    pub fn point(&self, s: &[f64]) -> Vec<f64> {
        let mut z = self.center.clone();
        for (g, sk) in self.generators.iter().zip(s) {
            for (zi, gi) in z.iter_mut().zip(&g.vector) {
                *zi += sk * gi;
            }
        }
        z
    }

    /// Euclidean distance from `target` to the set, by accelerated projected
    /// gradient on the coefficient box.
    pub fn distance_to(&self, target: &[f64]) -> Result<BoxProjection> {
        if target.len() != self.dim() {
            return Err(Error::shape(format!(
                "point of dimension {} for a zonotope in R^{}",
                target.len(),
                self.dim()
            )));
        }
        Ok(self.project(target))
    }

    /// Whether the origin lies in the set (squared distance ≤ 1e-16).
    pub fn contains_zero(&self) -> ZeroTest {
        let p = self.project(&vec![0.0; self.dim()]);
        ZeroTest {
            contains: p.distance * p.distance <= MEMBERSHIP_TOL_SQ,
            min_norm: p.distance,
            witness: p.coefficients,
        }
    }

    fn project(&self, target: &[f64]) -> BoxProjection {
        let k = self.generators.len();
        let offset: Vec<f64> = self.center.iter().zip(target).map(|(c, t)| c - t).collect();
        let (lo, hi): (Vec<f64>, Vec<f64>) = self.generators.iter().map(|g| (g.lo, g.hi)).unzip();
        let clamp = |s: &mut [f64]| {
            for ((si, l), h) in s.iter_mut().zip(&lo).zip(&hi) {
                *si = si.clamp(*l, *h);
            }
        };
        let residual = |s: &[f64]| {
            let mut r = offset.clone();
            for (g, sk) in self.generators.iter().zip(s) {
                for (ri, gi) in r.iter_mut().zip(&g.vector) {
                    *ri += sk * gi;
                }
            }
            r
        };

        let mut s = vec![0.0; k];
        clamp(&mut s);
        let mut r = residual(&s);
        let mut f = dot(&r, &r);
        let lipschitz = self.gram_spectral_norm();
        if k == 0 || lipschitz == 0.0 || f == 0.0 {
            return BoxProjection {
                distance: f.sqrt(),
                coefficients: s,
                iterations: 0,
            };
        }

        let step = 1.0 / lipschitz;
        let (mut y, mut momentum) = (s.clone(), 1.0f64);
        let mut iterations = 0;
        while iterations < MAX_ITER {
            iterations += 1;
            let ry = residual(&y);
            let mut next: Vec<f64> = y
                .iter()
                .zip(&self.generators)
                .map(|(yk, g)| yk - step * dot(&g.vector, &ry))
                .collect();
            clamp(&mut next);
            let r_next = residual(&next);
            let f_next = dot(&r_next, &r_next);
            if f_next > f {
                // Momentum overshoot: restart from the last accepted iterate.
                y = s.clone();
                if momentum == 1.0 {
                    break;
                }
                momentum = 1.0;
                continue;
            }
            let decrease = f - f_next;
            let m_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
            let beta = (momentum - 1.0) / m_next;
            y = next.iter().zip(&s).map(|(n, o)| n + beta * (n - o)).collect();
            momentum = m_next;
            s = next;
            r = r_next;
            f = f_next;
            if f <= MEMBERSHIP_TOL_SQ * 1e-8 || decrease < MIN_DECREASE {
                break;
            }
        }
        let polished = self.polish(&offset, s.clone(), &lo, &hi);
        let r_polished = residual(&polished);
        if dot(&r_polished, &r_polished) < f {
            s = polished;
            r = r_polished;
        }
        BoxProjection {
            distance: norm(&r),
            coefficients: s,
            iterations,
        }
    }

    /// Bounded-variable least squares started from a projected-gradient
    /// iterate: solve over the interior coefficients, walk toward that
    /// solution until a bound is hit, and release the bound coefficient whose
    /// gradient points most strongly inward once the interior solve is feasible.
    fn polish(&self, offset: &[f64], mut s: Vec<f64>, lo: &[f64], hi: &[f64]) -> Vec<f64> {
        let (k, dim) = (s.len(), self.dim());
        let mut free: Vec<bool> = (0..k).map(|i| s[i] > lo[i] && s[i] < hi[i]).collect();
        for _ in 0..4 * k + 8 {
            let indices: Vec<usize> = (0..k).filter(|&i| free[i]).collect();
            if !indices.is_empty() {
                let r = self.offset_residual(offset, &s);
                let mut fixed = nalgebra::DVector::from_column_slice(&r);
                for &i in &indices {
                    for (b, gi) in fixed.iter_mut().zip(&self.generators[i].vector) {
                        *b -= s[i] * gi;
                    }
                }
                let a = nalgebra::DMatrix::from_fn(dim, indices.len(), |row, c| self.generators[indices[c]].vector[row]);
                let Ok(z) = a.svd(true, true).solve(&(-fixed), 1e-14) else {
                    break;
                };
                let mut step: f64 = 1.0;
                let mut blocking = None;
                for (c, &i) in indices.iter().enumerate() {
                    let delta = z[c] - s[i];
                    let room = if delta > 0.0 {
                        (hi[i] - s[i]) / delta
                    } else if delta < 0.0 {
                        (lo[i] - s[i]) / delta
                    } else {
                        f64::INFINITY
                    };
                    if room < step {
                        step = room.max(0.0);
                        blocking = Some(i);
                    }
                }
                for (c, &i) in indices.iter().enumerate() {
                    s[i] = (s[i] + step * (z[c] - s[i])).clamp(lo[i], hi[i]);
                }
                if let Some(i) = blocking {
                    s[i] = if z[indices.iter().position(|&j| j == i).unwrap()] > s[i] { hi[i] } else { lo[i] };
                    free[i] = false;
                    continue;
                }
            }
            let r = self.offset_residual(offset, &s);
            let release = (0..k)
                .filter(|&i| !free[i])
                .map(|i| {
                    let slope = dot(&self.generators[i].vector, &r);
                    let inward = if s[i] <= lo[i] { -slope } else { slope };
                    (i, inward)
                })
                .filter(|&(_, inward)| inward > 0.0)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match release {
                Some((i, _)) => free[i] = true,
                None => break,
            }
        }
        s
    }

    fn offset_residual(&self, offset: &[f64], s: &[f64]) -> Vec<f64> {
        let mut r = offset.to_vec();
        for (g, sk) in self.generators.iter().zip(s) {
            for (ri, gi) in r.iter_mut().zip(&g.vector) {
                *ri += sk * gi;
            }
        }
        r
    }

    /// Largest eigenvalue of `GᵀG`.
    fn gram_spectral_norm(&self) -> f64 {
        let k = self.generators.len();
        if k == 0 {
            return 0.0;
        }
        let gram = nalgebra::DMatrix::from_fn(k, k, |i, j| {
            dot(&self.generators[i].vector, &self.generators[j].vector)
        });
        gram.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max)
    }
}
