use serde::{Deserialize, Serialize};

use super::mf::origin_factors;
use super::{admit, check_finite, check_radius, solve_mf_at, Mode, PreimageSolution};
use crate::dense::{DenseMatrix, DenseTensor3};
use crate::error::{Error, Result};
use crate::maps::{eval_cp, eval_cp_dagger, CPPoint, FactorPoint};

/// Point `(x, Y, Z)` of the pseudo-tensor map `Yᵀ diag(x) Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaggerPoint {
    pub x: Vec<f64>,
    pub y: DenseMatrix,
    pub z: DenseMatrix,
}

impl DaggerPoint {
    pub fn new(x: Vec<f64>, y: DenseMatrix, z: DenseMatrix) -> Result<Self> {
        if x.len() != y.rows() || y.rows() != z.rows() {
            return Err(Error::shape(format!(
                "x of length {} with Y {}x{} and Z {}x{}",
                x.len(),
                y.rows(),
                y.cols(),
                z.rows(),
                z.cols()
            )));
        }
        Ok(Self { x, y, z })
    }

    pub fn image(&self) -> DenseMatrix {
        eval_cp_dagger(&self.x, &self.y, &self.z).expect("validated shapes")
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        let dx: f64 = self.x.iter().zip(&other.x).map(|(a, b)| (a - b) * (a - b)).sum();
        let dy = self.y.sub(&other.y)?.frobenius_norm();
        let dz = self.z.sub(&other.z)?.frobenius_norm();
        Ok((dx + dy * dy + dz * dz).sqrt())
    }
}

/// Mode order `[r1, r2, r3]` placing the largest mode second, so that the
/// product `n_r1 · n_r3` of the other two is minimal.
fn role_order(shape: [usize; 3]) -> [usize; 3] {
    let r2 = (0..3).fold(0, |best, k| if shape[k] > shape[best] { k } else { best });
    let mut rest = (0..3).filter(|&k| k != r2);
    let (r1, r3) = (rest.next().unwrap(), rest.next().unwrap());
    [r1, r2, r3]
}

/// Certified Frobenius radius of [`solve_cp_origin`] for a tensor of the
/// given shape.
///
/// With roles `n1, n2, n3` (largest mode as `n2`) this is
/// `t³ / ((n1+n2+n3)^{3/2} · 2 n1 n3 √n2)`: every mode-1 slice then lies in
/// the origin radius of its matrix subproblem.
pub fn cp_certified_radius(t: f64, shape: [usize; 3]) -> f64 {
    let [r1, r2, r3] = role_order(shape);
    let (n1, n2, n3) = (shape[r1] as f64, shape[r2] as f64, shape[r3] as f64);
    t.powi(3) / ((n1 + n2 + n3).powf(1.5) * 2.0 * n1 * n3 * n2.sqrt())
}

/// Preimage of `target` under the CP map near the origin.
///
/// After reordering modes, `a_i` is the normalized indicator of block `i`
/// (length `n3`), and each mode-1 slice becomes an independent matrix
/// origin problem on block `i` of `Y` and `Z`.
pub fn solve_cp_origin(
    target: &DenseTensor3,
    t: f64,
    d: usize,
    mode: Mode,
) -> Result<PreimageSolution<CPPoint>> {
    check_radius(t)?;
    check_finite(target.data(), "target")?;
    let shape = target.shape();
    let order = role_order(shape);
    let [n1, n2, n3] = order.map(|k| shape[k]);
    if d < n1 * n3 {
        return Err(Error::dimension(format!(
            "latent dimension {d} below the smallest mode-pair product {}",
            n1 * n3
        )));
    }
    let radius = cp_certified_radius(t, shape);
    let guaranteed = admit(target.frobenius_norm(), radius, mode)?;

    let origin = CPPoint::zeros(d, shape);
    let point = if target.data().iter().all(|v| *v == 0.0) {
        origin.clone()
    } else if shape == [1, 1, 1] {
        let c = target.data()[0].cbrt();
        let f = DenseMatrix::from_fn(d, 1, |s, _| if s == 0 { c } else { 0.0 });
        CPPoint::new(f.clone(), f.clone(), f)?
    } else {
        let roles = target.permuted(order);
        let eps = t / ((n1 + n2 + n3) as f64).sqrt();
        let scale = (n3 as f64).sqrt() / eps.powi(3);
        let t_slice = 1.0 / (n1 as f64).sqrt();
        let mut a = DenseMatrix::zeros(d, n1);
        let mut b = DenseMatrix::zeros(d, n2);
        let mut c = DenseMatrix::zeros(d, n3);
        for i in 0..n1 {
            for k in 0..n3 {
                a.set(i * n3 + k, i, eps / (n3 as f64).sqrt());
            }
            let slice = roles.slice_mode1(i).scaled(scale);
            let block = origin_factors(&slice, t_slice, n3);
            for s in 0..n3 {
                for j in 0..n2 {
                    b.set(i * n3 + s, j, eps * block.x.get(s, j));
                }
                for k in 0..n3 {
                    c.set(i * n3 + s, k, eps * block.y.get(s, k));
                }
            }
        }
        let mut factors = [DenseMatrix::zeros(0, 0), DenseMatrix::zeros(0, 0), DenseMatrix::zeros(0, 0)];
        for (role, f) in [a, b, c].into_iter().enumerate() {
            factors[order[role]] = f;
        }
        let [x, y, z] = factors;
        CPPoint::new(x, y, z)?
    };
    let residual = eval_cp(&point).sub(target)?.frobenius_norm();
    let perturbation_norm = point.distance(&origin)?;
    Ok(PreimageSolution {
        residual,
        perturbation_norm,
        t,
        guaranteed,
        certified_radius: radius,
        point,
    })
}

/// Moves the zero entries of `x` to a common positive `δ`, keeping the sign
/// pattern of the others. Returns the new vector and the remaining budget.
///
/// `δ = min(t/2, min_{x_i ≠ 0} |x_i| / 2) / √#zeros`.
pub fn general_position(x: &[f64], t: f64) -> (Vec<f64>, f64) {
    let zeros = x.iter().filter(|v| **v == 0.0).count();
    if zeros == 0 {
        return (x.to_vec(), t);
    }
    let smallest = x
        .iter()
        .filter(|v| **v != 0.0)
        .map(|v| v.abs())
        .fold(f64::INFINITY, f64::min);
    let root = (zeros as f64).sqrt();
    let delta = (t / 2.0).min(smallest / 2.0) / root;
    let moved = x.iter().map(|&v| if v == 0.0 { delta } else { v }).collect();
    (moved, t - delta * root)
}

fn min_sqrt_abs(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs().sqrt()).fold(f64::INFINITY, f64::min)
}

fn scale_rows(m: &DenseMatrix, w: &[f64]) -> DenseMatrix {
    DenseMatrix::from_fn(m.rows(), m.cols(), |s, j| w[s] * m.get(s, j))
}

/// Preimage of `target` under `(x, Y, Z) ↦ Yᵀ diag(x) Z` within distance `t`
/// of `base`.
///
/// Zero entries of `x` are first moved to `δ` (at most half the budget); with
/// `s = √|x'|` and `σ = sign(x')` the problem becomes the matrix problem at
/// `(s ⊙ Y, σ ⊙ s ⊙ Z)` with radius scaled by `κ = min s`.
pub fn solve_cp_dagger_at(
    base: &DaggerPoint,
    target: &DenseMatrix,
    t: f64,
    mode: Mode,
) -> Result<PreimageSolution<DaggerPoint>> {
    check_radius(t)?;
    check_finite(target.data(), "target")?;
    check_finite(&base.x, "base point")?;
    check_finite(base.y.data(), "base point")?;
    check_finite(base.z.data(), "base point")?;
    let (d, n2, n3) = (base.x.len(), base.y.cols(), base.z.cols());
    if target.shape() != (n2, n3) {
        return Err(Error::shape(format!(
            "target {:?} for a {n2}x{n3} pseudo-tensor map",
            target.shape()
        )));
    }
    if d < n2 + n3 + n2.min(n3) {
        return Err(Error::dimension(format!(
            "d = {d} below n2 + n3 + min(n2, n3) = {}",
            n2 + n3 + n2.min(n3)
        )));
    }

    let zeros = base.x.iter().filter(|v| **v == 0.0).count();
    if zeros == 0 && target.sub(&base.image())?.max_abs() == 0.0 {
        let inner_radius = super::mf_at_epsilon(t * min_sqrt_abs(&base.x), n2, n3).powi(2);
        return Ok(PreimageSolution {
            residual: 0.0,
            perturbation_norm: 0.0,
            t,
            guaranteed: true,
            certified_radius: inner_radius,
            point: base.clone(),
        });
    }
    let (x, t_rem) = general_position(&base.x, t);

    let s: Vec<f64> = x.iter().map(|v| v.abs().sqrt()).collect();
    let signed: Vec<f64> = x.iter().zip(&s).map(|(v, si)| v.signum() * si).collect();
    let kappa = min_sqrt_abs(&x);
    let inner_base = FactorPoint::new(scale_rows(&base.y, &s), scale_rows(&base.z, &signed))?;
    let inner = solve_mf_at(&inner_base, target, kappa * t_rem, mode)?;

    let inv_s: Vec<f64> = s.iter().map(|v| 1.0 / v).collect();
    let inv_signed: Vec<f64> = signed.iter().map(|v| 1.0 / v).collect();
    let point = DaggerPoint::new(
        x,
        scale_rows(&inner.point.x, &inv_s),
        scale_rows(&inner.point.y, &inv_signed),
    )?;
    let residual = point.image().sub(target)?.frobenius_norm();
    let perturbation_norm = point.distance(base)?;
    Ok(PreimageSolution {
        residual,
        perturbation_norm,
        t,
        guaranteed: inner.guaranteed,
        certified_radius: inner.certified_radius,
        point,
    })
}
