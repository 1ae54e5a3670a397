use super::{admit, check_finite, check_radius, complement_basis, Mode, PreimageSolution};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::maps::{eval_mf, FactorPoint};

/// Certified target radius `t² / √(4mn)` of the origin construction.
pub fn mf_origin_radius(t: f64, m: usize, n: usize) -> f64 {
    t * t / ((4 * m * n) as f64).sqrt()
}

/// Per-column scale `min(t/√(2m), t/√(2n))` of the general-point step; the
/// certified target radius is its square.
pub fn mf_at_epsilon(t: f64, m: usize, n: usize) -> f64 {
    t / ((2 * m.max(n)) as f64).sqrt()
}

/// Factors `(X, Y)` with latent dimension `d ≥ min(m, n)` and `XᵀY = target`.
///
/// For `m ≥ n`, `y_j = (t/√(2n)) e_j` and `x_i[j] = (√(2n)/t) target_ij`;
/// otherwise the transposed problem is solved and the factors swapped.
pub(crate) fn origin_factors(target: &DenseMatrix, t: f64, d: usize) -> FactorPoint {
    let (m, n) = target.shape();
    if m < n {
        let swapped = origin_factors(&target.transpose(), t, d);
        return FactorPoint {
            x: swapped.y,
            y: swapped.x,
        };
    }
    let c = t / ((2 * n) as f64).sqrt();
    let y = DenseMatrix::from_fn(d, n, |s, j| if s == j { c } else { 0.0 });
    let x = DenseMatrix::from_fn(d, m, |s, i| if s < n { target.get(i, s) / c } else { 0.0 });
    FactorPoint { x, y }
}

fn finish(
    point: FactorPoint,
    base: &FactorPoint,
    target: &DenseMatrix,
    t: f64,
    guaranteed: bool,
    certified_radius: f64,
) -> Result<PreimageSolution<FactorPoint>> {
    let residual = eval_mf(&point).sub(target)?.frobenius_norm();
    let perturbation_norm = point.distance(base)?;
    Ok(PreimageSolution {
        residual,
        perturbation_norm,
        t,
        guaranteed,
        certified_radius,
        point,
    })
}

/// Preimage of `target` near the origin with latent dimension `d`.
pub fn solve_mf_origin(
    target: &DenseMatrix,
    t: f64,
    d: usize,
    mode: Mode,
) -> Result<PreimageSolution<FactorPoint>> {
    check_radius(t)?;
    check_finite(target.data(), "target")?;
    let (m, n) = target.shape();
    if d < m.min(n) {
        return Err(Error::dimension(format!(
            "latent dimension {d} below min(m, n) = {}",
            m.min(n)
        )));
    }
    let radius = mf_origin_radius(t, m, n);
    let guaranteed = admit(target.frobenius_norm(), radius, mode)?;
    let origin = FactorPoint::zeros(d, m, n);
    let point = if target.max_abs() == 0.0 {
        origin.clone()
    } else {
        origin_factors(target, t, d)
    };
    finish(point, &origin, target, t, guaranteed, radius)
}

/// Preimage of `target` within distance `t` of `base`.
///
/// Perturbation columns live in the orthogonal complement of all base
/// columns, so the cross terms `XᵀZ` and `WᵀY` vanish and the remaining
/// equation `WᵀZ = (target − XᵀY)/ε²` is an origin problem in complement
/// coordinates.
pub fn solve_mf_at(
    base: &FactorPoint,
    target: &DenseMatrix,
    t: f64,
    mode: Mode,
) -> Result<PreimageSolution<FactorPoint>> {
    check_radius(t)?;
    check_finite(target.data(), "target")?;
    check_finite(&base.flatten(), "base point")?;
    let (d, m, n) = (base.latent_dim(), base.x.cols(), base.y.cols());
    if target.shape() != (m, n) {
        return Err(Error::shape(format!(
            "target {:?} for factors with m = {m}, n = {n}",
            target.shape()
        )));
    }
    let mut columns = base.x.columns();
    columns.extend(base.y.columns());
    let complement = complement_basis(&columns, d)?;
    if complement.dim() < m.min(n) {
        return Err(Error::dimension(format!(
            "d = {d} below dim(V) + min(m, n) = {}",
            complement.input_rank() + m.min(n)
        )));
    }

    let eps = mf_at_epsilon(t, m, n);
    let radius = eps * eps;
    let delta = target.sub(&eval_mf(base))?;
    let guaranteed = admit(delta.frobenius_norm(), radius, mode)?;
    if delta.max_abs() == 0.0 {
        return finish(base.clone(), base, target, t, guaranteed, radius);
    }

    // A unit-radius origin problem needs t_o = (4mn)^{1/4}; the perturbation
    // ε·t_o then stays within t. Larger (uncertified) targets get a larger t_o.
    let scaled = delta.scaled(1.0 / radius);
    let unit = ((4 * m * n) as f64).powf(0.25);
    let t_o = unit.max((scaled.frobenius_norm() * ((4 * m * n) as f64).sqrt()).sqrt());
    let inner = origin_factors(&scaled, t_o, complement.dim());
    let w = complement.lift(&inner.x)?;
    let z = complement.lift(&inner.y)?;
    let point = FactorPoint::new(base.x.add(&w.scaled(eps))?, base.y.add(&z.scaled(eps))?)?;
    finish(point, base, target, t, guaranteed, radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_target_gives_zero_factors() {
        let s = solve_mf_origin(&DenseMatrix::zeros(2, 3), 1.0, 2, Mode::Strict).unwrap();
        assert_eq!(s.point, FactorPoint::zeros(2, 2, 3));
        assert_eq!(s.residual, 0.0);
    }

    #[test]
    fn scalar_case_by_hand() {
        let target = DenseMatrix::new(1, 1, vec![2.0]).unwrap();
        let s = solve_mf_origin(&target, 2.0, 1, Mode::Strict).unwrap();
        let r2 = 2f64.sqrt();
        assert!((s.point.x.get(0, 0) - r2).abs() < 1e-15);
        assert!((s.point.y.get(0, 0) - r2).abs() < 1e-15);
        assert!(s.residual < 1e-15);
        assert!(s.guaranteed);
    }

    #[test]
    fn latent_dimension_too_small() {
        let err = solve_mf_origin(&DenseMatrix::zeros(3, 2), 1.0, 1, Mode::Strict).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn strict_rejects_far_target_best_effort_solves() {
        let target = DenseMatrix::new(1, 1, vec![10.0]).unwrap();
        let err = solve_mf_origin(&target, 1.0, 1, Mode::Strict).unwrap_err();
        assert!(matches!(err, Error::Admissibility { .. }));
        let s = solve_mf_origin(&target, 1.0, 1, Mode::BestEffort).unwrap();
        assert!(!s.guaranteed);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn doubling_t_quadruples_radius() {
        assert!((mf_origin_radius(2.0, 3, 4) - 4.0 * mf_origin_radius(1.0, 3, 4)).abs() < 1e-15);
    }

    #[test]
    fn target_equal_to_image_returns_base() {
        let x = DenseMatrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64 * 0.1);
        let y = DenseMatrix::from_fn(4, 2, |i, j| (i * j) as f64 * 0.2 - 0.1);
        let base = FactorPoint::new(x, y).unwrap();
        let s = solve_mf_at(&base, &eval_mf(&base), 1.0, Mode::Strict).unwrap();
        assert_eq!(s.point, base);
        assert_eq!(s.perturbation_norm, 0.0);
    }
}
