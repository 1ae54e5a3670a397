use super::{admit, check_finite, check_radius, complement_basis, Mode, PreimageSolution};
use crate::dense::{max_abs, norm, sub_vec, DenseMatrix};
use crate::error::{Error, Result};
use crate::maps::{eval_fm, FMPoint, PairVector};

/// Box bound `1/√2^(d0-1-k)` on row `k` (0-based) of a tower solution.
pub fn tower_row_bound(d0: usize, k: usize) -> f64 {
    0.5f64.powf((d0 - 1 - k) as f64 / 2.0)
}

/// Certified sup-norm radius `min |a_ij| / 2^(d0-1)` of the tower solver.
pub fn fm_tower_radius(a: &PairVector) -> f64 {
    a.min_abs() / 2f64.powi(a.d0() as i32 - 1)
}

/// Upper-triangular `W*` (`dim_free x d0`) with `a_ij w_iᵀ w_j = y_ij` for
/// all `i < j`.
///
/// Row `k < d0 - 1` carries the diagonal `1/√2^(d0-1-k)`; the entries right
/// of it are fixed one pair at a time by forward substitution.
pub fn solve_fm_tower(a: &PairVector, y: &[f64], dim_free: usize, mode: Mode) -> Result<DenseMatrix> {
    let d0 = a.d0();
    a.check_nonzero()?;
    check_finite(y, "tower target")?;
    if y.len() != a.values().len() {
        return Err(Error::shape(format!(
            "tower target of length {} for {} pairs",
            y.len(),
            a.values().len()
        )));
    }
    if dim_free + 1 < d0 {
        return Err(Error::dimension(format!(
            "{dim_free} free dimensions, need d0 - 1 = {}",
            d0 - 1
        )));
    }
    admit(max_abs(y), fm_tower_radius(a), mode)?;
    let target = PairVector::new(d0, y.to_vec())?;
    Ok(tower(a, &target, dim_free))
}

fn tower(a: &PairVector, y: &PairVector, dim_free: usize) -> DenseMatrix {
    let d0 = a.d0();
    let mut w = DenseMatrix::zeros(dim_free, d0);
    for i in 0..d0.saturating_sub(1) {
        let wii = tower_row_bound(d0, i);
        w.set(i, i, wii);
        for j in i + 1..d0 {
            let partial: f64 = (0..i).map(|k| w.get(k, i) * w.get(k, j)).sum();
            w.set(i, j, (y.get(i, j) / a.get(i, j) - partial) / wii);
        }
    }
    w
}

/// Preimage of `y_target` under the FM map within distance `t` of `base`.
///
/// Uses `ε = t/√(2 d0)` and the tower solution for `(y − F(P))/ε²` placed in
/// the orthogonal complement of the base columns.
pub fn solve_fm_at(
    base: &FMPoint,
    y_target: &[f64],
    t: f64,
    mode: Mode,
) -> Result<PreimageSolution<FMPoint>> {
    check_radius(t)?;
    check_finite(y_target, "target")?;
    check_finite(base.p.data(), "base point")?;
    let (d, d0) = base.p.shape();
    let image = eval_fm(base);
    if y_target.len() != image.values().len() {
        return Err(Error::shape(format!(
            "target of length {} for {} pairs",
            y_target.len(),
            image.values().len()
        )));
    }
    let complement = complement_basis(&base.p.columns(), d)?;
    if complement.dim() + 1 < d0 {
        return Err(Error::dimension(format!(
            "d = {d} below dim(span P) + d0 - 1 = {}",
            complement.input_rank() + d0 - 1
        )));
    }

    let eps = t / ((2 * d0) as f64).sqrt();
    let rho = fm_tower_radius(&base.a);
    let radius = eps * eps * rho;
    let delta = sub_vec(y_target, image.values());
    let guaranteed = admit(max_abs(&delta), radius, mode)?;

    let point = if max_abs(&delta) == 0.0 {
        base.clone()
    } else {
        let scaled = PairVector::new(d0, delta.iter().map(|v| v / (eps * eps)).collect())?;
        let w = complement.lift(&tower(&base.a, &scaled, complement.dim()))?;
        FMPoint::new(base.p.add(&w.scaled(eps))?, base.a.clone())?
    };
    let residual = norm(&sub_vec(eval_fm(&point).values(), y_target));
    let perturbation_norm = point.p.sub(&base.p)?.frobenius_norm();
    Ok(PreimageSolution {
        residual,
        perturbation_norm,
        t,
        guaranteed,
        certified_radius: radius,
        point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_target_gives_diagonal_tower() {
        let a = PairVector::from_fn(4, |_, _| 1.0);
        let w = solve_fm_tower(&a, &[0.0; 6], 3, Mode::Strict).unwrap();
        for k in 0..3 {
            for j in 0..4 {
                let expected = if k == j { tower_row_bound(4, k) } else { 0.0 };
                assert_eq!(w.get(k, j), expected);
            }
        }
    }

    #[test]
    fn two_features_by_hand() {
        let a = PairVector::from_fn(2, |_, _| 1.0);
        assert_eq!(fm_tower_radius(&a), 0.5);
        let w = solve_fm_tower(&a, &[0.5], 1, Mode::Strict).unwrap();
        let h = 0.5f64.sqrt();
        assert!((w.get(0, 0) - h).abs() < 1e-15);
        assert!((w.get(0, 1) - h).abs() < 1e-15);
    }

    #[test]
    fn tower_rejects_outside_box_and_small_dimension() {
        let a = PairVector::from_fn(3, |_, _| 1.0);
        let err = solve_fm_tower(&a, &[1.0, 0.0, 0.0], 2, Mode::Strict).unwrap_err();
        assert!(matches!(err, Error::Admissibility { .. }));
        let err = solve_fm_tower(&a, &[0.0; 3], 1, Mode::Strict).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn target_equal_to_image_returns_base() {
        let p = DenseMatrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64).sin());
        let base = FMPoint::new(p, PairVector::from_fn(3, |i, j| (i + j) as f64 + 1.0)).unwrap();
        let y = eval_fm(&base).into_values();
        let s = solve_fm_at(&base, &y, 1.0, Mode::Strict).unwrap();
        assert_eq!(s.point, base);
    }
}
