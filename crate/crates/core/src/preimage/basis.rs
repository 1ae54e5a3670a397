use crate::dense::{dot, norm, DenseMatrix};
use crate::error::{Error, Result};
use crate::maps::FactorPoint;

/// Relative threshold below which a pivot or singular value counts as zero.
const RANK_EPS: f64 = 1e-12;

/// Orthonormal basis of the orthogonal complement of a set of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    basis: DenseMatrix,
    input_rank: usize,
}

impl SubspaceBasis {
    pub fn ambient_dim(&self) -> usize {
        self.basis.rows()
    }

    /// Dimension of the complement.
    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    /// Numerical rank of the input vectors.
    pub fn input_rank(&self) -> usize {
        self.input_rank
    }

    /// `d x dim` matrix with orthonormal columns.
    pub fn basis(&self) -> &DenseMatrix {
        &self.basis
    }

    /// Maps complement coordinates (`dim x k`) to ambient vectors (`d x k`).
    pub fn lift(&self, coords: &DenseMatrix) -> Result<DenseMatrix> {
        self.basis.matmul(coords)
    }
}

/// Orthonormal basis of `span(columns)⊥` in `R^d`.
///
/// Householder QR with column pivoting on the stacked inputs; the complement
/// is read off the trailing columns of the full orthogonal factor.
pub fn complement_basis(columns: &[Vec<f64>], d: usize) -> Result<SubspaceBasis> {
    if let Some(c) = columns.iter().find(|c| c.len() != d) {
        return Err(Error::shape(format!("vector of length {} in R^{d}", c.len())));
    }
    if columns.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("basis input"));
    }
    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let k = a.len();
    let scale = a.iter().map(|c| norm(c)).fold(0.0, f64::max);
    let tol = d.max(k) as f64 * RANK_EPS * scale;

    let mut reflectors: Vec<(Vec<f64>, f64)> = Vec::new();
    if scale > 0.0 {
        for i in 0..d.min(k) {
            let tail_norm = |c: &Vec<f64>| norm(&c[i..]);
            let (p, best) = (i..k)
                .map(|j| (j, tail_norm(&a[j])))
                .fold((i, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if best <= tol {
                break;
            }
            a.swap(i, p);
            let x0 = a[i][i];
            let alpha = if x0 >= 0.0 { -best } else { best };
            let mut v = vec![0.0; d];
            v[i..].copy_from_slice(&a[i][i..]);
            v[i] -= alpha;
            let vv = dot(&v, &v);
            let beta = 2.0 / vv;
            for col in a.iter_mut().skip(i) {
                let s = beta * dot(&v[i..], &col[i..]);
                for (c, vi) in col[i..].iter_mut().zip(&v[i..]) {
                    *c -= s * vi;
                }
            }
            reflectors.push((v, beta));
        }
    }

    let rank = reflectors.len();
    let complement: Vec<Vec<f64>> = (rank..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            for (v, beta) in reflectors.iter().rev() {
                let s = beta * dot(v, &e);
                for (ei, vi) in e.iter_mut().zip(v) {
                    *ei -= s * vi;
                }
            }
            e
        })
        .collect();
    Ok(SubspaceBasis {
        basis: DenseMatrix::from_columns(d, &complement)?,
        input_rank: rank,
    })
}

/// Number of singular values above `max(rows, cols) · σ_max · 1e-12`.
pub fn numerical_rank(m: &DenseMatrix) -> usize {
    if m.rows() == 0 || m.cols() == 0 {
        return 0;
    }
    let sv = m.to_nalgebra().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = m.rows().max(m.cols()) as f64 * smax * RANK_EPS;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Whether `d ≥ dim(span{x_i, y_j}) + min(m, n)` at `base`.
pub fn dim_condition_mf(base: &FactorPoint) -> bool {
    let (m, n) = (base.x.cols(), base.y.cols());
    let stacked = base.x.hstack(&base.y).expect("factor point shares d");
    base.latent_dim() >= numerical_rank(&stacked) + m.min(n)
}

/// Whether `rank(X) = rank(Y) = rank(XᵀY)` at `base`.
pub fn rank_condition(base: &FactorPoint) -> bool {
    let rx = numerical_rank(&base.x);
    let ry = numerical_rank(&base.y);
    let product = base.x.t_matmul(&base.y).expect("factor point shares d");
    rx == ry && ry == numerical_rank(&product)
}
