//! Factorization maps and their exact Jacobians.
//!
//! Every map implements [`FactorMap`] over a flat parameter vector built by
//! column-stacking its factor blocks. Maps are registered by name (`mf`,
//! `fm`, `cp`, `cpdagger`, `hofm`, `neufm`, `neumf`, `gmf`) and can be
//! built from a JSON point document with [`from_point_json`].

mod bilinear;
mod index;
mod multilinear;
mod neumf;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bilinear::{FmMap, MfMap};
pub(crate) use bilinear::nonzero_coefficient;
pub use index::{
    all_triples, flat_pair_index, pair_count, PairIndexer, PairVector, TripleCoefficients,
};
pub use multilinear::{CpDaggerMap, CpMap, GmfMap, HofmMap, NeuFmMap};
pub use neumf::NeuMfMap;

use crate::dense::{dot, DenseMatrix, DenseTensor3};
use crate::error::{Error, Result};

/// A smooth multilinear map `R^input_dim -> R^output_dim` with an exact
/// Jacobian available through forward and adjoint products.
pub trait FactorMap: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    /// Evaluates the map. `x.len()` must equal `input_dim()`.
    fn eval(&self, x: &[f64]) -> Vec<f64>;

    /// Directional derivative `J(x) v`.
    fn jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64>;

    /// Adjoint product `J(x)ᵀ w`.
    fn vjp(&self, x: &[f64], w: &[f64]) -> Vec<f64>;

    fn output_json(&self, out: &[f64]) -> serde_json::Value;

    fn point_json(&self, x: &[f64]) -> serde_json::Value;
}

/// Checks that `x` is a parameter vector for `map`.
pub fn check_point(map: &dyn FactorMap, x: &[f64]) -> Result<()> {
    if x.len() != map.input_dim() {
        return Err(Error::shape(format!(
            "{} expects {} parameters, got {}",
            map.name(),
            map.input_dim(),
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("parameter vector"));
    }
    Ok(())
}

/// The Jacobian of a map at a fixed point, exposed as a linear operator.
#[derive(Debug, Clone, Copy)]
pub struct LinearOperator<'a> {
    map: &'a dyn FactorMap,
    point: &'a [f64],
}

/// Largest `in_dim * out_dim` for which [`LinearOperator::to_dense`] materializes.
pub const MATERIALIZE_LIMIT: usize = 1_000_000;

impl<'a> LinearOperator<'a> {
    pub fn in_dim(&self) -> usize {
        self.map.input_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.map.output_dim()
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.in_dim() {
            return Err(Error::shape(format!(
                "direction of length {} for input dimension {}",
                v.len(),
                self.in_dim()
            )));
        }
        Ok(self.map.jvp(self.point, v))
    }

    pub fn apply_adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.out_dim() {
            return Err(Error::shape(format!(
                "cotangent of length {} for output dimension {}",
                w.len(),
                self.out_dim()
            )));
        }
        Ok(self.map.vjp(self.point, w))
    }

    /// The `out_dim x in_dim` Jacobian matrix, built column by column.
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let (rows, cols) = (self.out_dim(), self.in_dim());
        if rows * cols > MATERIALIZE_LIMIT {
            return Err(Error::dimension(format!(
                "Jacobian {rows}x{cols} exceeds the materialization limit"
            )));
        }
        let mut out = DenseMatrix::zeros(rows, cols);
        let mut e = vec![0.0; cols];
        for j in 0..cols {
            e[j] = 1.0;
            out.set_col(j, &self.map.jvp(self.point, &e));
            e[j] = 0.0;
        }
        Ok(out)
    }
}

/// Jacobian of `map` at `point`.
pub fn jacobian<'a>(map: &'a dyn FactorMap, point: &'a [f64]) -> Result<LinearOperator<'a>> {
    check_point(map, point)?;
    Ok(LinearOperator { map, point })
}

/// A map together with a point in its domain.
#[derive(Debug)]
pub struct MapInstance {
    pub map: Box<dyn FactorMap>,
    pub point: Vec<f64>,
}

type PointParser = fn(&serde_json::Value) -> Result<MapInstance>;
type Sampler = fn(&mut dyn rand::RngCore) -> MapInstance;

struct Registration {
    name: &'static str,
    parse: PointParser,
    sample: Sampler,
}

const REGISTRY: &[Registration] = &[
    Registration {
        name: "mf",
        parse: bilinear::parse_mf,
        sample: bilinear::sample_mf,
    },
    Registration {
        name: "fm",
        parse: bilinear::parse_fm,
        sample: bilinear::sample_fm,
    },
    Registration {
        name: "cp",
        parse: multilinear::parse_cp,
        sample: multilinear::sample_cp,
    },
    Registration {
        name: "cpdagger",
        parse: multilinear::parse_cp_dagger,
        sample: multilinear::sample_cp_dagger,
    },
    Registration {
        name: "hofm",
        parse: multilinear::parse_hofm,
        sample: multilinear::sample_hofm,
    },
    Registration {
        name: "neufm",
        parse: multilinear::parse_neufm,
        sample: multilinear::sample_neufm,
    },
    Registration {
        name: "neumf",
        parse: neumf::parse_neumf,
        sample: neumf::sample_neumf,
    },
    Registration {
        name: "gmf",
        parse: multilinear::parse_gmf,
        sample: multilinear::sample_gmf,
    },
];

fn lookup(name: &str) -> Result<&'static Registration> {
    REGISTRY
        .iter()
        .find(|r| r.name == name)
        .ok_or_else(|| Error::UnknownMap(name.to_string()))
}

/// Names of all registered maps.
pub fn map_names() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|r| r.name)
}

/// Builds the named map and its point from a JSON point document.
pub fn from_point_json(name: &str, doc: &serde_json::Value) -> Result<MapInstance> {
    (lookup(name)?.parse)(doc)
}

/// A random desk-scale instance of the named map, used for self-checks.
pub fn sample_instance(name: &str, rng: &mut dyn rand::RngCore) -> Result<MapInstance> {
    Ok((lookup(name)?.sample)(rng))
}

pub(crate) fn field<T: for<'de> Deserialize<'de>>(doc: &serde_json::Value, key: &str) -> Result<T> {
    let value = doc
        .get(key)
        .ok_or_else(|| Error::schema(0, format!("missing field `{key}`")))?;
    T::deserialize(value).map_err(|e| Error::schema(0, format!("field `{key}`: {e}")))
}

pub(crate) fn random_matrix(rng: &mut dyn rand::RngCore, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Reads a column-stacked block `rows x cols` starting at `offset`.
#[inline]
pub(crate) fn column(x: &[f64], offset: usize, rows: usize, j: usize) -> &[f64] {
    let start = offset + j * rows;
    &x[start..start + rows]
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Factor pair `(X, Y)` with `X: d x m`, `Y: d x n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPoint {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
}

impl FactorPoint {
    pub fn new(x: DenseMatrix, y: DenseMatrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::shape(format!(
                "factors have latent dimensions {} and {}",
                x.rows(),
                y.rows()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn zeros(d: usize, m: usize, n: usize) -> Self {
        Self {
            x: DenseMatrix::zeros(d, m),
            y: DenseMatrix::zeros(d, n),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.x.rows()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.x.vec();
        v.extend(self.y.vec());
        v
    }

    pub fn unflatten(d: usize, m: usize, n: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != d * (m + n) {
            return Err(Error::shape("flat factor point has the wrong length"));
        }
        Self::new(
            DenseMatrix::from_vec(d, m, &flat[..d * m])?,
            DenseMatrix::from_vec(d, n, &flat[d * m..])?,
        )
    }

    /// Frobenius distance between two factor points of equal shape.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        let dx = self.x.sub(&other.x)?.frobenius_norm();
        let dy = self.y.sub(&other.y)?.frobenius_norm();
        Ok(dx.hypot(dy))
    }
}

/// FM parameter point: `P: d x d0` with nonzero pair coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFmPoint")]
pub struct FMPoint {
    pub p: DenseMatrix,
    pub a: PairVector,
}

#[derive(Deserialize)]
struct RawFmPoint {
    p: DenseMatrix,
    a: PairVector,
}

impl TryFrom<RawFmPoint> for FMPoint {
    type Error = Error;

    fn try_from(raw: RawFmPoint) -> Result<Self> {
        FMPoint::new(raw.p, raw.a)
    }
}

impl FMPoint {
    pub fn new(p: DenseMatrix, a: PairVector) -> Result<Self> {
        if a.d0() != p.cols() {
            return Err(Error::shape(format!(
                "coefficients over {} features for P with {} columns",
                a.d0(),
                p.cols()
            )));
        }
        a.check_nonzero()?;
        Ok(Self { p, a })
    }
}

/// CP factor triple `(X, Y, Z)` sharing latent dimension `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CPPoint {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
    pub z: DenseMatrix,
}

impl CPPoint {
    pub fn new(x: DenseMatrix, y: DenseMatrix, z: DenseMatrix) -> Result<Self> {
        if x.rows() != y.rows() || y.rows() != z.rows() {
            return Err(Error::shape(format!(
                "CP factors have latent dimensions {}, {}, {}",
                x.rows(),
                y.rows(),
                z.rows()
            )));
        }
        Ok(Self { x, y, z })
    }

    pub fn zeros(d: usize, shape: [usize; 3]) -> Self {
        Self {
            x: DenseMatrix::zeros(d, shape[0]),
            y: DenseMatrix::zeros(d, shape[1]),
            z: DenseMatrix::zeros(d, shape[2]),
        }
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        let a = self.x.sub(&other.x)?.frobenius_norm();
        let b = self.y.sub(&other.y)?.frobenius_norm();
        let c = self.z.sub(&other.z)?.frobenius_norm();
        Ok((a * a + b * b + c * c).sqrt())
    }
}

/// `XᵀY`, entry `(i, j)` equal to `x_iᵀ y_j`.
pub fn eval_mf(p: &FactorPoint) -> DenseMatrix {
    p.x.t_matmul(&p.y).expect("FactorPoint shares latent dimension")
}

/// Entry for pair `(i, j)` equal to `a_ij · p_iᵀ p_j`.
pub fn eval_fm(p: &FMPoint) -> PairVector {
    let cols = p.p.columns();
    PairVector::from_fn(p.p.cols(), |i, j| p.a.get(i, j) * dot(&cols[i], &cols[j]))
}

/// `⟦X, Y, Z⟧` with entries `Σ_s X_si Y_sj Z_sk`.
pub fn eval_cp(p: &CPPoint) -> DenseTensor3 {
    let d = p.x.rows();
    let shape = [p.x.cols(), p.y.cols(), p.z.cols()];
    DenseTensor3::from_fn(shape, |i, j, k| {
        (0..d)
            .map(|s| p.x.get(s, i) * p.y.get(s, j) * p.z.get(s, k))
            .sum()
    })
}

/// `Yᵀ diag(x) Z`.
pub fn eval_cp_dagger(x: &[f64], y: &DenseMatrix, z: &DenseMatrix) -> Result<DenseMatrix> {
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
    let weighted = DenseMatrix::from_fn(z.rows(), z.cols(), |s, k| x[s] * z.get(s, k));
    y.t_matmul(&weighted)
}

/// Triple-coefficient map with entries `a_ijk · ⟨p_i, p_j, p_k⟩`.
pub fn eval_hofm(p: &DenseMatrix, a: &TripleCoefficients) -> Result<Vec<f64>> {
    let map = HofmMap::new(p.rows(), a.clone())?;
    Ok(map.eval(&p.vec()))
}

/// Neural FM map; component `(s, i, j)` equals `a_ij · ⟨h_s, p_i, p_j⟩`,
/// ordered with `s` outermost.
pub fn eval_neufm(p: &DenseMatrix, h: &DenseMatrix, a: &PairVector) -> Result<Vec<f64>> {
    if p.rows() != h.rows() {
        return Err(Error::shape("P and H must share the latent dimension"));
    }
    let map = NeuFmMap::new(p.rows(), h.cols(), a.clone())?;
    let mut x = p.vec();
    x.extend(h.vec());
    Ok(map.eval(&x))
}

/// Neural MF map; entry `(i, j, k)` equals `w_kᵀx_i + s_kᵀy_j + b_k`.
pub fn eval_neumf(
    w: &DenseMatrix,
    x: &DenseMatrix,
    s: &DenseMatrix,
    y: &DenseMatrix,
    b: &[f64],
) -> Result<DenseTensor3> {
    let (map, flat) = NeuMfMap::from_blocks(w, x, s, y, b)?;
    DenseTensor3::new([map.m, map.n, map.h], map.eval(&flat))
}
