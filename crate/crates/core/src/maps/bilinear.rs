use rand::Rng;
use serde_json::json;

use super::{
    axpy, column, field, random_matrix, FMPoint, FactorMap, FactorPoint, MapInstance,
    pair_count, PairIndexer, PairVector,
};
use crate::dense::{dot, DenseMatrix};
use crate::error::{Error, Result};

/// `(X, Y) ↦ vec(XᵀY)` with `X: d x m`, `Y: d x n`.
///
/// Parameters are `vec(X)` followed by `vec(Y)`; outputs are column-stacked,
/// so entry `(i, j)` sits at `i + m j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MfMap {
    pub d: usize,
    pub m: usize,
    pub n: usize,
}

impl MfMap {
    pub fn new(d: usize, m: usize, n: usize) -> Self {
        Self { d, m, n }
    }

    fn y_offset(&self) -> usize {
        self.d * self.m
    }
}

impl FactorMap for MfMap {
    fn name(&self) -> &'static str {
        "mf"
    }

    fn input_dim(&self) -> usize {
        self.d * (self.m + self.n)
    }

    fn output_dim(&self) -> usize {
        self.m * self.n
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let (d, yo) = (self.d, self.y_offset());
        let mut out = Vec::with_capacity(self.output_dim());
        for j in 0..self.n {
            let yj = column(x, yo, d, j);
            for i in 0..self.m {
                out.push(dot(column(x, 0, d, i), yj));
            }
        }
        out
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let (d, yo) = (self.d, self.y_offset());
        let mut out = Vec::with_capacity(self.output_dim());
        for j in 0..self.n {
            for i in 0..self.m {
                out.push(
                    dot(column(v, 0, d, i), column(x, yo, d, j))
                        + dot(column(x, 0, d, i), column(v, yo, d, j)),
                );
            }
        }
        out
    }

    fn vjp(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let (d, yo) = (self.d, self.y_offset());
        let mut g = vec![0.0; self.input_dim()];
        for j in 0..self.n {
            for i in 0..self.m {
                let wij = w[i + self.m * j];
                if wij == 0.0 {
                    continue;
                }
                let (gx, gy) = g.split_at_mut(yo);
                axpy(wij, column(x, yo, d, j), &mut gx[i * d..(i + 1) * d]);
                axpy(wij, column(x, 0, d, i), &mut gy[j * d..(j + 1) * d]);
            }
        }
        g
    }

    fn output_json(&self, out: &[f64]) -> serde_json::Value {
        let m = DenseMatrix::from_vec(self.m, self.n, out).expect("output length");
        serde_json::to_value(m).expect("serializable")
    }

    fn point_json(&self, x: &[f64]) -> serde_json::Value {
        let p = FactorPoint::unflatten(self.d, self.m, self.n, x).expect("point length");
        serde_json::to_value(p).expect("serializable")
    }
}

/// `P ↦ (a_ij · p_iᵀ p_j)` over a lexicographically indexed set of pairs.
///
/// With the full pair set this is the homogeneous FM interaction map; with a
/// subset it is the submapping over that subset.
#[derive(Debug, Clone, PartialEq)]
pub struct FmMap {
    pub d: usize,
    indexer: PairIndexer,
    coeffs: Vec<f64>,
}

impl FmMap {
    /// Full map over all pairs.
    pub fn new(d: usize, a: &PairVector) -> Result<Self> {
        a.check_nonzero()?;
        Ok(Self {
            d,
            indexer: PairIndexer::full(a.d0()),
            coeffs: a.values().to_vec(),
        })
    }

    /// Submapping over the pairs of `indexer`, one coefficient per pair.
    pub fn restricted(d: usize, indexer: PairIndexer, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != indexer.len() {
            return Err(Error::shape(format!(
                "{} coefficients for {} pairs",
                coeffs.len(),
                indexer.len()
            )));
        }
        if coeffs.iter().any(|c| *c == 0.0 || !c.is_finite()) {
            return Err(Error::Invariant("pair coefficients must be nonzero".into()));
        }
        Ok(Self { d, indexer, coeffs })
    }

    pub fn d0(&self) -> usize {
        self.indexer.d0()
    }

    pub fn indexer(&self) -> &PairIndexer {
        &self.indexer
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }
}

impl FactorMap for FmMap {
    fn name(&self) -> &'static str {
        "fm"
    }

    fn input_dim(&self) -> usize {
        self.d * self.d0()
    }

    fn output_dim(&self) -> usize {
        self.indexer.len()
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let d = self.d;
        self.indexer
            .pairs()
            .iter()
            .zip(&self.coeffs)
            .map(|(&(i, j), a)| a * dot(column(x, 0, d, i), column(x, 0, d, j)))
            .collect()
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.d;
        self.indexer
            .pairs()
            .iter()
            .zip(&self.coeffs)
            .map(|(&(i, j), a)| {
                a * (dot(column(v, 0, d, i), column(x, 0, d, j))
                    + dot(column(x, 0, d, i), column(v, 0, d, j)))
            })
            .collect()
    }

    fn vjp(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut g = vec![0.0; self.input_dim()];
        for ((&(i, j), a), wk) in self.indexer.pairs().iter().zip(&self.coeffs).zip(w) {
            let s = a * wk;
            if s == 0.0 {
                continue;
            }
            axpy(s, column(x, 0, d, j), &mut g[i * d..(i + 1) * d]);
            axpy(s, column(x, 0, d, i), &mut g[j * d..(j + 1) * d]);
        }
        g
    }

    fn output_json(&self, out: &[f64]) -> serde_json::Value {
        let pairs: Vec<_> = self
            .indexer
            .pairs()
            .iter()
            .zip(out)
            .map(|(&(i, j), v)| json!({"i": i + 1, "j": j + 1, "value": v}))
            .collect();
        json!({"d0": self.d0(), "pairs": pairs})
    }

    fn point_json(&self, x: &[f64]) -> serde_json::Value {
        let p = DenseMatrix::from_vec(self.d, self.d0(), x).expect("point length");
        if self.indexer.len() == pair_count(self.d0()) {
            let a = PairVector::new(self.d0(), self.coeffs.clone()).expect("full pair set");
            json!({"p": p, "a": a})
        } else {
            let pairs: Vec<_> = self.indexer.pairs().iter().map(|&(i, j)| [i + 1, j + 1]).collect();
            json!({"p": p, "pairs": pairs, "coefficients": self.coeffs})
        }
    }
}

pub(super) fn parse_mf(doc: &serde_json::Value) -> Result<MapInstance> {
    let p = FactorPoint::new(field(doc, "x")?, field(doc, "y")?)?;
    let map = MfMap::new(p.latent_dim(), p.x.cols(), p.y.cols());
    Ok(MapInstance {
        map: Box::new(map),
        point: p.flatten(),
    })
}

pub(super) fn sample_mf(rng: &mut dyn rand::RngCore) -> MapInstance {
    let (d, m, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
    let p = FactorPoint::new(random_matrix(rng, d, m), random_matrix(rng, d, n)).expect("shapes");
    MapInstance {
        map: Box::new(MfMap::new(d, m, n)),
        point: p.flatten(),
    }
}

pub(super) fn parse_fm(doc: &serde_json::Value) -> Result<MapInstance> {
    let p = FMPoint::new(field(doc, "p")?, field(doc, "a")?)?;
    Ok(MapInstance {
        map: Box::new(FmMap::new(p.p.rows(), &p.a)?),
        point: p.p.vec(),
    })
}

pub(super) fn sample_fm(rng: &mut dyn rand::RngCore) -> MapInstance {
    let (d, d0) = (rng.random_range(1..6), rng.random_range(2..6));
    let a = PairVector::from_fn(d0, |_, _| nonzero_coefficient(rng));
    MapInstance {
        map: Box::new(FmMap::new(d, &a).expect("nonzero")),
        point: random_matrix(rng, d, d0).vec(),
    }
}

/// A coefficient with magnitude in `[0.5, 2]` and random sign.
pub(crate) fn nonzero_coefficient(rng: &mut dyn rand::RngCore) -> f64 {
    let mag = rng.random_range(0.5..=2.0);
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}
