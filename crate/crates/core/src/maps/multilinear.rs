use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use super::bilinear::nonzero_coefficient;
use super::{
    column, field, random_matrix, CPPoint, FactorMap, MapInstance, PairIndexer, PairVector,
    TripleCoefficients,
};
use crate::dense::{DenseMatrix, DenseTensor3};
use crate::error::{Error, Result};

#[inline]
fn triple(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    a.iter().zip(b).zip(c).map(|((x, y), z)| x * y * z).sum()
}

/// `out += alpha · (b ⊙ c)`
#[inline]
fn hadamard_axpy(alpha: f64, b: &[f64], c: &[f64], out: &mut [f64]) {
    for ((o, x), y) in out.iter_mut().zip(b).zip(c) {
        *o += alpha * x * y;
    }
}

/// `(X, Y, Z) ↦ ⟦X, Y, Z⟧`, entries `⟨x_i, y_j, z_k⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CpMap {
    pub d: usize,
    pub shape: [usize; 3],
}

impl CpMap {
    pub fn new(d: usize, shape: [usize; 3]) -> Self {
        Self { d, shape }
    }

    fn offsets(&self) -> [usize; 3] {
        [0, self.d * self.shape[0], self.d * (self.shape[0] + self.shape[1])]
    }
}

impl FactorMap for CpMap {
    fn name(&self) -> &'static str {
        "cp"
    }

    fn input_dim(&self) -> usize {
        self.d * self.shape.iter().sum::<usize>()
    }

    fn output_dim(&self) -> usize {
        self.shape.iter().product()
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let (d, [n1, n2, n3], [xo, yo, zo]) = (self.d, self.shape, self.offsets());
        let mut out = Vec::with_capacity(self.output_dim());
        let mut xy = vec![0.0; d];
        for i in 0..n1 {
            for j in 0..n2 {
                for (s, v) in xy.iter_mut().enumerate() {
                    *v = x[xo + i * d + s] * x[yo + j * d + s];
                }
                for k in 0..n3 {
                    out.push(crate::dense::dot(&xy, column(x, zo, d, k)));
                }
            }
        }
        out
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let (d, [n1, n2, n3], [xo, yo, zo]) = (self.d, self.shape, self.offsets());
        let mut out = Vec::with_capacity(self.output_dim());
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..n3 {
                    let (xi, yj, zk) = (column(x, xo, d, i), column(x, yo, d, j), column(x, zo, d, k));
                    out.push(
                        triple(column(v, xo, d, i), yj, zk)
                            + triple(xi, column(v, yo, d, j), zk)
                            + triple(xi, yj, column(v, zo, d, k)),
                    );
                }
            }
        }
        out
    }

    fn vjp(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let (d, [n1, n2, n3], [xo, yo, zo]) = (self.d, self.shape, self.offsets());
        let mut g = vec![0.0; self.input_dim()];
        let mut idx = 0;
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..n3 {
                    let wijk = w[idx];
                    idx += 1;
                    if wijk == 0.0 {
                        continue;
                    }
                    let (xi, yj, zk) = (column(x, xo, d, i), column(x, yo, d, j), column(x, zo, d, k));
                    hadamard_axpy(wijk, yj, zk, &mut g[xo + i * d..xo + (i + 1) * d]);
                    hadamard_axpy(wijk, xi, zk, &mut g[yo + j * d..yo + (j + 1) * d]);
                    hadamard_axpy(wijk, xi, yj, &mut g[zo + k * d..zo + (k + 1) * d]);
                }
            }
        }
        g
    }

    fn output_json(&self, out: &[f64]) -> serde_json::Value {
        let t = DenseTensor3::new(self.shape, out.to_vec()).expect("output length");
        serde_json::to_value(t).expect("serializable")
    }

    fn point_json(&self, x: &[f64]) -> serde_json::Value {
        let [xo, yo, zo] = self.offsets();
        let p = CPPoint {
            x: DenseMatrix::from_vec(self.d, self.shape[0], &x[xo..yo]).expect("length"),
            y: DenseMatrix::from_vec(self.d, self.shape[1], &x[yo..zo]).expect("length"),
            z: DenseMatrix::from_vec(self.d, self.shape[2], &x[zo..]).expect("length"),
        };
        serde_json::to_value(p).expect("serializable")
    }
}

/// `(h, P, Q) ↦ (⟨h, p_i, q_j⟩)` over a list of index pairs `(i, j)`.
///
/// Parameters are `h` followed by `vec(P)` and `vec(Q)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GmfMap {
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pairs: Vec<(usize, usize)>,
}

impl GmfMap {
    pub fn new(d: usize, m: usize, n: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= m || j >= n) {
            return Err(Error::shape(format!(
                "index pair ({}, {}) outside {m}x{n}",
                i + 1,
                j + 1
            )));
        }
        Ok(Self { d, m, n, pairs })
    }

    /// All pairs in column-major order, `(i, j)` at `i + m j`.
    pub fn full(d: usize, m: usize, n: usize) -> Self {
        let pairs = (0..n).flat_map(|j| (0..m).map(move |i| (i, j))).collect();
        Self { d, m, n, pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub(crate) fn offsets(&self) -> (usize, usize) {
        (self.d, self.d * (1 + self.m))
    }
}

impl FactorMap for GmfMap {
    fn name(&self) -> &'static str {
        "gmf"
    }

    fn input_dim(&self) -> usize {
        self.d * (1 + self.m + self.n)
    }

    fn output_dim(&self) -> usize {
        self.pairs.len()
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let (d, (po, qo)) = (self.d, self.offsets());
        let h = &x[..d];
        self.pairs
            .iter()
            .map(|&(i, j)| triple(h, column(x, po, d, i), column(x, qo, d, j)))
            .collect()
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let (d, (po, qo)) = (self.d, self.offsets());
        let (h, dh) = (&x[..d], &v[..d]);
        self.pairs
            .iter()
            .map(|&(i, j)| {
                let (pi, qj) = (column(x, po, d, i), column(x, qo, d, j));
                triple(dh, pi, qj) + triple(h, column(v, po, d, i), qj) + triple(h, pi, column(v, qo, d, j))
            })
            .collect()
    }

    fn vjp(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let (d, (po, qo)) = (self.d, self.offsets());
        let mut g = vec![0.0; self.input_dim()];
        let h = &x[..d];
        for (&(i, j), &wk) in self.pairs.iter().zip(w) {
            if wk == 0.0 {
                continue;
            }
            let (pi, qj) = (column(x, po, d, i), column(x, qo, d, j));
            hadamard_axpy(wk, pi, qj, &mut g[..d]);
            hadamard_axpy(wk, h, qj, &mut g[po + i * d..po + (i + 1) * d]);
            hadamard_axpy(wk, h, pi, &mut g[qo + j * d..qo + (j + 1) * d]);
        }
        g
    }

    fn output_json(&self, out: &[f64]) -> serde_json::Value {
        let entries: Vec<_> = self
            .pairs
            .iter()
            .zip(out)
            .map(|(&(i, j), v)| json!({"i": i + 1, "j": j + 1, "value": v}))
            .collect();
        json!({"entries": entries})
    }

    fn point_json(&self, x: &[f64]) -> serde_json::Value {
        let (po, qo) = self.offsets();
        let pairs: Vec<_> = self.pairs.iter().map(|&(i, j)| [i + 1, j + 1]).collect();
        json!({
            "h": &x[..self.d],
            "p": DenseMatrix::from_vec(self.d, self.m, &x[po..qo]).expect("length"),
            "q": DenseMatrix::from_vec(self.d, self.n, &x[qo..]).expect("length"),
            "pairs": pairs,
        })
    }
}

/// `(x, Y, Z) ↦ vec(Yᵀ diag(x) Z)`, the CP map with a single vector mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpDaggerMap {
    inner: GmfMap,
}

impl CpDaggerMap {
    pub fn new(d: usize, n2: usize, n3: usize) -> Self {
        Self {
            inner: GmfMap::full(d, n2, n3),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.inner.d, self.inner.m, self.inner.n)
    }
}

impl FactorMap for CpDaggerMap {
    fn name(&self) -> &'static str {
        "cpdagger"
    }

    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.inner.eval(x)
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        self.inner.jvp(x, v)
    }

    fn vjp(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        self.inner.vjp(x, w)
    }

    fn output_json(&self, out: &[f64]) -> serde_json::Value {
        let m = DenseMatrix::from_vec(self.inner.m, self.inner.n, out).expect("length");
        serde_json::to_value(m).expect("serializable")
    }

    fn point_json(&self, x: &[f64]) -> serde_json::Value {
        let (d, n2, n3) = self.dims();
        let (po, qo) = self.inner.offsets();
        json!({
            "x": &x[..d],
            "y": DenseMatrix::from_vec(d, n2, &x[po..qo]).expect("length"),
            "z": DenseMatrix::from_vec(d, n3, &x[qo..]).expect("length"),
        })
    }
}

/// `P ↦ (a_ijk · ⟨p_i, p_j, p_k⟩)` over all triples `i < j < k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HofmMap {
    pub d: usize,
    coeffs: TripleCoefficients,
}

impl HofmMap {
    pub fn new(d: usize, coeffs: TripleCoefficients) -> Result<Self> {
        coeffs.check_nonzero()?;
        Ok(Self { d, coeffs })
    }
}

impl FactorMap for HofmMap {
    fn name(&self) -> &'static str {
        "hofm"
    }

    fn input_dim(&self) -> usize {
        self.d * self.coeffs.d0()
    }

    fn output_dim(&self) -> usize {
        self.coeffs.values().len()
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let d = self.d;
        self.coeffs
            .triples()
            .iter()
            .zip(self.coeffs.values())
            .map(|(&(i, j, k), a)| a * triple(column(x, 0, d, i), column(x, 0, d, j), column(x, 0, d, k)))
            .collect()
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let d = self.d;
        self.coeffs
            .triples()
            .iter()
            .zip(self.coeffs.values())
            .map(|(&(i, j, k), a)| {
                let (pi, pj, pk) = (column(x, 0, d, i), column(x, 0, d, j), column(x, 0, d, k));
                a * (triple(column(v, 0, d, i), pj, pk)
                    + triple(pi, column(v, 0, d, j), pk)
                    + triple(pi, pj, column(v, 0, d, k)))
            })
            .collect()
    }

    fn vjp(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut g = vec![0.0; self.input_dim()];
        for ((&(i, j, k), a), wt) in self.coeffs.triples().iter().zip(self.coeffs.values()).zip(w) {
            let s = a * wt;
            if s == 0.0 {
                continue;
            }
            let (pi, pj, pk) = (column(x, 0, d, i), column(x, 0, d, j), column(x, 0, d, k));
            let (pi, pj, pk) = (pi.to_vec(), pj.to_vec(), pk.to_vec());
            hadamard_axpy(s, &pj, &pk, &mut g[i * d..(i + 1) * d]);
            hadamard_axpy(s, &pi, &pk, &mut g[j * d..(j + 1) * d]);
            hadamard_axpy(s, &pi, &pj, &mut g[k * d..(k + 1) * d]);
        }
        g
    }

    fn output_json(&self, out: &[f64]) -> serde_json::Value {
        let coeffs = TripleCoefficients::new(self.coeffs.d0(), out.to_vec()).expect("length");
        serde_json::to_value(coeffs).expect("serializable")
    }

    fn point_json(&self, x: &[f64]) -> serde_json::Value {
        json!({
            "p": DenseMatrix::from_vec(self.d, self.coeffs.d0(), x).expect("length"),
            "a": self.coeffs,
        })
    }
}

/// `(P, H) ↦ (a_ij · ⟨h_s, p_i, p_j⟩)` with the head index `s` outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuFmMap {
    pub d: usize,
    pub h: usize,
    coeffs: PairVector,
    indexer: PairIndexer,
}

impl NeuFmMap {
    pub fn new(d: usize, h: usize, coeffs: PairVector) -> Result<Self> {
        coeffs.check_nonzero()?;
        let indexer = PairIndexer::full(coeffs.d0());
        Ok(Self {
            d,
            h,
            coeffs,
            indexer,
        })
    }

    fn h_offset(&self) -> usize {
        self.d * self.coeffs.d0()
    }
}

impl FactorMap for NeuFmMap {
    fn name(&self) -> &'static str {
        "neufm"
    }

    fn input_dim(&self) -> usize {
        self.d * (self.coeffs.d0() + self.h)
    }

    fn output_dim(&self) -> usize {
        self.h * self.indexer.len()
    }

    fn eval(&self, x: &[f64]) -> Vec<f64> {
        let (d, ho) = (self.d, self.h_offset());
        let mut out = Vec::with_capacity(self.output_dim());
        for s in 0..self.h {
            let hs = column(x, ho, d, s);
            for (&(i, j), a) in self.indexer.pairs().iter().zip(self.coeffs.values()) {
                out.push(a * triple(hs, column(x, 0, d, i), column(x, 0, d, j)));
            }
        }
        out
    }

    fn jvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let (d, ho) = (self.d, self.h_offset());
        let mut out = Vec::with_capacity(self.output_dim());
        for s in 0..self.h {
            let hs = column(x, ho, d, s);
            for (&(i, j), a) in self.indexer.pairs().iter().zip(self.coeffs.values()) {
                let (pi, pj) = (column(x, 0, d, i), column(x, 0, d, j));
                out.push(
                    a * (triple(column(v, ho, d, s), pi, pj)
                        + triple(hs, column(v, 0, d, i), pj)
                        + triple(hs, pi, column(v, 0, d, j))),
                );
            }
        }
        out
    }

    fn vjp(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let (d, ho) = (self.d, self.h_offset());
        let mut g = vec![0.0; self.input_dim()];
        let npairs = self.indexer.len();
        for s in 0..self.h {
            let hs = column(x, ho, d, s).to_vec();
            for (k, (&(i, j), a)) in self.indexer.pairs().iter().zip(self.coeffs.values()).enumerate() {
                let c = a * w[s * npairs + k];
                if c == 0.0 {
                    continue;
                }
                let (pi, pj) = (column(x, 0, d, i).to_vec(), column(x, 0, d, j).to_vec());
                hadamard_axpy(c, &pi, &pj, &mut g[ho + s * d..ho + (s + 1) * d]);
                hadamard_axpy(c, &hs, &pj, &mut g[i * d..(i + 1) * d]);
                hadamard_axpy(c, &hs, &pi, &mut g[j * d..(j + 1) * d]);
            }
        }
        g
    }

    fn output_json(&self, out: &[f64]) -> serde_json::Value {
        let npairs = self.indexer.len();
        let heads: Vec<_> = (0..self.h)
            .map(|s| {
                let v = PairVector::new(self.coeffs.d0(), out[s * npairs..(s + 1) * npairs].to_vec())
                    .expect("length");
                serde_json::to_value(v).expect("serializable")
            })
            .collect();
        json!({"heads": heads})
    }

    fn point_json(&self, x: &[f64]) -> serde_json::Value {
        let ho = self.h_offset();
        json!({
            "p": DenseMatrix::from_vec(self.d, self.coeffs.d0(), &x[..ho]).expect("length"),
            "h": DenseMatrix::from_vec(self.d, self.h, &x[ho..]).expect("length"),
            "a": self.coeffs,
        })
    }
}

pub(super) fn parse_cp(doc: &serde_json::Value) -> Result<MapInstance> {
    let p = CPPoint::new(field(doc, "x")?, field(doc, "y")?, field(doc, "z")?)?;
    let map = CpMap::new(p.x.rows(), [p.x.cols(), p.y.cols(), p.z.cols()]);
    let mut point = p.x.vec();
    point.extend(p.y.vec());
    point.extend(p.z.vec());
    Ok(MapInstance {
        map: Box::new(map),
        point,
    })
}

pub(super) fn sample_cp(rng: &mut dyn rand::RngCore) -> MapInstance {
    let d = rng.random_range(1..4);
    let shape = [rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..4)];
    let map = CpMap::new(d, shape);
    let point = (0..map.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    MapInstance {
        map: Box::new(map),
        point,
    }
}

fn pseudo_point(h: Vec<f64>, p: &DenseMatrix, q: &DenseMatrix) -> Result<Vec<f64>> {
    if h.len() != p.rows() || p.rows() != q.rows() {
        return Err(Error::shape("vector mode and factors must share the latent dimension"));
    }
    let mut point = h;
    point.extend(p.vec());
    point.extend(q.vec());
    Ok(point)
}

pub(super) fn parse_cp_dagger(doc: &serde_json::Value) -> Result<MapInstance> {
    let (x, y, z): (Vec<f64>, DenseMatrix, DenseMatrix) =
        (field(doc, "x")?, field(doc, "y")?, field(doc, "z")?);
    let map = CpDaggerMap::new(y.rows(), y.cols(), z.cols());
    Ok(MapInstance {
        point: pseudo_point(x, &y, &z)?,
        map: Box::new(map),
    })
}

pub(super) fn sample_cp_dagger(rng: &mut dyn rand::RngCore) -> MapInstance {
    let (d, n2, n3) = (rng.random_range(1..5), rng.random_range(1..4), rng.random_range(1..4));
    let map = CpDaggerMap::new(d, n2, n3);
    let point = (0..map.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    MapInstance {
        map: Box::new(map),
        point,
    }
}

#[derive(Deserialize)]
struct PairList(Vec<[usize; 2]>);

pub(super) fn parse_gmf(doc: &serde_json::Value) -> Result<MapInstance> {
    let (h, p, q): (Vec<f64>, DenseMatrix, DenseMatrix) =
        (field(doc, "h")?, field(doc, "p")?, field(doc, "q")?);
    let map = match doc.get("pairs") {
        None => GmfMap::full(p.rows(), p.cols(), q.cols()),
        Some(_) => {
            let PairList(list) = field(doc, "pairs")?;
            let pairs = list
                .into_iter()
                .map(|[i, j]| {
                    if i == 0 || j == 0 {
                        Err(Error::schema(0, "pair indices are 1-based"))
                    } else {
                        Ok((i - 1, j - 1))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            GmfMap::new(p.rows(), p.cols(), q.cols(), pairs)?
        }
    };
    Ok(MapInstance {
        point: pseudo_point(h, &p, &q)?,
        map: Box::new(map),
    })
}

pub(super) fn sample_gmf(rng: &mut dyn rand::RngCore) -> MapInstance {
    let (d, m, n) = (rng.random_range(1..5), rng.random_range(1..4), rng.random_range(1..4));
    let mut pairs = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|_| rng.random_bool(0.6))
        .collect::<Vec<_>>();
    if pairs.is_empty() {
        pairs.push((rng.random_range(0..m), rng.random_range(0..n)));
    }
    let map = GmfMap::new(d, m, n, pairs).expect("in range");
    let point = (0..map.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    MapInstance {
        map: Box::new(map),
        point,
    }
}

pub(super) fn parse_hofm(doc: &serde_json::Value) -> Result<MapInstance> {
    let (p, a): (DenseMatrix, TripleCoefficients) = (field(doc, "p")?, field(doc, "a")?);
    if a.d0() != p.cols() {
        return Err(Error::shape("triple coefficients must cover the columns of P"));
    }
    Ok(MapInstance {
        map: Box::new(HofmMap::new(p.rows(), a)?),
        point: p.vec(),
    })
}

pub(super) fn sample_hofm(rng: &mut dyn rand::RngCore) -> MapInstance {
    let (d, d0) = (rng.random_range(1..4), rng.random_range(3..6));
    let count = super::all_triples(d0).len();
    let values = (0..count).map(|_| nonzero_coefficient(rng)).collect();
    let a = TripleCoefficients::new(d0, values).expect("length");
    MapInstance {
        map: Box::new(HofmMap::new(d, a).expect("nonzero")),
        point: random_matrix(rng, d, d0).vec(),
    }
}

pub(super) fn parse_neufm(doc: &serde_json::Value) -> Result<MapInstance> {
    let (p, h, a): (DenseMatrix, DenseMatrix, PairVector) =
        (field(doc, "p")?, field(doc, "h")?, field(doc, "a")?);
    if p.rows() != h.rows() || a.d0() != p.cols() {
        return Err(Error::shape("P, H and coefficients disagree on dimensions"));
    }
    let map = NeuFmMap::new(p.rows(), h.cols(), a)?;
    let mut point = p.vec();
    point.extend(h.vec());
    Ok(MapInstance {
        map: Box::new(map),
        point,
    })
}

pub(super) fn sample_neufm(rng: &mut dyn rand::RngCore) -> MapInstance {
    let (d, d0, h) = (rng.random_range(1..4), rng.random_range(2..5), rng.random_range(1..3));
    let a = PairVector::from_fn(d0, |_, _| nonzero_coefficient(rng));
    let map = NeuFmMap::new(d, h, a).expect("nonzero");
    let point = (0..map.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    MapInstance {
        map: Box::new(map),
        point,
    }
}
