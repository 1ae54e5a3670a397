use super::{Objective, ScalarLoss, SubgradientZonotope};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::fmdata::{fm_predict, QualifiedDataset};
use crate::maps::{FactorMap, GmfMap};

/// FM training subdifferential together with any non-fatal warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct FmTrainSubdiff {
    pub zonotope: SubgradientZonotope,
    pub warnings: Vec<String>,
}

/// `∂_C L(P; T) = Σ_k ∂_C ℓ_k(f(x_k; P)) · ∇_P f(x_k; P)` over `vec(P)`.
///
/// Column `s` of the per-sample gradient is `x_s Σ_{j≠s} x_j p_j`.
pub fn fm_train_subdiff(
    data: &QualifiedDataset,
    p: &DenseMatrix,
    losses: &[ScalarLoss],
) -> Result<FmTrainSubdiff> {
    let (d, d0) = p.shape();
    if d0 != data.d0() {
        return Err(Error::shape(format!("P has {d0} columns for a dataset with d0 = {}", data.d0())));
    }
    if losses.len() != data.samples().len() {
        return Err(Error::shape(format!(
            "{} losses for {} samples",
            losses.len(),
            data.samples().len()
        )));
    }
    let mut warnings = Vec::new();
    if d + 1 < 2 * d0 {
        warnings.push(format!(
            "d = {d} < 2 d0 - 1 = {}; the set is only an upper bound here",
            2 * d0 - 1
        ));
    }
    let cols = p.columns();
    let mut out = SubgradientZonotope::zeros(d * d0);
    for (sample, loss) in data.samples().iter().zip(losses) {
        let interval = loss.clarke(fm_predict(sample, p)?);
        let mut grad = vec![0.0; d * d0];
        let e = sample.entries();
        for &(s, xs) in e {
            let block = &mut grad[s * d..(s + 1) * d];
            for &(j, xj) in e.iter().filter(|(j, _)| *j != s) {
                for (g, pj) in block.iter_mut().zip(&cols[j]) {
                    *g += xs * xj * pj;
                }
            }
        }
        out.push(grad, interval);
    }
    Ok(FmTrainSubdiff {
        zonotope: out,
        warnings,
    })
}

fn require_smooth(losses: &[ScalarLoss]) -> Result<()> {
    match losses.iter().find(|l| !l.is_smooth()) {
        Some(l) => Err(Error::UnsupportedLoss(format!(
            "outer loss `{}` is not differentiable everywhere",
            l.kind()
        ))),
        None => Ok(()),
    }
}

/// Clarke subdifferential of `Σ_{(i,j)∈D} ℓ_ij(v · σ(⟨h, p_i, q_j⟩))` over the
/// parameter layout `[v, h, vec P, vec Q]`.
///
/// The outer losses must be differentiable everywhere.
pub fn gmf_subdiff(
    v: f64,
    h: &[f64],
    p: &DenseMatrix,
    q: &DenseMatrix,
    pairs: &[(usize, usize)],
    activation: ScalarLoss,
    outer: &[ScalarLoss],
) -> Result<SubgradientZonotope> {
    require_smooth(outer)?;
    let (d, m, n) = (h.len(), p.cols(), q.cols());
    if p.rows() != d || q.rows() != d {
        return Err(Error::shape("h, P and Q must share the latent dimension"));
    }
    if outer.len() != pairs.len() {
        return Err(Error::shape(format!("{} outer losses for {} pairs", outer.len(), pairs.len())));
    }
    let (po, qo) = (1 + d, 1 + d * (1 + m));
    let mut out = SubgradientZonotope::zeros(1 + d * (1 + m + n));
    for (&(i, j), loss) in pairs.iter().zip(outer) {
        if i >= m || j >= n {
            return Err(Error::shape(format!("pair ({}, {}) outside {m}x{n}", i + 1, j + 1)));
        }
        let (pi, qj) = (p.col(i), q.col(j));
        let f: f64 = (0..d).map(|s| h[s] * pi[s] * qj[s]).sum();
        let sigma = activation.value(f);
        let weight = loss.derivative(v * sigma).expect("smooth outer loss");
        out.center[0] += weight * sigma;
        let mut grad = vec![0.0; out.dim()];
        for s in 0..d {
            grad[1 + s] = weight * v * pi[s] * qj[s];
            grad[po + i * d + s] += weight * v * h[s] * qj[s];
            grad[qo + j * d + s] += weight * v * h[s] * pi[s];
        }
        out.push(grad, activation.clarke(f));
    }
    Ok(out)
}

/// The GMF training objective `[v, h, vec P, vec Q] ↦ Σ ℓ_ij(v σ(f_ij))`.
#[derive(Debug, Clone)]
pub struct GmfObjective {
    pub map: GmfMap,
    pub activation: ScalarLoss,
    pub losses: Vec<ScalarLoss>,
}

impl GmfObjective {
    pub fn new(map: GmfMap, activation: ScalarLoss, losses: Vec<ScalarLoss>) -> Result<Self> {
        require_smooth(&losses)?;
        if losses.len() != map.pairs().len() {
            return Err(Error::shape(format!(
                "{} outer losses for {} pairs",
                losses.len(),
                map.pairs().len()
            )));
        }
        Ok(Self {
            map,
            activation,
            losses,
        })
    }

    /// Splits a flat point into `v`, `h`, `P`, `Q`.
    pub fn unpack(&self, x: &[f64]) -> (f64, Vec<f64>, DenseMatrix, DenseMatrix) {
        let (d, m, n) = (self.map.d, self.map.m, self.map.n);
        let (po, qo) = (1 + d, 1 + d * (1 + m));
        (
            x[0],
            x[1..po].to_vec(),
            DenseMatrix::from_vec(d, m, &x[po..qo]).expect("length"),
            DenseMatrix::from_vec(d, n, &x[qo..]).expect("length"),
        )
    }
}

impl Objective for GmfObjective {
    fn dim(&self) -> usize {
        1 + self.map.input_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let v = x[0];
        self.map
            .eval(&x[1..])
            .iter()
            .zip(&self.losses)
            .map(|(f, l)| l.value(v * self.activation.value(*f)))
            .sum()
    }

    fn gradient(&self, x: &[f64], kink_tol: f64) -> Option<Vec<f64>> {
        let v = x[0];
        let f = self.map.eval(&x[1..]);
        let mut dv = 0.0;
        let mut w = Vec::with_capacity(f.len());
        for (fk, l) in f.iter().zip(&self.losses) {
            if self.activation.kink_distance(*fk) <= kink_tol {
                return None;
            }
            let sigma = self.activation.value(*fk);
            let outer = l.derivative(v * sigma)?;
            dv += outer * sigma;
            w.push(outer * v * self.activation.derivative(*fk)?);
        }
        let mut grad = vec![dv];
        grad.extend(self.map.vjp(&x[1..], &w));
        Some(grad)
    }

    fn upper(&self, x: &[f64]) -> Result<SubgradientZonotope> {
        let (v, h, p, q) = self.unpack(x);
        gmf_subdiff(v, &h, &p, &q, self.map.pairs(), self.activation, &self.losses)
    }
}
