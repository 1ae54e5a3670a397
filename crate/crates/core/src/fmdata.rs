//! Sparse FM datasets, the pairwise-overlap qualification check, and the
//! pair-index machinery behind the FM training oracle.
//!
//! Datasets are JSON lines: a header `{"d0": 6}` followed by one sample per
//! line, `{"y": 1.0, "x": {"1": 0.5, "4": 2.0}}`, with 1-based feature keys.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::dense::{dot, DenseMatrix};
use crate::error::{Error, Result};
use crate::maps::{FmMap, PairIndexer};
use crate::subdiff::{Composite, GroupedSumLoss, ScalarLoss};

/// Sample `(x, y)` with sparse `x`; entries are `(feature, value)` with
/// 0-based features, strictly increasing, no zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSample {
    entries: Vec<(usize, f64)>,
    pub y: f64,
}

impl SparseSample {
    /// Builds a sample, dropping explicit zeros. Repeated features are an
    /// error.
    pub fn new(mut entries: Vec<(usize, f64)>, y: f64) -> Result<Self> {
        entries.retain(|(_, v)| *v != 0.0);
        entries.sort_by_key(|(i, _)| *i);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::schema(0, format!("feature {} repeated", w[0].0 + 1)));
        }
        if entries.iter().any(|(_, v)| !v.is_finite()) || !y.is_finite() {
            return Err(Error::NonFinite("sample"));
        }
        Ok(Self { entries, y })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|(i, _)| *i)
    }

    fn to_json(&self) -> Value {
        let x: Map<String, Value> = self
            .entries
            .iter()
            .map(|(i, v)| ((i + 1).to_string(), json!(v)))
            .collect();
        json!({"y": self.y, "x": x})
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d0: usize,
    pub samples: Vec<SparseSample>,
}

#[derive(Deserialize)]
struct Header {
    d0: usize,
}

#[derive(Deserialize)]
struct RawSample {
    y: f64,
    x: Map<String, Value>,
}

impl Dataset {
    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (first, header) = lines.next().ok_or_else(|| Error::schema(1, "missing header line"))?;
        let Header { d0 } = serde_json::from_str(header)
            .map_err(|e| Error::schema(first, format!("header: {e}")))?;
        let samples = lines
            .map(|(line, text)| parse_sample(line, text, d0))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { d0, samples })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::schema(0, format!("{}: {e}", path.display())))?;
        Self::parse_jsonl(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = json!({"d0": self.d0}).to_string();
        out.push('\n');
        for s in &self.samples {
            out.push_str(&s.to_json().to_string());
            out.push('\n');
        }
        out
    }
}

fn parse_sample(line: usize, text: &str, d0: usize) -> Result<SparseSample> {
    let raw: RawSample =
        serde_json::from_str(text).map_err(|e| Error::schema(line, e.to_string()))?;
    let mut entries = Vec::with_capacity(raw.x.len());
    for (key, value) in raw.x {
        let index: usize = key
            .parse()
            .map_err(|_| Error::schema(line, format!("feature key `{key}` is not an index")))?;
        if index == 0 || index > d0 {
            return Err(Error::schema(line, format!("feature {index} outside 1..={d0}")));
        }
        let v = value
            .as_f64()
            .ok_or_else(|| Error::schema(line, format!("feature {index} has a non-numeric value")))?;
        entries.push((index - 1, v));
    }
    SparseSample::new(entries, raw.y).map_err(|e| match e {
        Error::Schema { message, .. } => Error::schema(line, message),
        other => Error::schema(line, other.to_string()),
    })
}

/// Two samples sharing more than one feature. Sample indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub first: usize,
    pub second: usize,
    pub shared: Vec<usize>,
}

impl Serialize for Violation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let shared: Vec<usize> = self.shared.iter().map(|i| i + 1).collect();
        json!({"samples": [self.first + 1, self.second + 1], "shared_features": shared}).serialize(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualificationReport {
    pub qualified: bool,
    pub violations: Vec<Violation>,
}

/// Checks `|supp(x_i) ∩ supp(x_j)| ≤ 1` for every pair of samples.
pub fn check_qualification(samples: &[SparseSample], d0: usize) -> Result<QualificationReport> {
    for (k, s) in samples.iter().enumerate() {
        if let Some(i) = s.support().find(|i| *i >= d0) {
            return Err(Error::schema(0, format!("sample {} uses feature {} > d0 = {d0}", k + 1, i + 1)));
        }
    }
    let supports: Vec<BTreeSet<usize>> = samples.iter().map(|s| s.support().collect()).collect();
    let mut violations = Vec::new();
    for i in 0..supports.len() {
        for j in i + 1..supports.len() {
            let shared: Vec<usize> = supports[i].intersection(&supports[j]).cloned().collect();
            if shared.len() > 1 {
                violations.push(Violation {
                    first: i,
                    second: j,
                    shared,
                });
            }
        }
    }
    Ok(QualificationReport {
        qualified: violations.is_empty(),
        violations,
    })
}

/// A dataset passing qualification, with its pair sets `D_Tk`, their union
/// `D_T` indexed lexicographically, and the coefficients `a_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct QualifiedDataset {
    d0: usize,
    samples: Vec<SparseSample>,
    pair_sets: Vec<Vec<(usize, usize)>>,
    indexer: PairIndexer,
    coefficients: Vec<f64>,
}

/// Builds the index machinery; fails on qualification violations.
pub fn build_qualified(samples: &[SparseSample], d0: usize) -> Result<QualifiedDataset> {
    let report = check_qualification(samples, d0)?;
    if !report.qualified {
        return Err(Error::Qualification(report.violations.len()));
    }
    let pair_sets: Vec<Vec<(usize, usize)>> = samples
        .iter()
        .map(|s| {
            let e = s.entries();
            (0..e.len())
                .flat_map(|a| (a + 1..e.len()).map(move |b| (e[a].0, e[b].0)))
                .collect()
        })
        .collect();
    let all: Vec<(usize, usize)> = pair_sets.iter().flatten().cloned().collect();
    let indexer = PairIndexer::from_pairs(d0, all.clone())?;
    if indexer.len() != all.len() {
        return Err(Error::Invariant("a feature pair appears in two samples".into()));
    }
    let mut coefficients = vec![0.0; indexer.len()];
    for (s, pairs) in samples.iter().zip(&pair_sets) {
        for &(i, j) in pairs {
            let q = indexer.forward(i, j).expect("pair was indexed");
            coefficients[q] = value_at(s, i) * value_at(s, j);
        }
    }
    if coefficients.iter().any(|a| *a == 0.0) {
        return Err(Error::Invariant("pair coefficient underflowed to zero".into()));
    }
    Ok(QualifiedDataset {
        d0,
        samples: samples.to_vec(),
        pair_sets,
        indexer,
        coefficients,
    })
}

fn value_at(s: &SparseSample, i: usize) -> f64 {
    s.entries()
        .iter()
        .find(|(j, _)| *j == i)
        .map_or(0.0, |(_, v)| *v)
}

impl QualifiedDataset {
    pub fn d0(&self) -> usize {
        self.d0
    }

    pub fn samples(&self) -> &[SparseSample] {
        &self.samples
    }

    /// `D_Tk` for each sample.
    pub fn pair_sets(&self) -> &[Vec<(usize, usize)>] {
        &self.pair_sets
    }

    /// Lexicographic indexer over `D_T`.
    pub fn indexer(&self) -> &PairIndexer {
        &self.indexer
    }

    /// `a_T`, aligned with [`Self::indexer`].
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Flat indices of `D_Tk` for each sample.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        self.pair_sets
            .iter()
            .map(|ps| ps.iter().map(|&(i, j)| self.indexer.forward(i, j).unwrap()).collect())
            .collect()
    }

    /// The submapping `P ↦ (a_ij p_iᵀp_j)` over `D_T`.
    pub fn restricted_map(&self, d: usize) -> FmMap {
        FmMap::restricted(d, self.indexer.clone(), self.coefficients.clone())
            .expect("coefficients checked nonzero")
    }

    /// Training loss `P ↦ Σ_k ℓ_k(f(x_k; P))` written as a grouped loss over
    /// the restricted pair map.
    pub fn training_objective(&self, d: usize, losses: &[ScalarLoss]) -> Result<Composite> {
        if losses.len() != self.samples.len() {
            return Err(Error::shape(format!(
                "{} losses for {} samples",
                losses.len(),
                self.samples.len()
            )));
        }
        let loss = GroupedSumLoss::new(self.indexer.len(), self.groups(), losses.to_vec())?;
        Composite::new(Box::new(self.restricted_map(d)), Box::new(loss))
    }
}

/// Homogeneous FM prediction `Σ_{i<j} (p_iᵀp_j) x_i x_j`.
pub fn fm_predict(x: &SparseSample, p: &DenseMatrix) -> Result<f64> {
    if let Some(i) = x.support().find(|i| *i >= p.cols()) {
        return Err(Error::shape(format!("feature {} but P has {} columns", i + 1, p.cols())));
    }
    let e = x.entries();
    let cols: Vec<Vec<f64>> = e.iter().map(|(i, _)| p.col(*i)).collect();
    let mut total = 0.0;
    for a in 0..e.len() {
        for b in a + 1..e.len() {
            total += dot(&cols[a], &cols[b]) * e[a].1 * e[b].1;
        }
    }
    Ok(total)
}
