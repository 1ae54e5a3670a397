//! Pair and triple index machinery for the FM-style maps.
//!
//! Rust-side indices are 0-based; every JSON document uses 1-based indices.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lexicographic bijection between a set of pairs `(i, j)` with `j > i` and
/// `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairIndexer {
    d0: usize,
    pairs: Vec<(usize, usize)>,
    forward: HashMap<(usize, usize), usize>,
}

impl PairIndexer {
    /// All pairs over `d0` features.
    pub fn full(d0: usize) -> Self {
        let mut pairs = Vec::with_capacity(pair_count(d0));
        for i in 0..d0 {
            for j in i + 1..d0 {
                pairs.push((i, j));
            }
        }
        Self::from_sorted(d0, pairs)
    }

    /// The lexicographic indexer restricted to a subset of pairs.
    pub fn from_pairs(d0: usize, mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        for &(i, j) in &pairs {
            if i >= j || j >= d0 {
                return Err(Error::shape(format!(
                    "pair ({}, {}) is not an ordered pair over {d0} features",
                    i + 1,
                    j + 1
                )));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(Self::from_sorted(d0, pairs))
    }

    fn from_sorted(d0: usize, pairs: Vec<(usize, usize)>) -> Self {
        let forward = pairs.iter().enumerate().map(|(k, &p)| (p, k)).collect();
        Self { d0, pairs, forward }
    }

    pub fn d0(&self) -> usize {
        self.d0
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn forward(&self, i: usize, j: usize) -> Option<usize> {
        self.forward.get(&(i, j)).copied()
    }

    pub fn backward(&self, index: usize) -> (usize, usize) {
        self.pairs[index]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

pub fn pair_count(d0: usize) -> usize {
    d0 * d0.saturating_sub(1) / 2
}

/// A real vector indexed by all pairs `j > i` over `d0` features, in
/// lexicographic order. Used for FM coefficients, images and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PairVector {
    d0: usize,
    values: Vec<f64>,
}

impl PairVector {
    pub fn new(d0: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != pair_count(d0) {
            return Err(Error::shape(format!(
                "{d0} features have {} pairs, got {} values",
                pair_count(d0),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pair vector"));
        }
        Ok(Self { d0, values })
    }

    pub fn zeros(d0: usize) -> Self {
        Self {
            d0,
            values: vec![0.0; pair_count(d0)],
        }
    }

    pub fn from_fn(d0: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let values = PairIndexer::full(d0)
            .pairs()
            .iter()
            .map(|&(i, j)| f(i, j))
            .collect();
        Self { d0, values }
    }

    pub fn d0(&self) -> usize {
        self.d0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at pair `(i, j)`, `i < j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[flat_pair_index(self.d0, i, j)]
    }

    pub fn min_abs(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    /// Fails unless every entry is nonzero.
    pub fn check_nonzero(&self) -> Result<()> {
        match self.values.iter().position(|v| *v == 0.0) {
            Some(k) => {
                let (i, j) = PairIndexer::full(self.d0).backward(k);
                Err(Error::Invariant(format!(
                    "coefficient a_({},{}) is zero",
                    i + 1,
                    j + 1
                )))
            }
            None => Ok(()),
        }
    }
}

/// Closed-form lexicographic index of `(i, j)`, `i < j < d0`.
#[inline]
pub fn flat_pair_index(d0: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < d0);
    i * (2 * d0 - i - 1) / 2 + (j - i - 1)
}

#[derive(Serialize, Deserialize)]
struct PairEntry {
    i: usize,
    j: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct PairDoc {
    d0: usize,
    pairs: Vec<PairEntry>,
}

impl Serialize for PairVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let indexer = PairIndexer::full(self.d0);
        let pairs = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &value)| {
                let (i, j) = indexer.backward(k);
                PairEntry {
                    i: i + 1,
                    j: j + 1,
                    value,
                }
            })
            .collect();
        PairDoc { d0: self.d0, pairs }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PairVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = PairDoc::deserialize(deserializer)?;
        pair_vector_from_doc(doc).map_err(serde::de::Error::custom)
    }
}

fn pair_vector_from_doc(doc: PairDoc) -> Result<PairVector> {
    let d0 = doc.d0;
    let mut values = vec![None; pair_count(d0)];
    for e in doc.pairs {
        if e.i == 0 || e.i >= e.j || e.j > d0 {
            return Err(Error::shape(format!(
                "pair ({}, {}) invalid for d0 = {d0} (1-based, i < j)",
                e.i, e.j
            )));
        }
        let k = flat_pair_index(d0, e.i - 1, e.j - 1);
        if values[k].replace(e.value).is_some() {
            return Err(Error::shape(format!("pair ({}, {}) listed twice", e.i, e.j)));
        }
    }
    let values = values
        .into_iter()
        .enumerate()
        .map(|(k, v)| {
            v.ok_or_else(|| {
                let (i, j) = PairIndexer::full(d0).backward(k);
                Error::shape(format!("pair ({}, {}) missing", i + 1, j + 1))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PairVector::new(d0, values)
}

/// Coefficients `a_ijk`, `i < j < k`, in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleCoefficients {
    d0: usize,
    triples: Vec<(usize, usize, usize)>,
    values: Vec<f64>,
}

pub fn all_triples(d0: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for i in 0..d0 {
        for j in i + 1..d0 {
            for k in j + 1..d0 {
                out.push((i, j, k));
            }
        }
    }
    out
}

impl TripleCoefficients {
    pub fn new(d0: usize, values: Vec<f64>) -> Result<Self> {
        let triples = all_triples(d0);
        if values.len() != triples.len() {
            return Err(Error::shape(format!(
                "{d0} features have {} triples, got {} values",
                triples.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("triple coefficients"));
        }
        Ok(Self {
            d0,
            triples,
            values,
        })
    }

    pub fn d0(&self) -> usize {
        self.d0
    }

    pub fn triples(&self) -> &[(usize, usize, usize)] {
        &self.triples
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn check_nonzero(&self) -> Result<()> {
        match self.values.iter().position(|v| *v == 0.0) {
            Some(t) => {
                let (i, j, k) = self.triples[t];
                Err(Error::Invariant(format!(
                    "coefficient a_({},{},{}) is zero",
                    i + 1,
                    j + 1,
                    k + 1
                )))
            }
            None => Ok(()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TripleEntry {
    i: usize,
    j: usize,
    k: usize,
    value: f64,
}

#[derive(Serialize, Deserialize)]
struct TripleDoc {
    d0: usize,
    triples: Vec<TripleEntry>,
}

impl Serialize for TripleCoefficients {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let triples = self
            .triples
            .iter()
            .zip(&self.values)
            .map(|(&(i, j, k), &value)| TripleEntry {
                i: i + 1,
                j: j + 1,
                k: k + 1,
                value,
            })
            .collect();
        TripleDoc {
            d0: self.d0,
            triples,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TripleCoefficients {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = TripleDoc::deserialize(deserializer)?;
        let all = all_triples(doc.d0);
        let position: HashMap<_, _> = all.iter().enumerate().map(|(n, &t)| (t, n)).collect();
        let mut values = vec![None; all.len()];
        for e in doc.triples {
            let key = (e.i.wrapping_sub(1), e.j.wrapping_sub(1), e.k.wrapping_sub(1));
            let n = *position.get(&key).ok_or_else(|| {
                serde::de::Error::custom(format!("triple ({}, {}, {}) invalid", e.i, e.j, e.k))
            })?;
            if values[n].replace(e.value).is_some() {
                return Err(serde::de::Error::custom("triple listed twice"));
            }
        }
        let values = values
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| serde::de::Error::custom("missing triple coefficient"))?;
        TripleCoefficients::new(doc.d0, values).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_index_matches_enumeration() {
        for d0 in 0..9 {
            let idx = PairIndexer::full(d0);
            assert_eq!(idx.len(), pair_count(d0));
            for (k, &(i, j)) in idx.pairs().iter().enumerate() {
                assert_eq!(flat_pair_index(d0, i, j), k);
                assert_eq!(idx.forward(i, j), Some(k));
                assert_eq!(idx.backward(k), (i, j));
            }
        }
    }

    #[test]
    fn restricted_indexer_is_lexicographic() {
        let idx = PairIndexer::from_pairs(5, vec![(2, 4), (0, 3), (0, 1), (2, 4)]).unwrap();
        assert_eq!(idx.pairs(), &[(0, 1), (0, 3), (2, 4)]);
        assert_eq!(idx.forward(0, 3), Some(1));
        assert_eq!(idx.forward(1, 2), None);
        assert!(PairIndexer::from_pairs(3, vec![(1, 1)]).is_err());
        assert!(PairIndexer::from_pairs(3, vec![(1, 3)]).is_err());
    }

    #[test]
    fn pair_json_is_one_based() {
        let v = PairVector::new(3, vec![1.0, 2.0, 3.0]).unwrap();
        let json = serde_json::to_value(&v).unwrap();
        assert_eq!(json["pairs"][2]["i"], 2);
        assert_eq!(json["pairs"][2]["j"], 3);
        let back: PairVector = serde_json::from_value(json).unwrap();
        assert_eq!(back, v);
        let missing = r#"{"d0":3,"pairs":[{"i":1,"j":2,"value":1.0}]}"#;
        assert!(serde_json::from_str::<PairVector>(missing).is_err());
    }

    #[test]
    fn zero_coefficient_is_reported_one_based() {
        let v = PairVector::new(3, vec![1.0, 0.0, 3.0]).unwrap();
        let err = v.check_nonzero().unwrap_err();
        assert_eq!(err, Error::Invariant("coefficient a_(1,3) is zero".into()));
    }

    #[test]
    fn triple_json_roundtrip() {
        let c = TripleCoefficients::new(4, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let back: TripleCoefficients =
            serde_json::from_value(serde_json::to_value(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
