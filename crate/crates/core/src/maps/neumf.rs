use rand::Rng;
use serde_json::json;

use super::{axpy, column, field, FactorMap, MapInstance};
use crate::dense::{dot, DenseMatrix, DenseTensor3};
use crate::error::{Error, Result};

/// `(W, X, S, Y, b) ↦ T` with `T[i, j, k] = w_kᵀx_i + s_kᵀy_j + b_k`.
///
/// Parameters are `vec(W), vec(X), vec(S), vec(Y), b` with `W, S: d x h`,
/// `X: d x m`, `Y: d x n`. Output is the `m x n x h` tensor with `k` fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeuMfMap {
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub h: usize,
}

struct Offsets {
    w: usize,
    x: usize,
    s: usize,
    y: usize,
    b: usize,
}

impl NeuMfMap {
    pub fn new(d: usize, m: usize, n: usize, h: usize) -> Self {
        Self { d, m, n, h }
    }

    /// Builds the map and its flat parameter vector from factor blocks.
    pub fn from_blocks(
        w: &DenseMatrix,
        x: &DenseMatrix,
        s: &DenseMatrix,
        y: &DenseMatrix,
        b: &[f64],
    ) -> Result<(Self, Vec<f64>)> {
        let d = w.rows();
        if [x.rows(), s.rows(), y.rows()].iter().any(|&r| r != d) {
            return Err(Error::shape("W, X, S and Y must share the latent dimension"));
        }
        if s.cols() != w.cols() || b.len() != w.cols() {
            return Err(Error::shape(format!(
                "W has {} heads but S has {} and b has {}",
                w.cols(),
                s.cols(),
                b.len()
            )));
        }
        let map = Self::new(d, x.cols(), y.cols(), w.cols());
        let mut flat = w.vec();
        flat.extend(x.vec());
        flat.extend(s.vec());
        flat.extend(y.vec());
        flat.extend_from_slice(b);
        Ok((map, flat))
    }

    fn offsets(&self) -> Offsets {
        let (d, m, n, h) = (self.d, self.m, self.n, self.h);
        Offsets {
            w: 0,
            x: d * h,
            s: d * (h + m),
            y: d * (2 * h + m),
            b: d * (2 * h + m + n),
        }
    }
}

impl FactorMap for NeuMfMap {
    fn name(&self) -> &'static str {
        "neumf"
    }

    fn input_dim(&self) -> usize {
        self.d * (2 * self.h + self.m + self.n) + self.h
    }

    fn output_dim(&self) -> usize {
        self.m * self.n * self.h
    }

    fn eval(&self, p: &[f64]) -> Vec<f64> {
        let (d, o) = (self.d, self.offsets());
        let wx: Vec<f64> = (0..self.m)
            .flat_map(|i| (0..self.h).map(move |k| (i, k)))
            .map(|(i, k)| dot(column(p, o.w, d, k), column(p, o.x, d, i)))
            .collect();
        let sy: Vec<f64> = (0..self.n)
            .flat_map(|j| (0..self.h).map(move |k| (j, k)))
            .map(|(j, k)| dot(column(p, o.s, d, k), column(p, o.y, d, j)))
            .collect();
        let b = &p[o.b..];
        let mut out = Vec::with_capacity(self.output_dim());
        for i in 0..self.m {
            for j in 0..self.n {
                for k in 0..self.h {
                    out.push(wx[i * self.h + k] + sy[j * self.h + k] + b[k]);
                }
            }
        }
        out
    }

    fn jvp(&self, p: &[f64], v: &[f64]) -> Vec<f64> {
        let (d, o) = (self.d, self.offsets());
        let mut out = Vec::with_capacity(self.output_dim());
        for i in 0..self.m {
            for j in 0..self.n {
                for k in 0..self.h {
                    out.push(
                        dot(column(v, o.w, d, k), column(p, o.x, d, i))
                            + dot(column(p, o.w, d, k), column(v, o.x, d, i))
                            + dot(column(v, o.s, d, k), column(p, o.y, d, j))
                            + dot(column(p, o.s, d, k), column(v, o.y, d, j))
                            + v[o.b + k],
                    );
                }
            }
        }
        out
    }

    fn vjp(&self, p: &[f64], w: &[f64]) -> Vec<f64> {
        let (d, o) = (self.d, self.offsets());
        let mut g = vec![0.0; self.input_dim()];
        let mut idx = 0;
        for i in 0..self.m {
            for j in 0..self.n {
                for k in 0..self.h {
                    let c = w[idx];
                    idx += 1;
                    if c == 0.0 {
                        continue;
                    }
                    axpy(c, column(p, o.x, d, i), &mut g[o.w + k * d..o.w + (k + 1) * d]);
                    axpy(c, column(p, o.w, d, k), &mut g[o.x + i * d..o.x + (i + 1) * d]);
                    axpy(c, column(p, o.y, d, j), &mut g[o.s + k * d..o.s + (k + 1) * d]);
                    axpy(c, column(p, o.s, d, k), &mut g[o.y + j * d..o.y + (j + 1) * d]);
                    g[o.b + k] += c;
                }
            }
        }
        g
    }

    fn output_json(&self, out: &[f64]) -> serde_json::Value {
        let t = DenseTensor3::new([self.m, self.n, self.h], out.to_vec()).expect("output length");
        serde_json::to_value(t).expect("serializable")
    }

    fn point_json(&self, p: &[f64]) -> serde_json::Value {
        let (d, o) = (self.d, self.offsets());
        let block = |start: usize, cols: usize| {
            DenseMatrix::from_vec(d, cols, &p[start..start + d * cols]).expect("length")
        };
        json!({
            "w": block(o.w, self.h),
            "x": block(o.x, self.m),
            "s": block(o.s, self.h),
            "y": block(o.y, self.n),
            "b": &p[o.b..],
        })
    }
}

pub(super) fn parse_neumf(doc: &serde_json::Value) -> Result<MapInstance> {
    let (w, x, s, y): (DenseMatrix, DenseMatrix, DenseMatrix, DenseMatrix) =
        (field(doc, "w")?, field(doc, "x")?, field(doc, "s")?, field(doc, "y")?);
    let b: Vec<f64> = field(doc, "b")?;
    let (map, point) = NeuMfMap::from_blocks(&w, &x, &s, &y, &b)?;
    Ok(MapInstance {
        map: Box::new(map),
        point,
    })
}

pub(super) fn sample_neumf(rng: &mut dyn rand::RngCore) -> MapInstance {
    let map = NeuMfMap::new(
        rng.random_range(1..4),
        rng.random_range(1..4),
        rng.random_range(1..4),
        rng.random_range(1..3),
    );
    let point = (0..map.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    MapInstance {
        map: Box::new(map),
        point,
    }
}
