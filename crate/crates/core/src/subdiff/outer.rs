use std::fmt::Debug;

use super::{ScalarLoss, SubgradientZonotope};
use crate::error::{Error, Result};
use crate::maps::{check_point, FactorMap};

/// An outer function `g: R^p → R` whose Clarke subdifferential is a zonotope.
pub trait OuterLoss: Send + Sync + Debug {
    fn name(&self) -> String;

    fn value(&self, z: &[f64]) -> f64;

    /// Gradient at `z`, or `None` when some nonsmooth piece sits within
    /// `kink_tol` of its kink.
    fn gradient(&self, z: &[f64], kink_tol: f64) -> Option<Vec<f64>>;

    /// Clarke upper set `∂_C g(z)` in output space.
    fn clarke_upper(&self, z: &[f64]) -> SubgradientZonotope;

    /// Checks that the loss accepts `p` outputs.
    fn check_dim(&self, p: usize) -> Result<()>;
}

/// `g(z) = Σ_k ℓ_k(z_k)`, one scalar loss per output.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableLoss {
    losses: Vec<ScalarLoss>,
}

impl SeparableLoss {
    pub fn new(losses: Vec<ScalarLoss>) -> Self {
        Self { losses }
    }

    /// The same loss on each of `p` outputs.
    pub fn uniform(loss: ScalarLoss, p: usize) -> Self {
        Self::new(vec![loss; p])
    }

    pub fn losses(&self) -> &[ScalarLoss] {
        &self.losses
    }
}

impl OuterLoss for SeparableLoss {
    fn name(&self) -> String {
        match self.losses.first() {
            Some(l) if self.losses.iter().all(|m| m.kind() == l.kind()) => l.kind().to_string(),
            _ => "separable".into(),
        }
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.losses.iter().zip(z).map(|(l, zk)| l.value(*zk)).sum()
    }

    fn gradient(&self, z: &[f64], kink_tol: f64) -> Option<Vec<f64>> {
        self.losses
            .iter()
            .zip(z)
            .map(|(l, zk)| {
                if l.kink_distance(*zk) <= kink_tol {
                    None
                } else {
                    l.derivative(*zk)
                }
            })
            .collect()
    }

    fn clarke_upper(&self, z: &[f64]) -> SubgradientZonotope {
        let mut out = SubgradientZonotope::zeros(z.len());
        for (k, (l, zk)) in self.losses.iter().zip(z).enumerate() {
            let mut e = vec![0.0; z.len()];
            e[k] = 1.0;
            out.push(e, l.clarke(*zk));
        }
        out
    }

    fn check_dim(&self, p: usize) -> Result<()> {
        if self.losses.len() != p {
            return Err(Error::shape(format!("{} losses for {p} outputs", self.losses.len())));
        }
        Ok(())
    }
}

/// `g(z) = σ(z₁z₄) − σ(z₂z₃)` on `R⁴`.
///
/// On the image of the rank-one 2x2 map `z₁z₄ = z₂z₃`, so `g ∘ H ≡ 0`, yet the
/// chain-rule upper set at a kink of `σ` is a nontrivial segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductDifferenceLoss {
    pub sigma: ScalarLoss,
}

impl ProductDifferenceLoss {
    pub fn new(sigma: ScalarLoss) -> Self {
        Self { sigma }
    }
}

impl Default for ProductDifferenceLoss {
    fn default() -> Self {
        Self::new(ScalarLoss::ShiftedRelu { shift: 1.0 })
    }
}

impl OuterLoss for ProductDifferenceLoss {
    fn name(&self) -> String {
        "product_difference".into()
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.sigma.value(z[0] * z[3]) - self.sigma.value(z[1] * z[2])
    }

    fn gradient(&self, z: &[f64], kink_tol: f64) -> Option<Vec<f64>> {
        let (u, w) = (z[0] * z[3], z[1] * z[2]);
        if self.sigma.kink_distance(u) <= kink_tol || self.sigma.kink_distance(w) <= kink_tol {
            return None;
        }
        let (a, b) = (self.sigma.derivative(u)?, self.sigma.derivative(w)?);
        Some(vec![a * z[3], -b * z[2], -b * z[1], a * z[0]])
    }

    fn clarke_upper(&self, z: &[f64]) -> SubgradientZonotope {
        let mut out = SubgradientZonotope::zeros(4);
        out.push(vec![z[3], 0.0, 0.0, z[0]], self.sigma.clarke(z[0] * z[3]));
        out.push(vec![0.0, z[2], z[1], 0.0], self.sigma.clarke(z[1] * z[2]).scaled(-1.0));
        out
    }

    fn check_dim(&self, p: usize) -> Result<()> {
        if p != 4 {
            return Err(Error::shape(format!("product-difference loss needs 4 outputs, got {p}")));
        }
        Ok(())
    }
}

/// `g(z) = Σ_k ℓ_k(Σ_{q ∈ group_k} z_q)` over disjoint groups of outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSumLoss {
    groups: Vec<Vec<usize>>,
    losses: Vec<ScalarLoss>,
    dim: usize,
}

impl GroupedSumLoss {
    pub fn new(dim: usize, groups: Vec<Vec<usize>>, losses: Vec<ScalarLoss>) -> Result<Self> {
        if groups.len() != losses.len() {
            return Err(Error::shape(format!("{} groups for {} losses", groups.len(), losses.len())));
        }
        let mut seen = vec![false; dim];
        for q in groups.iter().flatten() {
            if *q >= dim || std::mem::replace(&mut seen[*q], true) {
                return Err(Error::Invariant(format!("output {q} is out of range or shared")));
            }
        }
        Ok(Self { groups, losses, dim })
    }

    fn sums<'a>(&'a self, z: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        self.groups.iter().map(move |g| g.iter().map(|q| z[*q]).sum())
    }
}

impl OuterLoss for GroupedSumLoss {
    fn name(&self) -> String {
        "grouped_sum".into()
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.sums(z).zip(&self.losses).map(|(u, l)| l.value(u)).sum()
    }

    fn gradient(&self, z: &[f64], kink_tol: f64) -> Option<Vec<f64>> {
        let mut grad = vec![0.0; self.dim];
        for ((u, l), g) in self.sums(z).zip(&self.losses).zip(&self.groups) {
            if l.kink_distance(u) <= kink_tol {
                return None;
            }
            let slope = l.derivative(u)?;
            for q in g {
                grad[*q] = slope;
            }
        }
        Some(grad)
    }

    fn clarke_upper(&self, z: &[f64]) -> SubgradientZonotope {
        let mut out = SubgradientZonotope::zeros(self.dim);
        for ((u, l), g) in self.sums(z).zip(&self.losses).zip(&self.groups) {
            let mut indicator = vec![0.0; self.dim];
            for q in g {
                indicator[*q] = 1.0;
            }
            out.push(indicator, l.clarke(u));
        }
        out
    }

    fn check_dim(&self, p: usize) -> Result<()> {
        if p != self.dim {
            return Err(Error::shape(format!("grouped loss over {} outputs, map has {p}", self.dim)));
        }
        Ok(())
    }
}

/// A locally Lipschitz objective with an analytic gradient on its smooth
/// part and a chain-rule upper set for `∂_C`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Gradient at `x`, or `None` within `kink_tol` of a nondifferentiability.
    fn gradient(&self, x: &[f64], kink_tol: f64) -> Option<Vec<f64>>;

    /// Superset of `∂_C f(x)` obtained from the chain rule.
    fn upper(&self, x: &[f64]) -> Result<SubgradientZonotope>;
}

/// `f = g ∘ H` for a factorization map `H` and an outer loss `g`.
#[derive(Debug)]
pub struct Composite {
    pub map: Box<dyn FactorMap>,
    pub loss: Box<dyn OuterLoss>,
}

impl Composite {
    pub fn new(map: Box<dyn FactorMap>, loss: Box<dyn OuterLoss>) -> Result<Self> {
        loss.check_dim(map.output_dim())?;
        Ok(Self { map, loss })
    }
}

impl Objective for Composite {
    fn dim(&self) -> usize {
        self.map.input_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.loss.value(&self.map.eval(x))
    }

    fn gradient(&self, x: &[f64], kink_tol: f64) -> Option<Vec<f64>> {
        let w = self.loss.gradient(&self.map.eval(x), kink_tol)?;
        Some(self.map.vjp(x, &w))
    }

    fn upper(&self, x: &[f64]) -> Result<SubgradientZonotope> {
        chainrule_upper(self.map.as_ref(), x, self.loss.as_ref())
    }
}

/// `Jᵀ_H(x) ∂_C g(H(x))` as a zonotope in parameter space.
pub fn chainrule_upper(
    map: &dyn FactorMap,
    point: &[f64],
    loss: &dyn OuterLoss,
) -> Result<SubgradientZonotope> {
    check_point(map, point)?;
    loss.check_dim(map.output_dim())?;
    let outer = loss.clarke_upper(&map.eval(point));
    Ok(outer.map_linear(|w| map.vjp(point, w)))
}
