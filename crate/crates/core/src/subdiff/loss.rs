use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn scaled(&self, c: f64) -> Self {
        if c >= 0.0 {
            Self::new(c * self.lo, c * self.hi)
        } else {
            Self::new(c * self.hi, c * self.lo)
        }
    }
}

/// Names of the catalogued scalar losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Square,
    Absolute,
    Hinge,
    ShiftedRelu,
    Logistic,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Square,
        LossKind::Absolute,
        LossKind::Hinge,
        LossKind::ShiftedRelu,
        LossKind::Logistic,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Square => "square",
            LossKind::Absolute => "absolute",
            LossKind::Hinge => "hinge",
            LossKind::ShiftedRelu => "shifted_relu",
            LossKind::Logistic => "logistic",
        }
    }

    /// The loss with parameter `p`: target for square/absolute, label for
    /// hinge/logistic, shift for shifted_relu.
    pub fn with_param(self, p: f64) -> ScalarLoss {
        match self {
            LossKind::Square => ScalarLoss::Square { target: p },
            LossKind::Absolute => ScalarLoss::Absolute { target: p },
            LossKind::Hinge => ScalarLoss::Hinge { label: p },
            LossKind::ShiftedRelu => ScalarLoss::ShiftedRelu { shift: p },
            LossKind::Logistic => ScalarLoss::Logistic { label: p },
        }
    }

    /// Default parameter: target 0, label 1, shift 1.
    pub fn default_param(self) -> f64 {
        match self {
            LossKind::Square | LossKind::Absolute => 0.0,
            LossKind::Hinge | LossKind::ShiftedRelu | LossKind::Logistic => 1.0,
        }
    }

    pub fn with_default(self) -> ScalarLoss {
        self.with_param(self.default_param())
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnsupportedLoss(s.to_string()))
    }
}

/// A scalar loss from the closed catalog, with its Clarke interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum ScalarLoss {
    /// `(t - target)²`
    Square { target: f64 },
    /// `|t - target|`
    Absolute { target: f64 },
    /// `max(0, 1 - label·t)`
    Hinge { label: f64 },
    /// `max(t - shift, 0)`
    ShiftedRelu { shift: f64 },
    /// `ln(1 + exp(-label·t))`
    Logistic { label: f64 },
}

impl ScalarLoss {
    pub fn kind(&self) -> LossKind {
        match self {
            ScalarLoss::Square { .. } => LossKind::Square,
            ScalarLoss::Absolute { .. } => LossKind::Absolute,
            ScalarLoss::Hinge { .. } => LossKind::Hinge,
            ScalarLoss::ShiftedRelu { .. } => LossKind::ShiftedRelu,
            ScalarLoss::Logistic { .. } => LossKind::Logistic,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            ScalarLoss::Square { target } => (t - target) * (t - target),
            ScalarLoss::Absolute { target } => (t - target).abs(),
            ScalarLoss::Hinge { label } => (1.0 - label * t).max(0.0),
            ScalarLoss::ShiftedRelu { shift } => (t - shift).max(0.0),
            ScalarLoss::Logistic { label } => softplus(-label * t),
        }
    }

    /// The single point of nondifferentiability, if any.
    pub fn kink(&self) -> Option<f64> {
        match *self {
            ScalarLoss::Absolute { target } => Some(target),
            ScalarLoss::Hinge { label } if label != 0.0 => Some(1.0 / label),
            ScalarLoss::ShiftedRelu { shift } => Some(shift),
            _ => None,
        }
    }

    pub fn is_smooth(&self) -> bool {
        self.kink().is_none()
    }

    /// Distance from `t` to the kink (infinite for smooth losses).
    pub fn kink_distance(&self, t: f64) -> f64 {
        self.kink().map_or(f64::INFINITY, |k| (t - k).abs())
    }

    /// Derivative away from the kink. At the kink the right derivative.
    fn slope(&self, t: f64) -> f64 {
        match *self {
            ScalarLoss::Square { target } => 2.0 * (t - target),
            ScalarLoss::Absolute { target } => {
                if t >= target {
                    1.0
                } else {
                    -1.0
                }
            }
            ScalarLoss::Hinge { label } => {
                if 1.0 - label * t > 0.0 {
                    -label
                } else {
                    0.0
                }
            }
            ScalarLoss::ShiftedRelu { shift } => {
                if t > shift {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarLoss::Logistic { label } => -label * sigmoid(-label * t),
        }
    }

    /// Derivative at `t`, or `None` exactly at the kink.
    pub fn derivative(&self, t: f64) -> Option<f64> {
        if self.kink() == Some(t) {
            None
        } else {
            Some(self.slope(t))
        }
    }

    /// Clarke subdifferential at `t`: a point where differentiable, the
    /// hull of the one-sided derivatives at the kink.
    pub fn clarke(&self, t: f64) -> Interval {
        if self.kink() != Some(t) {
            return Interval::point(self.slope(t));
        }
        match *self {
            ScalarLoss::Absolute { .. } => Interval::new(-1.0, 1.0),
            ScalarLoss::Hinge { label } => Interval::new((-label).min(0.0), (-label).max(0.0)),
            ScalarLoss::ShiftedRelu { .. } => Interval::new(0.0, 1.0),
            ScalarLoss::Square { .. } | ScalarLoss::Logistic { .. } => unreachable!(),
        }
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kink_intervals() {
        assert_eq!(ScalarLoss::Absolute { target: 1.0 }.clarke(1.0), Interval::new(-1.0, 1.0));
        assert_eq!(ScalarLoss::Hinge { label: 1.0 }.clarke(1.0), Interval::new(-1.0, 0.0));
        assert_eq!(ScalarLoss::Hinge { label: -1.0 }.clarke(-1.0), Interval::new(0.0, 1.0));
        assert_eq!(ScalarLoss::ShiftedRelu { shift: 1.0 }.clarke(1.0), Interval::new(0.0, 1.0));
    }

    #[test]
    fn smooth_points_give_derivative() {
        let h = 1e-6;
        for loss in [
            ScalarLoss::Square { target: 0.3 },
            ScalarLoss::Absolute { target: 0.3 },
            ScalarLoss::Hinge { label: -1.0 },
            ScalarLoss::ShiftedRelu { shift: 1.0 },
            ScalarLoss::Logistic { label: 1.0 },
        ] {
            for t in [-2.0, -0.4, 0.7, 2.5] {
                let fd = (loss.value(t + h) - loss.value(t - h)) / (2.0 * h);
                let c = loss.clarke(t);
                assert!(c.is_point());
                assert!((c.lo - fd).abs() < 1e-8, "{loss:?} at {t}");
            }
        }
    }

    #[test]
    fn kind_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.as_str().parse::<LossKind>().unwrap(), k);
            assert_eq!(k.with_default().kind(), k);
        }
        assert!(matches!("huber".parse::<LossKind>(), Err(Error::UnsupportedLoss(_))));
    }

    #[test]
    fn logistic_is_stable_for_large_margins() {
        let l = ScalarLoss::Logistic { label: 1.0 };
        assert!((l.value(-800.0) - 800.0).abs() < 1e-9);
        assert!(l.value(800.0) >= 0.0);
    }
}
