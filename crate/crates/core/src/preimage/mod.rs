//! Constructive local-surjection solvers.
//!
//! Each solver takes a base point, a trust radius `t` and a target, and
//! returns a point within distance `t` of the base whose image equals the
//! target. In [`Mode::Strict`] targets outside the certified radius are
//! rejected; in [`Mode::BestEffort`] the same construction runs anyway and
//! the solution is flagged `guaranteed = false`.

mod basis;
mod cp;
mod fm;
mod mf;

use std::str::FromStr;

use serde::Serialize;

pub use basis::{complement_basis, dim_condition_mf, numerical_rank, rank_condition, SubspaceBasis};
pub use cp::{cp_certified_radius, general_position, solve_cp_dagger_at, solve_cp_origin, DaggerPoint};
pub use fm::{fm_tower_radius, solve_fm_at, solve_fm_tower, tower_row_bound};
pub use mf::{mf_at_epsilon, mf_origin_radius, solve_mf_at, solve_mf_origin};

use crate::error::{Error, Result};

/// Relative slack applied when comparing a target distance to a certified
/// radius, so targets placed exactly on the boundary are accepted.
pub const RADIUS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Strict,
    BestEffort,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Mode::Strict),
            "best-effort" => Ok(Mode::BestEffort),
            other => Err(Error::schema(0, format!("unknown mode `{other}`"))),
        }
    }
}

/// Output of a preimage solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreimageSolution<P> {
    pub residual: f64,
    pub perturbation_norm: f64,
    pub t: f64,
    pub guaranteed: bool,
    pub certified_radius: f64,
    #[serde(rename = "solution")]
    pub point: P,
}

impl<P: Serialize> PreimageSolution<P> {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("solution is serializable")
    }
}

fn check_radius(t: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::NonFinite("trust radius"));
    }
    if t <= 0.0 {
        return Err(Error::Invariant(format!("trust radius must be positive, got {t}")));
    }
    Ok(())
}

/// Returns whether `distance` lies inside `radius`; in strict mode an
/// outside target is an error.
fn admit(distance: f64, radius: f64, mode: Mode) -> Result<bool> {
    let inside = distance <= radius * (1.0 + RADIUS_SLACK);
    if !inside && mode == Mode::Strict {
        return Err(Error::Admissibility { distance, radius });
    }
    Ok(inside)
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}
