//! Seeded numerical certificates for the negative constructions: a chain-rule
//! failure, unreachable sign patterns for MF and FM below their latent
//! dimension thresholds, the NeuMF exchange identity, and phase sweeps.
//!
//! Unreachability is checked statistically. A confirmed verdict means the
//! evidence is consistent with the unreachability argument; it is not a proof.

mod cases;
mod phase;
mod stress;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::maps::{nonzero_coefficient, PairVector};
use crate::rng::substream;

pub use cases::{
    certify_example_negative, certify_fm_general, certify_mf_general, certify_mf_orthant,
    certify_neumf_defect, exchange_functionals, fm_adversarial_target, is_in_o_fm, is_in_o_mf,
    mf_adversarial_target, orthant_sign_enumeration, ExchangeFunctional, SET_TOL,
};
pub use phase::{phase_sweep, PhaseRow, PhaseTable, SweepMap};
pub use stress::{stress_minimize, StressConfig, StressResult};

/// Residual at or below which a stress run or control counts as a preimage.
pub const PREIMAGE_TOL: f64 = 1e-8;

pub const NOTE: &str =
    "statistical certificate: consistent with the unreachability argument, not a proof";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Confirmed,
    Refuted,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub case_id: String,
    pub verdict: Verdict,
    pub seed: u64,
    pub trials: usize,
    pub violations: usize,
    pub min_residual: Option<f64>,
    pub statistics: Value,
    /// Targets, functionals and parameters needed to re-check the report.
    pub data: Value,
    pub note: &'static str,
}

impl CertificateReport {
    pub(crate) fn new(case_id: &str, seed: u64, trials: usize) -> Self {
        Self {
            case_id: case_id.into(),
            verdict: Verdict::Inconclusive,
            seed,
            trials,
            violations: 0,
            min_residual: None,
            statistics: Value::Null,
            data: Value::Null,
            note: NOTE,
        }
    }

    pub fn confirmed(&self) -> bool {
        self.verdict == Verdict::Confirmed
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report is serializable")
    }
}

/// Run settings shared by all cases. Unset fields take per-case defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaseParams {
    pub seed: u64,
    pub trials: Option<usize>,
    pub restarts: Option<usize>,
    pub samples: Option<usize>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub d0: Option<usize>,
    pub heads: Option<usize>,
    /// FM coefficients; drawn from the seed when absent.
    pub coefficients: Option<PairVector>,
}

pub trait Certificate: Sync {
    fn id(&self) -> &'static str;

    fn run(&self, params: &CaseParams) -> Result<CertificateReport>;
}

struct ExampleNegative;
struct MfOrthant;
struct MfGeneral;
struct FmGeneral;
struct NeumfDefect;

impl Certificate for ExampleNegative {
    fn id(&self) -> &'static str {
        "ex-negative"
    }

    fn run(&self, p: &CaseParams) -> Result<CertificateReport> {
        certify_example_negative(p.samples.unwrap_or(1000), p.seed)
    }
}

impl Certificate for MfOrthant {
    fn id(&self) -> &'static str {
        "mf-orthant"
    }

    fn run(&self, p: &CaseParams) -> Result<CertificateReport> {
        certify_mf_orthant(p.trials.unwrap_or(100_000), p.samples.unwrap_or(1_000_000), p.seed)
    }
}

impl Certificate for MfGeneral {
    fn id(&self) -> &'static str {
        "mf-general"
    }

    fn run(&self, p: &CaseParams) -> Result<CertificateReport> {
        certify_mf_general(p.n.unwrap_or(3), p.trials.unwrap_or(1), p.restarts.unwrap_or(200), p.seed)
    }
}

impl Certificate for FmGeneral {
    fn id(&self) -> &'static str {
        "fm-general"
    }

    fn run(&self, p: &CaseParams) -> Result<CertificateReport> {
        let d0 = p.d0.unwrap_or(3);
        let a = match &p.coefficients {
            Some(a) => a.clone(),
            None => random_coefficients(d0, p.seed),
        };
        certify_fm_general(d0, &a, p.trials.unwrap_or(1), p.restarts.unwrap_or(100), p.seed)
    }
}

impl Certificate for NeumfDefect {
    fn id(&self) -> &'static str {
        "neumf-defect"
    }

    fn run(&self, p: &CaseParams) -> Result<CertificateReport> {
        certify_neumf_defect(
            p.m.unwrap_or(3),
            p.n.unwrap_or(3),
            p.heads.unwrap_or(2),
            p.trials.unwrap_or(1000),
            p.seed,
        )
    }
}

static REGISTRY: [&dyn Certificate; 5] =
    [&ExampleNegative, &MfOrthant, &MfGeneral, &FmGeneral, &NeumfDefect];

pub fn case_ids() -> impl Iterator<Item = &'static str> {
    REGISTRY.iter().map(|c| c.id())
}

pub fn lookup(id: &str) -> Result<&'static dyn Certificate> {
    REGISTRY
        .iter()
        .copied()
        .find(|c| c.id() == id)
        .ok_or_else(|| Error::UnknownCase(id.into()))
}

pub fn run_case(id: &str, params: &CaseParams) -> Result<CertificateReport> {
    lookup(id)?.run(params)
}

/// Coefficients with `|a_ij| ∈ [0.5, 2]` and random signs.
pub fn random_coefficients(d0: usize, seed: u64) -> PairVector {
    let mut rng = substream(seed, "fm-coefficients", d0 as u64);
    PairVector::from_fn(d0, |_, _| nonzero_coefficient(&mut rng))
}
