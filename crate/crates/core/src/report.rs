//! Machine-readable run reports.
//!
//! A report embeds its inputs, so a saved reachability report can be
//! re-validated later without the original files. Apart from `timestamp`,
//! a report depends only on its inputs, tolerances and seed.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::acceptance::CriterionResult;
use crate::exact_channel::ExactChannelReport;
use crate::oracle::OracleReport;
use crate::reachability::{Decision, Verdict};
use crate::Tolerances;

/// Identifier stored in every report's `schema` field.
pub const REPORT_SCHEMA: &str = "ucp-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema: String,
    pub version: String,
    pub command: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub inputs: Inputs,
    pub exit_code: i32,
    pub outcome: Outcome,
}

impl Report {
    pub fn new(command: &str, seed: u64, tolerances: Tolerances, inputs: Inputs, outcome: Outcome) -> Self {
        let exit_code = outcome.exit_code();
        let timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Self {
            schema: REPORT_SCHEMA.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            timestamp,
            seed,
            tolerances,
            inputs,
            exit_code,
            outcome,
        }
    }
}

/// Input documents in their file formats (see [`crate::io`]).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algebra: Option<Value>,
    /// Blocks of a kernel ideal (0-based).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<usize>>,
}

/// Which reachability criterion a decision came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReachCheck {
    /// Positive functionals, ideal-norm comparison.
    Positive,
    /// States, center comparison.
    State,
    /// Hermitian functionals, central-weight comparison.
    Hermitian,
}

/// How an independent check relates to a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    Agree,
    Disagree,
    /// One side is indeterminate.
    Inconclusive,
}

impl Agreement {
    pub fn between(a: Verdict, b: Verdict) -> Self {
        if a == Verdict::Indeterminate || b == Verdict::Indeterminate {
            Agreement::Inconclusive
        } else if a == b {
            Agreement::Agree
        } else {
            Agreement::Disagree
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Agreement::Agree => 0,
            Agreement::Disagree => 1,
            Agreement::Inconclusive => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSummary {
    pub verdict: Verdict,
    pub residual: f64,
    pub iterations: usize,
    pub detail: String,
    pub agreement: Agreement,
}

impl OracleSummary {
    pub fn compare(oracle: &OracleReport, against: Verdict) -> Self {
        Self {
            verdict: oracle.verdict,
            residual: oracle.residual,
            iterations: oracle.iterations,
            detail: oracle.detail.clone(),
            agreement: Agreement::between(oracle.verdict, against),
        }
    }
}

/// Jordan-split view of a hermitian pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSummary {
    pub decision: Decision,
    /// `ρ₁`, `ρ₂` in the functional file format.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho2: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportVerification {
    pub unitality_defect: f64,
    pub choi_min_eigenvalue: f64,
    /// Largest `|ω(ψ(x)) − ρ(x)|/‖x‖` over matrix units and seeded random elements.
    pub composition_error: f64,
    pub samples: usize,
    pub kraus_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JordanRow {
    pub block: usize,
    pub trace: f64,
    pub positive_mass: f64,
    pub negative_mass: f64,
    pub trace_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSummary {
    pub c_plus: Vec<f64>,
    pub c_minus: Vec<f64>,
    pub p_plus: Vec<f64>,
    pub p_minus: Vec<f64>,
    /// Residuals of the three central identities.
    pub residuals: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdealNormRow {
    /// Blocks of the ideal (0-based).
    pub ideal: Vec<usize>,
    pub omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Outcome {
    Reach {
        check: ReachCheck,
        decision: Decision,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        split: Option<SplitSummary>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        oracle: Option<OracleSummary>,
    },
    Transport {
        decision: Decision,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kraus_file: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        verification: Option<TransportVerification>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        oracle: Option<OracleSummary>,
    },
    ExactChannel {
        verdict: Verdict,
        explanation: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        channel: Option<ExactChannelReport>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kraus_file: Option<String>,
    },
    Jordan {
        norm: f64,
        positive_mass: f64,
        negative_mass: f64,
        blocks: Vec<JordanRow>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scalings: Option<ScalingSummary>,
    },
    IdealNorms {
        rows: Vec<IdealNormRow>,
    },
    MaxMix {
        decision: Decision,
    },
    SelfTest {
        passed: bool,
        criteria: Vec<CriterionResult>,
    },
    OracleCheck {
        check: ReachCheck,
        recorded: Verdict,
        oracle: OracleSummary,
    },
}

impl Outcome {
    /// 0 yes/success, 1 no, 2 indeterminate.
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Reach { decision, .. } | Outcome::Transport { decision, .. } | Outcome::MaxMix { decision } => {
                decision.verdict.exit_code()
            }
            Outcome::ExactChannel { verdict, .. } => verdict.exit_code(),
            Outcome::Jordan { .. } | Outcome::IdealNorms { .. } => 0,
            Outcome::SelfTest { passed, .. } => {
                if *passed {
                    0
                } else {
                    1
                }
            }
            Outcome::OracleCheck { oracle, .. } => oracle.agreement.exit_code(),
        }
    }

    /// The recorded reachability decision and its criterion, when there is one.
    pub fn reach_decision(&self) -> Option<(ReachCheck, &Decision)> {
        match self {
            Outcome::Reach { check, decision, .. } => Some((*check, decision)),
            Outcome::Transport { decision, .. } => Some((ReachCheck::Hermitian, decision)),
            _ => None,
        }
    }
}
