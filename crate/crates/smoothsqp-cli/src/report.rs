//! The run report: a JSON summary of one solve, plus the serialization of
//! any diagnostics that were requested.
//!
//! The distance-to-reference field appears exactly when the registry entry
//! carries a known solution; check sections appear exactly when the
//! corresponding check ran.

use serde::{Deserialize, Serialize};
use smoothsqp::{CqCertificate, CqKind, CqVerdict, SolveStatus};

/// Schema version this build writes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// JSON summary of one solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    /// Schema version marker.
    pub spec: u32,
    /// Registry name of the problem that ran.
    pub problem: String,
    /// Terminal status: `converged`, `max_iter`, `line_search_failure`, or
    /// `qp_failure`.
    pub status: String,
    /// Final iterate in the solver's variable order.
    pub final_point: Vec<f64>,
    /// Merit value at the final iterate, under the last iteration's
    /// smoothing and penalty parameters.
    pub final_merit: f64,
    /// Number of recorded iterations.
    pub iterations: usize,
    /// Residual of the first-order optimality system at the final iterate.
    pub stationarity_residual: f64,
    /// Euclidean distance from the final iterate to the known solution;
    /// present only for entries that document one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_to_reference: Option<f64>,
    /// Wall-clock time of the solve, in seconds.
    pub wall_time_seconds: f64,
    /// Terminal error description, for runs that failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Gradient checks, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_checks: Option<Vec<FdCheckReport>>,
    /// Constraint-qualification diagnostics, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cq: Option<CqReport>,
    /// Inner-minimizer interiority at the final point, when requested on a
    /// two-level problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interiority: Option<bool>,
}

/// One family's analytic-versus-central-difference comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FdCheckReport {
    /// `objective`, `inequality[i]`, or `equality[j]`.
    pub family: String,
    /// Largest absolute discrepancy over coordinates.
    pub max_abs_error: f64,
    /// Acceptance bound used for this family.
    pub bound: f64,
    /// Whether the discrepancy stayed within the bound.
    pub pass: bool,
}

/// Constraint-qualification section of the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CqReport {
    /// Diagnostics per gradient cluster, most recent first.
    pub clusters: Vec<ClusterReport>,
    /// For two-level problems: whether the final recorded gradient pair
    /// passes the two-row independence check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bilevel_rank: Option<bool>,
}

/// Diagnostics for one cluster of trailing iterates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Anchor point of the cluster.
    pub anchor: Vec<f64>,
    /// Number of member iterates.
    pub members: usize,
    /// Verdicts that could be rendered.
    pub verdicts: Vec<VerdictReport>,
    /// Checks that were skipped, with the reason.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

/// One rendered verdict with its certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictReport {
    /// Which qualification was checked.
    pub kind: String,
    /// Whether it holds on the recorded data.
    pub holds: bool,
    /// Strict-direction margin, for direction-based checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    /// Violating inequality multipliers, when the check failed with a
    /// certificate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_ineq: Option<Vec<f64>>,
    /// Violating equality multipliers, when the check failed with a
    /// certificate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_eq: Option<Vec<f64>>,
}

/// Maps a terminal status to its report string.
pub fn status_string(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::LineSearchFailure => "line_search_failure",
        SolveStatus::QpFailure => "qp_failure",
    }
}

/// Maps a terminal status to the process exit code.
pub fn status_exit_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Converged => 0,
        SolveStatus::MaxIter => 2,
        SolveStatus::LineSearchFailure => 3,
        SolveStatus::QpFailure => 4,
    }
}

/// Report string for a qualification kind.
pub fn kind_string(kind: CqKind) -> &'static str {
    match kind {
        CqKind::Wnnamcq => "wnnamcq",
        CqKind::Wgmfcq => "wgmfcq",
        CqKind::Ewnnamcq => "ewnnamcq",
        CqKind::Ewgmfcq => "ewgmfcq",
    }
}

impl From<&CqVerdict> for VerdictReport {
    fn from(v: &CqVerdict) -> Self {
        let (margin, lambda_ineq, lambda_eq) = match &v.certificate {
            CqCertificate::Evidence { margin, .. } => (*margin, None, None),
            CqCertificate::Violation {
                lambda_ineq,
                lambda_eq,
            } => (None, Some(lambda_ineq.clone()), Some(lambda_eq.clone())),
        };
        VerdictReport {
            kind: kind_string(v.kind).to_string(),
            holds: v.holds,
            margin,
            lambda_ineq,
            lambda_eq,
        }
    }
}
