//! Error types shared across the solver library.

use thiserror::Error;

/// Identifies which constraint family an evaluation error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// The objective f.
    Objective,
    /// Inequality constraint g_i (zero-based index).
    Inequality(usize),
    /// Equality constraint h_j (zero-based index).
    Equality(usize),
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Objective => write!(f, "objective"),
            Family::Inequality(i) => write!(f, "inequality[{i}]"),
            Family::Equality(j) => write!(f, "equality[{j}]"),
        }
    }
}

/// Errors produced by the solver library.
#[derive(Clone, Debug, Error)]
pub enum Error {
    /// A function or gradient evaluation returned a non-finite value.
    #[error("evaluation failure: {family} returned a non-finite {what} at rho = {rho:e}")]
    Eval {
        /// Which family failed.
        family: Family,
        /// "value" or "gradient".
        what: &'static str,
        /// Smoothing parameter in effect.
        rho: f64,
    },

    /// A vector or matrix had the wrong dimension.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        /// Where the mismatch was detected.
        context: &'static str,
        /// Expected dimension.
        expected: usize,
        /// Actual dimension.
        got: usize,
    },

    /// A parameter violated its documented range.
    #[error("invalid parameter {name} = {value:e}: must satisfy {requirement}")]
    InvalidParameter {
        /// Parameter name.
        name: &'static str,
        /// Offending value.
        value: f64,
        /// Human-readable range requirement.
        requirement: &'static str,
    },

    /// A matrix expected to be symmetric positive definite was not.
    #[error("matrix in {context} is not symmetric positive definite")]
    NotSpd {
        /// Where the factorization failed.
        context: &'static str,
    },

    /// The QP solver ran out of iterations before meeting its KKT tolerance.
    /// Carries the best iterate found so callers can inspect it.
    #[error(
        "QP solver failed: KKT residual {best_residual:e} > tol {tol:e} \
         after {iterations} iterations"
    )]
    QpIterationLimit {
        /// Iterations spent.
        iterations: usize,
        /// Residual of the best iterate.
        best_residual: f64,
        /// Tolerance requested.
        tol: f64,
        /// Best primal-dual iterate found.
        best: Box<crate::qp::QpSolution>,
    },

    /// Backtracking exhausted its budget without an acceptable step.
    #[error(
        "line search failed after {backtracks} backtracks: last step {last_alpha:e} \
         achieved decrease ratio {last_ratio:e} (need >= 1)"
    )]
    LineSearchExhausted {
        /// Number of backtracking steps tried (final l).
        backtracks: usize,
        /// Last step length tried.
        last_alpha: f64,
        /// Achieved decrease divided by required decrease at the last trial.
        last_ratio: f64,
    },

    /// Gradient limits along the iterate tail have not stabilized, so no
    /// qualification verdict can be issued.
    #[error(
        "gradient limits unsettled: last two members differ by {delta:e} \
         (settle tolerance {tol:e}); no verdict issued"
    )]
    UnsettledGradients {
        /// Observed difference between the last two members' gradients.
        delta: f64,
        /// Settle tolerance.
        tol: f64,
    },

    /// The cluster anchor is infeasible, so the feasible-point check does not apply.
    #[error("cluster anchor infeasible: {family} has value {value:e} beyond tolerance {tol:e}")]
    InfeasibleAnchor {
        /// Offending family.
        family: Family,
        /// Constraint value at the anchor.
        value: f64,
        /// Feasibility tolerance used.
        tol: f64,
    },

    /// A cluster lacks enough members to take a gradient limit.
    #[error("cluster has {got} member(s); at least {need} required")]
    ClusterTooSmall {
        /// Members present.
        got: usize,
        /// Members required.
        need: usize,
    },

    /// Smoothing parameter exceeded the trusted quadrature range.
    #[error("smoothing parameter rho = {rho:e} exceeds the quadrature cap {cap:e}")]
    RhoCapExceeded {
        /// Requested rho.
        rho: f64,
        /// Hard cap.
        cap: f64,
    },

    /// Adaptive quadrature could not meet its tolerance within budget.
    /// Carries the best estimate so callers can decide what to do with it.
    #[error(
        "quadrature failed to converge: estimate {estimate:e} with error \
         estimate {error_estimate:e} after {panels} panels"
    )]
    QuadratureBudget {
        /// Best integral estimate.
        estimate: f64,
        /// Remaining error estimate.
        error_estimate: f64,
        /// Panels used.
        panels: usize,
    },

    /// The lower-level domain box is malformed.
    #[error("invalid domain box: lower[{index}] = {lo:e} must be < upper[{index}] = {hi:e}")]
    InvalidBox {
        /// Coordinate index.
        index: usize,
        /// Lower bound.
        lo: f64,
        /// Upper bound.
        hi: f64,
    },

    /// An internal linear program could not be solved reliably.
    #[error("internal LP failed: {detail}")]
    LpFailure {
        /// What went wrong.
        detail: String,
    },
}

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
