//! Smoothing SQP solver for degenerate nonsmooth constrained optimization.
//!
//! The library minimizes objectives subject to nonsmooth inequality and
//! equality constraints by replacing every function with a parametric family
//! of smooth approximations and driving the smoothing level together with an
//! exact-penalty sequential quadratic programming iteration. Constraint
//! qualification diagnostics for the nonsmooth limit and a bilevel front end
//! (value-function reformulation with an integral-based smoothing of the
//! lower-level value) are layered on top.
//!
//! Modules:
//! - [`problem`]: smoothing families, problem instances, penalty merit.
//! - [`qp`]: the penalized quadratic subproblem and its certification.
//! - [`driver`]: the outer iteration (line search, penalty and smoothing
//!   updates, damped curvature updates).
//! - [`cq`]: constraint-qualification checks over gradient clusters.
//! - [`bilevel`]: entropic smoothing of the lower-level value function and
//!   assembly of the combined single-level program.
//! - [`lp`]: small dense linear programs used by the diagnostics.

pub mod bilevel;
pub mod cq;
pub mod driver;
pub mod error;
pub mod problem;
pub mod qp;
mod lp;
mod quad;

pub use bilevel::{
    build_combined_program, build_combined_program_with, check_interiority, gamma,
    gamma_with_gradient, grad_gamma, value_function_oracle, BilevelProblem, QuadratureConfig,
    RHO_CAP,
};
pub use cq::{
    check_bilevel_wnnamcq, check_ewgmfcq, check_ewnnamcq, check_wnnamcq, collect_clusters,
    ClusterMember, CqCertificate, CqKind, CqVerdict, GradientCluster, LimitVectors,
};
pub use driver::{
    line_search, powell_bfgs_update, run_solver, run_solver_with_observer, stationarity_residual,
    update_penalty, update_smoothing, IterationRecord, SolveResult, SolveStatus, SolverConfig,
    DEFAULT_MAX_BACKTRACKS,
};
pub use error::{Error, Family, Result};
pub use problem::{
    fd_gradient_check, merit_directional_derivative, merit_value, FdReport, MeritParams,
    ProblemInstance, SmoothedFunction,
};
pub use qp::{
    assemble_qp, kkt_residuals, solve_penalized_qp, solve_penalized_qp_with, KktResiduals, QpData,
    QpRow, QpSolution, KKT_TOL, QP_ITERATION_CAP,
};
