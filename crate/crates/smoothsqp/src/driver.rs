//! Outer smoothing SQP iteration: penalized subproblem, Armijo backtracking
//! on the exact-penalty merit, penalty and smoothing schedules, damped
//! curvature updates with reset, and full iteration tracing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{merit_directional_derivative, merit_value, MeritParams, ProblemInstance};
use crate::qp::{assemble_qp, solve_penalized_qp, QpData, QpSolution, KKT_TOL};

/// Default backtracking budget; beta^60 is far below any useful step size
/// for beta >= 0.8.
pub const DEFAULT_MAX_BACKTRACKS: usize = 60;

/// Outcome classification of a solver run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    /// Step norm fell below the stopping tolerance.
    Converged,
    /// Iteration budget exhausted.
    MaxIter,
    /// Backtracking failed to find an acceptable step.
    LineSearchFailure,
    /// Subproblem solve or function evaluation failed.
    QpFailure,
}

/// Parameters of the outer iteration.
///
/// `sigma2` is recorded for completeness alongside `sigma1` but the
/// iteration body never reads it; only the ordering `sigma1 <= sigma2` is
/// enforced.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Backtracking factor, in (0, 1).
    pub beta: f64,
    /// Armijo slope fraction, in (0, 1).
    pub sigma1: f64,
    /// Companion constant to `sigma1`, in (0, 1), unused by the iteration.
    pub sigma2: f64,
    /// Smoothing growth factor, > 1.
    pub sigma: f64,
    /// Penalty growth factor, > 1.
    pub sigma_prime: f64,
    /// Smoothing trigger scale, > 1: rho grows when ||d|| <= max(eta_hat/rho, eps).
    pub eta_hat: f64,
    /// Initial smoothing parameter, > 0.
    pub rho0: f64,
    /// Initial penalty weight, > 0.
    pub r0: f64,
    /// Practical floor on the smoothing trigger, > 0.
    pub eps: f64,
    /// Elastic values below this count as zero in the penalty update, > 0.
    pub eps_prime: f64,
    /// Stopping tolerance on the step norm, > 0.
    pub eps1: f64,
    /// Curvature reset bound (lower), > 0.
    pub w_norm_min: f64,
    /// Curvature reset bound (upper), > w_norm_min.
    pub w_norm_max: f64,
    /// Iteration budget, >= 1.
    pub max_iter: usize,
    /// Residual tolerance for the subproblem solver, > 0.
    pub qp_tol: f64,
    /// Backtracking budget per line search, >= 1.
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta: 0.8,
            sigma1: 1e-6,
            sigma2: 0.9,
            sigma: 10.0,
            sigma_prime: 10.0,
            eta_hat: 5e5,
            rho0: 100.0,
            r0: 100.0,
            eps: 7e-5,
            eps_prime: 1e-8,
            eps1: 1e-6,
            w_norm_min: 1e-5,
            w_norm_max: 1e5,
            max_iter: 100,
            qp_tol: KKT_TOL,
            max_backtracks: DEFAULT_MAX_BACKTRACKS,
        }
    }
}

impl SolverConfig {
    /// Checks every range constraint; returns the first violation.
    pub fn validate(&self) -> Result<()> {
        let open01 = |name: &'static str, v: f64| -> Result<()> {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value: v,
                    requirement: "in (0, 1)",
                })
            }
        };
        let above_one = |name: &'static str, v: f64| -> Result<()> {
            if v > 1.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value: v,
                    requirement: "finite and > 1",
                })
            }
        };
        let positive = |name: &'static str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value: v,
                    requirement: "finite and > 0",
                })
            }
        };
        open01("beta", self.beta)?;
        open01("sigma1", self.sigma1)?;
        open01("sigma2", self.sigma2)?;
        if self.sigma1 > self.sigma2 {
            return Err(Error::InvalidParameter {
                name: "sigma2",
                value: self.sigma2,
                requirement: ">= sigma1",
            });
        }
        above_one("sigma", self.sigma)?;
        above_one("sigma_prime", self.sigma_prime)?;
        above_one("eta_hat", self.eta_hat)?;
        positive("rho0", self.rho0)?;
        positive("r0", self.r0)?;
        positive("eps", self.eps)?;
        positive("eps_prime", self.eps_prime)?;
        positive("eps1", self.eps1)?;
        positive("w_norm_min", self.w_norm_min)?;
        positive("w_norm_max", self.w_norm_max)?;
        if self.w_norm_max <= self.w_norm_min {
            return Err(Error::InvalidParameter {
                name: "w_norm_max",
                value: self.w_norm_max,
                requirement: "> w_norm_min",
            });
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iter",
                value: 0.0,
                requirement: ">= 1",
            });
        }
        positive("qp_tol", self.qp_tol)?;
        if self.max_backtracks == 0 {
            return Err(Error::InvalidParameter {
                name: "max_backtracks",
                value: 0.0,
                requirement: ">= 1",
            });
        }
        Ok(())
    }
}

/// Everything recorded about one outer iteration, taken at the incoming
/// point x_k before the step is applied.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    /// Iteration index, starting at 0 at the initial point.
    pub k: usize,
    /// Incoming point x_k.
    pub x: DVector<f64>,
    /// Smoothing parameter used this iteration.
    pub rho: f64,
    /// Penalty weight used this iteration (updates take effect next iteration).
    pub r: f64,
    /// Subproblem step direction.
    pub d: DVector<f64>,
    /// Elastic value of the subproblem (0 by convention without constraints).
    pub xi: f64,
    /// Accepted step length (0 when the line search failed).
    pub alpha: f64,
    /// Full subproblem solution including multipliers.
    pub multipliers: QpSolution,
    /// Merit at x_k under this iteration's (rho, r).
    pub merit_before: f64,
    /// Merit at x_k + alpha d under the same (rho, r).
    pub merit_after: f64,
    /// Euclidean norm of d.
    pub d_norm: f64,
    /// Whether the smoothing parameter was increased at this iteration.
    pub rho_updated: bool,
    /// ||W_k d_k||, the stationarity gap of this iteration.
    pub stationarity: f64,
    /// One-sided merit derivative at x_k along d.
    pub theta_prime: f64,
    /// Curvature d' W_k d of this iteration's step.
    pub dwd: f64,
    /// Smoothed objective gradient at x_k.
    pub grad_obj: DVector<f64>,
    /// Smoothed inequality gradients at x_k.
    pub grad_ineq: Vec<DVector<f64>>,
    /// Smoothed equality gradients at x_k.
    pub grad_eq: Vec<DVector<f64>>,
    /// Smoothed inequality values at x_k.
    pub ineq_values: Vec<f64>,
    /// Smoothed equality values at x_k.
    pub eq_values: Vec<f64>,
}

/// Result of a solver run. Failures during the iteration are reported through
/// `status` and `failure` with the partial trace attached; only invalid
/// inputs make [`run_solver`] itself return an error.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Last point reached.
    pub final_x: DVector<f64>,
    /// Smoothing parameter after the last completed iteration.
    pub final_rho: f64,
    /// Penalty weight after the last completed iteration.
    pub final_r: f64,
    /// Merit achieved by the last completed iteration (NaN with an empty trace).
    pub final_merit: f64,
    /// Number of iterations recorded.
    pub iterations: usize,
    /// Per-iteration records.
    pub trace: Vec<IterationRecord>,
    /// ||W_k d_k|| at the final iteration (NaN with an empty trace).
    pub stationarity_residual: f64,
    /// Iterations at which the smoothing parameter was increased.
    pub d_small_set: Vec<usize>,
    /// Curvature matrix after the last update.
    pub final_w: DMatrix<f64>,
    /// The error that stopped the run, for the two failure statuses.
    pub failure: Option<Error>,
}

/// Armijo backtracking on the merit function at fixed (rho, r).
///
/// Tries alpha = beta^l for l = 0, 1, ... and accepts the first trial with
///
/// ```text
///     theta(x + alpha d) - theta(x) <= -sigma1 * alpha * d' W d.
/// ```
///
/// Returns the accepted step length and the merit it achieved. Evaluation
/// failures at trial points count as rejected trials; only the merit at `x`
/// itself must evaluate.
#[allow(clippy::too_many_arguments)]
pub fn line_search(
    prob: &ProblemInstance,
    x: &DVector<f64>,
    d: &DVector<f64>,
    w: &DMatrix<f64>,
    mp: &MeritParams,
    beta: f64,
    sigma1: f64,
    max_backtracks: usize,
) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            value: beta,
            requirement: "in (0, 1)",
        });
    }
    if !(sigma1 > 0.0 && sigma1 < 1.0) {
        return Err(Error::InvalidParameter {
            name: "sigma1",
            value: sigma1,
            requirement: "in (0, 1)",
        });
    }
    if max_backtracks == 0 {
        return Err(Error::InvalidParameter {
            name: "max_backtracks",
            value: 0.0,
            requirement: ">= 1",
        });
    }
    let theta0 = merit_value(prob, x, mp)?;
    let dwd = (w * d).dot(d);
    let mut alpha = 1.0;
    let mut last_ratio = f64::NAN;
    for _l in 0..=max_backtracks {
        let trial = x + alpha * d;
        let required = -sigma1 * alpha * dwd;
        match merit_value(prob, &trial, mp) {
            Ok(theta_trial) => {
                let actual = theta_trial - theta0;
                if actual <= required {
                    return Ok((alpha, theta_trial));
                }
                last_ratio = if required != 0.0 {
                    actual / required
                } else {
                    f64::INFINITY
                };
            }
            Err(_) => {
                // Trial point outside the evaluable region; shrink and retry.
                last_ratio = f64::NAN;
            }
        }
        alpha *= beta;
    }
    Err(Error::LineSearchExhausted {
        backtracks: max_backtracks,
        last_alpha: alpha / beta,
        last_ratio,
    })
}

/// Penalty schedule: grow by sigma_prime when the elastic value is
/// meaningfully positive, keep otherwise.
pub fn update_penalty(r: f64, xi: f64, sigma_prime: f64, eps_prime: f64) -> f64 {
    if xi < eps_prime {
        r
    } else {
        sigma_prime * r
    }
}

/// Smoothing schedule: grow by sigma when the step norm has fallen under
/// max(eta_hat / rho, eps). Returns the next value and whether it grew.
pub fn update_smoothing(
    rho: f64,
    d_norm: f64,
    sigma: f64,
    eta_hat: f64,
    eps: f64,
) -> (f64, bool) {
    if d_norm <= (eta_hat / rho).max(eps) {
        (sigma * rho, true)
    } else {
        (rho, false)
    }
}

/// Damped BFGS update of the curvature matrix with a reset guard.
///
/// With s the step and y_raw the Lagrangian-gradient difference, the raw
/// secant is damped toward the current curvature whenever s'y < 0.2 s'Ws:
///
/// ```text
///     theta = 0.8 s'Ws / (s'Ws - s'y),   y_bar = theta y + (1 - theta) Ws,
///     W+ = W - W s s' W / s'Ws + y_bar y_bar' / s'y_bar.
/// ```
///
/// The result is replaced by the identity when its operator 2-norm leaves
/// [w_norm_min, w_norm_max] or definiteness is lost. A zero (or numerically
/// zero) step returns W unchanged, since the formulas carry no information.
pub fn powell_bfgs_update(
    w: &DMatrix<f64>,
    s: &DVector<f64>,
    y_raw: &DVector<f64>,
    w_norm_min: f64,
    w_norm_max: f64,
) -> DMatrix<f64> {
    let n = w.nrows();
    let identity = DMatrix::identity(n, n);
    if s.amax() == 0.0 {
        return w.clone();
    }
    let ws = w * s;
    let sws = ws.dot(s);
    if !(sws > 0.0 && sws.is_finite()) {
        return w.clone();
    }
    let sy = s.dot(y_raw);
    let y_bar = if sy >= 0.2 * sws {
        y_raw.clone()
    } else {
        let theta = 0.8 * sws / (sws - sy);
        theta * y_raw + (1.0 - theta) * &ws
    };
    let sy_bar = s.dot(&y_bar);
    if !(sy_bar > 0.0 && sy_bar.is_finite()) {
        return identity;
    }
    let mut w_next = w - (&ws * ws.transpose()) / sws + (&y_bar * y_bar.transpose()) / sy_bar;
    w_next = (&w_next + w_next.transpose()) * 0.5;
    let two_norm = w_next.clone().svd(false, false).singular_values.max();
    if !two_norm.is_finite()
        || two_norm > w_norm_max
        || two_norm < w_norm_min
        || w_next.clone().cholesky().is_none()
    {
        return identity;
    }
    w_next
}

/// Stationarity gap recomputed from the gradients and multipliers housed in
/// a record: the norm of grad_f + sum lam_g grad_g + sum (lam_plus -
/// lam_minus) grad_h. At a certified subproblem solution this equals
/// ||W_k d_k|| up to the solve tolerance; the curvature matrix is accepted so
/// call sites can make that comparison, the returned value does not use it.
pub fn stationarity_residual(record: &IterationRecord, _w: &DMatrix<f64>) -> f64 {
    let mut v = record.grad_obj.clone();
    for (i, grad) in record.grad_ineq.iter().enumerate() {
        v += record.multipliers.lam_g[i] * grad;
    }
    for (j, grad) in record.grad_eq.iter().enumerate() {
        v += (record.multipliers.lam_plus[j] - record.multipliers.lam_minus[j]) * grad;
    }
    v.norm()
}

/// Lagrangian-gradient difference feeding the curvature update, with every
/// gradient taken at the smoothing level of the completed iteration.
fn lagrangian_gradient_difference(
    prob: &ProblemInstance,
    qp: &QpData,
    x_next: &DVector<f64>,
    rho: f64,
    sol: &QpSolution,
) -> Result<DVector<f64>> {
    let gf_next = prob.objective_gradient(x_next, rho)?;
    let gg_next = prob.inequality_gradients(x_next, rho)?;
    let gh_next = prob.equality_gradients(x_next, rho)?;
    let mut y = gf_next - &qp.grad_f;
    for (i, row) in qp.ineq_rows.iter().enumerate() {
        y -= sol.lam_g[i] * (&gg_next[i] - &row.grad);
    }
    for (j, row) in qp.eq_rows.iter().enumerate() {
        y -= (sol.lam_plus[j] - sol.lam_minus[j]) * (&gh_next[j] - &row.grad);
    }
    Ok(y)
}

/// Runs the outer iteration from `x0`. See [`run_solver_with_observer`].
pub fn run_solver(
    prob: &ProblemInstance,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    run_solver_with_observer(prob, x0, cfg, |_| {})
}

/// Runs the outer iteration, invoking `observer` with each completed record.
///
/// Each iteration: solve the penalized subproblem at (x_k, rho_k, r_k, W_k);
/// schedule the penalty for the next iteration from xi_k; backtrack on the
/// merit at the current (rho_k, r_k); grow the smoothing parameter when the
/// step norm is small; update the curvature matrix (at rho_k for both
/// endpoints); stop when the applied step is shorter than eps1.
///
/// Subproblem and evaluation failures end the run with the corresponding
/// status and the partial trace; they are not returned as errors.
pub fn run_solver_with_observer(
    prob: &ProblemInstance,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<SolveResult> {
    cfg.validate()?;
    if x0.len() != prob.n {
        return Err(Error::Dimension {
            context: "run_solver starting point",
            expected: prob.n,
            got: x0.len(),
        });
    }
    if let Some(bad) = x0.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "x0",
            value: *bad,
            requirement: "finite",
        });
    }

    let n = prob.n;
    let unconstrained = prob.num_inequalities() + prob.num_equalities() == 0;
    let mut x = x0.clone();
    let mut rho = cfg.rho0;
    let mut r = cfg.r0;
    let mut w = DMatrix::identity(n, n);
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut d_small_set: Vec<usize> = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut failure: Option<Error> = None;

    for k in 0..cfg.max_iter {
        let qp = match assemble_qp(prob, &x, rho, w.clone(), r) {
            Ok(q) => q,
            Err(e) => {
                status = SolveStatus::QpFailure;
                failure = Some(e);
                break;
            }
        };
        let sol = match solve_penalized_qp(&qp, cfg.qp_tol) {
            Ok(s) => s,
            Err(e) => {
                status = SolveStatus::QpFailure;
                failure = Some(e);
                break;
            }
        };
        let d = sol.d.clone();
        let d_norm = d.norm();
        let xi = if unconstrained { 0.0 } else { sol.xi };

        let r_next = update_penalty(r, xi, cfg.sigma_prime, cfg.eps_prime);

        let mp = MeritParams::new(rho, r)?;
        let merit_before = match merit_value(prob, &x, &mp) {
            Ok(v) => v,
            Err(e) => {
                status = SolveStatus::QpFailure;
                failure = Some(e);
                break;
            }
        };
        let theta_prime = match merit_directional_derivative(prob, &x, &d, &mp) {
            Ok(v) => v,
            Err(e) => {
                status = SolveStatus::QpFailure;
                failure = Some(e);
                break;
            }
        };

        let mut record = IterationRecord {
            k,
            x: x.clone(),
            rho,
            r,
            d: d.clone(),
            xi,
            alpha: 0.0,
            multipliers: sol.clone(),
            merit_before,
            merit_after: merit_before,
            d_norm,
            rho_updated: false,
            stationarity: (&w * &d).norm(),
            theta_prime,
            dwd: (&w * &d).dot(&d),
            grad_obj: qp.grad_f.clone(),
            grad_ineq: qp.ineq_rows.iter().map(|row| row.grad.clone()).collect(),
            grad_eq: qp.eq_rows.iter().map(|row| row.grad.clone()).collect(),
            ineq_values: qp.ineq_rows.iter().map(|row| row.value).collect(),
            eq_values: qp.eq_rows.iter().map(|row| row.value).collect(),
        };

        match line_search(
            prob,
            &x,
            &d,
            &w,
            &mp,
            cfg.beta,
            cfg.sigma1,
            cfg.max_backtracks,
        ) {
            Ok((alpha, merit_after)) => {
                record.alpha = alpha;
                record.merit_after = merit_after;
                let (rho_next, rho_updated) =
                    update_smoothing(rho, d_norm, cfg.sigma, cfg.eta_hat, cfg.eps);
                record.rho_updated = rho_updated;
                if rho_updated {
                    d_small_set.push(k);
                }
                observer(&record);
                trace.push(record);

                let x_next = &x + alpha * &d;
                let s = &x_next - &x;
                if s.amax() > 0.0 {
                    match lagrangian_gradient_difference(prob, &qp, &x_next, rho, &sol) {
                        Ok(y) => {
                            w = powell_bfgs_update(&w, &s, &y, cfg.w_norm_min, cfg.w_norm_max);
                        }
                        Err(e) => {
                            status = SolveStatus::QpFailure;
                            failure = Some(e);
                            x = x_next;
                            break;
                        }
                    }
                }
                let step_norm = s.norm();
                x = x_next;
                r = r_next;
                rho = rho_next;
                if step_norm < cfg.eps1 {
                    status = SolveStatus::Converged;
                    break;
                }
            }
            Err(e) => {
                observer(&record);
                trace.push(record);
                status = SolveStatus::LineSearchFailure;
                failure = Some(e);
                break;
            }
        }
    }

    let final_merit = trace.last().map_or(f64::NAN, |rec| rec.merit_after);
    let stationarity_residual = trace.last().map_or(f64::NAN, |rec| rec.stationarity);
    Ok(SolveResult {
        status,
        final_x: x,
        final_rho: rho,
        final_r: r,
        final_merit,
        iterations: trace.len(),
        trace,
        stationarity_residual,
        d_small_set,
        final_w: w,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::SmoothedFunction;
    use nalgebra::dvector;

    fn half_norm_sq(n: usize) -> SmoothedFunction {
        SmoothedFunction::smooth(
            n,
            |x: &DVector<f64>| 0.5 * x.dot(x),
            |x: &DVector<f64>| x.clone(),
        )
    }

    fn norm_sq(n: usize) -> SmoothedFunction {
        SmoothedFunction::smooth(n, |x: &DVector<f64>| x.dot(x), |x: &DVector<f64>| 2.0 * x)
    }

    fn unconstrained(f: SmoothedFunction) -> ProblemInstance {
        ProblemInstance::new(f.dimension(), f, vec![], vec![]).unwrap()
    }

    #[test]
    fn line_search_accepts_full_step_on_quadratic() {
        let prob = unconstrained(half_norm_sq(2));
        let mp = MeritParams::new(1.0, 1.0).unwrap();
        let (alpha, merit_after) = line_search(
            &prob,
            &dvector![1.0, 0.0],
            &dvector![-1.0, 0.0],
            &DMatrix::identity(2, 2),
            &mp,
            0.8,
            1e-6,
            60,
        )
        .unwrap();
        assert_eq!(alpha, 1.0);
        assert_eq!(merit_after, 0.0);
    }

    #[test]
    fn line_search_overshoot_with_steep_slope_requirement_exhausts() {
        // theta = x^2/2 at x = 1 along d = -3 with W = [1]: the required
        // decrease -0.9 * alpha * 9 dominates the best achievable decrease
        // -3 alpha + 4.5 alpha^2 for every alpha > 0, so no trial passes.
        let theta = |t: f64| 0.5 * t * t;
        let (x, d, sigma1) = (1.0, -3.0, 0.9);
        for l in 0..=60 {
            let alpha = 0.8f64.powi(l);
            let actual = theta(x + alpha * d) - theta(x);
            let required = -sigma1 * alpha * d * d;
            assert!(actual > required, "l = {l} unexpectedly satisfies the rule");
        }

        let prob = unconstrained(half_norm_sq(1));
        let mp = MeritParams::new(1.0, 1.0).unwrap();
        let err = line_search(
            &prob,
            &dvector![1.0],
            &dvector![-3.0],
            &DMatrix::identity(1, 1),
            &mp,
            0.8,
            sigma1,
            60,
        )
        .unwrap_err();
        match err {
            Error::LineSearchExhausted {
                backtracks,
                last_ratio,
                ..
            } => {
                assert_eq!(backtracks, 60);
                assert!(last_ratio < 1.0);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn line_search_zero_direction_accepts_immediately() {
        let prob = unconstrained(half_norm_sq(2));
        let mp = MeritParams::new(1.0, 1.0).unwrap();
        let (alpha, merit_after) = line_search(
            &prob,
            &dvector![1.0, 2.0],
            &dvector![0.0, 0.0],
            &DMatrix::identity(2, 2),
            &mp,
            0.8,
            1e-6,
            60,
        )
        .unwrap();
        assert_eq!(alpha, 1.0);
        assert_eq!(merit_after, 2.5);
    }

    #[test]
    fn penalty_update_rules() {
        assert_eq!(update_penalty(100.0, 0.0, 10.0, 1e-8), 100.0);
        assert_eq!(update_penalty(100.0, 0.5, 10.0, 1e-8), 1000.0);
        assert_eq!(update_penalty(7.0, 5e-9, 10.0, 1e-8), 7.0);
    }

    #[test]
    fn smoothing_update_rules() {
        assert_eq!(
            update_smoothing(100.0, 1e-6, 10.0, 5e5, 7e-5),
            (1000.0, true)
        );
        assert_eq!(update_smoothing(100.0, 1e4, 10.0, 5e5, 7e-5), (100.0, false));
        assert_eq!(update_smoothing(1e9, 5e-5, 10.0, 5e5, 7e-5), (1e10, true));
    }

    #[test]
    fn bfgs_identity_is_fixed_point() {
        let w = DMatrix::identity(3, 3);
        let s = dvector![1.0, 0.0, 0.0];
        let next = powell_bfgs_update(&w, &s, &s, 1e-5, 1e5);
        assert!((next - DMatrix::identity(3, 3)).amax() <= 1e-14);
    }

    #[test]
    fn bfgs_damping_worked_example() {
        // s'y = -1 < 0.2: theta = 0.8/(1 - (-1)) = 0.4, y_bar = 0.2 e1,
        // result I - 0.8 e1 e1'.
        let w = DMatrix::identity(2, 2);
        let s = dvector![1.0, 0.0];
        let y = dvector![-1.0, 0.0];
        let next = powell_bfgs_update(&w, &s, &y, 1e-5, 1e5);
        let mut expected = DMatrix::identity(2, 2);
        expected[(0, 0)] = 0.2;
        assert!((&next - expected).amax() <= 1e-15);
        assert!(next.clone().cholesky().is_some());
    }

    #[test]
    fn bfgs_norm_escape_resets_to_identity() {
        // Large curvature: result [2e5] exceeds the upper bound.
        let w = DMatrix::from_element(1, 1, 1.0);
        let next = powell_bfgs_update(&w, &dvector![1.0], &dvector![2e5], 1e-5, 1e5);
        assert_eq!(next, DMatrix::identity(1, 1));
        // Small curvature against a raised lower bound.
        let next = powell_bfgs_update(&w, &dvector![1.0], &dvector![1e-6], 0.5, 1e5);
        assert_eq!(next, DMatrix::identity(1, 1));
    }

    #[test]
    fn bfgs_zero_step_keeps_w() {
        let mut w = DMatrix::identity(2, 2);
        w[(0, 0)] = 3.0;
        let next = powell_bfgs_update(&w, &dvector![0.0, 0.0], &dvector![1.0, 1.0], 1e-5, 1e5);
        assert_eq!(next, w);
    }

    #[test]
    fn solver_on_bound_constrained_quadratic() {
        // min (x-1)^2 s.t. x <= 0 from x0 = 1: solution x = 0, multiplier 2.
        let f = SmoothedFunction::smooth(
            1,
            |x: &DVector<f64>| (x[0] - 1.0) * (x[0] - 1.0),
            |x: &DVector<f64>| dvector![2.0 * (x[0] - 1.0)],
        );
        let g = SmoothedFunction::smooth(1, |x: &DVector<f64>| x[0], |_| dvector![1.0]);
        let prob = ProblemInstance::new(1, f, vec![g], vec![]).unwrap();
        let cfg = SolverConfig::default();
        let result = run_solver(&prob, &dvector![1.0], &cfg).unwrap();
        assert_eq!(result.status, SolveStatus::Converged);
        assert!(result.final_x[0].abs() <= 1e-6);
        let last = result.trace.last().unwrap();
        assert!((last.multipliers.lam_g[0] - 2.0).abs() <= 1e-6);
        assert!(result.stationarity_residual <= cfg.qp_tol.max(1e-9));
        // The smoothing schedule fires exactly at the recorded iterations.
        let fired: Vec<usize> = result
            .trace
            .iter()
            .filter(|rec| rec.rho_updated)
            .map(|rec| rec.k)
            .collect();
        assert_eq!(fired, result.d_small_set);
    }

    #[test]
    fn solver_unconstrained_descent_keeps_penalty() {
        let prob = unconstrained(norm_sq(2));
        let cfg = SolverConfig::default();
        let result = run_solver(&prob, &dvector![5.0, 5.0], &cfg).unwrap();
        assert_eq!(result.status, SolveStatus::Converged);
        assert!(result.final_x.norm() <= 1e-4);
        assert_eq!(result.final_r, cfg.r0);
        for rec in &result.trace {
            assert_eq!(rec.xi, 0.0);
            // Merit decreases whenever a real step was taken; rho and the
            // merit are independent here (smooth instance, constant r).
            if rec.d_norm > 0.0 {
                assert!(rec.merit_after < rec.merit_before);
            }
            // Descent and Armijo certificates.
            assert!(rec.theta_prime <= -rec.dwd + 1e-8);
            assert!(
                rec.merit_after - rec.merit_before <= -cfg.sigma1 * rec.alpha * rec.dwd + 1e-12
            );
        }
    }

    #[test]
    fn stationarity_residual_matches_curvature_side() {
        let prob = unconstrained(norm_sq(2));
        let cfg = SolverConfig::default();
        let result = run_solver(&prob, &dvector![5.0, 5.0], &cfg).unwrap();
        for rec in &result.trace {
            let lhs = stationarity_residual(rec, &DMatrix::identity(2, 2));
            assert!(
                (lhs - rec.stationarity).abs() <= 1e-8,
                "k = {}: {} vs {}",
                rec.k,
                lhs,
                rec.stationarity
            );
        }
    }

    #[test]
    fn config_validation_rejects_out_of_range() {
        let cfg = SolverConfig {
            beta: 1.2,
            ..Default::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidParameter { name: "beta", .. })
        ));
        let cfg = SolverConfig {
            sigma2: 1e-9, // below sigma1
            sigma1: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(Error::InvalidParameter { name: "sigma2", .. })
        ));
        let cfg = SolverConfig {
            w_norm_max: 1e-6,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
