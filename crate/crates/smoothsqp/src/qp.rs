//! Penalized quadratic subproblem: assembly from a problem instance, a dense
//! primal-dual interior-point solve in the variables (d, xi), and residual
//! certification of the full optimality system.
//!
//! The subproblem solved at each outer iteration is
//!
//! ```text
//!     min_{d, xi}  grad_f' d + 1/2 d' W d + r xi
//!     s.t.         g_i + grad_g_i' d <= xi          (inequality rows)
//!                  |h_j + grad_h_j' d| <= xi        (equality rows, kept split)
//!                  xi >= 0
//! ```
//!
//! It is always feasible: (d, xi) = (0, max{0, g_i, |h_j|}) satisfies every
//! row. Equality rows are entered as their two one-sided inequalities so that
//! the multipliers of both sides stay individually available.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::ProblemInstance;

/// Default tolerance on the optimality residuals.
pub const KKT_TOL: f64 = 1e-10;

/// Default interior-point iteration cap.
pub const QP_ITERATION_CAP: usize = 200;

/// Static regularization on the xi diagonal of the Newton systems. The true
/// Hessian block for xi is zero; this keeps reduced systems positive definite
/// without measurably moving the solution.
const XI_REGULARIZATION: f64 = 1e-12;

/// One linearized constraint row: smoothed constraint value and gradient at
/// the current outer iterate.
#[derive(Clone, Debug)]
pub struct QpRow {
    pub value: f64,
    pub grad: DVector<f64>,
}

/// Data of one penalized quadratic subproblem.
#[derive(Clone, Debug)]
pub struct QpData {
    /// Dimension of d.
    pub n: usize,
    /// Symmetric positive-definite curvature matrix.
    pub w: DMatrix<f64>,
    /// Gradient of the smoothed objective at the current point.
    pub grad_f: DVector<f64>,
    /// Linearized inequality constraints, length p.
    pub ineq_rows: Vec<QpRow>,
    /// Linearized equality constraints, length q - p.
    pub eq_rows: Vec<QpRow>,
    /// Penalty weight on xi, > 0.
    pub r: f64,
}

impl QpData {
    /// Number of one-sided rows in the internal inequality system
    /// (p inequalities, two per equality, plus the xi >= 0 row).
    pub fn num_rows(&self) -> usize {
        self.ineq_rows.len() + 2 * self.eq_rows.len() + 1
    }

    /// The always-feasible slack level max{0, g_i, |h_j|} at d = 0.
    pub fn trivial_xi(&self) -> f64 {
        let mut xi = 0.0f64;
        for row in &self.ineq_rows {
            xi = xi.max(row.value);
        }
        for row in &self.eq_rows {
            xi = xi.max(row.value.abs());
        }
        xi
    }

    /// Subproblem objective grad_f' d + 1/2 d' W d + r xi.
    pub fn objective(&self, d: &DVector<f64>, xi: f64) -> f64 {
        self.grad_f.dot(d) + 0.5 * (&self.w * d).dot(d) + self.r * xi
    }

    /// Stacked one-sided system A z <= b over z = (d, xi).
    ///
    /// Row order: inequalities 0..p, then for each equality j its plus row
    /// (h + grad' d <= xi) followed by its minus row (-h - grad' d <= xi),
    /// and finally the xi >= 0 row.
    fn constraint_system(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n;
        let p = self.ineq_rows.len();
        let e = self.eq_rows.len();
        let m = p + 2 * e + 1;
        let mut a = DMatrix::zeros(m, n + 1);
        let mut b = DVector::zeros(m);
        for (i, row) in self.ineq_rows.iter().enumerate() {
            for k in 0..n {
                a[(i, k)] = row.grad[k];
            }
            a[(i, n)] = -1.0;
            b[i] = -row.value;
        }
        for (j, row) in self.eq_rows.iter().enumerate() {
            let rp = p + 2 * j;
            let rm = rp + 1;
            for k in 0..n {
                a[(rp, k)] = row.grad[k];
                a[(rm, k)] = -row.grad[k];
            }
            a[(rp, n)] = -1.0;
            a[(rm, n)] = -1.0;
            b[rp] = -row.value;
            b[rm] = row.value;
        }
        a[(m - 1, n)] = -1.0;
        (a, b)
    }

    fn check_dims(&self) -> Result<()> {
        if self.w.nrows() != self.n || self.w.ncols() != self.n {
            return Err(Error::Dimension {
                context: "qp hessian",
                expected: self.n,
                got: self.w.nrows().max(self.w.ncols()),
            });
        }
        if self.grad_f.len() != self.n {
            return Err(Error::Dimension {
                context: "qp objective gradient",
                expected: self.n,
                got: self.grad_f.len(),
            });
        }
        for row in self.ineq_rows.iter().chain(self.eq_rows.iter()) {
            if row.grad.len() != self.n {
                return Err(Error::Dimension {
                    context: "qp constraint row",
                    expected: self.n,
                    got: row.grad.len(),
                });
            }
        }
        Ok(())
    }
}

/// Primal-dual solution of one subproblem.
#[derive(Clone, Debug)]
pub struct QpSolution {
    /// Step in x.
    pub d: DVector<f64>,
    /// Elastic slack, >= 0 up to 1e-12.
    pub xi: f64,
    /// Multipliers of the inequality rows, length p.
    pub lam_g: DVector<f64>,
    /// Multipliers of the plus-side equality rows, length q - p.
    pub lam_plus: DVector<f64>,
    /// Multipliers of the minus-side equality rows, length q - p.
    pub lam_minus: DVector<f64>,
    /// Multiplier of the xi >= 0 row.
    pub lam_xi: f64,
    /// Max-norm over all optimality residuals at this point.
    pub kkt_residual: f64,
}

/// Residuals of the six blocks of the subproblem optimality system. Each
/// complementarity entry folds in the corresponding primal and dual
/// feasibility violations, so a zero record certifies a full solution.
#[derive(Clone, Copy, Debug)]
pub struct KktResiduals {
    /// Max-norm of W d + grad_f + sum lam_g grad_g + sum (lam_plus - lam_minus) grad_h.
    pub stationarity: f64,
    /// |r - (sum lam_g + sum (lam_plus + lam_minus) + lam_xi)|.
    pub multiplier_balance: f64,
    /// Inequality rows: min(lam, slack) measure plus feasibility violations.
    pub ineq_complementarity: f64,
    /// Plus-side equality rows, same measure.
    pub eq_plus_complementarity: f64,
    /// Minus-side equality rows, same measure.
    pub eq_minus_complementarity: f64,
    /// xi >= 0 row, same measure.
    pub xi_complementarity: f64,
}

impl KktResiduals {
    /// Largest of the six residuals.
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.multiplier_balance)
            .max(self.ineq_complementarity)
            .max(self.eq_plus_complementarity)
            .max(self.eq_minus_complementarity)
            .max(self.xi_complementarity)
    }
}

/// Builds the subproblem from a problem instance at the point `x` with
/// smoothing level `rho`, curvature matrix `w`, and penalty weight `r`.
pub fn assemble_qp(
    prob: &ProblemInstance,
    x: &DVector<f64>,
    rho: f64,
    w: DMatrix<f64>,
    r: f64,
) -> Result<QpData> {
    if x.len() != prob.n {
        return Err(Error::Dimension {
            context: "assemble_qp point",
            expected: prob.n,
            got: x.len(),
        });
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "rho",
            value: rho,
            requirement: "finite and > 0",
        });
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "r",
            value: r,
            requirement: "finite and > 0",
        });
    }
    if w.nrows() != prob.n || w.ncols() != prob.n {
        return Err(Error::Dimension {
            context: "assemble_qp hessian",
            expected: prob.n,
            got: w.nrows().max(w.ncols()),
        });
    }
    let scale = w.amax().max(1.0);
    for i in 0..prob.n {
        for j in (i + 1)..prob.n {
            if (w[(i, j)] - w[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::NotSpd {
                    context: "assemble_qp hessian symmetry",
                });
            }
        }
    }

    let grad_f = prob.objective_gradient(x, rho)?;
    let g_vals = prob.inequality_values(x, rho)?;
    let g_grads = prob.inequality_gradients(x, rho)?;
    let h_vals = prob.equality_values(x, rho)?;
    let h_grads = prob.equality_gradients(x, rho)?;
    let ineq_rows = g_vals
        .into_iter()
        .zip(g_grads)
        .map(|(value, grad)| QpRow { value, grad })
        .collect();
    let eq_rows = h_vals
        .into_iter()
        .zip(h_grads)
        .map(|(value, grad)| QpRow { value, grad })
        .collect();
    Ok(QpData {
        n: prob.n,
        w,
        grad_f,
        ineq_rows,
        eq_rows,
        r,
    })
}

/// Computes the residuals of every optimality block for a candidate solution.
/// Pure diagnostic; never fails (dimension mismatches panic).
pub fn kkt_residuals(qp: &QpData, sol: &QpSolution) -> KktResiduals {
    let p = qp.ineq_rows.len();
    let e = qp.eq_rows.len();
    assert_eq!(sol.d.len(), qp.n, "solution step dimension");
    assert_eq!(sol.lam_g.len(), p, "inequality multiplier count");
    assert_eq!(sol.lam_plus.len(), e, "plus multiplier count");
    assert_eq!(sol.lam_minus.len(), e, "minus multiplier count");

    let mut stat = &qp.w * &sol.d + &qp.grad_f;
    for (i, row) in qp.ineq_rows.iter().enumerate() {
        stat += sol.lam_g[i] * &row.grad;
    }
    for (j, row) in qp.eq_rows.iter().enumerate() {
        stat += (sol.lam_plus[j] - sol.lam_minus[j]) * &row.grad;
    }
    let stationarity = stat.amax();

    let lam_sum = sol.lam_g.sum() + sol.lam_plus.sum() + sol.lam_minus.sum() + sol.lam_xi;
    let multiplier_balance = (qp.r - lam_sum).abs();

    // Each row contributes max(primal violation, dual violation, min(lam, slack)).
    let row_measure = |lam: f64, slack: f64| -> f64 {
        let primal = (-slack).max(0.0);
        let dual = (-lam).max(0.0);
        let comp = lam.max(0.0).min(slack.max(0.0));
        primal.max(dual).max(comp)
    };

    let mut ineq_complementarity = 0.0f64;
    for (i, row) in qp.ineq_rows.iter().enumerate() {
        let slack = sol.xi - row.value - row.grad.dot(&sol.d);
        ineq_complementarity = ineq_complementarity.max(row_measure(sol.lam_g[i], slack));
    }
    let mut eq_plus_complementarity = 0.0f64;
    let mut eq_minus_complementarity = 0.0f64;
    for (j, row) in qp.eq_rows.iter().enumerate() {
        let lin = row.value + row.grad.dot(&sol.d);
        eq_plus_complementarity =
            eq_plus_complementarity.max(row_measure(sol.lam_plus[j], sol.xi - lin));
        eq_minus_complementarity =
            eq_minus_complementarity.max(row_measure(sol.lam_minus[j], sol.xi + lin));
    }
    let xi_complementarity = row_measure(sol.lam_xi, sol.xi);

    KktResiduals {
        stationarity,
        multiplier_balance,
        ineq_complementarity,
        eq_plus_complementarity,
        eq_minus_complementarity,
        xi_complementarity,
    }
}

/// Solves the subproblem to the given residual tolerance with the default
/// iteration cap.
pub fn solve_penalized_qp(qp: &QpData, tol: f64) -> Result<QpSolution> {
    solve_penalized_qp_with(qp, tol, QP_ITERATION_CAP)
}

/// Solves the subproblem with an explicit iteration cap.
///
/// The method is a Mehrotra-style predictor-corrector interior-point
/// iteration on the one-sided system, started from the always-feasible point
/// (d, xi) = (0, max{0, g, |h|} + 1). Once the duality measure is small, an
/// active-set refinement solves the reduced equality system exactly; the
/// refined point is returned as soon as its residuals certify under `tol`.
///
/// # Errors
///
/// Returns a solver-failure error carrying the best certified iterate when
/// the cap is reached without certification, and a matrix error when the
/// curvature matrix fails to factorize.
pub fn solve_penalized_qp_with(qp: &QpData, tol: f64, max_iter: usize) -> Result<QpSolution> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "tol",
            value: tol,
            requirement: "finite and > 0",
        });
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter {
            name: "max_iter",
            value: 0.0,
            requirement: ">= 1",
        });
    }
    qp.check_dims()?;
    if qp.w.clone().cholesky().is_none() {
        return Err(Error::NotSpd {
            context: "qp hessian",
        });
    }
    if !(qp.r > 0.0 && qp.r.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "r",
            value: qp.r,
            requirement: "finite and > 0",
        });
    }

    let n = qp.n;
    let nz = n + 1;
    let (a, b) = qp.constraint_system();
    let m = a.nrows();

    // The trivial point (0, max{0, g, |h|}) must satisfy every row; this is
    // structural, so a violation indicates corrupted inputs.
    {
        let mut z0 = DVector::zeros(nz);
        z0[n] = qp.trivial_xi();
        let resid = &a * &z0 - &b;
        let worst = resid.iter().fold(0.0f64, |acc, &v| acc.max(v));
        assert!(
            worst <= 1e-9 * (1.0 + b.amax()),
            "trivial point infeasible by {worst:.3e}; inconsistent subproblem data"
        );
    }

    // Hessian and linear term over z = (d, xi).
    let mut q = DMatrix::zeros(nz, nz);
    q.view_mut((0, 0), (n, n)).copy_from(&qp.w);
    q[(n, n)] = XI_REGULARIZATION;
    let mut c = DVector::zeros(nz);
    c.rows_mut(0, n).copy_from(&qp.grad_f);
    c[n] = qp.r;

    // Strictly feasible start.
    let mut z = DVector::zeros(nz);
    z[n] = qp.trivial_xi() + 1.0;
    let mut s = &b - &a * &z;
    let mut lam = DVector::from_element(m, 1.0);

    let mut best: Option<QpSolution> = None;
    let mut best_residual = f64::INFINITY;
    let mut iterations = 0usize;

    for _ in 0..max_iter {
        iterations += 1;

        let mut cand = extract_solution(qp, &z, &lam);
        let res = kkt_residuals(qp, &cand).max();
        cand.kkt_residual = res;
        if res < best_residual {
            best_residual = res;
            best = Some(cand.clone());
        }
        if res <= tol {
            return Ok(cand);
        }

        let mu = lam.dot(&s) / m as f64;
        if mu <= 1e-6 * (1.0 + qp.r) {
            if let Some(refined) = active_set_refinement(qp, &a, &b, &c, &z, &lam, tol) {
                return Ok(refined);
            }
        }
        if !mu.is_finite() || mu < 1e-18 {
            break;
        }

        // Residuals of the perturbed optimality system.
        let r_d = &q * &z + &c + a.transpose() * &lam;
        let r_p = &a * &z + &s - &b;
        let d_vec = DVector::from_fn(m, |i, _| lam[i] / s[i]);

        // Normal-equations matrix Q + A' diag(lam/s) A, with a jitter ladder
        // in case extreme scaling defeats the factorization.
        let ad = DMatrix::from_fn(m, nz, |i, k| a[(i, k)] * d_vec[i]);
        let msys = &q + a.transpose() * ad;
        let scale = msys.amax().max(1.0);
        let mut chol = None;
        for jit in [0.0, 1e-12, 1e-9, 1e-6] {
            let mut mj = msys.clone();
            for k in 0..nz {
                mj[(k, k)] += jit * scale;
            }
            if let Some(f) = mj.cholesky() {
                chol = Some(f);
                break;
            }
        }
        let Some(chol) = chol else { break };

        let solve_direction = |rc: &DVector<f64>| {
            let tmp = DVector::from_fn(m, |i, _| d_vec[i] * r_p[i] + rc[i] / s[i]);
            let rhs = -(a.transpose() * tmp + &r_d);
            let dz = chol.solve(&rhs);
            let adz = &a * &dz;
            let dlam = DVector::from_fn(m, |i, _| d_vec[i] * (adz[i] + r_p[i]) + rc[i] / s[i]);
            let ds = -(&adz + &r_p);
            (dz, dlam, ds)
        };

        // Predictor, used only to choose the centering weight: a productive
        // affine step permits aggressive centering, a blocked one does not.
        let rc_aff = DVector::from_fn(m, |i, _| -lam[i] * s[i]);
        let (_dz_aff, dlam_aff, ds_aff) = solve_direction(&rc_aff);
        let alpha_p_aff = ratio_step(&s, &ds_aff).min(1.0);
        let alpha_d_aff = ratio_step(&lam, &dlam_aff).min(1.0);
        let mut mu_aff = 0.0;
        for i in 0..m {
            mu_aff += (lam[i] + alpha_d_aff * dlam_aff[i]) * (s[i] + alpha_p_aff * ds_aff[i]);
        }
        mu_aff = (mu_aff / m as f64).max(0.0);
        let sigma = (mu_aff / mu).powi(3).clamp(0.01, 0.9);

        // Centered direction. The second-order corrector term is left out on
        // purpose: it destabilizes off-center iterates, and problems at this
        // scale gain nothing from it.
        let rc = DVector::from_fn(m, |i, _| -lam[i] * s[i] + sigma * mu);
        let (dz, dlam, ds) = solve_direction(&rc);

        // Equal primal and dual step lengths keep both residuals shrinking
        // linearly; the ladder scales the step until the duality measure
        // decreases as well.
        let tau = 0.995;
        let alpha_base = (tau * ratio_step(&s, &ds).min(ratio_step(&lam, &dlam))).min(1.0);
        let mut alpha = 0.01 * alpha_base;
        for gamma in [1.0, 0.5, 0.25, 0.1, 0.04, 0.01] {
            let trial = gamma * alpha_base;
            let mut mu_new = 0.0;
            for i in 0..m {
                mu_new += (lam[i] + trial * dlam[i]) * (s[i] + trial * ds[i]);
            }
            mu_new /= m as f64;
            if mu_new <= (1.0 - 0.05 * trial) * mu {
                alpha = trial;
                break;
            }
        }
        z += alpha * &dz;
        s += alpha * &ds;
        lam += alpha * &dlam;

        if z.iter().chain(s.iter()).chain(lam.iter()).any(|v| !v.is_finite()) {
            break;
        }
    }

    if let Some(refined) = active_set_refinement(qp, &a, &b, &c, &z, &lam, tol) {
        return Ok(refined);
    }
    let best = best.unwrap_or_else(|| {
        let mut sol = extract_solution(qp, &z, &lam);
        sol.kkt_residual = kkt_residuals(qp, &sol).max();
        sol
    });
    Err(Error::QpIterationLimit {
        iterations,
        best_residual: best.kkt_residual,
        tol,
        best: Box::new(best),
    })
}

/// Largest step alpha with v + alpha dv >= 0 (uncapped; may be infinite).
fn ratio_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            alpha = alpha.min(-v[i] / dv[i]);
        }
    }
    alpha
}

/// Maps an interior iterate (z, lam) into the solution layout.
fn extract_solution(qp: &QpData, z: &DVector<f64>, lam: &DVector<f64>) -> QpSolution {
    let n = qp.n;
    let p = qp.ineq_rows.len();
    let e = qp.eq_rows.len();
    let m = p + 2 * e + 1;
    QpSolution {
        d: z.rows(0, n).into_owned(),
        xi: z[n],
        lam_g: DVector::from_fn(p, |i, _| lam[i]),
        lam_plus: DVector::from_fn(e, |j, _| lam[p + 2 * j]),
        lam_minus: DVector::from_fn(e, |j, _| lam[p + 2 * j + 1]),
        lam_xi: lam[m - 1],
        kkt_residual: f64::NAN,
    }
}

/// Solves the equality system of a guessed active set exactly and returns the
/// result when it certifies under `tol`.
///
/// The guess takes rows with slack below multiplier, ordered by multiplier
/// size, thinned to an independent subset; degenerate row families (such as
/// both sides of an equality together with the xi row) are handled by the
/// thinning, and rows left out simply keep multiplier zero.
fn active_set_refinement(
    qp: &QpData,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    z: &DVector<f64>,
    lam: &DVector<f64>,
    tol: f64,
) -> Option<QpSolution> {
    let n = qp.n;
    let nz = n + 1;
    let m = a.nrows();
    let slack = b - a * z;
    let mut active: Vec<usize> = (0..m).filter(|&i| slack[i] < lam[i]).collect();
    if active.is_empty() {
        return None;
    }
    active.sort_by(|&i, &j| lam[j].partial_cmp(&lam[i]).unwrap_or(std::cmp::Ordering::Equal));

    // Greedy independent subset, preferring rows with large multipliers.
    let mut selected: Vec<usize> = Vec::new();
    for &row in &active {
        if selected.len() == nz {
            break;
        }
        let mut trial = selected.clone();
        trial.push(row);
        let at = DMatrix::from_fn(trial.len(), nz, |i, k| a[(trial[i], k)]);
        let scale = at.amax().max(1.0);
        if at.svd(false, false).rank(1e-9 * scale) == trial.len() {
            selected = trial;
        }
    }
    if selected.is_empty() {
        return None;
    }

    // Equality KKT system of the selected rows, with the exact Hessian
    // (no xi regularization).
    let t = selected.len();
    let dim = nz + t;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.w);
    for (i, &row) in selected.iter().enumerate() {
        for k in 0..nz {
            kkt[(nz + i, k)] = a[(row, k)];
            kkt[(k, nz + i)] = a[(row, k)];
        }
    }
    let mut rhs = DVector::zeros(dim);
    for k in 0..nz {
        rhs[k] = -c[k];
    }
    for (i, &row) in selected.iter().enumerate() {
        rhs[nz + i] = b[row];
    }
    let sol = kkt.full_piv_lu().solve(&rhs)?;

    let z_ref = sol.rows(0, nz).into_owned();
    let mut lam_full = DVector::zeros(m);
    for (i, &row) in selected.iter().enumerate() {
        let v = sol[nz + i];
        if v < -1e-10 * (1.0 + qp.r) {
            return None;
        }
        lam_full[row] = v.max(0.0);
    }
    let xi = z_ref[n];
    if xi < -1e-12 {
        return None;
    }
    let mut z_out = z_ref;
    z_out[n] = xi.max(0.0);

    let mut cand = extract_solution(qp, &z_out, &lam_full);
    let res = kkt_residuals(qp, &cand).max();
    if res <= tol {
        cand.kkt_residual = res;
        Some(cand)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{
        merit_directional_derivative, MeritParams, ProblemInstance, SmoothedFunction,
    };
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    fn row(value: f64, grad: DVector<f64>) -> QpRow {
        QpRow { value, grad }
    }

    #[test]
    fn unconstrained_newton_step() {
        let qp = QpData {
            n: 2,
            w: DMatrix::identity(2, 2),
            grad_f: dvector![1.0, 0.0],
            ineq_rows: vec![],
            eq_rows: vec![],
            r: 1.0,
        };
        let sol = solve_penalized_qp(&qp, KKT_TOL).unwrap();
        assert!((sol.d[0] + 1.0).abs() <= 1e-9);
        assert!(sol.d[1].abs() <= 1e-9);
        assert!(sol.xi.abs() <= 1e-9);
        assert!((sol.lam_xi - 1.0).abs() <= 1e-9);
        assert!(sol.kkt_residual <= KKT_TOL);
    }

    #[test]
    fn inactive_inequality_multiplier_absorbed_by_xi_row() {
        let qp = QpData {
            n: 2,
            w: DMatrix::identity(2, 2),
            grad_f: dvector![0.0, 0.0],
            ineq_rows: vec![row(-1.0, dvector![0.0, 0.0])],
            eq_rows: vec![],
            r: 5.0,
        };
        let sol = solve_penalized_qp(&qp, KKT_TOL).unwrap();
        assert!(sol.d.amax() <= 1e-9);
        assert!(sol.xi.abs() <= 1e-9);
        assert!(sol.lam_g[0].abs() <= 1e-9);
        assert!((sol.lam_xi - 5.0).abs() <= 1e-9);
    }

    /// Exact piecewise objective of the n=1 single-equality instance after
    /// minimizing out xi: psi(d) = d^2/2 + r * |value + d|.
    fn eq_instance_reduced_objective(d: f64, value: f64, r: f64) -> f64 {
        0.5 * d * d + r * (value + d).abs()
    }

    #[test]
    fn equality_row_matches_grid_search_oracle() {
        let value = 1.0;
        let r = 10.0;

        // Coarse scan then local refinement of the exact reduced objective.
        let mut best_d = 0.0;
        let mut best_v = f64::INFINITY;
        let mut dd = -3.0;
        while dd <= 3.0 {
            let v = eq_instance_reduced_objective(dd, value, r);
            if v < best_v {
                best_v = v;
                best_d = dd;
            }
            dd += 1e-3;
        }
        let center = best_d;
        let mut fine = center - 2e-3;
        while fine <= center + 2e-3 {
            let v = eq_instance_reduced_objective(fine, value, r);
            if v < best_v {
                best_v = v;
                best_d = fine;
            }
            fine += 1e-7;
        }
        assert!((best_d + 1.0).abs() <= 1e-6, "oracle sanity: {best_d}");

        let qp = QpData {
            n: 1,
            w: dmatrix![1.0],
            grad_f: dvector![0.0],
            ineq_rows: vec![],
            eq_rows: vec![row(value, dvector![1.0])],
            r,
        };
        let sol = solve_penalized_qp(&qp, KKT_TOL).unwrap();
        assert!((sol.d[0] - best_d).abs() <= 1.5e-6);
        assert!((sol.d[0] + 1.0).abs() <= 1e-8);
        assert!(sol.xi <= 1e-9);
        let obj = qp.objective(&sol.d, sol.xi);
        assert!((obj - 0.5).abs() <= 1e-8);
    }

    #[test]
    fn degenerate_multipliers_satisfy_balance() {
        // Same instance as the oracle test: the optimal multipliers form a
        // one-parameter family; any member certifying the residuals is fine.
        let qp = QpData {
            n: 1,
            w: dmatrix![1.0],
            grad_f: dvector![0.0],
            ineq_rows: vec![],
            eq_rows: vec![row(1.0, dvector![1.0])],
            r: 10.0,
        };
        let sol = solve_penalized_qp(&qp, KKT_TOL).unwrap();
        let balance = qp.r - (sol.lam_plus.sum() + sol.lam_minus.sum() + sol.lam_xi);
        assert!(balance.abs() <= 1e-10);
        assert!((sol.d[0] + (sol.lam_plus[0] - sol.lam_minus[0])).abs() <= 1e-10);
        assert!(sol.lam_plus[0] >= 0.0 && sol.lam_minus[0] >= 0.0 && sol.lam_xi >= 0.0);
    }

    #[test]
    fn zero_gradient_feasible_point_stays_put() {
        let qp = QpData {
            n: 2,
            w: dmatrix![2.0, 0.3; 0.3, 1.0],
            grad_f: dvector![0.0, 0.0],
            ineq_rows: vec![row(-0.5, dvector![1.0, 1.0]), row(-0.1, dvector![0.0, 1.0])],
            eq_rows: vec![],
            r: 3.0,
        };
        let sol = solve_penalized_qp(&qp, KKT_TOL).unwrap();
        assert!(sol.d.amax() <= 1e-9);
        assert!(sol.xi.abs() <= 1e-9);
    }

    #[test]
    fn optimal_objective_bounded_by_trivial_point() {
        let qp = QpData {
            n: 2,
            w: dmatrix![1.5, -0.2; -0.2, 0.8],
            grad_f: dvector![0.7, -1.3],
            ineq_rows: vec![row(0.4, dvector![1.0, -0.5])],
            eq_rows: vec![row(-0.3, dvector![0.6, 1.1])],
            r: 4.0,
        };
        let sol = solve_penalized_qp(&qp, KKT_TOL).unwrap();
        let trivial = qp.objective(&DVector::zeros(2), qp.trivial_xi());
        assert!(qp.objective(&sol.d, sol.xi) <= trivial + 1e-9);
    }

    #[test]
    fn perturbed_step_shows_linear_stationarity_growth() {
        let qp = QpData {
            n: 2,
            w: dmatrix![1.5, -0.2; -0.2, 0.8],
            grad_f: dvector![0.7, -1.3],
            ineq_rows: vec![row(0.4, dvector![1.0, -0.5])],
            eq_rows: vec![],
            r: 4.0,
        };
        let sol = solve_penalized_qp(&qp, KKT_TOL).unwrap();
        let base = kkt_residuals(&qp, &sol).stationarity;
        assert!(base <= KKT_TOL);
        let mut perturbed = sol.clone();
        let delta = dvector![1e-3, 0.0];
        perturbed.d += &delta;
        let grown = kkt_residuals(&qp, &perturbed).stationarity;
        let expected = (&qp.w * &delta).amax();
        assert!((grown - expected).abs() <= 1e-9 + base);
    }

    #[test]
    fn asymmetric_or_indefinite_hessians_rejected() {
        let prob = ProblemInstance::new(
            2,
            SmoothedFunction::smooth(2, |x: &DVector<f64>| x[0], |_| dvector![1.0, 0.0]),
            vec![],
            vec![],
        )
        .unwrap();
        let err = assemble_qp(
            &prob,
            &dvector![0.0, 0.0],
            1.0,
            dmatrix![1.0, 0.5; 0.1, 1.0],
            1.0,
        );
        assert!(matches!(err, Err(Error::NotSpd { .. })));

        let qp = QpData {
            n: 1,
            w: dmatrix![-1.0],
            grad_f: dvector![0.0],
            ineq_rows: vec![],
            eq_rows: vec![],
            r: 1.0,
        };
        let err = solve_penalized_qp(&qp, KKT_TOL);
        assert!(matches!(err, Err(Error::NotSpd { .. })));
    }

    #[test]
    fn assemble_collects_rows() {
        let f = SmoothedFunction::smooth(2, |x: &DVector<f64>| x.dot(x), |x: &DVector<f64>| 2.0 * x);
        let prob = ProblemInstance::new(2, f, vec![], vec![]).unwrap();
        let qp = assemble_qp(&prob, &dvector![1.0, 0.0], 1.0, DMatrix::identity(2, 2), 1.0).unwrap();
        assert_eq!(qp.grad_f, dvector![2.0, 0.0]);
        assert!(qp.ineq_rows.is_empty() && qp.eq_rows.is_empty());

        let f0 = SmoothedFunction::smooth(2, |_x: &DVector<f64>| 0.0, |_| dvector![0.0, 0.0]);
        let h = SmoothedFunction::smooth(2, |x: &DVector<f64>| x[0] - 1.0, |_| dvector![1.0, 0.0]);
        let prob = ProblemInstance::new(2, f0, vec![], vec![h]).unwrap();
        let qp = assemble_qp(&prob, &dvector![0.0, 0.0], 1.0, DMatrix::identity(2, 2), 1.0).unwrap();
        assert_eq!(qp.eq_rows.len(), 1);
        assert_eq!(qp.eq_rows[0].value, -1.0);
        assert_eq!(qp.eq_rows[0].grad, dvector![1.0, 0.0]);
    }

    #[test]
    fn solution_direction_descends_merit() {
        // One violated inequality: the returned step must descend the
        // penalty merit at rate at least d' W d.
        let f = SmoothedFunction::smooth(1, |x: &DVector<f64>| x[0] * x[0], |x: &DVector<f64>| {
            2.0 * x.clone()
        });
        let g = SmoothedFunction::smooth(1, |x: &DVector<f64>| x[0] + 0.5, |_| dvector![1.0]);
        let prob = ProblemInstance::new(1, f, vec![g], vec![]).unwrap();
        let x = dvector![0.3];
        let r = 2.0;
        let qp = assemble_qp(&prob, &x, 1.0, DMatrix::identity(1, 1), r).unwrap();
        let sol = solve_penalized_qp(&qp, KKT_TOL).unwrap();
        assert!((sol.d[0] + 0.8).abs() <= 1e-8);
        let mp = MeritParams::new(1.0, r).unwrap();
        let slope = merit_directional_derivative(&prob, &x, &sol.d, &mp).unwrap();
        let dwd = (&qp.w * &sol.d).dot(&sol.d);
        assert!(slope <= -dwd + 1e-8, "slope {slope} vs -dWd {}", -dwd);
    }

    #[test]
    fn iteration_cap_error_carries_best_iterate() {
        let qp = QpData {
            n: 2,
            w: dmatrix![2.0, 0.3; 0.3, 1.0],
            grad_f: dvector![0.7, -1.3],
            ineq_rows: vec![row(0.4, dvector![1.0, -0.5])],
            eq_rows: vec![],
            r: 4.0,
        };
        match solve_penalized_qp_with(&qp, 1e-300, 1) {
            Err(Error::QpIterationLimit {
                iterations,
                best_residual,
                best,
                ..
            }) => {
                assert_eq!(iterations, 1);
                assert!(best_residual.is_finite());
                assert!(best.d.iter().all(|v| v.is_finite()));
            }
            other => panic!("expected iteration-limit error, got {other:?}"),
        }
    }

    /// Brute-force reference: enumerate every active subset of the one-sided
    /// system, solve its equality KKT system, and keep the best feasible
    /// candidate with admissible multipliers.
    fn enumeration_objective(qp: &QpData) -> f64 {
        let n = qp.n;
        let nz = n + 1;
        let (a, b) = qp.constraint_system();
        let m = a.nrows();
        let mut q0 = DMatrix::zeros(nz, nz);
        q0.view_mut((0, 0), (n, n)).copy_from(&qp.w);
        let mut c = DVector::zeros(nz);
        c.rows_mut(0, n).copy_from(&qp.grad_f);
        c[n] = qp.r;

        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << m) {
            let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            let t = rows.len();
            if t > nz {
                continue;
            }
            let dim = nz + t;
            let mut kkt = DMatrix::zeros(dim, dim);
            kkt.view_mut((0, 0), (nz, nz)).copy_from(&q0);
            for (i, &row) in rows.iter().enumerate() {
                for k in 0..nz {
                    kkt[(nz + i, k)] = a[(row, k)];
                    kkt[(k, nz + i)] = a[(row, k)];
                }
            }
            let mut rhs = DVector::zeros(dim);
            for k in 0..nz {
                rhs[k] = -c[k];
            }
            for (i, &row) in rows.iter().enumerate() {
                rhs[nz + i] = b[row];
            }
            let lu = kkt.clone().full_piv_lu();
            let Some(sol) = lu.solve(&rhs) else { continue };
            if sol.iter().any(|v| !v.is_finite()) {
                continue;
            }
            // Reject spurious solutions of near-singular systems.
            if (kkt * &sol - &rhs).amax() > 1e-7 {
                continue;
            }
            let z = sol.rows(0, nz).into_owned();
            if rows.iter().enumerate().any(|(i, _)| sol[nz + i] < -1e-9) {
                continue;
            }
            let slack = &b - &a * &z;
            if slack.iter().any(|&v| v < -1e-9) {
                continue;
            }
            let obj = 0.5 * (&q0 * &z).dot(&z) + c.dot(&z);
            best = best.min(obj);
        }
        best
    }

    fn spd_from(entries: &[f64], n: usize) -> DMatrix<f64> {
        let l = DMatrix::from_fn(n, n, |i, j| entries[i * n + j]);
        &l * l.transpose() + DMatrix::identity(n, n) * 0.3
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn random_instances_match_enumeration(
            n in 1usize..=3,
            p in 0usize..=2,
            e in 0usize..=2,
            l_entries in proptest::collection::vec(-1.0f64..1.0, 9),
            grad_entries in proptest::collection::vec(-2.0f64..2.0, 3),
            row_vals in proptest::collection::vec(-1.5f64..1.5, 4),
            row_grads in proptest::collection::vec(-2.0f64..2.0, 12),
            r in 0.5f64..20.0,
        ) {
            prop_assume!(p + e <= 3);
            let w = spd_from(&l_entries, n);
            let grad_f = DVector::from_fn(n, |i, _| grad_entries[i]);
            let ineq_rows: Vec<QpRow> = (0..p)
                .map(|i| row(row_vals[i], DVector::from_fn(n, |k, _| row_grads[i * 3 + k])))
                .collect();
            let eq_rows: Vec<QpRow> = (0..e)
                .map(|j| {
                    row(
                        row_vals[p + j],
                        DVector::from_fn(n, |k, _| row_grads[(p + j) * 3 + k]),
                    )
                })
                .collect();
            let qp = QpData { n, w, grad_f, ineq_rows, eq_rows, r };

            let sol = solve_penalized_qp(&qp, 1e-9).unwrap();
            prop_assert!(sol.kkt_residual <= 1e-8);
            let reference = enumeration_objective(&qp);
            prop_assert!(reference.is_finite());
            let obj = qp.objective(&sol.d, sol.xi);
            prop_assert!((obj - reference).abs() <= 1e-8,
                "solver {obj} vs enumeration {reference}");
        }
    }
}
