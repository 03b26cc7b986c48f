//! Dense linear programming used by the constraint-qualification checks.
//!
//! Solves min c'x subject to A_eq x = b_eq, A_ub x <= b_ub, x >= 0 with a
//! two-phase tableau simplex. Bland's rule makes the iteration immune to
//! cycling on the degenerate systems the diagnostics routinely produce, and
//! a hard iteration cap converts any residual stall into an explicit error.
//! The problems involved are tiny (tens of rows at most), so the dense
//! tableau is both the simplest and the fastest option here.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Feasibility and pivot tolerance of the simplex iteration.
pub(crate) const LP_TOL: f64 = 1e-9;

/// Upper bound on simplex pivots across both phases.
const ITERATION_CAP: usize = 10_000;

/// Terminal classification of a linear program.
#[derive(Clone, Debug)]
pub(crate) enum LpOutcome {
    /// A minimizer was found.
    Optimal {
        /// Optimal point, length matching the cost vector.
        x: DVector<f64>,
        /// Objective value c'x at the optimal point.
        objective: f64,
    },
    /// The constraints admit no nonnegative solution.
    Infeasible,
    /// The objective decreases without bound over the feasible set.
    Unbounded,
}

/// Minimizes `c' x` over `a_eq x = b_eq`, `a_ub x <= b_ub`, `x >= 0`.
///
/// Either constraint block may be empty (zero rows). Dimension mismatches
/// and non-finite inputs are rejected; a simplex stall past the iteration
/// cap surfaces as [`Error::LpFailure`].
pub(crate) fn solve_lp(
    c: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_ub: &DMatrix<f64>,
    b_ub: &DVector<f64>,
) -> Result<LpOutcome> {
    let n = c.len();
    let m_eq = a_eq.nrows();
    let m_ub = a_ub.nrows();
    if m_eq > 0 && a_eq.ncols() != n {
        return Err(Error::Dimension {
            context: "equality matrix columns",
            expected: n,
            got: a_eq.ncols(),
        });
    }
    if m_ub > 0 && a_ub.ncols() != n {
        return Err(Error::Dimension {
            context: "inequality matrix columns",
            expected: n,
            got: a_ub.ncols(),
        });
    }
    if b_eq.len() != m_eq {
        return Err(Error::Dimension {
            context: "equality right-hand side",
            expected: m_eq,
            got: b_eq.len(),
        });
    }
    if b_ub.len() != m_ub {
        return Err(Error::Dimension {
            context: "inequality right-hand side",
            expected: m_ub,
            got: b_ub.len(),
        });
    }
    let finite = c.iter().all(|v| v.is_finite())
        && a_eq.iter().all(|v| v.is_finite())
        && b_eq.iter().all(|v| v.is_finite())
        && a_ub.iter().all(|v| v.is_finite())
        && b_ub.iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::LpFailure {
            detail: "non-finite entry in the problem data".to_string(),
        });
    }

    // Standard form: structural variables x, then one slack per <= row.
    // Phase 1 appends artificial columns for every row that cannot start
    // from its slack (equality rows and <= rows flipped to make b >= 0).
    let n_struct = n + m_ub;
    let m = m_eq + m_ub;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs: Vec<f64> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut n_total = n_struct;
    for i in 0..m_eq {
        let mut row = vec![0.0; n_struct];
        let flip = if b_eq[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = flip * a_eq[(i, j)];
        }
        rows.push(row);
        rhs.push(flip * b_eq[i]);
        basis.push(n_total);
        n_total += 1;
    }
    for i in 0..m_ub {
        let mut row = vec![0.0; n_struct];
        let flip = if b_ub[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            row[j] = flip * a_ub[(i, j)];
        }
        row[n + i] = flip;
        rows.push(row);
        rhs.push(flip * b_ub[i]);
        if flip > 0.0 {
            basis.push(n + i);
        } else {
            basis.push(n_total);
            n_total += 1;
        }
    }
    // Append the artificial identity columns in basis order.
    for (r, &b) in basis.iter().enumerate() {
        if b >= n_struct {
            for (i, row) in rows.iter_mut().enumerate() {
                row.push(if i == r { 1.0 } else { 0.0 });
            }
        }
    }
    debug_assert!(rows.iter().all(|row| row.len() == n_total));

    let mut pivots_left = ITERATION_CAP;

    // Phase 1: minimize the sum of artificials over all columns.
    if n_total > n_struct {
        let mut cost1 = vec![0.0; n_total];
        for entry in cost1.iter_mut().skip(n_struct) {
            *entry = 1.0;
        }
        let outcome = run_simplex(
            &mut rows,
            &mut rhs,
            &mut basis,
            &cost1,
            n_total,
            &mut pivots_left,
        )?;
        debug_assert!(
            matches!(outcome, SimplexEnd::Optimal),
            "phase 1 is bounded below by zero"
        );
        let infeasibility: f64 = basis
            .iter()
            .zip(rhs.iter())
            .filter(|(b, _)| **b >= n_struct)
            .map(|(_, v)| v.max(0.0))
            .sum();
        if infeasibility > LP_TOL {
            return Ok(LpOutcome::Infeasible);
        }
        // Pivot leftover artificials out of the basis; a row where no
        // structural column can enter is redundant and is dropped.
        let mut r = 0;
        while r < rows.len() {
            if basis[r] >= n_struct {
                let pivot_col = (0..n_struct).find(|&j| rows[r][j].abs() > LP_TOL);
                match pivot_col {
                    Some(j) => {
                        pivot(&mut rows, &mut rhs, r, j);
                        basis[r] = j;
                        r += 1;
                    }
                    None => {
                        rows.remove(r);
                        rhs.remove(r);
                        basis.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
    }

    // Phase 2: original costs, artificial columns barred from entering.
    let mut cost2 = vec![0.0; n_total];
    cost2[..n].copy_from_slice(c.as_slice());
    let outcome = run_simplex(
        &mut rows,
        &mut rhs,
        &mut basis,
        &cost2,
        n_struct,
        &mut pivots_left,
    )?;
    if matches!(outcome, SimplexEnd::Unbounded) {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = DVector::zeros(n);
    for (r, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] = rhs[r].max(0.0);
        }
    }
    let objective = c.dot(&x);
    Ok(LpOutcome::Optimal { x, objective })
}

enum SimplexEnd {
    Optimal,
    Unbounded,
}

/// Runs Bland-rule simplex iterations on the tableau in place. Only columns
/// below `enter_limit` may enter the basis, which is how phase 2 bars the
/// artificial columns without rebuilding the tableau.
fn run_simplex(
    rows: &mut [Vec<f64>],
    rhs: &mut [f64],
    basis: &mut [usize],
    cost: &[f64],
    enter_limit: usize,
    pivots_left: &mut usize,
) -> Result<SimplexEnd> {
    loop {
        // Reduced costs are recomputed from scratch each pass; the systems
        // here are small enough that stability is worth more than speed.
        let mut entering = None;
        for j in 0..enter_limit {
            if basis.contains(&j) {
                continue;
            }
            let mut reduced = cost[j];
            for (r, row) in rows.iter().enumerate() {
                reduced -= cost[basis[r]] * row[j];
            }
            if reduced < -LP_TOL {
                entering = Some(j);
                break;
            }
        }
        let Some(j) = entering else {
            return Ok(SimplexEnd::Optimal);
        };

        let mut leaving: Option<(usize, f64)> = None;
        for (r, row) in rows.iter().enumerate() {
            if row[j] > LP_TOL {
                let ratio = rhs[r] / row[j];
                let better = match leaving {
                    None => true,
                    Some((best_r, best_ratio)) => {
                        ratio < best_ratio - LP_TOL
                            || (ratio <= best_ratio + LP_TOL && basis[r] < basis[best_r])
                    }
                };
                if better {
                    leaving = Some((r, ratio));
                }
            }
        }
        let Some((r, _)) = leaving else {
            return Ok(SimplexEnd::Unbounded);
        };

        if *pivots_left == 0 {
            return Err(Error::LpFailure {
                detail: format!("simplex stalled after {ITERATION_CAP} pivots"),
            });
        }
        *pivots_left -= 1;
        pivot(rows, rhs, r, j);
        basis[r] = j;
    }
}

/// Gauss-Jordan pivot on entry (r, j), normalizing the pivot row and
/// eliminating column j from every other row.
fn pivot(rows: &mut [Vec<f64>], rhs: &mut [f64], r: usize, j: usize) {
    let scale = rows[r][j];
    for v in rows[r].iter_mut() {
        *v /= scale;
    }
    rhs[r] /= scale;
    rows[r][j] = 1.0;
    for i in 0..rows.len() {
        if i == r {
            continue;
        }
        let factor = rows[i][j];
        if factor == 0.0 {
            continue;
        }
        let (pivot_row, other_row) = if i < r {
            let (a, b) = rows.split_at_mut(r);
            (&b[0], &mut a[i])
        } else {
            let (a, b) = rows.split_at_mut(i);
            (&a[r], &mut b[0])
        };
        for (o, p) in other_row.iter_mut().zip(pivot_row.iter()) {
            *o -= factor * p;
        }
        other_row[j] = 0.0;
        rhs[i] -= factor * rhs[r];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn empty_rows(n: usize) -> (DMatrix<f64>, DVector<f64>) {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    }

    #[test]
    fn bounded_minimum_on_a_simplex_facet() {
        let c = DVector::from_row_slice(&[-1.0, -1.0]);
        let a_ub = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b_ub = DVector::from_row_slice(&[1.0]);
        let (a_eq, b_eq) = empty_rows(2);
        let LpOutcome::Optimal { x, objective } =
            solve_lp(&c, &a_eq, &b_eq, &a_ub, &b_ub).unwrap()
        else {
            panic!("expected an optimum");
        };
        assert_abs_diff_eq!(objective, -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[0] + x[1], 1.0, epsilon = 1e-9);
        assert!(x.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn equality_row_forces_the_cheap_vertex() {
        let c = DVector::from_row_slice(&[1.0, 2.0]);
        let a_eq = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b_eq = DVector::from_row_slice(&[1.0]);
        let (a_ub, b_ub) = empty_rows(2);
        let LpOutcome::Optimal { x, objective } =
            solve_lp(&c, &a_eq, &b_eq, &a_ub, &b_ub).unwrap()
        else {
            panic!("expected an optimum");
        };
        assert_abs_diff_eq!(objective, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn negative_right_hand_side_is_infeasible_over_the_cone() {
        // x1 + x2 = -1 has no nonnegative solution.
        let c = DVector::from_row_slice(&[1.0, 1.0]);
        let a_eq = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b_eq = DVector::from_row_slice(&[-1.0]);
        let (a_ub, b_ub) = empty_rows(2);
        assert!(matches!(
            solve_lp(&c, &a_eq, &b_eq, &a_ub, &b_ub).unwrap(),
            LpOutcome::Infeasible
        ));
    }

    #[test]
    fn contradictory_inequalities_are_infeasible() {
        // -x <= -2 (x >= 2) together with x <= 1.
        let c = DVector::from_row_slice(&[0.0]);
        let (a_eq, b_eq) = empty_rows(1);
        let a_ub = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let b_ub = DVector::from_row_slice(&[-2.0, 1.0]);
        assert!(matches!(
            solve_lp(&c, &a_eq, &b_eq, &a_ub, &b_ub).unwrap(),
            LpOutcome::Infeasible
        ));
    }

    #[test]
    fn descent_without_constraints_is_unbounded() {
        let c = DVector::from_row_slice(&[-1.0, 0.0]);
        let (a_eq, b_eq) = empty_rows(2);
        let (a_ub, b_ub) = empty_rows(2);
        assert!(matches!(
            solve_lp(&c, &a_eq, &b_eq, &a_ub, &b_ub).unwrap(),
            LpOutcome::Unbounded
        ));
    }

    #[test]
    fn rising_cost_without_constraints_stays_at_the_origin() {
        let c = DVector::from_row_slice(&[1.0, 2.0]);
        let (a_eq, b_eq) = empty_rows(2);
        let (a_ub, b_ub) = empty_rows(2);
        let LpOutcome::Optimal { x, objective } =
            solve_lp(&c, &a_eq, &b_eq, &a_ub, &b_ub).unwrap()
        else {
            panic!("expected an optimum");
        };
        assert_abs_diff_eq!(objective, 0.0);
        assert_abs_diff_eq!(x[0], 0.0);
        assert_abs_diff_eq!(x[1], 0.0);
    }

    #[test]
    fn beale_cycling_example_terminates_at_its_optimum() {
        // Classic degenerate instance that cycles under naive pivoting.
        let c = DVector::from_row_slice(&[-0.75, 150.0, -0.02, 6.0]);
        let (a_eq, b_eq) = empty_rows(4);
        let a_ub = DMatrix::from_row_slice(
            3,
            4,
            &[
                0.25, -60.0, -0.04, 9.0, //
                0.5, -90.0, -0.02, 3.0, //
                0.0, 0.0, 1.0, 0.0,
            ],
        );
        let b_ub = DVector::from_row_slice(&[0.0, 0.0, 1.0]);
        let LpOutcome::Optimal { x, objective } =
            solve_lp(&c, &a_eq, &b_eq, &a_ub, &b_ub).unwrap()
        else {
            panic!("expected an optimum");
        };
        assert_abs_diff_eq!(objective, -0.05, epsilon = 1e-9);
        assert_abs_diff_eq!(x[0], 0.04, epsilon = 1e-9);
        assert_abs_diff_eq!(x[2], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn redundant_equality_rows_are_dropped_in_phase_one() {
        let c = DVector::from_row_slice(&[1.0, 1.0]);
        let a_eq = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let b_eq = DVector::from_row_slice(&[1.0, 2.0]);
        let (a_ub, b_ub) = empty_rows(2);
        let LpOutcome::Optimal { x, objective } =
            solve_lp(&c, &a_eq, &b_eq, &a_ub, &b_ub).unwrap()
        else {
            panic!("expected an optimum");
        };
        assert_abs_diff_eq!(objective, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(x[0] + x[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let c = DVector::from_row_slice(&[1.0, 1.0]);
        let a_eq = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let b_eq = DVector::from_row_slice(&[1.0]);
        let (a_ub, b_ub) = empty_rows(2);
        assert!(matches!(
            solve_lp(&c, &a_eq, &b_eq, &a_ub, &b_ub),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn non_finite_data_is_reported_as_a_failure() {
        let c = DVector::from_row_slice(&[f64::NAN]);
        let (a_eq, b_eq) = empty_rows(1);
        let (a_ub, b_ub) = empty_rows(1);
        assert!(matches!(
            solve_lp(&c, &a_eq, &b_eq, &a_ub, &b_ub),
            Err(Error::LpFailure { .. })
        ));
    }
}
