//! Shared fixtures for the criterion benchmarks: a dense penalized
//! subproblem and ready-to-run registry problems.

use nalgebra::{DMatrix, DVector};
use smoothsqp::{ProblemInstance, QpData, QpRow, QuadratureConfig, SolverConfig};
use smoothsqp_cli::lookup;

/// A dense, strictly convex subproblem with three variables, three
/// inequality rows, and one equality pair. The numbers are arbitrary but
/// fixed so every benchmark run solves the same system.
pub fn dense_subproblem() -> QpData {
    let n = 3;
    let w = DMatrix::from_row_slice(
        n,
        n,
        &[2.0, 0.3, -0.1, 0.3, 1.5, 0.2, -0.1, 0.2, 1.8],
    );
    let row = |value: f64, grad: [f64; 3]| QpRow {
        value,
        grad: DVector::from_row_slice(&grad),
    };
    QpData {
        n,
        w,
        grad_f: DVector::from_row_slice(&[-1.0, 0.5, 0.25]),
        ineq_rows: vec![
            row(0.2, [1.0, 1.0, 0.0]),
            row(-0.4, [-0.5, 0.3, 0.9]),
            row(0.1, [0.2, -0.8, 0.4]),
        ],
        eq_rows: vec![row(0.05, [0.6, -0.2, 0.7])],
        r: 10.0,
    }
}

/// A registry problem assembled into its single-level form, together with
/// its start point and tuned solver parameters.
pub fn registry_fixture(name: &str) -> (ProblemInstance, DVector<f64>, SolverConfig) {
    let entry = lookup(name).expect("benchmark uses a built-in problem");
    let prob = entry.build(&QuadratureConfig::default());
    let x0 = DVector::from_vec(entry.x0.clone());
    (prob, x0, entry.solver)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_subproblem_is_solvable() {
        let qp = dense_subproblem();
        let sol = smoothsqp::solve_penalized_qp(&qp, smoothsqp::KKT_TOL).unwrap();
        assert!(sol.d.iter().all(|v| v.is_finite()));
        assert!(sol.xi >= 0.0);
    }

    #[test]
    fn registry_fixtures_build() {
        for name in ["corner", "ex3_14", "mirrlees"] {
            let (prob, x0, _) = registry_fixture(name);
            assert_eq!(prob.n, x0.len(), "{name}");
        }
    }
}
