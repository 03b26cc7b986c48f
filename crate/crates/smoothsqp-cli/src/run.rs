//! Executes a resolved run: builds the program, drives the solver, writes
//! the trace and report files, and runs any requested diagnostics.
//!
//! Output files are deterministic: floating-point columns are printed with
//! 17 significant digits, so re-running the same configuration reproduces
//! them byte for byte.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use smoothsqp::{
    check_bilevel_wnnamcq, check_ewgmfcq, check_ewnnamcq, check_interiority, check_wnnamcq,
    collect_clusters, fd_gradient_check, run_solver, GradientCluster, IterationRecord,
    ProblemInstance, SolveResult,
};

use crate::config::ResolvedRun;
use crate::report::{
    status_string, ClusterReport, CqReport, FdCheckReport, RunReport, VerdictReport,
    REPORT_SCHEMA_VERSION,
};
use crate::HarnessError;

/// Step size for the central-difference gradient checks.
const FD_STEP: f64 = 1e-6;
/// Iterates closer than this are grouped into one cluster for the
/// constraint-qualification diagnostics.
const CLUSTER_RADIUS: f64 = 1e-2;
/// Fraction of the trajectory tail the diagnostics look at.
const TAIL_FRACTION: f64 = 0.5;
/// Required distance from the inner box's faces for the interiority check.
const INTERIORITY_MARGIN: f64 = 1e-3;

/// Everything a finished run produces: the structured report plus the raw
/// solver output for callers that want the trace.
pub struct RunOutcome {
    pub report: RunReport,
    pub result: SolveResult,
}

/// Runs a resolved configuration end to end.
///
/// Solver-side terminal states (iteration cap, line-search or subproblem
/// failure) are reported, not raised; only configuration and I/O problems
/// surface as errors.
pub fn execute(run: &ResolvedRun) -> Result<RunOutcome, HarnessError> {
    let prob = run.entry.build(&run.quadrature);

    let start = Instant::now();
    let result =
        run_solver(&prob, &run.x0, &run.solver).map_err(|e| HarnessError::Config {
            detail: format!("solver rejected the run: {e}"),
        })?;
    let wall_time_seconds = start.elapsed().as_secs_f64();

    let distance_to_reference = run.entry.reference.as_ref().map(|reference| {
        let want = DVector::from_vec(reference.point.clone());
        (&result.final_x - want).norm()
    });

    let fd_checks = if run.checks.fd_check {
        Some(fd_check_section(&prob, &run.x0, run.solver.rho0)?)
    } else {
        None
    };

    let cq = if run.checks.cq_check {
        Some(cq_section(run, &result))
    } else {
        None
    };

    let interiority = if run.checks.interiority_check {
        run.entry.bilevel().map(|bp| {
            let x_outer = result.final_x.rows(0, bp.n).into_owned();
            check_interiority(&bp, &x_outer, INTERIORITY_MARGIN)
        })
    } else {
        None
    };

    let report = RunReport {
        spec: REPORT_SCHEMA_VERSION,
        problem: run.entry.name.to_string(),
        status: status_string(result.status).to_string(),
        final_point: result.final_x.iter().copied().collect(),
        final_merit: result.final_merit,
        iterations: result.iterations,
        stationarity_residual: result.stationarity_residual,
        distance_to_reference,
        wall_time_seconds,
        failure: result.failure.as_ref().map(|e| e.to_string()),
        fd_checks,
        cq,
        interiority,
    };

    if let Some(path) = &run.trace_path {
        write_file(path, &trace_csv(&result.trace, run.x0.len()))?;
    }
    if let Some(path) = &run.plot_path {
        write_file(path, &plot_tsv(&result.trace))?;
    }
    if let Some(path) = &run.report_path {
        let mut text = serde_json::to_string_pretty(&report).map_err(|e| HarnessError::Config {
            detail: format!("cannot serialize report: {e}"),
        })?;
        text.push('\n');
        write_file(path, &text)?;
    }

    Ok(RunOutcome { report, result })
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::Config {
        detail: format!("cannot write {}: {e}", path.display()),
    })
}

/// Renders the iteration trace as CSV: one row per iteration, floats with
/// 17 significant digits.
pub fn trace_csv(trace: &[IterationRecord], dim: usize) -> String {
    let mut out = String::from("k");
    for i in 0..dim {
        let _ = write!(out, ",x{i}");
    }
    out.push_str(",rho,r,xi,alpha,d_norm,merit,stationarity_residual,rho_updated\n");
    for rec in trace {
        let _ = write!(out, "{}", rec.k);
        for v in rec.x.iter() {
            let _ = write!(out, ",{v:.16e}");
        }
        let _ = writeln!(
            out,
            ",{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            rec.rho,
            rec.r,
            rec.xi,
            rec.alpha,
            rec.d_norm,
            rec.merit_before,
            rec.stationarity,
            rec.rho_updated
        );
    }
    out
}

/// Renders the per-iteration plot data as TSV: k, merit, step norm, and the
/// smoothing parameter.
pub fn plot_tsv(trace: &[IterationRecord]) -> String {
    let mut out = String::from("k\tmerit\td_norm\trho\n");
    for rec in trace {
        let _ = writeln!(
            out,
            "{}\t{:.16e}\t{:.16e}\t{:.16e}",
            rec.k, rec.merit_before, rec.d_norm, rec.rho
        );
    }
    out
}

/// Compares every family's analytic gradient against central differences at
/// the starting point, under the initial smoothing parameter.
fn fd_check_section(
    prob: &ProblemInstance,
    x: &DVector<f64>,
    rho: f64,
) -> Result<Vec<FdCheckReport>, HarnessError> {
    let mut out = Vec::new();
    let families = std::iter::once(("objective".to_string(), &prob.objective))
        .chain(
            prob.inequalities
                .iter()
                .enumerate()
                .map(|(i, f)| (format!("inequality[{i}]"), f)),
        )
        .chain(
            prob.equalities
                .iter()
                .enumerate()
                .map(|(j, f)| (format!("equality[{j}]"), f)),
        );
    for (family, func) in families {
        let fd = fd_gradient_check(func, x, rho, FD_STEP).map_err(|e| HarnessError::Config {
            detail: format!("gradient check failed on {family}: {e}"),
        })?;
        let bound = 1e-6_f64.max(1e-4 * fd.analytic.norm());
        out.push(FdCheckReport {
            family,
            pass: fd.max_abs_error <= bound,
            max_abs_error: fd.max_abs_error,
            bound,
        });
    }
    Ok(out)
}

/// Runs the constraint-qualification diagnostics on the recorded trajectory.
fn cq_section(run: &ResolvedRun, result: &SolveResult) -> CqReport {
    let clusters = collect_clusters(&result.trace, CLUSTER_RADIUS, TAIL_FRACTION);
    let cluster_reports = clusters.iter().map(cluster_report).collect();

    let bilevel_rank = if run.entry.is_bilevel() {
        result.trace.last().map(|rec| {
            check_bilevel_wnnamcq(&rec.grad_ineq[0], &rec.grad_eq[0])
        })
    } else {
        None
    };

    CqReport {
        clusters: cluster_reports,
        bilevel_rank,
    }
}

type CqCheck = fn(&GradientCluster) -> smoothsqp::Result<smoothsqp::CqVerdict>;

fn cluster_report(cluster: &GradientCluster) -> ClusterReport {
    let mut verdicts = Vec::new();
    let mut skipped = Vec::new();
    let checks: [(&str, CqCheck); 3] = [
        ("wnnamcq", check_wnnamcq),
        ("ewnnamcq", check_ewnnamcq),
        ("ewgmfcq", check_ewgmfcq),
    ];
    for (label, check) in checks {
        match check(cluster) {
            Ok(verdict) => verdicts.push(VerdictReport::from(&verdict)),
            Err(e) => skipped.push(format!("{label}: {e}")),
        }
    }
    ClusterReport {
        anchor: cluster.anchor.iter().copied().collect(),
        members: cluster.members.len(),
        verdicts,
        skipped,
    }
}

/// One audit check's outcome.
#[derive(Debug, Clone)]
pub struct AuditCheck {
    /// What was checked.
    pub label: String,
    /// Whether it passed.
    pub pass: bool,
    /// Measured quantity or failure description.
    pub detail: String,
}

/// Result of `audit <problem>`: pass/fail checks plus informational notes.
#[derive(Debug, Clone, Default)]
pub struct AuditOutcome {
    pub checks: Vec<AuditCheck>,
    pub notes: Vec<String>,
}

impl AuditOutcome {
    /// True when every check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Number of random probe points the audit adds around the start point.
const AUDIT_PROBES: usize = 2;
/// Half-width of the uniform box the probes are drawn from.
const AUDIT_PROBE_SPREAD: f64 = 0.05;

/// Runs a problem's self-checks without solving it: construction, solver
/// parameter validation, and analytic-versus-finite-difference gradient
/// comparisons at the start point and at seeded random probes nearby.
///
/// Interiority of the inner minimizer is reported as a note, not a check:
/// at an arbitrary start point the inner minimum may legitimately sit on
/// the box boundary.
pub fn audit(name: &str, seed: u64) -> Result<AuditOutcome, HarnessError> {
    use rand::{Rng, SeedableRng};

    let entry = crate::registry::lookup(name)?;
    let mut outcome = AuditOutcome::default();

    let prob = entry.build(&smoothsqp::QuadratureConfig::default());
    outcome.checks.push(AuditCheck {
        label: "build".into(),
        pass: prob.n == entry.dimension && entry.x0.len() == entry.dimension,
        detail: format!(
            "{} variables, {} inequalities, {} equalities",
            prob.n,
            prob.inequalities.len(),
            prob.equalities.len()
        ),
    });

    let params_ok = entry.solver.validate();
    outcome.checks.push(AuditCheck {
        label: "solver parameters".into(),
        pass: params_ok.is_ok(),
        detail: match &params_ok {
            Ok(()) => "valid".into(),
            Err(e) => e.to_string(),
        },
    });

    let x0 = DVector::from_vec(entry.x0.clone());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![("x0".to_string(), x0.clone())];
    for p in 0..AUDIT_PROBES {
        let probe = DVector::from_fn(x0.len(), |i, _| {
            x0[i] + rng.random_range(-AUDIT_PROBE_SPREAD..AUDIT_PROBE_SPREAD)
        });
        points.push((format!("probe {p}"), probe));
    }
    for (where_, point) in &points {
        match fd_check_section(&prob, point, entry.solver.rho0) {
            Ok(section) => {
                for check in section {
                    outcome.checks.push(AuditCheck {
                        label: format!("gradients[{where_}] {}", check.family),
                        pass: check.pass,
                        detail: format!(
                            "max error {:.3e} (bound {:.3e})",
                            check.max_abs_error, check.bound
                        ),
                    });
                }
            }
            Err(e) => outcome.checks.push(AuditCheck {
                label: format!("gradients[{where_}]"),
                pass: false,
                detail: e.to_string(),
            }),
        }
    }

    if let Some(bp) = entry.bilevel() {
        let x_outer = x0.rows(0, bp.n).into_owned();
        let interior = check_interiority(&bp, &x_outer, INTERIORITY_MARGIN);
        outcome.notes.push(format!(
            "inner minimizer at the start point is {} the box interior",
            if interior { "inside" } else { "not inside" }
        ));
    }
    if let Some(reference) = &entry.reference {
        outcome.notes.push(format!(
            "known solution: {:?}{}",
            reference.point,
            reference
                .objective
                .map(|v| format!(" with objective {v}"))
                .unwrap_or_default()
        ));
    }

    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{resolve, CliOverrides};

    fn run_problem(name: &str, cli: CliOverrides) -> RunOutcome {
        let resolved = resolve(name, None, &cli).unwrap();
        execute(&resolved).unwrap()
    }

    #[test]
    fn a_direct_run_reports_convergence_and_its_distance() {
        let out = run_problem("corner", CliOverrides::default());
        assert_eq!(out.report.status, "converged");
        assert!(out.report.iterations <= 30);
        assert_eq!(out.report.iterations, out.result.trace.len());
        let dist = out.report.distance_to_reference.unwrap();
        assert!(dist < 1e-4, "distance {dist}");
        assert!(out.report.wall_time_seconds > 0.0);
    }

    #[test]
    fn trace_rendering_matches_the_iteration_count_and_schema() {
        let out = run_problem("diagonal", CliOverrides::default());
        let csv = trace_csv(&out.result.trace, 2);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "k,x0,x1,rho,r,xi,alpha,d_norm,merit,stationarity_residual,rho_updated"
        );
        assert_eq!(lines.len(), 1 + out.report.iterations);
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 11, "{line}");
        }
        // Rendering the same trace twice is byte-identical.
        assert_eq!(csv, trace_csv(&out.result.trace, 2));
    }

    #[test]
    fn plot_data_carries_one_row_per_iteration() {
        let out = run_problem("diagonal", CliOverrides::default());
        let tsv = plot_tsv(&out.result.trace);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "k\tmerit\td_norm\trho");
        assert_eq!(lines.len(), 1 + out.report.iterations);
        for line in &lines[1..] {
            assert_eq!(line.split('\t').count(), 4, "{line}");
        }
    }

    #[test]
    fn gradient_checks_pass_on_the_smooth_entries() {
        let cli = CliOverrides {
            fd_check: true,
            ..CliOverrides::default()
        };
        let out = run_problem("corner", cli);
        let checks = out.report.fd_checks.unwrap();
        assert_eq!(checks.len(), 2);
        assert!(checks.iter().all(|c| c.pass), "{checks:?}");
    }

    #[test]
    fn cq_diagnostics_render_verdicts_on_a_converged_tail() {
        // Start close to the solution so the trailing iterates fall inside
        // one cluster; from a distant start the two recorded points are too
        // far apart and every check is honestly skipped.
        let cli = CliOverrides {
            x0: Some(vec![0.495, 0.505]),
            check_cq: true,
            ..CliOverrides::default()
        };
        let out = run_problem("diagonal", cli);
        let cq = out.report.cq.unwrap();
        assert!(cq.bilevel_rank.is_none());
        assert!(!cq.clusters.is_empty());
        let first = &cq.clusters[0];
        // The lone equality gradient (1, 1) is independent, so every check
        // that renders a verdict should find the qualification holds.
        for verdict in &first.verdicts {
            assert!(verdict.holds, "{verdict:?}");
        }
        assert!(!first.verdicts.is_empty(), "skipped: {:?}", first.skipped);
    }

    #[test]
    fn final_merit_is_reproducible_from_the_last_record() {
        let out = run_problem("corner", CliOverrides::default());
        let rec = out.result.trace.last().unwrap();
        let prob = crate::registry::lookup("corner")
            .unwrap()
            .build(&smoothsqp::QuadratureConfig::default());
        let params = smoothsqp::MeritParams::new(rec.rho, rec.r).unwrap();
        let merit =
            smoothsqp::merit_value(&prob, &out.result.final_x, &params).unwrap();
        assert!(
            (merit - out.report.final_merit).abs() <= 1e-12,
            "recomputed {merit} vs reported {}",
            out.report.final_merit
        );
    }
}
