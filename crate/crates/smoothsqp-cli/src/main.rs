//! `smoothsqp` command-line interface.
//!
//! Exit codes: 0 converged, 1 audit failure, 2 iteration cap, 3 line-search
//! failure, 4 subproblem failure, 5 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smoothsqp_cli::{
    audit, execute, load_config_file, parse_point, randomized_seed, registry, resolve,
    status_exit_code, CliOverrides, HarnessError, RunOutcome,
};

#[derive(Parser)]
#[command(
    name = "smoothsqp",
    version,
    about = "Smoothing SQP solver for degenerate constrained and two-level programs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a built-in problem and write its trace and report.
    Solve {
        /// Registry name of the problem (see `list`).
        problem: String,
        /// JSON run-configuration file.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        /// Starting point as comma-separated coordinates, e.g. 0.5,0.3.
        #[arg(long, value_name = "COORDS")]
        x0: Option<String>,
        /// Write the per-iteration trace CSV here.
        #[arg(long, value_name = "PATH")]
        out_trace: Option<PathBuf>,
        /// Write the JSON run report here.
        #[arg(long, value_name = "PATH")]
        out_report: Option<PathBuf>,
        /// Run constraint-qualification diagnostics on the trajectory.
        #[arg(long)]
        check_cq: bool,
        /// Compare analytic gradients with central differences at the start
        /// point.
        #[arg(long)]
        fd_check: bool,
        /// Also write per-iteration plot data (TSV) next to the trace.
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// List the built-in problems.
    List,
    /// Run a problem's self-checks without solving it.
    Audit {
        /// Registry name of the problem (see `list`).
        problem: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve {
            problem,
            config,
            x0,
            out_trace,
            out_report,
            check_cq,
            fd_check,
            emit_plot_data,
        } => cmd_solve(
            &problem,
            config,
            x0,
            CliOverrides {
                x0: None,
                out_trace,
                out_report,
                check_cq,
                fd_check,
                emit_plot_data,
            },
        ),
        Command::List => cmd_list(),
        Command::Audit { problem } => cmd_audit(&problem),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(5)
        }
    }
}

fn cmd_solve(
    problem: &str,
    config: Option<PathBuf>,
    x0_text: Option<String>,
    mut cli: CliOverrides,
) -> Result<u8, HarnessError> {
    if let Some(text) = x0_text {
        cli.x0 = Some(parse_point(&text)?);
    }
    let file = config.as_deref().map(load_config_file).transpose()?;
    let resolved = resolve(problem, file.as_ref(), &cli)?;
    let RunOutcome { report, .. } = execute(&resolved)?;

    println!("problem: {}", report.problem);
    println!(
        "status: {} ({} iterations, {:.3} s)",
        report.status, report.iterations, report.wall_time_seconds
    );
    let point = report
        .final_point
        .iter()
        .map(|v| format!("{v:.10}"))
        .collect::<Vec<_>>()
        .join(", ");
    println!("final point: [{point}]");
    println!("final merit: {:.10e}", report.final_merit);
    println!("stationarity residual: {:.3e}", report.stationarity_residual);
    if let Some(dist) = report.distance_to_reference {
        println!("distance to known solution: {dist:.3e}");
    }
    if let Some(failure) = &report.failure {
        println!("failure: {failure}");
    }
    if let Some(checks) = &report.fd_checks {
        for c in checks {
            println!(
                "gradient check {}: {} (max error {:.3e}, bound {:.3e})",
                c.family,
                if c.pass { "pass" } else { "FAIL" },
                c.max_abs_error,
                c.bound
            );
        }
    }
    if let Some(cq) = &report.cq {
        for (i, cluster) in cq.clusters.iter().enumerate() {
            for v in &cluster.verdicts {
                println!(
                    "cq cluster {i} ({} members) {}: {}",
                    cluster.members,
                    v.kind,
                    if v.holds { "holds" } else { "violated" }
                );
            }
            for s in &cluster.skipped {
                println!("cq cluster {i}: skipped {s}");
            }
        }
        if let Some(rank) = cq.bilevel_rank {
            println!(
                "cq final gradient pair: {}",
                if rank { "independent" } else { "dependent" }
            );
        }
    }
    if let Some(interior) = report.interiority {
        println!(
            "inner minimizer interior at the final point: {}",
            if interior { "yes" } else { "no" }
        );
    }
    if let Some(path) = &resolved.trace_path {
        println!("trace written to {}", path.display());
    }
    if let Some(path) = &resolved.plot_path {
        println!("plot data written to {}", path.display());
    }
    if let Some(path) = &resolved.report_path {
        println!("report written to {}", path.display());
    }

    Ok(report_status(&report.status))
}

fn report_status(status: &str) -> u8 {
    // The report stores the status as text; map it back through the same
    // table the solver uses so the exit code and the report always agree.
    let code = match status {
        "converged" => status_exit_code(smoothsqp::SolveStatus::Converged),
        "max_iter" => status_exit_code(smoothsqp::SolveStatus::MaxIter),
        "line_search_failure" => status_exit_code(smoothsqp::SolveStatus::LineSearchFailure),
        _ => status_exit_code(smoothsqp::SolveStatus::QpFailure),
    };
    code as u8
}

fn cmd_list() -> Result<u8, HarnessError> {
    for entry in registry() {
        println!("{:<10} {}", entry.name, entry.summary);
    }
    Ok(0)
}

fn cmd_audit(problem: &str) -> Result<u8, HarnessError> {
    let outcome = audit(problem, randomized_seed())?;
    for check in &outcome.checks {
        println!(
            "audit {problem}: {} ... {} ({})",
            check.label,
            if check.pass { "pass" } else { "FAIL" },
            check.detail
        );
    }
    for note in &outcome.notes {
        println!("audit {problem}: note: {note}");
    }
    if outcome.passed() {
        println!("audit {problem}: all checks passed");
        Ok(0)
    } else {
        println!("audit {problem}: FAILED");
        Ok(1)
    }
}
