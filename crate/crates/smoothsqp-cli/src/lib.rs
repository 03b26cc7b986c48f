//! Command-line harness for the smoothing SQP solver: a registry of
//! built-in problems with tuned parameters, JSON run configuration,
//! deterministic trace and report output, and post-solve diagnostics.

pub mod config;
pub mod registry;
pub mod report;
pub mod run;

pub use config::{
    load_config_file, parse_point, resolve, CheckFlags, CliOverrides, OutputPaths,
    QuadratureOverrides, ResolvedRun, RunConfigFile, SolverOverrides, CONFIG_SCHEMA_VERSION,
};
pub use registry::{lookup, registry, Reference, RegistryEntry};
pub use report::{
    kind_string, status_exit_code, status_string, ClusterReport, CqReport, FdCheckReport,
    RunReport, VerdictReport, REPORT_SCHEMA_VERSION,
};
pub use run::{audit, execute, plot_tsv, trace_csv, AuditCheck, AuditOutcome, RunOutcome};

/// Errors the harness reports to the user. All of them are configuration or
/// environment problems; solver-side terminal states are carried in the run
/// report instead.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// The requested problem is not in the registry.
    #[error("unknown problem {name:?}; available: {available}")]
    UnknownProblem { name: String, available: String },
    /// A configuration, input, or output problem.
    #[error("{detail}")]
    Config { detail: String },
}

/// Seed for randomized self-checks. The `SMOOTHSQP_SEED` environment
/// variable overrides the built-in default, so randomized audits can be
/// varied without rebuilding.
pub fn randomized_seed() -> u64 {
    std::env::var("SMOOTHSQP_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0x5EED_CAFE)
}
