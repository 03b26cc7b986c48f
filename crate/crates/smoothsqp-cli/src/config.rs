//! Run configuration: JSON file format, command-line overrides, and the
//! merge of both onto a registry entry's tuned defaults.
//!
//! Precedence, lowest to highest: registry defaults, config file,
//! command-line flags. Every field is optional in the file; an absent field
//! keeps the layer below. The file must carry the schema marker `"spec": 1`
//! so stale configs fail loudly instead of being half-read.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use smoothsqp::{QuadratureConfig, SolverConfig};

use crate::registry::{self, RegistryEntry};
use crate::HarnessError;

/// Schema version this build reads and writes.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// On-disk run configuration. All sections are optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    /// Schema version marker; must equal [`CONFIG_SCHEMA_VERSION`].
    pub spec: u32,
    /// Problem name; when present it must agree with the name given on the
    /// command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    /// Starting point override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Solver parameter overrides.
    #[serde(default)]
    pub solver: SolverOverrides,
    /// Quadrature parameter overrides (two-level problems only).
    #[serde(default)]
    pub quadrature: QuadratureOverrides,
    /// Output file paths.
    #[serde(default)]
    pub outputs: OutputPaths,
    /// Extra diagnostics to run after the solve.
    #[serde(default)]
    pub checks: CheckFlags,
}

/// Per-field solver overrides; `None` keeps the registry default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_norm_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_norm_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qp_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_backtracks: Option<usize>,
}

impl SolverOverrides {
    /// Applies the present fields on top of `base`.
    pub fn apply(&self, base: &SolverConfig) -> SolverConfig {
        SolverConfig {
            beta: self.beta.unwrap_or(base.beta),
            sigma1: self.sigma1.unwrap_or(base.sigma1),
            sigma2: self.sigma2.unwrap_or(base.sigma2),
            sigma: self.sigma.unwrap_or(base.sigma),
            sigma_prime: self.sigma_prime.unwrap_or(base.sigma_prime),
            eta_hat: self.eta_hat.unwrap_or(base.eta_hat),
            rho0: self.rho0.unwrap_or(base.rho0),
            r0: self.r0.unwrap_or(base.r0),
            eps: self.eps.unwrap_or(base.eps),
            eps_prime: self.eps_prime.unwrap_or(base.eps_prime),
            eps1: self.eps1.unwrap_or(base.eps1),
            w_norm_min: self.w_norm_min.unwrap_or(base.w_norm_min),
            w_norm_max: self.w_norm_max.unwrap_or(base.w_norm_max),
            max_iter: self.max_iter.unwrap_or(base.max_iter),
            qp_tol: self.qp_tol.unwrap_or(base.qp_tol),
            max_backtracks: self.max_backtracks.unwrap_or(base.max_backtracks),
        }
    }
}

/// Per-field quadrature overrides; `None` keeps the default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_nodes_per_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_tol: Option<f64>,
}

impl QuadratureOverrides {
    /// Applies the present fields on top of `base`.
    pub fn apply(&self, base: &QuadratureConfig) -> QuadratureConfig {
        QuadratureConfig {
            base_nodes_per_dim: self.base_nodes_per_dim.unwrap_or(base.base_nodes_per_dim),
            refinement: self.refinement.unwrap_or(base.refinement),
            quad_tol: self.quad_tol.unwrap_or(base.quad_tol),
        }
    }
}

/// Where to write the iteration trace and the run report.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

/// Post-solve diagnostics toggles.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckFlags {
    /// Compare analytic gradients against central differences at the start
    /// point.
    #[serde(default)]
    pub fd_check: bool,
    /// Run the constraint-qualification diagnostics on the recorded
    /// trajectory.
    #[serde(default)]
    pub cq_check: bool,
    /// For two-level problems, check that the inner minimizer at the final
    /// point stays away from the inner box's faces.
    #[serde(default)]
    pub interiority_check: bool,
}

/// Command-line pieces that may override the file and the defaults.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub x0: Option<Vec<f64>>,
    pub out_trace: Option<PathBuf>,
    pub out_report: Option<PathBuf>,
    pub check_cq: bool,
    pub fd_check: bool,
    pub emit_plot_data: bool,
}

/// A fully merged, validated run: everything `execute` needs.
#[derive(Debug)]
pub struct ResolvedRun {
    pub entry: RegistryEntry,
    pub x0: DVector<f64>,
    pub solver: SolverConfig,
    pub quadrature: QuadratureConfig,
    pub trace_path: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
    pub plot_path: Option<PathBuf>,
    pub checks: CheckFlags,
}

/// Reads and parses a config file, enforcing the schema marker.
pub fn load_config_file(path: &Path) -> Result<RunConfigFile, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
        detail: format!("cannot read {}: {e}", path.display()),
    })?;
    let cfg: RunConfigFile =
        serde_json::from_str(&text).map_err(|e| HarnessError::Config {
            detail: format!("cannot parse {}: {e}", path.display()),
        })?;
    if cfg.spec != CONFIG_SCHEMA_VERSION {
        return Err(HarnessError::Config {
            detail: format!(
                "{}: unsupported schema version {} (this build reads {})",
                path.display(),
                cfg.spec,
                CONFIG_SCHEMA_VERSION
            ),
        });
    }
    Ok(cfg)
}

/// Merges registry defaults, an optional config file, and command-line
/// overrides into a validated [`ResolvedRun`].
pub fn resolve(
    problem: &str,
    file: Option<&RunConfigFile>,
    cli: &CliOverrides,
) -> Result<ResolvedRun, HarnessError> {
    let entry = registry::lookup(problem)?;

    if let Some(file_problem) = file.and_then(|f| f.problem.as_deref()) {
        if file_problem != problem {
            return Err(HarnessError::Config {
                detail: format!(
                    "config file names problem {file_problem:?} but the command line asked \
                     for {problem:?}"
                ),
            });
        }
    }

    let x0_vec = cli
        .x0
        .clone()
        .or_else(|| file.and_then(|f| f.x0.clone()))
        .unwrap_or_else(|| entry.x0.clone());
    if x0_vec.len() != entry.dimension {
        return Err(HarnessError::Config {
            detail: format!(
                "starting point has {} coordinates but {} expects {}",
                x0_vec.len(),
                entry.name,
                entry.dimension
            ),
        });
    }
    if let Some(bad) = x0_vec.iter().find(|v| !v.is_finite()) {
        return Err(HarnessError::Config {
            detail: format!("starting point contains a non-finite coordinate {bad}"),
        });
    }

    let solver = match file {
        Some(f) => f.solver.apply(&entry.solver),
        None => entry.solver.clone(),
    };
    solver.validate().map_err(|e| HarnessError::Config {
        detail: format!("solver parameters: {e}"),
    })?;

    let quadrature = match file {
        Some(f) => f.quadrature.apply(&QuadratureConfig::default()),
        None => QuadratureConfig::default(),
    };

    let trace_path = cli
        .out_trace
        .clone()
        .or_else(|| file.and_then(|f| f.outputs.trace.clone()));
    let report_path = cli
        .out_report
        .clone()
        .or_else(|| file.and_then(|f| f.outputs.report.clone()));
    let plot_path = if cli.emit_plot_data {
        Some(plot_path_for(problem, trace_path.as_deref()))
    } else {
        None
    };

    let file_checks = file.map(|f| f.checks).unwrap_or_default();
    let checks = CheckFlags {
        fd_check: cli.fd_check || file_checks.fd_check,
        cq_check: cli.check_cq || file_checks.cq_check,
        interiority_check: file_checks.interiority_check,
    };

    Ok(ResolvedRun {
        x0: DVector::from_vec(x0_vec),
        entry,
        solver,
        quadrature,
        trace_path,
        report_path,
        plot_path,
        checks,
    })
}

/// Plot data lands next to the trace when one is written, otherwise in the
/// working directory under the problem's name.
fn plot_path_for(problem: &str, trace: Option<&Path>) -> PathBuf {
    match trace {
        Some(t) => t.with_extension("plot.tsv"),
        None => PathBuf::from(format!("{problem}.plot.tsv")),
    }
}

/// Parses a comma-separated coordinate list such as `0.5,0.3`.
pub fn parse_point(text: &str) -> Result<Vec<f64>, HarnessError> {
    text.split(',')
        .map(|piece| {
            piece.trim().parse::<f64>().map_err(|_| HarnessError::Config {
                detail: format!("cannot parse coordinate {:?} in {text:?}", piece.trim()),
            })
        })
        .collect()
}
