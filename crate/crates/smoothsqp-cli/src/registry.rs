//! Built-in test problems with their recommended solver parameters.
//!
//! Each entry names a problem, carries a starting point and a tuned
//! [`SolverConfig`], and knows how to build the [`ProblemInstance`] the
//! solver consumes. Two-level entries keep the underlying
//! [`BilevelProblem`] around so interiority and smoothing diagnostics can
//! reach the inner data; direct entries are ordinary smooth programs with
//! closed-form solutions, useful as fast end-to-end checks.

use nalgebra::{DMatrix, DVector};
use smoothsqp::{
    build_combined_program_with, BilevelProblem, ProblemInstance, QuadratureConfig,
    SmoothedFunction, SolverConfig,
};

use crate::HarnessError;

/// Known solution attached to a registry entry.
#[derive(Debug, Clone)]
pub struct Reference {
    /// Solution point in the solver's variable order.
    pub point: Vec<f64>,
    /// Objective value at the solution, when the entry documents one.
    pub objective: Option<f64>,
}

#[derive(Debug)]
enum ProblemKind {
    /// A smooth constrained program built directly.
    Direct(fn() -> ProblemInstance),
    /// A two-level program reduced to a combined single-level program.
    Bilevel(fn() -> BilevelProblem),
}

/// One built-in problem: constructor, starting point, tuned parameters, and
/// (when known) the solution to compare against.
#[derive(Debug)]
pub struct RegistryEntry {
    /// Lookup key used on the command line.
    pub name: &'static str,
    /// One-line description shown by `list`.
    pub summary: &'static str,
    /// Number of solver variables (outer plus inner for two-level entries).
    pub dimension: usize,
    /// Recommended starting point.
    pub x0: Vec<f64>,
    /// Tuned solver parameters for this problem.
    pub solver: SolverConfig,
    /// Known solution, if any.
    pub reference: Option<Reference>,
    kind: ProblemKind,
}

impl RegistryEntry {
    /// Whether this entry is a reduced two-level program.
    pub fn is_bilevel(&self) -> bool {
        matches!(self.kind, ProblemKind::Bilevel(_))
    }

    /// The underlying two-level data, for entries that have it.
    pub fn bilevel(&self) -> Option<BilevelProblem> {
        match self.kind {
            ProblemKind::Bilevel(make) => Some(make()),
            ProblemKind::Direct(_) => None,
        }
    }

    /// Builds the program the solver runs on. Two-level entries are reduced
    /// with the given quadrature settings; direct entries ignore them.
    pub fn build(&self, qc: &QuadratureConfig) -> ProblemInstance {
        match self.kind {
            ProblemKind::Direct(make) => make(),
            ProblemKind::Bilevel(make) => build_combined_program_with(&make(), qc.clone()),
        }
    }
}

/// All built-in problems, in listing order.
pub fn registry() -> Vec<RegistryEntry> {
    vec![
        mirrlees_entry(),
        ex3_14_entry(),
        ex3_20_entry(),
        corner_entry(),
        diagonal_entry(),
    ]
}

/// Looks up a built-in problem by name.
pub fn lookup(name: &str) -> Result<RegistryEntry, HarnessError> {
    let entries = registry();
    let available = entries
        .iter()
        .map(|e| e.name)
        .collect::<Vec<_>>()
        .join(", ");
    entries
        .into_iter()
        .find(|e| e.name == name)
        .ok_or(HarnessError::UnknownProblem {
            name: name.to_string(),
            available,
        })
}

fn make_mirrlees() -> BilevelProblem {
    BilevelProblem::new(
        1,
        1,
        |x, y| (x[0] - 2.0).powi(2) + (y[0] - 1.0).powi(2),
        |x, y| DVector::from_vec(vec![2.0 * (x[0] - 2.0), 2.0 * (y[0] - 1.0)]),
        |x, y| {
            let a = (-(y[0] + 1.0).powi(2)).exp();
            let b = (-(y[0] - 1.0).powi(2)).exp();
            -x[0] * a - b
        },
        |_x, y| {
            let a = (-(y[0] + 1.0).powi(2)).exp();
            DVector::from_vec(vec![-a])
        },
        |x, y| {
            let a = (-(y[0] + 1.0).powi(2)).exp();
            let b = (-(y[0] - 1.0).powi(2)).exp();
            DVector::from_vec(vec![2.0 * x[0] * (y[0] + 1.0) * a + 2.0 * (y[0] - 1.0) * b])
        },
        |x, y| {
            // d/dx and d/dy of the inner-gradient component
            // 2 x (y+1) e^{-(y+1)^2} + 2 (y-1) e^{-(y-1)^2}.
            let a = (-(y[0] + 1.0).powi(2)).exp();
            let b = (-(y[0] - 1.0).powi(2)).exp();
            let d_dx = 2.0 * (y[0] + 1.0) * a;
            let d_dy = 2.0 * x[0] * a * (1.0 - 2.0 * (y[0] + 1.0).powi(2))
                + 2.0 * b * (1.0 - 2.0 * (y[0] - 1.0).powi(2));
            DMatrix::from_row_slice(1, 2, &[d_dx, d_dy])
        },
        DVector::from_vec(vec![-2.0]),
        DVector::from_vec(vec![2.0]),
    )
    .expect("static registry problem is well formed")
}

fn mirrlees_entry() -> RegistryEntry {
    RegistryEntry {
        name: "mirrlees",
        summary: "two-level Gaussian-well model: outer (x-2)^2 + (y-1)^2, \
                  inner -x e^{-(y+1)^2} - e^{-(y-1)^2} over y in [-2, 2]",
        dimension: 2,
        x0: vec![0.5, 0.3],
        solver: SolverConfig {
            beta: 0.8,
            sigma1: 1e-6,
            sigma2: 1e-6,
            sigma: 10.0,
            sigma_prime: 10.0,
            eta_hat: 5e5,
            rho0: 100.0,
            r0: 100.0,
            eps: 7e-5,
            eps_prime: 1e-8,
            eps1: 1e-6,
            max_iter: 30,
            ..SolverConfig::default()
        },
        reference: Some(Reference {
            point: vec![1.0, 0.95759],
            objective: None,
        }),
        kind: ProblemKind::Bilevel(make_mirrlees),
    }
}

fn make_ex3_14() -> BilevelProblem {
    BilevelProblem::new(
        1,
        1,
        |x, y| (x[0] - 0.25).powi(2) + y[0].powi(2),
        |x, y| DVector::from_vec(vec![2.0 * (x[0] - 0.25), 2.0 * y[0]]),
        |x, y| y[0].powi(3) / 3.0 - x[0] * y[0],
        |_x, y| DVector::from_vec(vec![-y[0]]),
        |x, y| DVector::from_vec(vec![y[0] * y[0] - x[0]]),
        |_x, y| DMatrix::from_row_slice(1, 2, &[-1.0, 2.0 * y[0]]),
        DVector::from_vec(vec![-1.0]),
        DVector::from_vec(vec![1.0]),
    )
    .expect("static registry problem is well formed")
}

fn ex3_14_entry() -> RegistryEntry {
    RegistryEntry {
        name: "ex3_14",
        summary: "two-level cubic: outer (x-1/4)^2 + y^2, inner y^3/3 - x y \
                  over y in [-1, 1]",
        dimension: 2,
        x0: vec![0.3, 0.3],
        solver: SolverConfig {
            beta: 0.9,
            sigma1: 1e-6,
            sigma2: 1e-6,
            sigma: 10.0,
            sigma_prime: 10.0,
            eta_hat: 5000.0,
            rho0: 100.0,
            r0: 100.0,
            eps: 5e-6,
            eps_prime: 1e-8,
            eps1: 5e-6,
            max_iter: 30,
            ..SolverConfig::default()
        },
        reference: Some(Reference {
            point: vec![0.25, 0.5],
            objective: Some(0.25),
        }),
        kind: ProblemKind::Bilevel(make_ex3_14),
    }
}

fn make_ex3_20() -> BilevelProblem {
    BilevelProblem::new(
        1,
        1,
        |x, y| (x[0] - 0.25).powi(2) + y[0].powi(2),
        |x, y| DVector::from_vec(vec![2.0 * (x[0] - 0.25), 2.0 * y[0]]),
        |x, y| y[0].powi(3) / 3.0 - x[0] * x[0] * y[0],
        |x, y| DVector::from_vec(vec![-2.0 * x[0] * y[0]]),
        |x, y| DVector::from_vec(vec![y[0] * y[0] - x[0] * x[0]]),
        |x, y| DMatrix::from_row_slice(1, 2, &[-2.0 * x[0], 2.0 * y[0]]),
        DVector::from_vec(vec![-1.0]),
        DVector::from_vec(vec![1.0]),
    )
    .expect("static registry problem is well formed")
}

fn ex3_20_entry() -> RegistryEntry {
    RegistryEntry {
        name: "ex3_20",
        summary: "two-level cubic with squared coupling: outer (x-1/4)^2 + y^2, \
                  inner y^3/3 - x^2 y over y in [-1, 1]",
        dimension: 2,
        x0: vec![0.3, 0.3],
        solver: SolverConfig {
            beta: 0.9,
            sigma1: 1e-6,
            sigma2: 1e-6,
            sigma: 10.0,
            sigma_prime: 10.0,
            eta_hat: 500.0,
            rho0: 100.0,
            r0: 100.0,
            eps: 1e-6,
            eps_prime: 1e-8,
            eps1: 1e-6,
            max_iter: 30,
            ..SolverConfig::default()
        },
        reference: Some(Reference {
            point: vec![0.5, 0.5],
            objective: Some(0.3125),
        }),
        kind: ProblemKind::Bilevel(make_ex3_20),
    }
}

fn make_corner() -> ProblemInstance {
    let objective = SmoothedFunction::smooth(
        2,
        |z: &DVector<f64>| (z[0] - 1.0).powi(2) + (z[1] - 2.0).powi(2),
        |z: &DVector<f64>| DVector::from_vec(vec![2.0 * (z[0] - 1.0), 2.0 * (z[1] - 2.0)]),
    );
    let halfspace = SmoothedFunction::smooth(
        2,
        |z: &DVector<f64>| z[0] + z[1] - 1.0,
        |_z: &DVector<f64>| DVector::from_vec(vec![1.0, 1.0]),
    );
    ProblemInstance::new(2, objective, vec![halfspace], vec![])
        .expect("static registry problem is well formed")
}

fn corner_entry() -> RegistryEntry {
    RegistryEntry {
        name: "corner",
        summary: "smooth check problem: project (1, 2) onto the half-plane \
                  x + y <= 1; solution (0, 1)",
        dimension: 2,
        x0: vec![0.0, 0.0],
        solver: SolverConfig {
            max_iter: 30,
            ..SolverConfig::default()
        },
        reference: Some(Reference {
            point: vec![0.0, 1.0],
            objective: Some(2.0),
        }),
        kind: ProblemKind::Direct(make_corner),
    }
}

fn make_diagonal() -> ProblemInstance {
    let objective = SmoothedFunction::smooth(
        2,
        |z: &DVector<f64>| z[0] * z[0] + z[1] * z[1],
        |z: &DVector<f64>| DVector::from_vec(vec![2.0 * z[0], 2.0 * z[1]]),
    );
    let line = SmoothedFunction::smooth(
        2,
        |z: &DVector<f64>| z[0] + z[1] - 1.0,
        |_z: &DVector<f64>| DVector::from_vec(vec![1.0, 1.0]),
    );
    ProblemInstance::new(2, objective, vec![], vec![line])
        .expect("static registry problem is well formed")
}

fn diagonal_entry() -> RegistryEntry {
    RegistryEntry {
        name: "diagonal",
        summary: "smooth check problem: minimize x^2 + y^2 on the line \
                  x + y = 1; solution (1/2, 1/2)",
        dimension: 2,
        x0: vec![0.0, 0.0],
        solver: SolverConfig {
            max_iter: 30,
            ..SolverConfig::default()
        },
        reference: Some(Reference {
            point: vec![0.5, 0.5],
            objective: Some(0.5),
        }),
        kind: ProblemKind::Direct(make_diagonal),
    }
}
