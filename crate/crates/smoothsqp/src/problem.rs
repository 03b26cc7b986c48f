//! Nonsmooth program model: smoothing families, problem instances, and the
//! exact-penalty merit function with its directional derivative.
//!
//! The program being solved is
//!
//! ```text
//!     minimize  f(x)
//!     s.t.      g_i(x) <= 0,  i = 1..p
//!               h_j(x)  = 0,  j = 1..q-p
//! ```
//!
//! where each function may be nonsmooth. Every function is represented by a
//! family of smooth approximations parameterized by rho > 0 that converges to
//! the underlying function as rho -> infinity. A function that is already
//! smooth is its own family (the approximation ignores rho).

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Family, Result};

/// Relative tolerance for classifying constraints as active when computing
/// the directional derivative of the penalty term. The underlying case
/// analysis uses exact equality; this absorbs floating-point ties.
pub const ACTIVE_SET_TOL: f64 = 1e-12;

type ValueFn = dyn Fn(&DVector<f64>, f64) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync;
type BaseValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// A family of smooth approximations to a (possibly nonsmooth) function.
///
/// `value_at(x, rho)` and `gradient_at(x, rho)` evaluate the smooth member
/// with parameter `rho`; larger `rho` means a tighter approximation. When the
/// underlying function itself can be evaluated (exactly or through an
/// oracle), `base_value_at` exposes it; diagnostics use it to evaluate
/// constraint values at candidate limits.
#[derive(Clone)]
pub struct SmoothedFunction {
    dimension: usize,
    value: Arc<ValueFn>,
    gradient: Arc<GradientFn>,
    base_value: Option<Arc<BaseValueFn>>,
}

impl std::fmt::Debug for SmoothedFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothedFunction")
            .field("dimension", &self.dimension)
            .field("has_base_value", &self.base_value.is_some())
            .finish()
    }
}

impl SmoothedFunction {
    /// Builds a family from rho-aware value and gradient closures.
    pub fn new<V, G>(dimension: usize, value: V, gradient: G) -> Self
    where
        V: Fn(&DVector<f64>, f64) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dimension,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            base_value: None,
        }
    }

    /// Wraps an already-smooth function as its own (rho-independent) family.
    /// The base value coincides with the smoothed value.
    pub fn smooth<V, G>(dimension: usize, value: V, gradient: G) -> Self
    where
        V: Fn(&DVector<f64>) -> f64 + Send + Sync + Clone + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        let base = value.clone();
        Self {
            dimension,
            value: Arc::new(move |x, _rho| value(x)),
            gradient: Arc::new(move |x, _rho| gradient(x)),
            base_value: Some(Arc::new(base)),
        }
    }

    /// Attaches an evaluator for the underlying nonsmooth function (or an
    /// oracle standing in for it).
    pub fn with_base_value<B>(mut self, base: B) -> Self
    where
        B: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        self.base_value = Some(Arc::new(base));
        self
    }

    /// Ambient dimension n.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Value of the smooth member with parameter `rho` at `x`.
    pub fn value_at(&self, x: &DVector<f64>, rho: f64) -> f64 {
        (self.value)(x, rho)
    }

    /// Gradient of the smooth member with parameter `rho` at `x`.
    pub fn gradient_at(&self, x: &DVector<f64>, rho: f64) -> DVector<f64> {
        (self.gradient)(x, rho)
    }

    /// Underlying function value, when available.
    pub fn base_value_at(&self, x: &DVector<f64>) -> Option<f64> {
        self.base_value.as_ref().map(|f| f(x))
    }
}

/// The constrained program: objective, p inequalities, q-p equalities, all
/// given as smoothing families over the same ambient dimension.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    /// Ambient dimension n.
    pub n: usize,
    /// Objective family f_rho.
    pub objective: SmoothedFunction,
    /// Inequality families g_rho^i, constrained to be <= 0.
    pub inequalities: Vec<SmoothedFunction>,
    /// Equality families h_rho^j, constrained to be = 0.
    pub equalities: Vec<SmoothedFunction>,
}

impl ProblemInstance {
    /// Builds an instance, checking that every family shares dimension `n`.
    pub fn new(
        n: usize,
        objective: SmoothedFunction,
        inequalities: Vec<SmoothedFunction>,
        equalities: Vec<SmoothedFunction>,
    ) -> Result<Self> {
        if objective.dimension() != n {
            return Err(Error::Dimension {
                context: "objective dimension",
                expected: n,
                got: objective.dimension(),
            });
        }
        for g in &inequalities {
            if g.dimension() != n {
                return Err(Error::Dimension {
                    context: "inequality dimension",
                    expected: n,
                    got: g.dimension(),
                });
            }
        }
        for h in &equalities {
            if h.dimension() != n {
                return Err(Error::Dimension {
                    context: "equality dimension",
                    expected: n,
                    got: h.dimension(),
                });
            }
        }
        Ok(Self {
            n,
            objective,
            inequalities,
            equalities,
        })
    }

    /// Number of inequality constraints p.
    pub fn num_inequalities(&self) -> usize {
        self.inequalities.len()
    }

    /// Number of equality constraints q - p.
    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    fn check_dim(&self, x: &DVector<f64>, context: &'static str) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                context,
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Objective value with finiteness check.
    pub(crate) fn objective_value(&self, x: &DVector<f64>, rho: f64) -> Result<f64> {
        checked_value(&self.objective, Family::Objective, x, rho)
    }

    /// Objective gradient with finiteness check.
    pub(crate) fn objective_gradient(&self, x: &DVector<f64>, rho: f64) -> Result<DVector<f64>> {
        checked_gradient(&self.objective, Family::Objective, x, rho)
    }

    /// All inequality values with finiteness checks.
    pub(crate) fn inequality_values(&self, x: &DVector<f64>, rho: f64) -> Result<Vec<f64>> {
        self.inequalities
            .iter()
            .enumerate()
            .map(|(i, g)| checked_value(g, Family::Inequality(i), x, rho))
            .collect()
    }

    /// All equality values with finiteness checks.
    pub(crate) fn equality_values(&self, x: &DVector<f64>, rho: f64) -> Result<Vec<f64>> {
        self.equalities
            .iter()
            .enumerate()
            .map(|(j, h)| checked_value(h, Family::Equality(j), x, rho))
            .collect()
    }

    /// All inequality gradients with finiteness checks.
    pub(crate) fn inequality_gradients(
        &self,
        x: &DVector<f64>,
        rho: f64,
    ) -> Result<Vec<DVector<f64>>> {
        self.inequalities
            .iter()
            .enumerate()
            .map(|(i, g)| checked_gradient(g, Family::Inequality(i), x, rho))
            .collect()
    }

    /// All equality gradients with finiteness checks.
    pub(crate) fn equality_gradients(
        &self,
        x: &DVector<f64>,
        rho: f64,
    ) -> Result<Vec<DVector<f64>>> {
        self.equalities
            .iter()
            .enumerate()
            .map(|(j, h)| checked_gradient(h, Family::Equality(j), x, rho))
            .collect()
    }
}

fn checked_value(f: &SmoothedFunction, family: Family, x: &DVector<f64>, rho: f64) -> Result<f64> {
    let v = f.value_at(x, rho);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Eval {
            family,
            what: "value",
            rho,
        })
    }
}

fn checked_gradient(
    f: &SmoothedFunction,
    family: Family,
    x: &DVector<f64>,
    rho: f64,
) -> Result<DVector<f64>> {
    let g = f.gradient_at(x, rho);
    if g.len() == f.dimension() && g.iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(Error::Eval {
            family,
            what: "gradient",
            rho,
        })
    }
}

/// Parameters of the merit function: smoothing level rho and penalty weight r.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeritParams {
    /// Smoothing parameter, > 0.
    pub rho: f64,
    /// Penalty weight, > 0.
    pub r: f64,
}

impl MeritParams {
    /// Validating constructor.
    pub fn new(rho: f64, r: f64) -> Result<Self> {
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
        Ok(Self { rho, r })
    }
}

/// Penalty term phi_rho(x) = max{0, g_rho^i(x), |h_rho^j(x)|} together with
/// the raw constraint values it was built from.
pub(crate) struct Infeasibility {
    pub phi: f64,
    pub ineq: Vec<f64>,
    pub eq: Vec<f64>,
}

pub(crate) fn infeasibility(
    prob: &ProblemInstance,
    x: &DVector<f64>,
    rho: f64,
) -> Result<Infeasibility> {
    let ineq = prob.inequality_values(x, rho)?;
    let eq = prob.equality_values(x, rho)?;
    let mut phi = 0.0f64;
    for &g in &ineq {
        phi = phi.max(g);
    }
    for &h in &eq {
        phi = phi.max(h.abs());
    }
    Ok(Infeasibility { phi, ineq, eq })
}

/// Exact-penalty merit value
/// `theta_{rho,r}(x) = f_rho(x) + r * max{0, g_rho^i(x), |h_rho^j(x)|}`.
///
/// Returns `f_rho(x)` exactly when the problem has no constraints.
///
/// # Errors
///
/// An evaluation producing a non-finite value yields an error naming the
/// offending family.
pub fn merit_value(prob: &ProblemInstance, x: &DVector<f64>, mp: &MeritParams) -> Result<f64> {
    prob.check_dim(x, "merit_value point")?;
    let f = prob.objective_value(x, mp.rho)?;
    if prob.inequalities.is_empty() && prob.equalities.is_empty() {
        return Ok(f);
    }
    let inf = infeasibility(prob, x, mp.rho)?;
    Ok(f + mp.r * inf.phi)
}

/// One-sided directional derivative of the merit function at `x` along `d`,
/// at fixed (rho, r).
///
/// The penalty term is a pointwise max, so its directional derivative follows
/// a case analysis on the active pieces. With
/// `I = {i : g^i = phi}`, `J+ = {j : h^j = phi}`, `J- = {j : -h^j = phi}`:
///
/// ```text
/// phi'(x; d) = 0                                                   if phi = 0, no active piece
///            = max{0, grad g_i . d (i in I), |grad h_j . d| (j in J+)}   if phi = 0
///            = max{grad g_i . d (i in I), grad h_j . d (j in J+),
///                  -grad h_j . d (j in J-)}                        if phi > 0
/// ```
///
/// and `theta'(x; d) = grad f . d + r * phi'(x; d)`. Active-set membership
/// uses [`ACTIVE_SET_TOL`] relative to phi.
pub fn merit_directional_derivative(
    prob: &ProblemInstance,
    x: &DVector<f64>,
    d: &DVector<f64>,
    mp: &MeritParams,
) -> Result<f64> {
    prob.check_dim(x, "merit_directional_derivative point")?;
    prob.check_dim(d, "merit_directional_derivative direction")?;
    let grad_f = prob.objective_gradient(x, mp.rho)?;
    let f_term = grad_f.dot(d);
    if prob.inequalities.is_empty() && prob.equalities.is_empty() {
        return Ok(f_term);
    }
    let inf = infeasibility(prob, x, mp.rho)?;
    let tol = ACTIVE_SET_TOL * inf.phi.max(1.0);

    let phi_prime = if inf.phi <= tol {
        // Feasible point: pieces at their kink (value 0) drive the derivative.
        let mut active_terms: Vec<f64> = Vec::new();
        let ineq_grads = prob.inequality_gradients(x, mp.rho)?;
        let eq_grads = prob.equality_gradients(x, mp.rho)?;
        for (i, &g) in inf.ineq.iter().enumerate() {
            if g.abs() <= tol {
                active_terms.push(ineq_grads[i].dot(d));
            }
        }
        for (j, &h) in inf.eq.iter().enumerate() {
            if h.abs() <= tol {
                active_terms.push(eq_grads[j].dot(d).abs());
            }
        }
        if active_terms.is_empty() {
            0.0
        } else {
            active_terms.iter().fold(0.0f64, |a, &b| a.max(b))
        }
    } else {
        let ineq_grads = prob.inequality_gradients(x, mp.rho)?;
        let eq_grads = prob.equality_gradients(x, mp.rho)?;
        let mut m = f64::NEG_INFINITY;
        for (i, &g) in inf.ineq.iter().enumerate() {
            if g >= inf.phi - tol {
                m = m.max(ineq_grads[i].dot(d));
            }
        }
        for (j, &h) in inf.eq.iter().enumerate() {
            if h >= inf.phi - tol {
                m = m.max(eq_grads[j].dot(d));
            }
            if -h >= inf.phi - tol {
                m = m.max(-eq_grads[j].dot(d));
            }
        }
        m
    };
    Ok(f_term + mp.r * phi_prime)
}

/// Report from a central-difference gradient check.
#[derive(Clone, Debug)]
pub struct FdReport {
    /// Largest absolute discrepancy over coordinates.
    pub max_abs_error: f64,
    /// Per-coordinate absolute discrepancies.
    pub per_coordinate: Vec<f64>,
    /// Analytic gradient that was checked.
    pub analytic: DVector<f64>,
    /// Central-difference estimate.
    pub finite_difference: DVector<f64>,
}

/// Compares `fn.gradient_at(x, rho)` against central finite differences of
/// `fn.value_at(., rho)` with the given step. Pure report; no mutation.
pub fn fd_gradient_check(
    f: &SmoothedFunction,
    x: &DVector<f64>,
    rho: f64,
    step: f64,
) -> Result<FdReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "step",
            value: step,
            requirement: "finite and > 0",
        });
    }
    if x.len() != f.dimension() {
        return Err(Error::Dimension {
            context: "fd_gradient_check point",
            expected: f.dimension(),
            got: x.len(),
        });
    }
    let analytic = f.gradient_at(x, rho);
    let n = x.len();
    let mut fd = DVector::zeros(n);
    let mut xp = x.clone();
    for i in 0..n {
        xp[i] = x[i] + step;
        let vp = f.value_at(&xp, rho);
        xp[i] = x[i] - step;
        let vm = f.value_at(&xp, rho);
        xp[i] = x[i];
        fd[i] = (vp - vm) / (2.0 * step);
    }
    let per_coordinate: Vec<f64> = (0..n).map(|i| (analytic[i] - fd[i]).abs()).collect();
    let max_abs_error = per_coordinate.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(FdReport {
        max_abs_error,
        per_coordinate,
        analytic,
        finite_difference: fd,
    })
}
