//! Two-level programs with a box-constrained inner minimization, and their
//! reduction to a single smoothed constrained program.
//!
//! The inner value function V(x) = min over y in Y of f(x, y) is nonsmooth
//! wherever the minimizer jumps. It is replaced by the log-partition value
//!
//!   gamma_rho(x) = c - (1/rho) ln Integral over Y of exp(-rho (f(x,y) - c)),
//!
//! where c is a shift at the sampled minimum that keeps the exponentials in
//! range. As rho grows, gamma_rho(x) converges to V(x) and its gradient is a
//! weighted average of grad_x f concentrating on the minimizing set. Whether
//! gamma_rho approaches V from below or above depends on the geometry: wide
//! near-minimal regions (relative to unit volume) push gamma_rho below V,
//! while a single narrow well pulls it above by about ln(rho)/rho, so no
//! one-sided bound is asserted here, only the shrinking gap.
//!
//! The combined program over z = (x, y) keeps the outer objective smooth,
//! encodes optimality of y by the inequality f(x, y) <= gamma_rho(x) (an
//! approximation of f <= V) and the first-order conditions grad_y f = 0 as
//! equalities. At minimizers strictly inside the box the reformulation is
//! exact in the limit; `check_interiority` screens for that situation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{ProblemInstance, SmoothedFunction};
use crate::quad::{integrate_boltzmann, polished_minima};

/// Largest smoothing parameter the quadrature is trusted for; beyond this the
/// peak widths approach the floating-point resolution of the box.
pub const RHO_CAP: f64 = 1e12;

/// Grid resolution used by the reference value-function scan when no caller
/// resolution is given (interiority checks and base-value surrogates).
const ORACLE_GRID: usize = 1001;

/// Retained minimizer seeds per scan: enough for every basin that can matter,
/// few enough to bound the panel count.
const MAX_WELLS_1D: usize = 32;
const MAX_WELLS_2D: usize = 8;

/// Seeds whose value exceeds the minimum by more than this many units of
/// 1/rho contribute less than exp(-60) relative weight and are dropped.
const SEED_CUTOFF: f64 = 60.0;

type ScalarFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A two-level program: an outer objective F over (x, y) and an inner
/// function f minimized over y in an axis-aligned box.
#[derive(Clone)]
pub struct BilevelProblem {
    /// Outer variable dimension.
    pub n: usize,
    /// Inner variable dimension (1 or 2).
    pub m: usize,
    upper: ScalarFn,
    upper_grad: VectorFn,
    lower: ScalarFn,
    lower_grad_x: VectorFn,
    lower_grad_y: VectorFn,
    lower_cross: MatrixFn,
    /// Lower corner of the inner box.
    pub y_lo: DVector<f64>,
    /// Upper corner of the inner box.
    pub y_hi: DVector<f64>,
}

impl std::fmt::Debug for BilevelProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BilevelProblem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("y_lo", &self.y_lo)
            .field("y_hi", &self.y_hi)
            .finish_non_exhaustive()
    }
}

impl BilevelProblem {
    /// Builds a two-level program from its constituent callbacks.
    ///
    /// `upper`/`upper_grad` are the outer objective F and its gradient with
    /// respect to (x, y), length n + m. `lower` is the inner function f;
    /// `lower_grad_x` and `lower_grad_y` are its partial gradients, and
    /// `lower_cross` is the m x (n + m) Jacobian of grad_y f with respect to
    /// (x, y), row j holding the gradient of (grad_y f)_j.
    #[allow(clippy::too_many_arguments)]
    pub fn new<F1, F2, F3, F4, F5, F6>(
        n: usize,
        m: usize,
        upper: F1,
        upper_grad: F2,
        lower: F3,
        lower_grad_x: F4,
        lower_grad_y: F5,
        lower_cross: F6,
        y_lo: DVector<f64>,
        y_hi: DVector<f64>,
    ) -> Result<Self>
    where
        F1: Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
        F2: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        F3: Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
        F4: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        F5: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        F6: Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                value: 0.0,
                requirement: ">= 1",
            });
        }
        if !(m == 1 || m == 2) {
            return Err(Error::InvalidParameter {
                name: "m",
                value: m as f64,
                requirement: "1 or 2",
            });
        }
        if y_lo.len() != m {
            return Err(Error::Dimension {
                context: "inner box lower corner",
                expected: m,
                got: y_lo.len(),
            });
        }
        if y_hi.len() != m {
            return Err(Error::Dimension {
                context: "inner box upper corner",
                expected: m,
                got: y_hi.len(),
            });
        }
        for index in 0..m {
            if !(y_lo[index].is_finite() && y_hi[index].is_finite() && y_lo[index] < y_hi[index]) {
                return Err(Error::InvalidBox {
                    index,
                    lo: y_lo[index],
                    hi: y_hi[index],
                });
            }
        }
        Ok(Self {
            n,
            m,
            upper: Arc::new(upper),
            upper_grad: Arc::new(upper_grad),
            lower: Arc::new(lower),
            lower_grad_x: Arc::new(lower_grad_x),
            lower_grad_y: Arc::new(lower_grad_y),
            lower_cross: Arc::new(lower_cross),
            y_lo,
            y_hi,
        })
    }

    /// Outer objective F(x, y).
    pub fn upper_value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (self.upper)(x, y)
    }

    /// Gradient of F with respect to (x, y), length n + m.
    pub fn upper_gradient(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        (self.upper_grad)(x, y)
    }

    /// Inner function f(x, y).
    pub fn lower_value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (self.lower)(x, y)
    }

    /// Partial gradient of f with respect to x, length n.
    pub fn lower_gradient_x(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        (self.lower_grad_x)(x, y)
    }

    /// Partial gradient of f with respect to y, length m.
    pub fn lower_gradient_y(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        (self.lower_grad_y)(x, y)
    }

    /// Jacobian of grad_y f with respect to (x, y), shape m x (n + m).
    pub fn lower_cross_jacobian(&self, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
        (self.lower_cross)(x, y)
    }
}

/// Tuning for the inner-box quadrature.
#[derive(Clone, Debug)]
pub struct QuadratureConfig {
    /// Grid points per dimension in the minimizer scan that seeds the
    /// partition.
    pub base_nodes_per_dim: usize,
    /// Maximum levels of adaptive panel bisection.
    pub refinement: usize,
    /// Relative tolerance on the partition-function integral.
    pub quad_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            base_nodes_per_dim: 200,
            refinement: 12,
            quad_tol: 1e-10,
        }
    }
}

impl QuadratureConfig {
    /// Validates field ranges.
    pub fn validate(&self) -> Result<()> {
        if self.base_nodes_per_dim < 2 {
            return Err(Error::InvalidParameter {
                name: "base_nodes_per_dim",
                value: self.base_nodes_per_dim as f64,
                requirement: ">= 2",
            });
        }
        if !(self.quad_tol > 0.0 && self.quad_tol <= 1e-2) {
            return Err(Error::InvalidParameter {
                name: "quad_tol",
                value: self.quad_tol,
                requirement: "in (0, 1e-2]",
            });
        }
        Ok(())
    }
}

/// Reference evaluation of the inner value function: scans a uniform grid of
/// `grid_per_dim` points per dimension, polishes every grid-local minimum by
/// derivative-free descent, and returns the best (value, argmin) pair. With a
/// grid fine enough to see every basin this is accurate to local-search
/// precision; it never fails, but a basin narrower than the grid can be
/// missed. Ties resolve deterministically toward the lower polished value,
/// then the lexicographically smaller point.
pub fn value_function_oracle(
    bp: &BilevelProblem,
    x: &DVector<f64>,
    grid_per_dim: usize,
) -> (f64, DVector<f64>) {
    assert_eq!(x.len(), bp.n, "outer point has wrong dimension");
    let mut eval = |y: &DVector<f64>| bp.lower_value(x, y);
    let max_keep = if bp.m == 1 { MAX_WELLS_1D } else { MAX_WELLS_2D };
    let minima = polished_minima(&mut eval, &bp.y_lo, &bp.y_hi, grid_per_dim, max_keep);
    let (value, argmin) = minima
        .into_iter()
        .next()
        .expect("scan of a nonempty box yields at least one minimum");
    (value, argmin)
}

/// True when the inner minimizer at `x` keeps at least `margin` distance from
/// every face of the box, so the first-order equality conditions used by the
/// combined program are valid there.
pub fn check_interiority(bp: &BilevelProblem, x: &DVector<f64>, margin: f64) -> bool {
    let (_, argmin) = value_function_oracle(bp, x, ORACLE_GRID);
    (0..bp.m).all(|d| argmin[d] - bp.y_lo[d] >= margin && bp.y_hi[d] - argmin[d] >= margin)
}

/// Smoothed inner value gamma_rho(x) together with its gradient with respect
/// to x. The gradient is the probability-weighted average of grad_x f under
/// the density proportional to exp(-rho f(x, .)), computed from the same
/// panels as the value so the pair is mutually consistent.
pub fn gamma_with_gradient(
    bp: &BilevelProblem,
    x: &DVector<f64>,
    rho: f64,
    qc: &QuadratureConfig,
) -> Result<(f64, DVector<f64>)> {
    qc.validate()?;
    if x.len() != bp.n {
        return Err(Error::Dimension {
            context: "smoothed value input",
            expected: bp.n,
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
    if rho > RHO_CAP {
        return Err(Error::RhoCapExceeded { rho, cap: RHO_CAP });
    }

    let max_keep = if bp.m == 1 { MAX_WELLS_1D } else { MAX_WELLS_2D };
    let mut scan = |y: &DVector<f64>| bp.lower_value(x, y);
    let minima = polished_minima(&mut scan, &bp.y_lo, &bp.y_hi, qc.base_nodes_per_dim, max_keep);
    let shift = minima[0].0;
    let seeds: Vec<(f64, DVector<f64>)> = minima
        .into_iter()
        .filter(|(value, _)| rho * (value - shift) <= SEED_CUTOFF)
        .collect();

    let mut eval = |y: &DVector<f64>| (bp.lower_value(x, y), bp.lower_gradient_x(x, y));
    let out = integrate_boltzmann(
        &mut eval,
        bp.n,
        shift,
        rho,
        &bp.y_lo,
        &bp.y_hi,
        &seeds,
        qc.refinement,
        qc.quad_tol,
    )
    .map_err(|err| match err {
        // Re-express an integral-level budget failure on the value scale.
        Error::QuadratureBudget {
            estimate,
            error_estimate,
            panels,
        } => Error::QuadratureBudget {
            estimate: shift - estimate.max(f64::MIN_POSITIVE).ln() / rho,
            error_estimate,
            panels,
        },
        other => other,
    })?;
    debug_assert!(
        out.panels >= 1 && out.error <= qc.quad_tol * out.total.max(f64::MIN_POSITIVE),
        "integration reported success without meeting its tolerance"
    );
    let gamma = shift - out.total.ln() / rho;
    let grad = out.weighted / out.total;
    Ok((gamma, grad))
}

/// Smoothed inner value gamma_rho(x). See `gamma_with_gradient`.
pub fn gamma(bp: &BilevelProblem, x: &DVector<f64>, rho: f64, qc: &QuadratureConfig) -> Result<f64> {
    gamma_with_gradient(bp, x, rho, qc).map(|(value, _)| value)
}

/// Gradient of the smoothed inner value with respect to x. See
/// `gamma_with_gradient`.
pub fn grad_gamma(
    bp: &BilevelProblem,
    x: &DVector<f64>,
    rho: f64,
    qc: &QuadratureConfig,
) -> Result<DVector<f64>> {
    gamma_with_gradient(bp, x, rho, qc).map(|(_, grad)| grad)
}

/// Cache of (gamma, grad gamma) keyed by the exact bit patterns of (rho, x),
/// shared by the value and gradient closures of a combined program so each
/// distinct outer point is integrated once. Lock scope is a single lookup or
/// insert; a racing duplicate computation is harmless because the result is
/// a pure function of the key.
type CacheKey = (u64, Vec<u64>);
type CacheMap = HashMap<CacheKey, (f64, DVector<f64>)>;

#[derive(Clone, Default)]
struct GammaCache {
    inner: Arc<Mutex<CacheMap>>,
}

impl GammaCache {
    fn get_or_compute(
        &self,
        bp: &BilevelProblem,
        qc: &QuadratureConfig,
        x: &DVector<f64>,
        rho: f64,
    ) -> Result<(f64, DVector<f64>)> {
        let key = (
            rho.to_bits(),
            x.iter().map(|v| v.to_bits()).collect::<Vec<u64>>(),
        );
        if let Some(hit) = self.inner.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let value = gamma_with_gradient(bp, x, rho, qc)?;
        self.inner.lock().unwrap().insert(key, value.clone());
        Ok(value)
    }
}

fn split_xy(bp: &BilevelProblem, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    (
        z.rows(0, bp.n).into_owned(),
        z.rows(bp.n, bp.m).into_owned(),
    )
}

/// Reduces a two-level program to a single constrained program over
/// z = (x, y) with default quadrature settings. See
/// `build_combined_program_with`.
pub fn build_combined_program(bp: &BilevelProblem) -> ProblemInstance {
    build_combined_program_with(bp, QuadratureConfig::default())
}

/// Reduces a two-level program to a single constrained program over
/// z = (x, y):
///
/// - objective: the outer F (independent of the smoothing parameter);
/// - one inequality: f(x, y) - gamma_rho(x) <= 0, whose underlying
///   (rho-independent) surrogate is f(x, y) - V(x) via the value-function
///   scan;
/// - m equalities: the components of grad_y f (valid when the inner minimizer
///   is interior), independent of the smoothing parameter.
///
/// Smoothed-value failures (cap exceeded, quadrature budget) surface as
/// non-finite evaluations, which the program's checked evaluators convert to
/// evaluation errors naming the inequality family.
pub fn build_combined_program_with(bp: &BilevelProblem, qc: QuadratureConfig) -> ProblemInstance {
    let nm = bp.n + bp.m;
    let cache = GammaCache::default();

    let objective = {
        let bv = bp.clone();
        let bg = bp.clone();
        SmoothedFunction::smooth(
            nm,
            move |z| {
                let (x, y) = split_xy(&bv, z);
                bv.upper_value(&x, &y)
            },
            move |z| {
                let (x, y) = split_xy(&bg, z);
                bg.upper_gradient(&x, &y)
            },
        )
    };

    let inequality = {
        let bv = bp.clone();
        let bg = bp.clone();
        let bb = bp.clone();
        let qv = qc.clone();
        let qg = qc.clone();
        let cv = cache.clone();
        let cg = cache;
        SmoothedFunction::new(
            nm,
            move |z, rho| {
                let (x, y) = split_xy(&bv, z);
                match cv.get_or_compute(&bv, &qv, &x, rho) {
                    Ok((gamma, _)) => bv.lower_value(&x, &y) - gamma,
                    Err(_) => f64::NAN,
                }
            },
            move |z, rho| {
                let (x, y) = split_xy(&bg, z);
                match cg.get_or_compute(&bg, &qg, &x, rho) {
                    Ok((_, grad)) => {
                        let gx = bg.lower_gradient_x(&x, &y) - grad;
                        let gy = bg.lower_gradient_y(&x, &y);
                        let mut out = DVector::zeros(bg.n + bg.m);
                        out.rows_mut(0, bg.n).copy_from(&gx);
                        out.rows_mut(bg.n, bg.m).copy_from(&gy);
                        out
                    }
                    Err(_) => DVector::from_element(bg.n + bg.m, f64::NAN),
                }
            },
        )
        .with_base_value(move |z| {
            let (x, y) = split_xy(&bb, z);
            let (value, _) = value_function_oracle(&bb, &x, ORACLE_GRID);
            bb.lower_value(&x, &y) - value
        })
    };

    let equalities = (0..bp.m)
        .map(|j| {
            let bv = bp.clone();
            let bg = bp.clone();
            SmoothedFunction::smooth(
                nm,
                move |z| {
                    let (x, y) = split_xy(&bv, z);
                    bv.lower_gradient_y(&x, &y)[j]
                },
                move |z| {
                    let (x, y) = split_xy(&bg, z);
                    bg.lower_cross_jacobian(&x, &y).row(j).transpose()
                },
            )
        })
        .collect();

    ProblemInstance::new(nm, objective, vec![inequality], equalities)
        .expect("combined program dimensions are consistent by construction")
}
