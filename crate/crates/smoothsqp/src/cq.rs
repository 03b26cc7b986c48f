//! Constraint-qualification diagnostics over recorded solver trajectories.
//!
//! The stationarity theory behind the smoothing method replaces classical
//! gradients at the limit point with limits of smoothed gradients along the
//! iterate sequence. Those subsequence limits are not computable from a
//! finite run, so this module works with an honest surrogate: it groups the
//! tail of a solve trace into clusters of nearby iterates, takes the
//! gradients at the largest smoothing parameters as limit-vector estimates
//! (refusing to proceed when the last two disagree beyond a settle
//! tolerance), and then decides each qualification exactly on those
//! estimates via small linear programs and rank tests.
//!
//! Every negative verdict carries a certificate: a normalized multiplier
//! vector that satisfies the defining abnormal system within [`CERT_TOL`].
//! Positive verdicts record the evidence produced by the deciding program,
//! such as the strictly feasible direction and its margin. A verdict always
//! refers to the observed trajectory only; runs from other starting points
//! can strengthen it but never make it exhaustive.

use nalgebra::{DMatrix, DVector};

use crate::driver::IterationRecord;
use crate::error::{Error, Family, Result};
use crate::lp::{solve_lp, LpOutcome};

/// Feasibility tolerance for anchor checks and active-set detection.
pub const FEAS_TOL: f64 = 1e-6;

/// Largest allowed difference between the last two members' gradients for a
/// cluster to count as settled.
pub const GRAD_SETTLE_TOL: f64 = 1e-4;

/// Relative singular-value threshold for the linear-independence tests.
pub const RANK_TOL: f64 = 1e-9;

/// Residual tolerance a violation certificate must meet.
pub const CERT_TOL: f64 = 1e-8;

/// Box bound on the direction variable that keeps the support program
/// bounded; any strictly feasible direction scales into the box.
pub const D_BOX: f64 = 1e6;

/// One trace record absorbed into a cluster: the iterate, its smoothing
/// parameter, and the smoothed constraint gradients evaluated there.
#[derive(Clone, Debug)]
pub struct ClusterMember {
    /// Iterate location.
    pub x: DVector<f64>,
    /// Smoothing parameter at this iterate.
    pub rho: f64,
    /// Smoothed inequality gradients at `x`.
    pub grads_ineq: Vec<DVector<f64>>,
    /// Smoothed equality gradients at `x`.
    pub grads_eq: Vec<DVector<f64>>,
}

/// A candidate accumulation point together with the nearby tail iterates
/// whose gradients estimate the limit vectors there.
///
/// Constraint values are stored once, evaluated at the anchor, since the
/// anchor plays the role of the limit point in every check.
#[derive(Clone, Debug)]
pub struct GradientCluster {
    /// Candidate accumulation point.
    pub anchor: DVector<f64>,
    /// Absorbed records, sorted by nondecreasing smoothing parameter.
    pub members: Vec<ClusterMember>,
    /// Inequality constraint values at the anchor.
    pub ineq_values: Vec<f64>,
    /// Equality constraint values at the anchor.
    pub eq_values: Vec<f64>,
    /// Indices i with |ineq_values[i]| <= [`FEAS_TOL`].
    pub active_set: Vec<usize>,
    /// Radius within which every member must lie.
    pub cluster_radius: f64,
}

/// The qualification a verdict speaks about.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CqKind {
    /// Weakly no nonzero abnormal multiplier CQ at a feasible anchor.
    Wnnamcq,
    /// Weakly generalized Mangasarian-Fromovitz CQ at a feasible anchor.
    Wgmfcq,
    /// Extended WNNAMCQ, defined at possibly infeasible anchors.
    Ewnnamcq,
    /// Extended WGMFCQ, defined at possibly infeasible anchors.
    Ewgmfcq,
}

/// Proof object attached to a verdict.
#[derive(Clone, Debug)]
pub enum CqCertificate {
    /// A multiplier vector witnessing failure: lambda_ineq >= 0,
    /// ||lambda||_1 = 1, and the defining linear system holds within
    /// [`CERT_TOL`]. Inequality entries follow `limit_vectors_used.ineq`.
    Violation {
        /// Multipliers on the inequality limit vectors.
        lambda_ineq: Vec<f64>,
        /// Multipliers on the equality limit vectors.
        lambda_eq: Vec<f64>,
    },
    /// Evidence from the deciding program. Positive direction-based
    /// verdicts carry the strictly feasible direction and its margin; the
    /// multiplier searches record an infeasible program as `None` fields.
    Evidence {
        /// Best margin attained by the support program, when one ran.
        margin: Option<f64>,
        /// Strictly feasible direction, when one was produced.
        direction: Option<DVector<f64>>,
    },
}

/// Limit-vector estimates a check actually used.
#[derive(Clone, Debug)]
pub struct LimitVectors {
    /// Inequality gradient limits, in the index order the check used.
    pub ineq: Vec<DVector<f64>>,
    /// Equality gradient limits.
    pub eq: Vec<DVector<f64>>,
}

/// Outcome of one constraint-qualification check on one cluster.
#[derive(Clone, Debug)]
pub struct CqVerdict {
    /// Which qualification was checked.
    pub kind: CqKind,
    /// Whether it holds on the observed limit vectors.
    pub holds: bool,
    /// Violation multipliers or supporting evidence.
    pub certificate: CqCertificate,
    /// The limit vectors the decision was made on.
    pub limit_vectors_used: LimitVectors,
}

impl GradientCluster {
    /// Builds a cluster after validating the dimensional invariants and the
    /// radius bound, sorting members by smoothing parameter and deriving
    /// the active set from the anchor values.
    pub fn new(
        anchor: DVector<f64>,
        mut members: Vec<ClusterMember>,
        ineq_values: Vec<f64>,
        eq_values: Vec<f64>,
        cluster_radius: f64,
    ) -> Result<Self> {
        if !cluster_radius.is_finite() || cluster_radius < 0.0 {
            return Err(Error::InvalidParameter {
                name: "cluster_radius",
                value: cluster_radius,
                requirement: "finite and nonnegative",
            });
        }
        let n = anchor.len();
        for member in &members {
            if member.x.len() != n {
                return Err(Error::Dimension {
                    context: "cluster member point",
                    expected: n,
                    got: member.x.len(),
                });
            }
            if member.grads_ineq.len() != ineq_values.len() {
                return Err(Error::Dimension {
                    context: "cluster member inequality gradients",
                    expected: ineq_values.len(),
                    got: member.grads_ineq.len(),
                });
            }
            if member.grads_eq.len() != eq_values.len() {
                return Err(Error::Dimension {
                    context: "cluster member equality gradients",
                    expected: eq_values.len(),
                    got: member.grads_eq.len(),
                });
            }
            for grad in member.grads_ineq.iter().chain(member.grads_eq.iter()) {
                if grad.len() != n {
                    return Err(Error::Dimension {
                        context: "cluster gradient dimension",
                        expected: n,
                        got: grad.len(),
                    });
                }
            }
            if !member.rho.is_finite() || member.rho <= 0.0 {
                return Err(Error::InvalidParameter {
                    name: "member smoothing parameter",
                    value: member.rho,
                    requirement: "finite and positive",
                });
            }
            let distance = (&member.x - &anchor).norm();
            if distance > cluster_radius {
                return Err(Error::InvalidParameter {
                    name: "cluster member distance",
                    value: distance,
                    requirement: "at most cluster_radius from the anchor",
                });
            }
        }
        members.sort_by(|a, b| a.rho.total_cmp(&b.rho));
        let active_set = ineq_values
            .iter()
            .enumerate()
            .filter(|(_, g)| g.abs() <= FEAS_TOL)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            anchor,
            members,
            ineq_values,
            eq_values,
            active_set,
            cluster_radius,
        })
    }

    /// Estimates the limit vectors as the gradients at the largest
    /// smoothing parameter, after checking that the gradient sequence has
    /// settled: the last two members must agree within [`GRAD_SETTLE_TOL`]
    /// in every constraint gradient.
    pub fn limit_vectors(&self) -> Result<LimitVectors> {
        if self.members.len() < 2 {
            return Err(Error::ClusterTooSmall {
                got: self.members.len(),
                need: 2,
            });
        }
        let last = &self.members[self.members.len() - 1];
        let prev = &self.members[self.members.len() - 2];
        let mut delta = 0.0f64;
        for (a, b) in last
            .grads_ineq
            .iter()
            .zip(prev.grads_ineq.iter())
            .chain(last.grads_eq.iter().zip(prev.grads_eq.iter()))
        {
            delta = delta.max((a - b).norm());
        }
        if delta > GRAD_SETTLE_TOL {
            return Err(Error::UnsettledGradients {
                delta,
                tol: GRAD_SETTLE_TOL,
            });
        }
        Ok(LimitVectors {
            ineq: last.grads_ineq.clone(),
            eq: last.grads_eq.clone(),
        })
    }
}

/// Groups the tail of a solve trace into gradient clusters.
///
/// The tail is the last `ceil(tail_fraction * len)` records (at least two).
/// Anchors are chosen greedily from the most recent unassigned record; each
/// cluster absorbs every tail record within `cluster_radius` of its anchor,
/// and constraint values are taken from the anchor's record. Clusters are
/// returned most recent first, so index 0 holds the final iterate. Traces
/// shorter than two records yield no clusters.
pub fn collect_clusters(
    trace: &[IterationRecord],
    cluster_radius: f64,
    tail_fraction: f64,
) -> Vec<GradientCluster> {
    if trace.len() < 2 {
        return Vec::new();
    }
    let radius = if cluster_radius.is_finite() && cluster_radius >= 0.0 {
        cluster_radius
    } else {
        0.0
    };
    let fraction = if tail_fraction.is_finite() && tail_fraction > 0.0 {
        tail_fraction.min(1.0)
    } else {
        1.0
    };
    let tail_len = ((fraction * trace.len() as f64).ceil() as usize).clamp(2, trace.len());
    let tail = &trace[trace.len() - tail_len..];

    let mut remaining: Vec<usize> = (0..tail.len()).collect();
    let mut clusters = Vec::new();
    while let Some(&anchor_idx) = remaining.last() {
        let anchor = tail[anchor_idx].x.clone();
        let in_radius: Vec<usize> = (0..tail.len())
            .filter(|&i| (&tail[i].x - &anchor).norm() <= radius)
            .collect();
        let members = in_radius
            .iter()
            .map(|&i| ClusterMember {
                x: tail[i].x.clone(),
                rho: tail[i].rho,
                grads_ineq: tail[i].grad_ineq.clone(),
                grads_eq: tail[i].grad_eq.clone(),
            })
            .collect();
        let cluster = GradientCluster::new(
            anchor,
            members,
            tail[anchor_idx].ineq_values.clone(),
            tail[anchor_idx].eq_values.clone(),
            radius,
        )
        .expect("clusters formed from a recorded trace are dimensionally consistent");
        clusters.push(cluster);
        remaining.retain(|i| !in_radius.contains(i));
    }
    clusters
}

/// Decides whether the weakly-no-nonzero-abnormal-multiplier qualification
/// holds at the cluster anchor: the system 0 = sum of lambda_i v_i over the
/// active inequalities plus sum of lambda_j v_j over the equalities, with
/// lambda_i >= 0 and ||lambda||_1 = 1, must be infeasible.
///
/// Requires a settled cluster and a feasible anchor; an anchor violating
/// [`FEAS_TOL`] is rejected with [`Error::InfeasibleAnchor`] rather than
/// silently producing a verdict the definition does not cover.
pub fn check_wnnamcq(cluster: &GradientCluster) -> Result<CqVerdict> {
    let limits = cluster.limit_vectors()?;
    for (i, &g) in cluster.ineq_values.iter().enumerate() {
        if g > FEAS_TOL || g.is_nan() {
            return Err(Error::InfeasibleAnchor {
                family: Family::Inequality(i),
                value: g,
                tol: FEAS_TOL,
            });
        }
    }
    for (j, &h) in cluster.eq_values.iter().enumerate() {
        if h.abs() > FEAS_TOL || h.is_nan() {
            return Err(Error::InfeasibleAnchor {
                family: Family::Equality(j),
                value: h,
                tol: FEAS_TOL,
            });
        }
    }
    let active_vectors: Vec<DVector<f64>> = cluster
        .active_set
        .iter()
        .map(|&i| limits.ineq[i].clone())
        .collect();
    let system = ViolationSystem {
        ineq: &active_vectors,
        eq: &limits.eq,
        values: None,
    };
    let violation = find_violation(&system)?;
    let used = LimitVectors {
        ineq: active_vectors.clone(),
        eq: limits.eq.clone(),
    };
    Ok(verdict_from_violation(CqKind::Wnnamcq, violation, used))
}

/// Decides the extended variant at a possibly infeasible anchor: every
/// inequality participates, and a violating multiplier must additionally
/// satisfy the value combination sum of lambda_i g_i plus lambda_j h_j
/// being nonnegative at the anchor.
pub fn check_ewnnamcq(cluster: &GradientCluster) -> Result<CqVerdict> {
    let limits = cluster.limit_vectors()?;
    let system = ViolationSystem {
        ineq: &limits.ineq,
        eq: &limits.eq,
        values: Some((&cluster.ineq_values, &cluster.eq_values)),
    };
    let violation = find_violation(&system)?;
    Ok(verdict_from_violation(CqKind::Ewnnamcq, violation, limits))
}

/// Decides the extended Mangasarian-Fromovitz variant: the equality limit
/// vectors must be linearly independent, and the support program
/// max s subject to g_i + v_i'd <= -s, h_j + v_j'd = 0, s <= 1 over the
/// box |d|_inf <= [`D_BOX`] must attain a strictly positive margin.
///
/// Negative verdicts try to attach the equivalent abnormal-multiplier
/// violation as their certificate, falling back to the observed margin
/// when the multiplier search is numerically inconclusive.
pub fn check_ewgmfcq(cluster: &GradientCluster) -> Result<CqVerdict> {
    let limits = cluster.limit_vectors()?;
    let n = cluster.anchor.len();
    if rows_linearly_independent(&limits.eq, RANK_TOL) {
        let support = support_margin(n, &limits, &cluster.ineq_values, &cluster.eq_values)?;
        if let Some((margin, direction)) = &support {
            if *margin > 0.0 {
                return Ok(CqVerdict {
                    kind: CqKind::Ewgmfcq,
                    holds: true,
                    certificate: CqCertificate::Evidence {
                        margin: Some(*margin),
                        direction: Some(direction.clone()),
                    },
                    limit_vectors_used: limits,
                });
            }
        }
        let margin = support.map(|(s, _)| s);
        let certificate = ewnnamcq_violation_certificate(cluster, &limits, margin)?;
        return Ok(CqVerdict {
            kind: CqKind::Ewgmfcq,
            holds: false,
            certificate,
            limit_vectors_used: limits,
        });
    }
    let certificate = ewnnamcq_violation_certificate(cluster, &limits, None)?;
    Ok(CqVerdict {
        kind: CqKind::Ewgmfcq,
        holds: false,
        certificate,
        limit_vectors_used: limits,
    })
}

/// Specialized qualification check for the combined single-level program of
/// the bilevel reduction, where one inequality and one equality remain:
/// true iff the two stacked gradients form a rank-2 matrix, judged by
/// row-normalized singular values against [`RANK_TOL`]. Row normalization
/// makes the answer invariant under nonzero rescaling of either vector.
/// Non-finite or mismatched inputs return false.
pub fn check_bilevel_wnnamcq(grad_f_diff: &DVector<f64>, grad_eq: &DVector<f64>) -> bool {
    if grad_f_diff.len() != grad_eq.len() || grad_f_diff.is_empty() {
        return false;
    }
    if !grad_f_diff
        .iter()
        .chain(grad_eq.iter())
        .all(|v| v.is_finite())
    {
        return false;
    }
    rows_linearly_independent(&[grad_f_diff.clone(), grad_eq.clone()], RANK_TOL)
}

fn verdict_from_violation(
    kind: CqKind,
    violation: Option<(Vec<f64>, Vec<f64>)>,
    used: LimitVectors,
) -> CqVerdict {
    match violation {
        Some((lambda_ineq, lambda_eq)) => CqVerdict {
            kind,
            holds: false,
            certificate: CqCertificate::Violation {
                lambda_ineq,
                lambda_eq,
            },
            limit_vectors_used: used,
        },
        None => CqVerdict {
            kind,
            holds: true,
            certificate: CqCertificate::Evidence {
                margin: None,
                direction: None,
            },
            limit_vectors_used: used,
        },
    }
}

fn ewnnamcq_violation_certificate(
    cluster: &GradientCluster,
    limits: &LimitVectors,
    margin: Option<f64>,
) -> Result<CqCertificate> {
    let system = ViolationSystem {
        ineq: &limits.ineq,
        eq: &limits.eq,
        values: Some((&cluster.ineq_values, &cluster.eq_values)),
    };
    Ok(match find_violation(&system)? {
        Some((lambda_ineq, lambda_eq)) => CqCertificate::Violation {
            lambda_ineq,
            lambda_eq,
        },
        None => CqCertificate::Evidence {
            margin,
            direction: None,
        },
    })
}

/// Abnormal-multiplier search problem: vectors in the gradient combination
/// plus, for the extended variant, the anchor values entering the
/// nonnegative value-combination condition.
struct ViolationSystem<'a> {
    ineq: &'a [DVector<f64>],
    eq: &'a [DVector<f64>],
    values: Option<(&'a [f64], &'a [f64])>,
}

/// Searches for a nonzero normalized multiplier solving the abnormal
/// system. The search is split to avoid the spurious solutions a naive
/// sign-split normalization admits: a multiplier supported on the
/// equalities alone exists iff the equality vectors are linearly
/// dependent (decided by singular values, certificate from the null
/// vector), and any remaining violation carries positive inequality mass,
/// so it is reachable by a linear program normalized by sum lambda_i = 1.
fn find_violation(sys: &ViolationSystem<'_>) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let p = sys.ineq.len();
    let q = sys.eq.len();
    if p == 0 && q == 0 {
        return Ok(None);
    }
    let n = sys
        .ineq
        .first()
        .or_else(|| sys.eq.first())
        .map(|v| v.len())
        .unwrap_or(0);

    if let Some(mut null) = equality_null_vector(sys.eq, RANK_TOL) {
        if let Some((_, h)) = sys.values {
            let weighted: f64 = null.iter().zip(h.iter()).map(|(c, h)| c * h).sum();
            if weighted < 0.0 {
                for c in null.iter_mut() {
                    *c = -*c;
                }
            }
        }
        let norm1: f64 = null.iter().map(|c| c.abs()).sum();
        let lambda_eq: Vec<f64> = null.iter().map(|c| c / norm1).collect();
        return Ok(Some((vec![0.0; p], lambda_eq)));
    }
    if p == 0 {
        return Ok(None);
    }

    // Variables: lambda (p), then the split equality multipliers a and b.
    let nv = p + 2 * q;
    let mut cost = DVector::zeros(nv);
    for j in 0..(2 * q) {
        cost[p + j] = 1.0;
    }
    let mut a_eq = DMatrix::zeros(n + 1, nv);
    let mut b_eq = DVector::zeros(n + 1);
    for r in 0..n {
        for (i, v) in sys.ineq.iter().enumerate() {
            a_eq[(r, i)] = v[r];
        }
        for (j, v) in sys.eq.iter().enumerate() {
            a_eq[(r, p + j)] = v[r];
            a_eq[(r, p + q + j)] = -v[r];
        }
    }
    for i in 0..p {
        a_eq[(n, i)] = 1.0;
    }
    b_eq[n] = 1.0;
    let (a_ub, b_ub) = match sys.values {
        Some((g, h)) => {
            let mut row = DMatrix::zeros(1, nv);
            for i in 0..p {
                row[(0, i)] = -g[i];
            }
            for j in 0..q {
                row[(0, p + j)] = -h[j];
                row[(0, p + q + j)] = h[j];
            }
            (row, DVector::zeros(1))
        }
        None => (DMatrix::zeros(0, nv), DVector::zeros(0)),
    };
    match solve_lp(&cost, &a_eq, &b_eq, &a_ub, &b_ub)? {
        LpOutcome::Optimal { x, .. } => {
            let lambda_ineq: Vec<f64> = (0..p).map(|i| x[i].max(0.0)).collect();
            let lambda_eq: Vec<f64> = (0..q).map(|j| x[p + j] - x[p + q + j]).collect();
            let total: f64 = lambda_ineq.iter().sum::<f64>()
                + lambda_eq.iter().map(|v| v.abs()).sum::<f64>();
            debug_assert!(total >= 1.0 - 1e-9, "normalization row pins the sum to one");
            Ok(Some((
                lambda_ineq.iter().map(|v| v / total).collect(),
                lambda_eq.iter().map(|v| v / total).collect(),
            )))
        }
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::LpFailure {
            detail: "multiplier search reported unbounded despite its normalization".to_string(),
        }),
    }
}

/// Solves the support program of the Mangasarian-Fromovitz style check:
/// maximize s subject to g_i + v_i'd <= -s, h_j + v_j'd = 0, s <= 1, with
/// d confined to the [`D_BOX`] box. Returns the attained margin and
/// direction, or `None` when the box admits no solution of the equality
/// rows at all.
fn support_margin(
    n: usize,
    limits: &LimitVectors,
    g: &[f64],
    h: &[f64],
) -> Result<Option<(f64, DVector<f64>)>> {
    let p = limits.ineq.len();
    let q = limits.eq.len();
    // Variables: d split into positive and negative parts, then s likewise.
    let nv = 2 * n + 2;
    let s_pos = 2 * n;
    let s_neg = 2 * n + 1;
    let mut cost = DVector::zeros(nv);
    cost[s_pos] = -1.0;
    cost[s_neg] = 1.0;
    let mut a_eq = DMatrix::zeros(q, nv);
    let mut b_eq = DVector::zeros(q);
    for (j, v) in limits.eq.iter().enumerate() {
        for r in 0..n {
            a_eq[(j, r)] = v[r];
            a_eq[(j, n + r)] = -v[r];
        }
        b_eq[j] = -h[j];
    }
    let m_ub = p + 1 + 2 * n;
    let mut a_ub = DMatrix::zeros(m_ub, nv);
    let mut b_ub = DVector::zeros(m_ub);
    for (i, v) in limits.ineq.iter().enumerate() {
        for r in 0..n {
            a_ub[(i, r)] = v[r];
            a_ub[(i, n + r)] = -v[r];
        }
        a_ub[(i, s_pos)] = 1.0;
        a_ub[(i, s_neg)] = -1.0;
        b_ub[i] = -g[i];
    }
    a_ub[(p, s_pos)] = 1.0;
    a_ub[(p, s_neg)] = -1.0;
    b_ub[p] = 1.0;
    for r in 0..(2 * n) {
        a_ub[(p + 1 + r, r)] = 1.0;
        b_ub[p + 1 + r] = D_BOX;
    }
    match solve_lp(&cost, &a_eq, &b_eq, &a_ub, &b_ub)? {
        LpOutcome::Optimal { x, objective } => {
            let direction = DVector::from_fn(n, |r, _| x[r] - x[n + r]);
            Ok(Some((-objective, direction)))
        }
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::LpFailure {
            detail: "support direction search reported unbounded inside its box".to_string(),
        }),
    }
}

/// Returns a null combination of the given vectors when they are linearly
/// dependent at the relative threshold, and `None` when independent. The
/// coefficient vector has unit Euclidean norm.
fn equality_null_vector(vectors: &[DVector<f64>], rank_tol: f64) -> Option<Vec<f64>> {
    let q = vectors.len();
    if q == 0 {
        return None;
    }
    let n = vectors[0].len();
    // Pad with zero rows so the thin SVD still exposes a full coefficient
    // basis when there are more vectors than dimensions.
    let rows = n.max(q);
    let stacked = DMatrix::from_fn(rows, q, |r, c| if r < n { vectors[c][r] } else { 0.0 });
    let svd = stacked.svd(false, true);
    let sv = &svd.singular_values;
    let mut largest = 0.0f64;
    let mut smallest = f64::INFINITY;
    let mut smallest_idx = 0;
    for (i, &s) in sv.iter().enumerate() {
        largest = largest.max(s);
        if s < smallest {
            smallest = s;
            smallest_idx = i;
        }
    }
    if largest <= f64::MIN_POSITIVE {
        let mut unit = vec![0.0; q];
        unit[0] = 1.0;
        return Some(unit);
    }
    if smallest > rank_tol * largest {
        return None;
    }
    let v_t = svd.v_t.expect("right singular vectors were requested");
    Some((0..q).map(|j| v_t[(smallest_idx, j)]).collect())
}

/// Rank test for stacked row vectors, scale-invariant by row normalization:
/// true iff no row is zero and the normalized rows have full row rank at
/// the relative singular-value threshold.
fn rows_linearly_independent(rows: &[DVector<f64>], rank_tol: f64) -> bool {
    if rows.is_empty() {
        return true;
    }
    let n = rows[0].len();
    if rows.len() > n {
        return false;
    }
    let mut normalized = Vec::with_capacity(rows.len());
    for row in rows {
        let norm = row.norm();
        if !norm.is_finite() || norm == 0.0 {
            return false;
        }
        normalized.push(row / norm);
    }
    let stacked = DMatrix::from_fn(rows.len(), n, |r, c| normalized[r][c]);
    let sv = stacked.singular_values();
    let largest = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let smallest = sv.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    smallest > rank_tol * largest
}
