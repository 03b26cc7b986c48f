//! Adaptive Gauss-Legendre quadrature for sharply peaked integrands over a
//! one- or two-dimensional box.
//!
//! The integrand is the exponential weight w(y) = exp(-rho * (f(y) - shift)).
//! Alongside its integral we accumulate the integral of w(y) * v(y) for a
//! caller-supplied vector field v, so that derivatives of log-partition
//! values can be formed from a single sweep. Peaks of width about
//! 1/sqrt(rho * curvature) fall far below any fixed grid, so the initial
//! partition is seeded with geometrically shrinking panels around supplied
//! minimizer seeds; adaptive bisection then refines to a relative tolerance
//! using a paired coarse/fine Gauss rule as the per-panel error estimate.
//!
//! All loops have fixed, data-independent iteration orders, so repeated runs
//! on identical inputs produce bit-identical results.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Hard cap on the number of panels in one integral, guarding runaway
/// refinement when the tolerance is unattainable.
const PANEL_CAP: usize = 16_384;

/// Exponent clamp that keeps the weight finite if a probe point undershoots
/// the shift (e.g. when the coarse scan missed the true minimum by a little).
const EXP_CLAMP: f64 = 700.0;

/// Integrand callback: returns f(y) and the companion vector integrated
/// alongside it (the gradient of f in the outer variables).
pub(crate) type PointEval<'a> = dyn FnMut(&DVector<f64>) -> (f64, DVector<f64>) + 'a;

/// Positive abscissas and weights of the 8-point Gauss-Legendre rule on
/// [-1, 1]; the negative abscissas mirror these with the same weights.
#[allow(clippy::excessive_precision)]
const GL8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_3),
];

/// Positive abscissas and weights of the 16-point Gauss-Legendre rule on
/// [-1, 1].
#[allow(clippy::excessive_precision)]
const GL16: [(f64, f64); 8] = [
    (0.095_012_509_837_637_4, 0.189_450_610_455_068_5),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (0.617_876_244_402_643_8, 0.149_595_988_816_576_7),
    (0.755_404_408_355_003_0, 0.124_628_971_255_533_9),
    (0.865_631_202_387_831_8, 0.095_158_511_682_492_8),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_9),
    (0.989_400_934_991_649_9, 0.027_152_459_411_754_1),
];

/// Result of one weighted box integral.
pub(crate) struct BoltzmannIntegral {
    /// Integral of exp(-rho * (f - shift)).
    pub total: f64,
    /// Integral of exp(-rho * (f - shift)) * v, component-wise.
    pub weighted: DVector<f64>,
    /// Final absolute error estimate on `total`.
    pub error: f64,
    /// Number of panels in the final partition.
    pub panels: usize,
}

/// One box panel with its paired coarse/fine quadrature values. The second
/// coordinate slots are unused in one dimension.
#[derive(Clone)]
struct Panel {
    lo: [f64; 2],
    hi: [f64; 2],
    depth: usize,
    fine: f64,
    coarse: f64,
    weighted: DVector<f64>,
}

impl Panel {
    /// Error estimate for the fine value. The raw coarse/fine difference
    /// measures the coarse rule's error and vastly overstates the fine
    /// rule's once a panel is nearly resolved; left unscaled, the floor
    /// noise of many resolved panels can sum past any tight tolerance. The
    /// rescaling below, standard in adaptive Gauss-Kronrod codes, damps the
    /// difference once it is small relative to the panel's own magnitude
    /// while staying conservative (err = difference) on unresolved panels.
    fn error(&self) -> f64 {
        let difference = (self.fine - self.coarse).abs();
        if difference == 0.0 {
            return 0.0;
        }
        let scale = self
            .fine
            .abs()
            .max(self.coarse.abs())
            .max(f64::MIN_POSITIVE);
        let ratio = (difference / scale).min(1.0);
        difference * (200.0 * ratio).powf(1.5).min(1.0)
    }
}

fn boltzmann_weight(rho: f64, f: f64, shift: f64) -> f64 {
    (-rho * (f - shift)).min(EXP_CLAMP).exp()
}

/// Evaluates one panel with the 16-point rule (value and vector weight) and
/// the 8-point rule (value only, for the error estimate).
#[allow(clippy::too_many_arguments)]
fn eval_panel(
    eval: &mut PointEval<'_>,
    vdim: usize,
    rho: f64,
    shift: f64,
    m: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    depth: usize,
) -> Panel {
    let mut fine = 0.0;
    let mut coarse = 0.0;
    let mut weighted = DVector::zeros(vdim);
    let mut point = DVector::zeros(m);
    if m == 1 {
        let mid = 0.5 * (lo[0] + hi[0]);
        let half = 0.5 * (hi[0] - lo[0]);
        for &(node, weight) in &GL16 {
            for sign in [-1.0f64, 1.0] {
                point[0] = mid + sign * half * node;
                let (f, v) = eval(&point);
                let w = weight * boltzmann_weight(rho, f, shift);
                fine += w;
                weighted.axpy(w, &v, 1.0);
            }
        }
        for &(node, weight) in &GL8 {
            for sign in [-1.0f64, 1.0] {
                point[0] = mid + sign * half * node;
                let (f, _) = eval(&point);
                coarse += weight * boltzmann_weight(rho, f, shift);
            }
        }
        fine *= half;
        coarse *= half;
        weighted *= half;
    } else {
        let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let half = [0.5 * (hi[0] - lo[0]), 0.5 * (hi[1] - lo[1])];
        for &(n0, w0) in &GL16 {
            for s0 in [-1.0f64, 1.0] {
                point[0] = mid[0] + s0 * half[0] * n0;
                for &(n1, w1) in &GL16 {
                    for s1 in [-1.0f64, 1.0] {
                        point[1] = mid[1] + s1 * half[1] * n1;
                        let (f, v) = eval(&point);
                        let w = w0 * w1 * boltzmann_weight(rho, f, shift);
                        fine += w;
                        weighted.axpy(w, &v, 1.0);
                    }
                }
            }
        }
        for &(n0, w0) in &GL8 {
            for s0 in [-1.0f64, 1.0] {
                point[0] = mid[0] + s0 * half[0] * n0;
                for &(n1, w1) in &GL8 {
                    for s1 in [-1.0f64, 1.0] {
                        point[1] = mid[1] + s1 * half[1] * n1;
                        let (f, _) = eval(&point);
                        coarse += w0 * w1 * boltzmann_weight(rho, f, shift);
                    }
                }
            }
        }
        let area = half[0] * half[1];
        fine *= area;
        coarse *= area;
        weighted *= area;
    }
    Panel { lo, hi, depth, fine, coarse, weighted }
}

/// Edges of a geometric panel ladder around one seed along one coordinate.
/// Radii halve until probes on both sides sit inside the peak core, i.e.
/// rho * (f - seed value) has dropped below order one, so the innermost
/// panels straddle the peak at its own length scale.
fn ladder_edges_for_seed(
    eval: &mut PointEval<'_>,
    dim: usize,
    lo: f64,
    hi: f64,
    rho: f64,
    seed_value: f64,
    seed: &DVector<f64>,
) -> Vec<f64> {
    let width = hi - lo;
    let center = seed[dim];
    let mut probe = seed.clone();
    let mut edges = Vec::new();
    let mut level = 1i32;
    loop {
        let radius = width * 0.5f64.powi(level);
        let mut inside_core = true;
        for sign in [-1.0f64, 1.0] {
            let y = (center + sign * radius).clamp(lo, hi);
            if (y - center).abs() > width * 1e-15 {
                edges.push(y);
                probe[dim] = y;
                let (f, _) = eval(&probe);
                if rho * (f - seed_value) > 0.75 {
                    inside_core = false;
                }
            }
        }
        level += 1;
        if inside_core || level > 60 {
            break;
        }
    }
    edges
}

/// Integrates exp(-rho (f - shift)) and its v-weighted companion over the box
/// [y_lo, y_hi] (one or two dimensions). `seeds` are (value, point) pairs of
/// local minimizers of f used to seed the initial partition; minimizer basins
/// not represented by a seed and finer than the initial partition may be
/// missed. Fails with a budget error when `max_depth` levels of bisection or
/// the global panel cap cannot reach `rel_tol`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate_boltzmann(
    eval: &mut PointEval<'_>,
    vdim: usize,
    shift: f64,
    rho: f64,
    y_lo: &DVector<f64>,
    y_hi: &DVector<f64>,
    seeds: &[(f64, DVector<f64>)],
    max_depth: usize,
    rel_tol: f64,
) -> Result<BoltzmannIntegral> {
    let m = y_lo.len();
    debug_assert!(m == 1 || m == 2, "box dimension must be 1 or 2");

    let mut dim_edges: Vec<Vec<f64>> = Vec::with_capacity(m);
    for dim in 0..m {
        let lo = y_lo[dim];
        let hi = y_hi[dim];
        let width = hi - lo;
        let mut edges = vec![lo, hi];
        if m == 1 {
            for (value, point) in seeds.iter().take(32) {
                edges.extend(ladder_edges_for_seed(
                    &mut *eval, dim, lo, hi, rho, *value, point,
                ));
            }
        } else {
            // In two dimensions a probed ladder per seed would explode into a
            // tensor product, so seed two fixed levels per minimizer and let
            // bisection do the rest; adequate for moderate sharpness.
            for (_, point) in seeds.iter().take(3) {
                edges.push(point[dim].clamp(lo, hi));
                for radius in [width * 0.25, width * 0.0625] {
                    for sign in [-1.0f64, 1.0] {
                        edges.push((point[dim] + sign * radius).clamp(lo, hi));
                    }
                }
            }
        }
        edges.sort_by(f64::total_cmp);
        edges.dedup_by(|a, b| (*a - *b).abs() <= width * 1e-14);
        dim_edges.push(edges);
    }

    let mut panels: Vec<Panel> = Vec::new();
    if m == 1 {
        for pair in dim_edges[0].windows(2) {
            panels.push(eval_panel(
                &mut *eval,
                vdim,
                rho,
                shift,
                m,
                [pair[0], 0.0],
                [pair[1], 0.0],
                0,
            ));
        }
    } else {
        for pair0 in dim_edges[0].windows(2) {
            for pair1 in dim_edges[1].windows(2) {
                panels.push(eval_panel(
                    &mut *eval,
                    vdim,
                    rho,
                    shift,
                    m,
                    [pair0[0], pair1[0]],
                    [pair0[1], pair1[1]],
                    0,
                ));
            }
        }
    }

    loop {
        let total: f64 = panels.iter().map(|p| p.fine).sum();
        let err: f64 = panels.iter().map(Panel::error).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::QuadratureBudget {
                estimate: total,
                error_estimate: f64::NAN,
                panels: panels.len(),
            });
        }
        if err <= rel_tol * total.max(f64::MIN_POSITIVE) {
            let mut weighted = DVector::zeros(vdim);
            for panel in &panels {
                weighted += &panel.weighted;
            }
            return Ok(BoltzmannIntegral {
                total,
                weighted,
                error: err,
                panels: panels.len(),
            });
        }

        let mut worst = 0;
        for (i, panel) in panels.iter().enumerate() {
            if panel.error() > panels[worst].error() {
                worst = i;
            }
        }
        let split_dim = if m == 1 {
            0
        } else {
            let rel0 = (panels[worst].hi[0] - panels[worst].lo[0]) / (y_hi[0] - y_lo[0]);
            let rel1 = (panels[worst].hi[1] - panels[worst].lo[1]) / (y_hi[1] - y_lo[1]);
            if rel0 >= rel1 { 0 } else { 1 }
        };
        let mid = 0.5 * (panels[worst].lo[split_dim] + panels[worst].hi[split_dim]);
        let splittable = mid > panels[worst].lo[split_dim] && mid < panels[worst].hi[split_dim];
        if panels[worst].depth >= max_depth || panels.len() >= PANEL_CAP || !splittable {
            return Err(Error::QuadratureBudget {
                estimate: total,
                error_estimate: err / total.max(f64::MIN_POSITIVE),
                panels: panels.len(),
            });
        }
        let parent = panels[worst].clone();
        let mut left_hi = parent.hi;
        left_hi[split_dim] = mid;
        let mut right_lo = parent.lo;
        right_lo[split_dim] = mid;
        let left = eval_panel(
            &mut *eval,
            vdim,
            rho,
            shift,
            m,
            parent.lo,
            left_hi,
            parent.depth + 1,
        );
        let right = eval_panel(
            &mut *eval,
            vdim,
            rho,
            shift,
            m,
            right_lo,
            parent.hi,
            parent.depth + 1,
        );
        panels[worst] = left;
        panels.insert(worst + 1, right);
    }
}

/// Golden-section minimization of a scalar function on [a, b], tracking the
/// best point ever evaluated (endpoints included), so a boundary minimum is
/// returned exactly. Ties resolve to the smaller argument, which keeps the
/// result deterministic. Returns (value, argmin).
pub(crate) fn golden_section_min(
    eval: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    fn consider(value: f64, point: f64, best: &mut (f64, f64)) {
        if value < best.0 || (value == best.0 && point < best.1) {
            *best = (value, point);
        }
    }

    let mut lo = a.min(b);
    let mut hi = a.max(b);
    let mut best = (f64::INFINITY, lo);
    consider(eval(lo), lo, &mut best);
    consider(eval(hi), hi, &mut best);
    if hi <= lo {
        return best;
    }
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    consider(f1, x1, &mut best);
    consider(f2, x2, &mut best);
    for _ in 0..200 {
        if hi - lo <= 1e-17 * (1.0 + lo.abs() + hi.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = eval(x1);
            consider(f1, x1, &mut best);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = eval(x2);
            consider(f2, x2, &mut best);
        }
    }
    best
}

/// Two-dimensional local polish by alternating golden-section line searches
/// along each coordinate, with a shrinking trust window. Returns the best
/// point found.
fn polish_2d(
    eval: &mut dyn FnMut(&DVector<f64>) -> f64,
    y_lo: &DVector<f64>,
    y_hi: &DVector<f64>,
    start: DVector<f64>,
    step: [f64; 2],
) -> (f64, DVector<f64>) {
    let mut point = start;
    let mut best = eval(&point);
    let mut window = [1.5 * step[0], 1.5 * step[1]];
    for round in 0..30 {
        let before = best;
        for dim in 0..2 {
            let a = (point[dim] - window[dim]).max(y_lo[dim]);
            let b = (point[dim] + window[dim]).min(y_hi[dim]);
            let mut line = |t: f64| {
                let mut p = point.clone();
                p[dim] = t;
                eval(&p)
            };
            let (value, arg) = golden_section_min(&mut line, a, b);
            if value < best {
                best = value;
                point[dim] = arg;
            }
        }
        window[0] *= 0.6;
        window[1] *= 0.6;
        if round > 4 && before - best <= 1e-18 * (1.0 + best.abs()) {
            break;
        }
    }
    (best, point)
}

/// Scans a uniform grid over the box, polishes every grid-local minimum
/// (domain endpoints included), and returns the distinct results sorted by
/// value then position, truncated to `max_keep`. Interior plateau points are
/// skipped so a flat function yields only its corner points.
pub(crate) fn polished_minima(
    eval: &mut dyn FnMut(&DVector<f64>) -> f64,
    y_lo: &DVector<f64>,
    y_hi: &DVector<f64>,
    grid_per_dim: usize,
    max_keep: usize,
) -> Vec<(f64, DVector<f64>)> {
    let m = y_lo.len();
    debug_assert!(m == 1 || m == 2, "box dimension must be 1 or 2");
    let n = grid_per_dim.max(2);
    let axis = |dim: usize| -> Vec<f64> {
        let step = (y_hi[dim] - y_lo[dim]) / (n - 1) as f64;
        (0..n)
            .map(|i| if i + 1 == n { y_hi[dim] } else { y_lo[dim] + step * i as f64 })
            .collect()
    };

    let mut candidates: Vec<(f64, DVector<f64>)> = Vec::new();
    if m == 1 {
        let ys = axis(0);
        let mut point = DVector::zeros(1);
        let values: Vec<f64> = ys
            .iter()
            .map(|&y| {
                point[0] = y;
                eval(&point)
            })
            .collect();
        for i in 0..n {
            let le_left = i == 0 || values[i] <= values[i - 1];
            let le_right = i + 1 == n || values[i] <= values[i + 1];
            if !(le_left && le_right) {
                continue;
            }
            let strict = (i > 0 && values[i] < values[i - 1])
                || (i + 1 < n && values[i] < values[i + 1]);
            let endpoint = i == 0 || i + 1 == n;
            if !(strict || endpoint) {
                continue;
            }
            let a = ys[i.saturating_sub(1)];
            let b = ys[(i + 1).min(n - 1)];
            let mut line = |t: f64| {
                let mut p = DVector::zeros(1);
                p[0] = t;
                eval(&p)
            };
            let (value, arg) = golden_section_min(&mut line, a, b);
            candidates.push((value, DVector::from_element(1, arg)));
        }
    } else {
        let ys0 = axis(0);
        let ys1 = axis(1);
        let step = [ys0[1] - ys0[0], ys1[1] - ys1[0]];
        let mut point = DVector::zeros(2);
        let mut values = vec![0.0; n * n];
        for (i, &y0) in ys0.iter().enumerate() {
            for (j, &y1) in ys1.iter().enumerate() {
                point[0] = y0;
                point[1] = y1;
                values[i * n + j] = eval(&point);
            }
        }
        let at = |i: usize, j: usize| values[i * n + j];
        // Neighbor-stencil walk: the indices address the four-point stencil,
        // not just the axis vectors.
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            for j in 0..n {
                let v = at(i, j);
                let mut le_all = true;
                let mut strict_any = false;
                let mut visit = |nv: f64| {
                    if v > nv {
                        le_all = false;
                    } else if v < nv {
                        strict_any = true;
                    }
                };
                if i > 0 {
                    visit(at(i - 1, j));
                }
                if i + 1 < n {
                    visit(at(i + 1, j));
                }
                if j > 0 {
                    visit(at(i, j - 1));
                }
                if j + 1 < n {
                    visit(at(i, j + 1));
                }
                let corner = (i == 0 || i + 1 == n) && (j == 0 || j + 1 == n);
                if !(le_all && (strict_any || corner)) {
                    continue;
                }
                let start = DVector::from_vec(vec![ys0[i], ys1[j]]);
                let (value, arg) = polish_2d(&mut *eval, y_lo, y_hi, start, step);
                candidates.push((value, arg));
            }
        }
    }

    candidates.sort_by(|p, q| {
        p.0.total_cmp(&q.0).then_with(|| {
            for (a, b) in p.1.iter().zip(q.1.iter()) {
                let order = a.total_cmp(b);
                if order != std::cmp::Ordering::Equal {
                    return order;
                }
            }
            std::cmp::Ordering::Equal
        })
    });
    let scale = (0..m).map(|d| y_hi[d] - y_lo[d]).fold(0.0f64, f64::max);
    let mut kept: Vec<(f64, DVector<f64>)> = Vec::new();
    for candidate in candidates {
        if kept
            .iter()
            .all(|k| (&candidate.1 - &k.1).amax() > scale * 1e-9)
        {
            kept.push(candidate);
        }
        if kept.len() == max_keep {
            break;
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_seed(y: f64, value: f64) -> Vec<(f64, DVector<f64>)> {
        vec![(value, DVector::from_element(1, y))]
    }

    #[test]
    fn constant_integrand_recovers_box_measure() {
        let mut eval = |y: &DVector<f64>| (0.0, DVector::from_element(1, y[0]));
        let out = integrate_boltzmann(
            &mut eval,
            1,
            0.0,
            3.0,
            &DVector::from_element(1, 0.0),
            &DVector::from_element(1, 1.0),
            &unit_seed(0.5, 0.0),
            12,
            1e-12,
        )
        .unwrap();
        assert_relative_eq!(out.total, 1.0, max_relative = 1e-13);
        // v = y, so the weighted integral is the first moment of the box.
        assert_relative_eq!(out.weighted[0], 0.5, max_relative = 1e-12);

        let mut eval = |_: &DVector<f64>| (0.0, DVector::zeros(0));
        let out = integrate_boltzmann(
            &mut eval,
            0,
            0.0,
            3.0,
            &DVector::from_element(1, 0.0),
            &DVector::from_element(1, std::f64::consts::E),
            &unit_seed(1.0, 0.0),
            12,
            1e-12,
        )
        .unwrap();
        assert_relative_eq!(out.total, std::f64::consts::E, max_relative = 1e-13);
    }

    #[test]
    fn gaussian_partition_function_is_exact() {
        let mut eval = |y: &DVector<f64>| (y[0] * y[0], DVector::zeros(0));
        let out = integrate_boltzmann(
            &mut eval,
            0,
            0.0,
            1.0,
            &DVector::from_element(1, -8.0),
            &DVector::from_element(1, 8.0),
            &unit_seed(0.0, 0.0),
            20,
            1e-12,
        )
        .unwrap();
        assert_relative_eq!(out.total, std::f64::consts::PI.sqrt(), max_relative = 1e-11);
    }

    #[test]
    fn sharp_gaussian_peak_is_resolved_by_the_seed_ladder() {
        let rho = 1e8;
        let mut eval = |y: &DVector<f64>| (y[0] * y[0], DVector::zeros(0));
        let out = integrate_boltzmann(
            &mut eval,
            0,
            0.0,
            rho,
            &DVector::from_element(1, -8.0),
            &DVector::from_element(1, 8.0),
            &unit_seed(0.0, 0.0),
            12,
            1e-10,
        )
        .unwrap();
        assert_relative_eq!(
            out.total,
            (std::f64::consts::PI / rho).sqrt(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn twin_wells_match_the_laplace_estimate() {
        let rho = 1e4;
        let mut eval = |y: &DVector<f64>| {
            let t = y[0] * y[0] - 1.0;
            (t * t, DVector::zeros(0))
        };
        let seeds = vec![
            (0.0, DVector::from_element(1, -1.0)),
            (0.0, DVector::from_element(1, 1.0)),
        ];
        let out = integrate_boltzmann(
            &mut eval,
            0,
            0.0,
            rho,
            &DVector::from_element(1, -2.0),
            &DVector::from_element(1, 2.0),
            &seeds,
            12,
            1e-10,
        )
        .unwrap();
        // Each well has curvature 8, so the two-well Laplace estimate is
        // 2 * sqrt(2 pi / (8 rho)).
        let laplace = 2.0 * (2.0 * std::f64::consts::PI / (8.0 * rho)).sqrt();
        assert_relative_eq!(out.total, laplace, max_relative = 1e-3);
    }

    #[test]
    fn two_dimensional_gaussian_product_is_exact() {
        let rho = 10.0;
        let mut eval = |y: &DVector<f64>| (y[0] * y[0] + y[1] * y[1], DVector::zeros(0));
        let out = integrate_boltzmann(
            &mut eval,
            0,
            0.0,
            rho,
            &DVector::from_element(2, -3.0),
            &DVector::from_element(2, 3.0),
            &[(0.0, DVector::zeros(2))],
            12,
            1e-10,
        )
        .unwrap();
        assert_relative_eq!(out.total, std::f64::consts::PI / rho, max_relative = 1e-8);
    }

    #[test]
    fn kink_off_the_panel_grid_exhausts_the_budget() {
        // A corner at an irrational offset is never hit by bisection, so the
        // coarse/fine disagreement on the panel containing it decays too
        // slowly for a tight tolerance within a small depth budget.
        let kink = 0.234_567_890_1;
        let mut eval = |y: &DVector<f64>| ((y[0] - kink).abs(), DVector::zeros(0));
        // Seed away from the corner so the panel edges never align with it.
        let result = integrate_boltzmann(
            &mut eval,
            0,
            0.0,
            5.0,
            &DVector::from_element(1, -1.0),
            &DVector::from_element(1, 1.0),
            &unit_seed(0.0, kink),
            6,
            1e-13,
        );
        assert!(matches!(result, Err(Error::QuadratureBudget { .. })));
    }

    #[test]
    fn integration_is_deterministic() {
        let run = || {
            let mut eval = |y: &DVector<f64>| {
                ((y[0] - 0.3).powi(2), DVector::from_element(1, y[0].cos()))
            };
            integrate_boltzmann(
                &mut eval,
                1,
                0.0,
                1e5,
                &DVector::from_element(1, -2.0),
                &DVector::from_element(1, 2.0),
                &unit_seed(0.3, 0.0),
                12,
                1e-10,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.total.to_bits(), b.total.to_bits());
        assert_eq!(a.weighted[0].to_bits(), b.weighted[0].to_bits());
        assert_eq!(a.panels, b.panels);
    }

    #[test]
    fn golden_section_finds_interior_and_boundary_minima() {
        let mut quad = |t: f64| (t - 0.3).powi(2);
        let (value, arg) = golden_section_min(&mut quad, 0.0, 1.0);
        assert!(value <= 1e-18);
        assert!((arg - 0.3).abs() <= 1e-9);

        let mut rising = |t: f64| t;
        let (value, arg) = golden_section_min(&mut rising, 2.0, 5.0);
        assert_eq!(value, 2.0);
        assert_eq!(arg, 2.0);
    }

    #[test]
    fn polished_minima_find_both_wells_of_a_double_well() {
        let mut eval = |y: &DVector<f64>| {
            let t = y[0] * y[0] - 1.0;
            t * t
        };
        let minima = polished_minima(
            &mut eval,
            &DVector::from_element(1, -2.0),
            &DVector::from_element(1, 2.0),
            41,
            8,
        );
        assert_eq!(minima.len(), 2);
        for (value, point) in &minima {
            assert!(*value <= 1e-15);
            assert!((point[0].abs() - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn flat_function_keeps_only_its_endpoints() {
        let mut eval = |_: &DVector<f64>| 4.0;
        let minima = polished_minima(
            &mut eval,
            &DVector::from_element(1, 0.0),
            &DVector::from_element(1, 1.0),
            21,
            8,
        );
        assert_eq!(minima.len(), 2);
        assert!(minima.iter().all(|(v, _)| *v == 4.0));
    }

    #[test]
    fn two_dimensional_minimum_is_polished() {
        let mut eval = |y: &DVector<f64>| (y[0] - 0.2).powi(2) + (y[1] + 0.3).powi(2);
        let minima = polished_minima(
            &mut eval,
            &DVector::from_element(2, -1.0),
            &DVector::from_element(2, 1.0),
            21,
            4,
        );
        assert!(!minima.is_empty());
        let (value, point) = &minima[0];
        assert!(*value <= 1e-12);
        assert!((point[0] - 0.2).abs() <= 1e-5);
        assert!((point[1] + 0.3).abs() <= 1e-5);
    }
}
