//! Box-counting and Minkowski-sausage dimension estimates, and numerical
//! tests of codimension-print membership.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::distance::{DistanceEvaluator, MeasureConfig, DEFAULT_DELTA_MIN};
use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::fit::{least_squares, local_slopes};
use crate::geometry::{BoxDomain, KdTree, PointSet};
use crate::rng::{key2, keyed, uniform, Rng};
use crate::sets::{Representation, SpaceTimeSet, TimeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimensionMethod {
    GridCount,
    Minkowski,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionEstimate {
    pub fitted_dim: f64,
    /// Largest local slope between adjacent scales.
    pub upper_proxy: f64,
    /// Smallest local slope between adjacent scales.
    pub lower_proxy: f64,
    pub r_squared: f64,
    pub slope_stderr: f64,
    /// `(ε_min, ε_max)`.
    pub scale_window: (f64, f64),
    pub method: DimensionMethod,
    /// Scales in the order supplied.
    pub scales: Vec<f64>,
    /// Counts (grid) or measures (Minkowski) per scale.
    pub values: Vec<f64>,
    /// Poor fit or a Monte Carlo estimate missed its precision target.
    pub low_confidence: bool,
}

/// Number of occupied cells of the grid with mesh `ε/√n` anchored at the
/// coordinate-wise minimum of `points`. Each cell has diameter `ε`.
pub fn box_count(points: &PointSet, eps: f64) -> Result<usize> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid("epsilon", "must be positive and finite"));
    }
    let bbox = points.bounding_box().ok_or(Error::EmptySet)?;
    let n = points.dim();
    let diam = libm::sqrt(
        bbox.lo
            .iter()
            .zip(&bbox.hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>(),
    );
    if eps >= diam {
        return Ok(1);
    }
    let h = eps / libm::sqrt(n as f64);
    let mut cells: Vec<Vec<i64>> = points
        .iter()
        .map(|p| {
            p.iter()
                .zip(&bbox.lo)
                .map(|(x, lo)| libm::floor((x - lo) / h) as i64)
                .collect()
        })
        .collect();
    cells.sort_unstable();
    cells.dedup();
    Ok(cells.len())
}

/// Geometric ladder `hi, hi·r, …` with `count` entries.
pub fn geometric_ladder(hi: f64, ratio: f64, count: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(count);
    let mut e = hi;
    for _ in 0..count {
        v.push(e);
        e *= ratio;
    }
    v
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.len() < 2 {
        return Err(Error::DegenerateLadder("need at least two scales".into()));
    }
    if ladder.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::DegenerateLadder("scales must be positive and finite".into()));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::DegenerateLadder("scales must be strictly decreasing".into()));
    }
    Ok(())
}

fn window(ladder: &[f64]) -> (f64, f64) {
    (ladder[ladder.len() - 1], ladder[0])
}

/// Least-squares slope of `log N(ε)` against `−log ε`.
pub fn estimate_box_dimension(points: &PointSet, ladder: &[f64]) -> Result<DimensionEstimate> {
    check_ladder(ladder)?;
    let counts = ladder
        .iter()
        .map(|&e| box_count(points, e))
        .collect::<Result<Vec<_>>>()?;
    let mut distinct = counts.clone();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateLadder("fewer than two distinct counts".into()));
    }
    let xs: Vec<f64> = ladder.iter().map(|e| -libm::log(*e)).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| libm::log(c as f64)).collect();
    let fit = least_squares(&xs, &ys).ok_or_else(|| Error::DegenerateLadder("singular fit".into()))?;
    let local = local_slopes(&xs, &ys);
    let upper = local.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lower = local.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DimensionEstimate {
        fitted_dim: fit.slope.clamp(lower, upper),
        upper_proxy: upper,
        lower_proxy: lower,
        r_squared: fit.r_squared,
        slope_stderr: fit.slope_stderr,
        scale_window: window(ladder),
        method: DimensionMethod::GridCount,
        scales: ladder.to_vec(),
        values: counts.iter().map(|&c| c as f64).collect(),
        low_confidence: fit.r_squared < 0.9,
    })
}

/// `n − slope` of `log μₙ({d_{S(t)} < ε})` against `log ε`.
pub fn estimate_minkowski_dimension<E: Executor>(
    exec: &E,
    e: &DistanceEvaluator,
    t: f64,
    ladder: &[f64],
    domain: &BoxDomain,
    cfg: &MeasureConfig,
) -> Result<DimensionEstimate> {
    check_ladder(ladder)?;
    let n = e.ambient_dim() as f64;
    let mut values = Vec::with_capacity(ladder.len());
    let mut low = false;
    for (k, &eps) in ladder.iter().enumerate() {
        let cfg_k = MeasureConfig {
            key: key2(cfg.key, k as u64),
            ..cfg.clone()
        };
        let m = e.neighborhood_measure(exec, t, eps, domain, &cfg_k)?;
        low |= m.low_confidence;
        if !(m.value > 0.0) {
            return Err(Error::DegenerateLadder("zero neighbourhood measure".into()));
        }
        values.push(m.value);
    }
    let xs: Vec<f64> = ladder.iter().map(|e| libm::log(*e)).collect();
    let ys: Vec<f64> = values.iter().map(|v| libm::log(*v)).collect();
    let fit = least_squares(&xs, &ys).ok_or_else(|| Error::DegenerateLadder("singular fit".into()))?;
    let local = local_slopes(&xs, &ys);
    let smax = local.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let smin = local.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DimensionEstimate {
        fitted_dim: n - fit.slope.clamp(smin, smax),
        upper_proxy: n - smin,
        lower_proxy: n - smax,
        r_squared: fit.r_squared,
        slope_stderr: fit.slope_stderr,
        scale_window: window(ladder),
        method: DimensionMethod::Minkowski,
        scales: ladder.to_vec(),
        values,
        low_confidence: low || fit.r_squared < 0.9,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Member,
    NonMember,
    Inconclusive,
}

/// Scaling of one time slice: `μₙ({x : d_S(t,x) < ε}) ~ ε^γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceFit {
    pub t: f64,
    /// `+∞` when the slice stays away from `S` at every scale.
    pub gamma: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrintVerdict {
    pub alpha: f64,
    pub beta: f64,
    pub verdict: Verdict,
    pub slices: Vec<SliceFit>,
    /// Minimum of `γ(t)` over the time grid.
    pub gamma_min: f64,
    /// Minimum over every other grid point, to expose grid dependence.
    pub gamma_min_coarse: f64,
    /// Exponent of `μ₁({t : dist(t, P_t S) < σ}) ~ σ^θ`.
    pub theta: f64,
    pub margin: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrintConfig {
    pub margin: f64,
    /// Decreasing spatial scales for the slice fits.
    pub eps_ladder: Vec<f64>,
    /// Decreasing temporal scales for `θ`.
    pub sigma_ladder: Vec<f64>,
    /// Explicit time grid; derived from the set when `None`.
    pub time_grid: Option<Vec<f64>>,
    pub time_samples: usize,
    pub measure: MeasureConfig,
}

impl Default for PrintConfig {
    fn default() -> Self {
        Self {
            margin: 0.1,
            eps_ladder: geometric_ladder(0.125, 0.5, 8),
            sigma_ladder: geometric_ladder(0.0625, 0.5, 8),
            time_grid: None,
            time_samples: 5,
            measure: MeasureConfig {
                min_samples: 32_768,
                max_samples: 1 << 19,
                target_rel_error: 0.02,
                ..MeasureConfig::default()
            },
        }
    }
}

fn default_time_grid(s: &SpaceTimeSet, samples: usize) -> Vec<f64> {
    let samples = samples.max(1);
    let uniform_grid = |a: f64, b: f64| -> Vec<f64> {
        if samples == 1 {
            return vec![0.5 * (a + b)];
        }
        (0..samples)
            .map(|i| a + (b - a) * i as f64 / (samples - 1) as f64)
            .collect()
    };
    let pick = |times: &[f64]| -> Vec<f64> {
        if times.len() <= samples {
            return times.to_vec();
        }
        (0..samples)
            .map(|i| times[i * (times.len() - 1) / (samples - 1).max(1)])
            .collect()
    };
    match &s.representation {
        Representation::Product { times, .. } => match times {
            TimeSet::Interval { start, end } => uniform_grid(*start, *end),
            TimeSet::Finite { times, .. } => pick(times),
        },
        Representation::Graph { .. } => uniform_grid(0.0, s.horizon),
        Representation::Cloud { points, .. } => {
            let mut ts: Vec<f64> = points.iter().map(|p| p[0]).collect();
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            pick(&ts)
        }
    }
}

/// Time projection `P_t S` as a sorted list of closed intervals.
fn time_projection(s: &SpaceTimeSet) -> Vec<(f64, f64)> {
    match &s.representation {
        Representation::Product { times, .. } => match times {
            TimeSet::Interval { start, end } => vec![(*start, *end)],
            TimeSet::Finite { times, .. } => times.iter().map(|&t| (t, t)).collect(),
        },
        Representation::Graph { .. } => vec![(0.0, s.horizon)],
        Representation::Cloud { points, .. } => {
            let mut ts: Vec<f64> = points.iter().map(|p| p[0]).collect();
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            ts.into_iter().map(|t| (t, t)).collect()
        }
    }
}

/// Exact length of `[lo, hi] ∩ ⋃ (aᵢ − σ, bᵢ + σ)` for sorted intervals.
pub fn union_length(intervals: &[(f64, f64)], sigma: f64, lo: f64, hi: f64) -> f64 {
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for &(a, b) in intervals {
        let (a, b) = ((a - sigma).max(lo), (b + sigma).min(hi));
        if b <= a {
            continue;
        }
        cur = match cur {
            Some((c0, c1)) if a <= c1 => Some((c0, c1.max(b))),
            Some((c0, c1)) => {
                total += c1 - c0;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((c0, c1)) = cur {
        total += c1 - c0;
    }
    total
}

fn fit_theta(s: &SpaceTimeSet, sigmas: &[f64]) -> Result<f64> {
    check_ladder(sigmas)?;
    let proj = time_projection(s);
    let xs: Vec<f64> = sigmas.iter().map(|v| libm::log(*v)).collect();
    let ys: Vec<f64> = sigmas
        .iter()
        .map(|&sg| libm::log(union_length(&proj, sg, 0.0, s.horizon)))
        .collect();
    let fit = least_squares(&xs, &ys).ok_or_else(|| Error::DegenerateLadder("theta fit".into()))?;
    Ok(fit.slope.max(0.0))
}

/// Estimates whether `d_S⁻¹ ∈ L^β(0,T; L^α_loc)`.
///
/// Each slice exponent `γ(t)` is fitted from the Monte Carlo measure of
/// `{x : d_S(t,x) < ε}`. The spatial integral of `d_S(t,·)^{−α}` is finite
/// when `α < γ − margin` and infinite when `α > γ + margin`. Finite `β`
/// is then decided by comparing the blow-up rate `(α − γ)β/α` of the
/// spatial norm near singular times with the temporal exponent `θ`.
pub fn print_membership<E: Executor>(
    exec: &E,
    e: &DistanceEvaluator,
    alpha: f64,
    beta: f64,
    domain: &BoxDomain,
    eps_floor: f64,
    cfg: &PrintConfig,
) -> Result<PrintVerdict> {
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(invalid("exponents", "must lie in (0, ∞]"));
    }
    if !(eps_floor > e.error_bound()) {
        return Err(invalid("eps_floor", "must exceed the evaluator error bound"));
    }
    let ladder: Vec<f64> = cfg.eps_ladder.iter().copied().filter(|&v| v >= eps_floor).collect();
    check_ladder(&ladder)?;
    let grid = cfg
        .time_grid
        .clone()
        .unwrap_or_else(|| default_time_grid(e.target(), cfg.time_samples));
    let slices = slice_fits(exec, e, &grid, &ladder, domain, &cfg.measure)?;
    let theta = fit_theta(e.target(), &cfg.sigma_ladder)?;
    Ok(decide(alpha, beta, slices, theta, cfg.margin))
}

/// [`print_membership`] for many exponent pairs sharing one set of slice fits.
pub fn print_scan<E: Executor>(
    exec: &E,
    e: &DistanceEvaluator,
    pairs: &[(f64, f64)],
    domain: &BoxDomain,
    eps_floor: f64,
    cfg: &PrintConfig,
) -> Result<Vec<PrintVerdict>> {
    if pairs.iter().any(|(a, b)| !(*a > 0.0) || !(*b > 0.0)) {
        return Err(invalid("exponents", "must lie in (0, ∞]"));
    }
    if !(eps_floor > e.error_bound()) {
        return Err(invalid("eps_floor", "must exceed the evaluator error bound"));
    }
    let ladder: Vec<f64> = cfg.eps_ladder.iter().copied().filter(|&v| v >= eps_floor).collect();
    check_ladder(&ladder)?;
    let grid = cfg
        .time_grid
        .clone()
        .unwrap_or_else(|| default_time_grid(e.target(), cfg.time_samples));
    let slices = slice_fits(exec, e, &grid, &ladder, domain, &cfg.measure)?;
    let theta = fit_theta(e.target(), &cfg.sigma_ladder)?;
    Ok(pairs
        .iter()
        .map(|&(a, b)| decide(a, b, slices.clone(), theta, cfg.margin))
        .collect())
}

/// Slice exponents on a time grid. Shared by scans over many `(α, β)`.
pub fn slice_fits<E: Executor>(
    exec: &E,
    e: &DistanceEvaluator,
    grid: &[f64],
    ladder: &[f64],
    domain: &BoxDomain,
    mcfg: &MeasureConfig,
) -> Result<Vec<SliceFit>> {
    check_ladder(ladder)?;
    let xs: Vec<f64> = ladder.iter().map(|v| libm::log(*v)).collect();
    let mut out = Vec::with_capacity(grid.len());
    for (ti, &t) in grid.iter().enumerate() {
        let mut ys = Vec::with_capacity(ladder.len());
        let mut low = false;
        let mut nonsingular = false;
        for (k, &eps) in ladder.iter().enumerate() {
            let c = MeasureConfig {
                key: key2(key2(mcfg.key, ti as u64), k as u64),
                ..mcfg.clone()
            };
            let m = e.slice_measure(exec, t, eps, domain, &c)?;
            if m.hits == 0 {
                nonsingular = true;
                break;
            }
            low |= m.low_confidence;
            ys.push(libm::log(m.value));
        }
        if nonsingular {
            out.push(SliceFit {
                t,
                gamma: f64::INFINITY,
                stderr: 0.0,
                r_squared: 1.0,
                low_confidence: false,
            });
            continue;
        }
        let fit = least_squares(&xs, &ys).ok_or_else(|| Error::DegenerateLadder("slice fit".into()))?;
        out.push(SliceFit {
            t,
            gamma: fit.slope,
            stderr: fit.slope_stderr,
            r_squared: fit.r_squared,
            low_confidence: low || fit.r_squared < 0.9,
        });
    }
    Ok(out)
}

/// Applies the membership rules to precomputed slice fits.
pub fn decide(alpha: f64, beta: f64, slices: Vec<SliceFit>, theta: f64, margin: f64) -> PrintVerdict {
    let gamma_min = slices.iter().map(|s| s.gamma).fold(f64::INFINITY, f64::min);
    let gamma_min_coarse = slices.iter().step_by(2).map(|s| s.gamma).fold(f64::INFINITY, f64::min);
    let mk = |verdict: Verdict, reason: &str, slices: Vec<SliceFit>| PrintVerdict {
        alpha,
        beta,
        verdict,
        slices,
        gamma_min,
        gamma_min_coarse,
        theta,
        margin,
        reason: reason.into(),
    };
    if slices.iter().any(|s| s.low_confidence) {
        return mk(Verdict::Inconclusive, "low-confidence slice fit", slices);
    }
    if alpha < gamma_min - margin {
        return mk(Verdict::Member, "spatial integral finite on every slice", slices);
    }
    if alpha <= gamma_min + margin {
        return mk(Verdict::Inconclusive, "alpha within margin of slice exponent", slices);
    }
    if beta.is_infinite() {
        return mk(Verdict::NonMember, "spatial integral diverges on a slice", slices);
    }
    let blowup = if alpha.is_infinite() {
        beta
    } else {
        (alpha - gamma_min) * beta / alpha
    };
    if blowup < theta - margin {
        mk(Verdict::Member, "temporal integral converges", slices)
    } else if blowup > theta + margin {
        mk(Verdict::NonMember, "temporal integral diverges", slices)
    } else {
        mk(Verdict::Inconclusive, "temporal exponent within margin", slices)
    }
}

/// Temporal exponent `θ` used by [`print_membership`].
pub fn temporal_exponent(s: &SpaceTimeSet, sigmas: &[f64]) -> Result<f64> {
    fit_theta(s, sigmas)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Member,
    NonMember,
    Undecided,
}

/// Sign of `αβ − αa − βc` with the limits `α = ∞` or `β = ∞` taken
/// after dividing by the infinite exponent.
fn product_sign(alpha: f64, beta: f64, a: f64, c: f64) -> f64 {
    match (alpha.is_infinite(), beta.is_infinite()) {
        (false, false) => alpha * beta - alpha * a - beta * c,
        (false, true) => alpha - c,
        (true, false) => beta - a,
        (true, true) => 1.0,
    }
}

/// Membership of `(α, β)` in the print of a product `𝒯 × A` from the
/// dimensions of its factors. Upper and lower dimensions may differ.
pub fn predicted_print_region_bounds(
    dim_t_upper: f64,
    dim_t_lower: f64,
    dim_a_upper: f64,
    dim_a_lower: f64,
    n: usize,
    alpha: f64,
    beta: f64,
) -> Region {
    let n = n as f64;
    let a_up = 1.0 - dim_t_upper;
    let c_up = n - dim_a_upper;
    if alpha < c_up || beta < a_up || product_sign(alpha, beta, a_up, c_up) < 0.0 {
        return Region::Member;
    }
    if product_sign(alpha, beta, 1.0 - dim_t_lower, n - dim_a_lower) > 0.0 {
        return Region::NonMember;
    }
    Region::Undecided
}

/// [`predicted_print_region_bounds`] for exactly self-similar factors.
pub fn predicted_print_region(dim_t: f64, dim_a: f64, n: usize, alpha: f64, beta: f64) -> Region {
    predicted_print_region_bounds(dim_t, dim_t, dim_a, dim_a, n, alpha, beta)
}

/// Isotropic membership of `(α, α)` from the box dimensions of `S`.
pub fn isotropic_print_bound(dim_b: f64, dim_lb: f64, n_plus_1: usize, alpha: f64) -> Region {
    let m = n_plus_1 as f64;
    if alpha < m - dim_b {
        Region::Member
    } else if alpha > m - dim_lb {
        Region::NonMember
    } else {
        Region::Undecided
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevRow {
    pub q: f64,
    /// `μₙ({d < ε})`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `ε^q ∫_{d ≤ ε} d^{−q}`.
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub holds: bool,
}

/// Empirical weak-Chebyshev inequality on the section at `t`, sharing one
/// sample set between both sides.
pub fn weak_chebyshev_check(
    e: &DistanceEvaluator,
    t: f64,
    eps: f64,
    qs: &[f64],
    domain: &BoxDomain,
    samples: usize,
    seed: u64,
) -> Result<Vec<ChebyshevRow>> {
    if !(eps > 0.0) || samples == 0 {
        return Err(invalid("weak_chebyshev", "need ε > 0 and samples > 0"));
    }
    let section = e.target().temporal_section(t);
    if section.is_empty() {
        return Err(Error::EmptySection { t });
    }
    let tree = KdTree::build(section.clone());
    let n = domain.dim();
    let bbox = section.bounding_box().ok_or(Error::EmptySet)?.inflate(eps);
    let region = BoxDomain::new(
        bbox.lo.iter().zip(&domain.lo).map(|(a, b)| a.max(*b)).collect(),
        bbox.hi.iter().zip(&domain.hi).map(|(a, b)| a.min(*b)).collect(),
    )?;
    let vol = region.volume();
    let mut rng = keyed(seed, key2(0xc4eb, t.to_bits()));
    let mut x = vec![0.0; n];
    let mut hits = 0usize;
    let mut sums = vec![0.0; qs.len()];
    let mut sq = vec![0.0; qs.len()];
    for _ in 0..samples {
        for k in 0..n {
            x[k] = uniform(&mut rng, region.lo[k], region.hi[k]);
        }
        let d = libm::sqrt(tree.nearest(&x).map_or(f64::INFINITY, |v| v.1));
        if d <= eps {
            if d < eps {
                hits += 1;
            }
            let d = d.max(DEFAULT_DELTA_MIN);
            for (j, &q) in qs.iter().enumerate() {
                let w = libm::pow(eps / d, q);
                sums[j] += w;
                sq[j] += w * w;
            }
        }
    }
    let _ = rng.random::<u8>();
    let nf = samples as f64;
    let p = hits as f64 / nf;
    let lhs = vol * p;
    let lhs_se = vol * libm::sqrt(p * (1.0 - p) / nf);
    Ok(qs
        .iter()
        .enumerate()
        .map(|(j, &q)| {
            let mean = sums[j] / nf;
            let var = (sq[j] / nf - mean * mean).max(0.0);
            let rhs = vol * mean;
            let rhs_se = vol * libm::sqrt(var / nf);
            ChebyshevRow {
                q,
                lhs,
                lhs_stderr: lhs_se,
                rhs,
                rhs_stderr: rhs_se,
                holds: lhs <= rhs + 3.0 * (lhs_se + rhs_se),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::sets::{cantor_intervals, make_cantor, make_product, make_reciprocal_powers, InitialSet};

    #[test]
    fn equispaced_grid_count() {
        // 1000 points on [0,1]; the closed right end occupies its own cell
        let pts = PointSet::from_scalars(&(0..1000).map(|i| i as f64 / 999.0).collect::<Vec<_>>());
        assert_eq!(box_count(&pts, 0.1).unwrap(), 11);
        let open: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        assert_eq!(box_count(&PointSet::from_scalars(&open), 0.1).unwrap(), 10);
    }

    #[test]
    fn single_point_counts_one() {
        let p = PointSet::new(2, vec![0.3, 0.4]).unwrap();
        for e in [1.0, 1e-3, 1e-9] {
            assert_eq!(box_count(&p, e).unwrap(), 1);
        }
    }

    #[test]
    fn cantor_count_matches_interval_enumeration() {
        let c = make_cantor(0.25, 11).unwrap();
        for k in 1..=10 {
            let eps = libm::pow(4.0, -(k as f64));
            // oracle: cells touched by the closed level-k intervals
            let mut cells: Vec<i64> = Vec::new();
            for (a, b) in cantor_intervals(0.25, k - 1) {
                let lo = libm::floor(a / eps) as i64;
                let hi = libm::floor(b / eps) as i64;
                cells.extend(lo..=hi);
            }
            cells.sort_unstable();
            cells.dedup();
            let got = box_count(&c.points, eps).unwrap();
            assert_eq!(got, cells.len(), "k={k}");
            assert_eq!(got, 1 << (k + 1));
        }
    }

    #[test]
    fn cantor_box_dimension() {
        let c = make_cantor(0.25, 12).unwrap();
        let ladder = geometric_ladder(1.0 / 16.0, 0.25, 9);
        let d = estimate_box_dimension(&c.points, &ladder).unwrap();
        assert!((d.fitted_dim - 0.5).abs() < 0.05, "{d:?}");
        assert!(d.lower_proxy <= d.fitted_dim && d.fitted_dim <= d.upper_proxy);

        let c3 = make_cantor(1.0 / 3.0, 12).unwrap();
        let l3 = geometric_ladder(1.0 / 9.0, 1.0 / 3.0, 9);
        let d3 = estimate_box_dimension(&c3.points, &l3).unwrap();
        assert!((d3.fitted_dim - libm::log(2.0) / libm::log(3.0)).abs() < 0.02, "{d3:?}");
    }

    #[test]
    fn reciprocal_box_dimensions() {
        let ladder = geometric_ladder(1.0 / 64.0, 0.5, 12);
        let a = make_reciprocal_powers(1.0, 10_000).unwrap();
        let d = estimate_box_dimension(&a.points, &ladder).unwrap();
        assert!((d.fitted_dim - 0.5).abs() < 0.05, "{d:?}");
        let b = make_reciprocal_powers(2.0, 10_000).unwrap();
        let d2 = estimate_box_dimension(&b.points, &ladder).unwrap();
        assert!((d2.fitted_dim - 1.0 / 3.0).abs() < 0.05, "{d2:?}");
    }

    #[test]
    fn degenerate_ladder_rejected() {
        let p = PointSet::from_scalars(&[0.5]);
        assert!(matches!(
            estimate_box_dimension(&p, &[0.1, 0.01, 0.001]),
            Err(Error::DegenerateLadder(_))
        ));
        let c = make_cantor(0.25, 4).unwrap();
        assert!(estimate_box_dimension(&c.points, &[0.1, 0.2]).is_err());
    }

    fn static_eval(a: InitialSet) -> DistanceEvaluator {
        let s = make_product(TimeSet::interval(0.0, 1.0).unwrap(), a, 1.0).unwrap();
        DistanceEvaluator::new(s, 1e-3).unwrap()
    }

    #[test]
    fn minkowski_simple_sets() {
        let pt = InitialSet::new(PointSet::new(2, vec![0.0, 0.0]).unwrap(), Some(0.0), "pt").unwrap();
        let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let ladder = geometric_ladder(0.2, 0.5, 6);
        let cfg = MeasureConfig::default();
        let d = estimate_minkowski_dimension(&Sequential, &static_eval(pt), 0.5, &ladder, &dom, &cfg).unwrap();
        assert!(d.fitted_dim.abs() < 0.1, "{d:?}");

        let seg: Vec<f64> = (0..=2000).flat_map(|i| [-0.5 + i as f64 / 2000.0, 0.0]).collect();
        let seg = InitialSet::new(PointSet::new(2, seg).unwrap(), Some(1.0), "seg").unwrap();
        let ls = geometric_ladder(0.1, 0.5, 6);
        let d = estimate_minkowski_dimension(&Sequential, &static_eval(seg), 0.5, &ls, &dom, &cfg).unwrap();
        assert!((d.fitted_dim - 1.0).abs() < 0.1, "{d:?}");
    }

    #[test]
    fn minkowski_cantor_agrees_with_interval_union() {
        let c = make_cantor(0.25, 12).unwrap();
        let ladder = geometric_ladder(1.0 / 16.0, 0.25, 6);
        let dom = BoxDomain::cube(1, -1.0, 2.0).unwrap();
        let d = estimate_minkowski_dimension(
            &Sequential,
            &static_eval(c.clone()),
            0.5,
            &ladder,
            &dom,
            &MeasureConfig::default(),
        )
        .unwrap();
        assert!((d.fitted_dim - 0.5).abs() < 0.05, "{d:?}");
        // exact sausage lengths from the endpoint list
        let ivs: Vec<(f64, f64)> = c.points.iter().map(|p| (p[0], p[0])).collect();
        for (eps, m) in ladder.iter().zip(&d.values) {
            let exact = union_length(&ivs, *eps, -1.0, 2.0);
            assert!((m - exact).abs() / exact < 0.05, "{eps}: {m} vs {exact}");
        }
    }

    #[test]
    fn union_length_basics() {
        assert_eq!(union_length(&[(0.0, 1.0)], 0.1, 0.0, 1.0), 1.0);
        assert!((union_length(&[(0.5, 0.5)], 0.1, 0.0, 1.0) - 0.2).abs() < 1e-15);
        assert!((union_length(&[(0.0, 0.0), (0.15, 0.15)], 0.1, -1.0, 1.0) - 0.35).abs() < 1e-15);
    }

    #[test]
    fn product_region_examples() {
        assert_eq!(predicted_print_region(1.0, 0.0, 2, 1.5, f64::INFINITY), Region::Member);
        assert_eq!(predicted_print_region(0.5, 0.5, 1, 1.0, 1.0), Region::Undecided);
        assert_eq!(predicted_print_region(0.5, 0.5, 1, 4.0, 1.05), Region::NonMember);
        assert_eq!(
            predicted_print_region(1.0, 0.0, 2, 2.5, f64::INFINITY),
            Region::NonMember
        );
    }

    #[test]
    fn isotropic_examples() {
        assert_eq!(isotropic_print_bound(1.5, 1.5, 2, 0.4), Region::Member);
        assert_eq!(isotropic_print_bound(1.5, 1.5, 2, 0.6), Region::NonMember);
        assert_eq!(isotropic_print_bound(1.5, 1.5, 2, 0.5), Region::Undecided);
    }

    #[test]
    fn static_point_print() {
        let pt = InitialSet::new(PointSet::new(2, vec![0.0, 0.0]).unwrap(), Some(0.0), "pt").unwrap();
        let e = static_eval(pt);
        let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let cfg = PrintConfig::default();
        let v = print_membership(&Sequential, &e, 1.5, f64::INFINITY, &dom, 1e-3, &cfg).unwrap();
        assert_eq!(v.verdict, Verdict::Member, "{v:?}");
        let v = print_membership(&Sequential, &e, 2.5, f64::INFINITY, &dom, 1e-3, &cfg).unwrap();
        assert_eq!(v.verdict, Verdict::NonMember, "{v:?}");
        assert!(v.theta.abs() < 1e-12);
    }

    #[test]
    fn weak_chebyshev_holds() {
        let c = make_cantor(0.25, 8).unwrap();
        let e = static_eval(c);
        let dom = BoxDomain::cube(1, -1.0, 2.0).unwrap();
        for row in weak_chebyshev_check(&e, 0.5, 0.01, &[0.25, 0.5, 1.0], &dom, 50_000, 1).unwrap() {
            assert!(row.holds, "{row:?}");
            assert!(row.lhs <= row.rhs);
        }
    }
}
