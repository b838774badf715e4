//! Singular sets with known fractal structure.
//!
//! Limit sets (Cantor sets, `{n^-p}`) are stored as finite prefractals
//! together with their theoretical dimension; estimators are expected to
//! stay above the finest generation scale.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{invalid, Error, Result};
use crate::geometry::{norm, PointSet};
use crate::rng::{keyed, uniform};

/// Default cap on Cantor depth (2^(depth+2) endpoints).
pub const MAX_CANTOR_DEPTH: u32 = 16;

/// A bounded initial set `S₀ ⊂ ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialSet {
    pub points: PointSet,
    pub theoretical_dim: Option<f64>,
    /// Construction recipe, e.g. `cantor(keep=0.25,depth=12)`.
    pub generator_tag: String,
}

impl InitialSet {
    pub fn new(points: PointSet, theoretical_dim: Option<f64>, tag: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySet);
        }
        if points.coords().iter().any(|c| !c.is_finite()) {
            return Err(invalid("points", "coordinates must be finite"));
        }
        if let Some(d) = theoretical_dim {
            if !(0.0..=points.dim() as f64).contains(&d) {
                return Err(invalid("theoretical_dim", "must lie in [0, ambient_dim]"));
            }
        }
        Ok(Self {
            points,
            theoretical_dim,
            generator_tag: tag.into(),
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.dim()
    }

    /// Embeds the set in ℝ^`dim` by padding with zeros.
    pub fn embed(&self, dim: usize) -> Result<InitialSet> {
        Ok(InitialSet {
            points: self.points.embed(dim)?,
            theoretical_dim: self.theoretical_dim,
            generator_tag: alloc::format!("{}->R{}", self.generator_tag, dim),
        })
    }

    /// `self × other`, with dimensions added.
    pub fn product(&self, other: &InitialSet) -> InitialSet {
        let dim = match (self.theoretical_dim, other.theoretical_dim) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        InitialSet {
            points: self.points.product(&other.points),
            theoretical_dim: dim,
            generator_tag: alloc::format!("{}x{}", self.generator_tag, other.generator_tag),
        }
    }
}

/// Endpoints of the `depth`-th prefractal of the Cantor set on `[0,1]`
/// keeping two end pieces of relative length `keep_ratio`.
///
/// Depth 0 already performs one subdivision, so the result holds
/// 2^(depth+1) intervals and 2^(depth+2) endpoints.
pub fn make_cantor(keep_ratio: f64, depth: u32) -> Result<InitialSet> {
    make_cantor_with_budget(keep_ratio, depth, MAX_CANTOR_DEPTH)
}

pub fn make_cantor_with_budget(keep_ratio: f64, depth: u32, max_depth: u32) -> Result<InitialSet> {
    if !(keep_ratio > 0.0 && keep_ratio < 0.5) {
        return Err(invalid("keep_ratio", "must lie in (0, 1/2)"));
    }
    if depth > max_depth {
        return Err(Error::PointBudget {
            requested: 1usize << (depth.min(60) + 2),
            budget: 1usize << (max_depth + 2),
        });
    }
    let intervals = cantor_intervals(keep_ratio, depth);
    let mut pts = Vec::with_capacity(2 * intervals.len());
    for (a, b) in intervals {
        pts.push(a);
        pts.push(b);
    }
    let dim = libm::log(2.0) / libm::log(1.0 / keep_ratio);
    InitialSet::new(
        PointSet::from_scalars(&pts),
        Some(dim),
        alloc::format!("cantor(keep={keep_ratio},depth={depth})"),
    )
}

/// The 2^(depth+1) closed intervals of the prefractal, left to right.
pub fn cantor_intervals(keep_ratio: f64, depth: u32) -> Vec<(f64, f64)> {
    let mut cur = vec![(0.0f64, 1.0f64)];
    for _ in 0..=depth {
        let mut next = Vec::with_capacity(cur.len() * 2);
        for (a, b) in cur {
            let w = (b - a) * keep_ratio;
            next.push((a, a + w));
            next.push((b - w, b));
        }
        cur = next;
    }
    cur
}

/// `{n^-p : 1 ≤ n ≤ N} ∪ {0}` in decreasing order, with the accumulation
/// point adjoined.
pub fn make_reciprocal_powers(power: f64, count: usize) -> Result<InitialSet> {
    if !(power >= 1.0) || !power.is_finite() {
        return Err(invalid("power", "must be a finite real ≥ 1"));
    }
    if count < 2 {
        return Err(invalid("count", "need N ≥ 2"));
    }
    let mut pts: Vec<f64> = (1..=count).map(|n| libm::pow(n as f64, -power)).collect();
    pts.push(0.0);
    InitialSet::new(
        PointSet::from_scalars(&pts),
        Some(1.0 / (1.0 + power)),
        alloc::format!("reciprocal_powers(p={power},N={count})"),
    )
}

/// Closure-backed motion `(t, x, out)`.
pub type MotionFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// Time evolution `Z(t, x)` of a base point `x`. `Z(0, x) = x` for every
/// built-in variant.
#[derive(Clone)]
pub enum Motion {
    /// `Z(t,x) = x`.
    Identity,
    /// Rigid rotation about `center` at angular speed `omega` (ℝ² only).
    Rotation {
        center: [f64; 2],
        omega: f64,
    },
    /// `Z(t,x) = x + offset(t)` with `offset` piecewise linear through
    /// `(times[k], offsets[k])`; offsets[0] should be zero.
    Polyline {
        times: Vec<f64>,
        offsets: Vec<Vec<f64>>,
    },
    /// `Z(t,x) = x + t^exponent · direction`.
    PowerDrift {
        direction: Vec<f64>,
        exponent: f64,
    },
    /// `Z(t,x) = x + t (x² − x)` componentwise.
    Quadratic,
    Custom(Arc<MotionFn>),
}

impl fmt::Debug for Motion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Motion::Identity => write!(f, "Identity"),
            Motion::Rotation { center, omega } => f
                .debug_struct("Rotation")
                .field("center", center)
                .field("omega", omega)
                .finish(),
            Motion::Polyline { times, offsets } => f
                .debug_struct("Polyline")
                .field("times", times)
                .field("offsets", offsets)
                .finish(),
            Motion::PowerDrift { direction, exponent } => f
                .debug_struct("PowerDrift")
                .field("direction", direction)
                .field("exponent", exponent)
                .finish(),
            Motion::Quadratic => write!(f, "Quadratic"),
            Motion::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Motion {
    pub fn apply(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            Motion::Identity => out.copy_from_slice(x),
            Motion::Rotation { center, omega } => {
                let (s, c) = libm::sincos(omega * t);
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                out[0] = center[0] + c * dx - s * dy;
                out[1] = center[1] + s * dx + c * dy;
                out[2..].copy_from_slice(&x[2..]);
            }
            Motion::Polyline { times, offsets } => {
                out.copy_from_slice(x);
                let off = polyline_offset(times, offsets, t);
                for (o, d) in out.iter_mut().zip(off) {
                    *o += d;
                }
            }
            Motion::PowerDrift { direction, exponent } => {
                let s = libm::pow(t.max(0.0), *exponent);
                for k in 0..x.len() {
                    out[k] = x[k] + s * direction.get(k).copied().unwrap_or(0.0);
                }
            }
            Motion::Quadratic => {
                for k in 0..x.len() {
                    out[k] = x[k] + t * (x[k] * x[k] - x[k]);
                }
            }
            Motion::Custom(f) => f(t, x, out),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply(t, x, &mut out);
        out
    }

    /// Velocity `∂Z/∂t`, by finite differences for closures.
    pub fn velocity(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            Motion::Identity => out.iter_mut().for_each(|v| *v = 0.0),
            Motion::Rotation { center, omega } => {
                let mut z = vec![0.0; x.len()];
                self.apply(t, x, &mut z);
                out.iter_mut().for_each(|v| *v = 0.0);
                out[0] = -omega * (z[1] - center[1]);
                out[1] = omega * (z[0] - center[0]);
            }
            Motion::Quadratic => {
                for k in 0..x.len() {
                    out[k] = x[k] * x[k] - x[k];
                }
            }
            _ => {
                let h = 1e-6;
                let (t0, t1) = if t >= h { (t - h, t + h) } else { (t, t + 2.0 * h) };
                let a = self.eval(t0, x);
                let b = self.eval(t1, x);
                for k in 0..x.len() {
                    out[k] = (b[k] - a[k]) / (t1 - t0);
                }
            }
        }
    }

    /// Hölder exponent and constant valid on `[0, horizon]` for the given
    /// base points, when known in closed form.
    pub fn holder(&self, base: &PointSet, horizon: f64) -> Option<(f64, f64)> {
        match self {
            Motion::Identity => Some((1.0, 0.0)),
            Motion::Rotation { center, omega } => {
                let r = base
                    .iter()
                    .map(|p| libm::hypot(p[0] - center[0], p[1] - center[1]))
                    .fold(0.0, f64::max);
                Some((1.0, omega.abs() * r))
            }
            Motion::Polyline { times, offsets } => {
                let mut k: f64 = 0.0;
                for i in 1..times.len() {
                    let dt = times[i] - times[i - 1];
                    if dt > 0.0 {
                        let d: Vec<f64> = offsets[i].iter().zip(&offsets[i - 1]).map(|(a, b)| a - b).collect();
                        k = k.max(norm(&d) / dt);
                    }
                }
                Some((1.0, k))
            }
            Motion::PowerDrift { direction, exponent } => {
                if *exponent > 0.0 && *exponent <= 1.0 {
                    Some((*exponent, norm(direction)))
                } else if *exponent > 1.0 {
                    // Lipschitz with constant exponent · T^(exponent-1)
                    Some((1.0, norm(direction) * exponent * libm::pow(horizon, exponent - 1.0)))
                } else {
                    None
                }
            }
            Motion::Quadratic => {
                let k = base
                    .iter()
                    .map(|p| libm::sqrt(p.iter().map(|x| (x * x - x) * (x * x - x)).sum()))
                    .fold(0.0, f64::max);
                Some((1.0, k))
            }
            Motion::Custom(_) => None,
        }
    }
}

fn polyline_offset(times: &[f64], offsets: &[Vec<f64>], t: f64) -> Vec<f64> {
    if times.is_empty() {
        return Vec::new();
    }
    if t <= times[0] {
        return offsets[0].clone();
    }
    for i in 1..times.len() {
        if t <= times[i] {
            let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
            return offsets[i - 1]
                .iter()
                .zip(&offsets[i])
                .map(|(a, b)| a + w * (b - a))
                .collect();
        }
    }
    offsets[offsets.len() - 1].clone()
}

/// `Z: [0,T] × S₀ → ℝⁿ` with a uniform Hölder bound
/// `|Z(t₁,x) − Z(t₂,x)| ≤ K |t₁ − t₂|^α`.
#[derive(Debug, Clone)]
pub struct TrajectoryBundle {
    pub motion: Motion,
    pub holder_exponent: f64,
    pub holder_constant: f64,
    pub horizon: f64,
}

impl TrajectoryBundle {
    pub fn new(motion: Motion, holder_exponent: f64, holder_constant: f64, horizon: f64) -> Result<Self> {
        if !(holder_exponent > 0.0 && holder_exponent <= 1.0) {
            return Err(invalid("holder_exponent", "must lie in (0, 1]"));
        }
        if !(holder_constant >= 0.0) || !holder_constant.is_finite() {
            return Err(invalid("holder_constant", "must be finite and nonnegative"));
        }
        if !(horizon > 0.0) {
            return Err(invalid("horizon", "must be positive"));
        }
        Ok(Self {
            motion,
            holder_exponent,
            holder_constant,
            horizon,
        })
    }

    /// Bundle with the closed-form Hölder data of `motion` over `base`.
    pub fn with_known_holder(motion: Motion, base: &PointSet, horizon: f64) -> Result<Self> {
        let (a, k) = motion
            .holder(base, horizon)
            .ok_or_else(|| invalid("motion", "no closed-form Hölder data; give (α, K) explicitly"))?;
        Self::new(motion, a, k, horizon)
    }
}

/// Time factor of a product set.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeSet {
    Interval {
        start: f64,
        end: f64,
    },
    /// Finite sample (e.g. a Cantor prefractal), sorted ascending.
    Finite {
        times: Vec<f64>,
        theoretical_dim: Option<f64>,
    },
}

impl TimeSet {
    pub fn interval(start: f64, end: f64) -> Result<Self> {
        if !(start <= end) {
            return Err(invalid("time_set", "interval start must not exceed end"));
        }
        Ok(TimeSet::Interval { start, end })
    }

    pub fn finite(mut times: Vec<f64>, theoretical_dim: Option<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptySet);
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        Ok(TimeSet::Finite { times, theoretical_dim })
    }

    /// Distance from `t` to the time set.
    pub fn distance(&self, t: f64) -> f64 {
        match self {
            TimeSet::Interval { start, end } => {
                if t < *start {
                    start - t
                } else if t > *end {
                    t - end
                } else {
                    0.0
                }
            }
            TimeSet::Finite { times, .. } => {
                let i = times.partition_point(|&s| s < t);
                let mut d = f64::INFINITY;
                if i < times.len() {
                    d = d.min(times[i] - t);
                }
                if i > 0 {
                    d = d.min(t - times[i - 1]);
                }
                d
            }
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.distance(t) <= 1e-12
    }

    pub fn theoretical_dim(&self) -> Option<f64> {
        match self {
            TimeSet::Interval { start, end } => Some(if end > start { 1.0 } else { 0.0 }),
            TimeSet::Finite { theoretical_dim, .. } => *theoretical_dim,
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            TimeSet::Interval { start, end } => (*start, *end),
            TimeSet::Finite { times, .. } => (times[0], times[times.len() - 1]),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Representation {
    Product {
        times: TimeSet,
        space: InitialSet,
    },
    Graph {
        base: InitialSet,
        bundle: TrajectoryBundle,
    },
    /// Points `(t, x)` stored with time as coordinate 0.
    Cloud {
        points: PointSet,
        snap_tolerance: f64,
    },
}

/// A set `S ⊂ [0,T] × ℝⁿ`.
#[derive(Debug, Clone)]
pub struct SpaceTimeSet {
    pub representation: Representation,
    pub ambient_dim: usize,
    pub horizon: f64,
}

/// Builds the graph `{(t, Z(t,x)) : t ∈ [0,T], x ∈ S₀}` after a sampled
/// Hölder spot check (1000 triples).
pub fn make_graph(base: InitialSet, bundle: TrajectoryBundle) -> Result<SpaceTimeSet> {
    make_graph_checked(base, bundle, 1000, 0x5eed)
}

pub fn make_graph_checked(
    base: InitialSet,
    bundle: TrajectoryBundle,
    samples: usize,
    seed: u64,
) -> Result<SpaceTimeSet> {
    holder_spot_check(&base, &bundle, samples, seed)?;
    let n = base.ambient_dim();
    let horizon = bundle.horizon;
    Ok(SpaceTimeSet {
        representation: Representation::Graph { base, bundle },
        ambient_dim: n,
        horizon,
    })
}

/// Checks the uniform Hölder bound on random `(t₁, t₂, x)` triples.
pub fn holder_spot_check(base: &InitialSet, bundle: &TrajectoryBundle, samples: usize, seed: u64) -> Result<()> {
    let n = base.ambient_dim();
    let mut rng = keyed(seed, 0x401de7);
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let m = base.points.len();
    for _ in 0..samples {
        let idx = (rng_index(&mut rng, m)).min(m - 1);
        let t1 = uniform(&mut rng, 0.0, bundle.horizon);
        let t2 = uniform(&mut rng, 0.0, bundle.horizon);
        let x = base.points.point(idx);
        bundle.motion.apply(t1, x, &mut a);
        bundle.motion.apply(t2, x, &mut b);
        let gap = libm::sqrt(crate::geometry::dist2(&a, &b));
        let bound = bundle.holder_constant * libm::pow((t1 - t2).abs(), bundle.holder_exponent);
        if gap > bound * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::HolderViolation {
                t1,
                t2,
                index: idx,
                gap,
                bound,
            });
        }
    }
    Ok(())
}

fn rng_index(rng: &mut crate::rng::StreamRng, m: usize) -> usize {
    use crate::rng::Rng;
    rng.random_range(0..m)
}

/// Builds `𝒯 × A`.
pub fn make_product(times: TimeSet, space: InitialSet, horizon: f64) -> Result<SpaceTimeSet> {
    let (a, b) = times.bounds();
    if a < 0.0 || b > horizon {
        return Err(invalid("time_set", "must lie inside [0, T]"));
    }
    let n = space.ambient_dim();
    Ok(SpaceTimeSet {
        representation: Representation::Product { times, space },
        ambient_dim: n,
        horizon,
    })
}

/// Builds a cloud from `(t, x)` rows; the snap tolerance defaults to half
/// the median spacing of the distinct times.
pub fn make_cloud(points: PointSet, snap_tolerance: Option<f64>, horizon: f64) -> Result<SpaceTimeSet> {
    if points.is_empty() {
        return Err(Error::EmptySet);
    }
    if points.dim() < 2 {
        return Err(invalid("cloud", "rows must be (t, x₁, …, xₙ)"));
    }
    if points.iter().any(|p| p[0] < 0.0 || p[0] > horizon) {
        return Err(invalid("cloud", "time coordinates must lie in [0, T]"));
    }
    let tol = match snap_tolerance {
        Some(t) => t,
        None => {
            let mut ts: Vec<f64> = points.iter().map(|p| p[0]).collect();
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            let mut gaps: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
            if gaps.is_empty() {
                0.0
            } else {
                gaps.sort_by(f64::total_cmp);
                0.5 * gaps[gaps.len() / 2]
            }
        }
    };
    let n = points.dim() - 1;
    Ok(SpaceTimeSet {
        representation: Representation::Cloud {
            points,
            snap_tolerance: tol,
        },
        ambient_dim: n,
        horizon,
    })
}

impl SpaceTimeSet {
    /// `S(t) = {x : (t,x) ∈ S}`.
    pub fn temporal_section(&self, t: f64) -> PointSet {
        let n = self.ambient_dim;
        match &self.representation {
            Representation::Product { times, space } => {
                if times.contains(t) {
                    space.points.clone()
                } else {
                    PointSet::new(n, Vec::new()).expect("positive dim")
                }
            }
            Representation::Graph { base, bundle } => {
                let mut out = Vec::with_capacity(base.points.len() * n);
                let mut z = vec![0.0; n];
                for x in base.points.iter() {
                    bundle.motion.apply(t, x, &mut z);
                    out.extend_from_slice(&z);
                }
                PointSet::new(n, out).expect("consistent dims")
            }
            Representation::Cloud { points, snap_tolerance } => {
                let mut out = Vec::new();
                for p in points.iter() {
                    if (p[0] - t).abs() <= *snap_tolerance {
                        out.extend_from_slice(&p[1..]);
                    }
                }
                PointSet::new(n, out).expect("consistent dims")
            }
        }
    }

    /// Short description used in reports.
    pub fn describe(&self) -> String {
        match &self.representation {
            Representation::Product { space, .. } => alloc::format!("product(T x {})", space.generator_tag),
            Representation::Graph { base, bundle } => alloc::format!(
                "graph({}, alpha={}, K={})",
                base.generator_tag,
                bundle.holder_exponent,
                bundle.holder_constant
            ),
            Representation::Cloud { points, .. } => alloc::format!("cloud({} points)", points.len()),
        }
        .to_string()
    }

    /// Hölder data when `S` is a graph.
    pub fn holder(&self) -> Option<(f64, f64)> {
        match &self.representation {
            Representation::Graph { bundle, .. } => Some((bundle.holder_exponent, bundle.holder_constant)),
            _ => None,
        }
    }

    /// Upper bound of the spatial diameter of the sections (over a coarse
    /// time grid for graphs).
    pub fn spatial_bounding_box(&self) -> Option<crate::geometry::BoxDomain> {
        match &self.representation {
            Representation::Product { space, .. } => space.points.bounding_box(),
            Representation::Graph { .. } => {
                let n = self.ambient_dim;
                let mut all = PointSet::new(n, Vec::new()).ok()?;
                for k in 0..=64 {
                    let t = self.horizon * k as f64 / 64.0;
                    for p in self.temporal_section(t).iter() {
                        all.push(p);
                    }
                }
                all.bounding_box()
            }
            Representation::Cloud { points, .. } => {
                let n = self.ambient_dim;
                let sp = PointSet::from_rows(n, points.iter().map(|p| p[1..].to_vec())).ok()?;
                sp.bounding_box()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cantor_depth_zero() {
        let c = make_cantor(0.25, 0).unwrap();
        assert_eq!(c.points.coords(), &[0.0, 0.25, 0.75, 1.0]);
        assert!((c.theoretical_dim.unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cantor_thirds_dimension() {
        let c = make_cantor(1.0 / 3.0, 3).unwrap();
        assert!((c.theoretical_dim.unwrap() - 0.630_929_753_571_457_4).abs() < 1e-12);
    }

    #[test]
    fn cantor_rejects_bad_input() {
        assert!(make_cantor(0.5, 3).is_err());
        assert!(make_cantor(0.0, 3).is_err());
        assert!(matches!(make_cantor(0.25, 17), Err(Error::PointBudget { .. })));
    }

    #[test]
    fn cantor_count_and_range() {
        for depth in 0..8 {
            let c = make_cantor(0.25, depth).unwrap();
            assert_eq!(c.points.len(), 1 << (depth + 2));
            assert!(c.points.coords().iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn reciprocal_powers() {
        let s = make_reciprocal_powers(1.0, 3).unwrap();
        assert_eq!(s.points.coords(), &[1.0, 0.5, 1.0 / 3.0, 0.0]);
        assert_eq!(s.theoretical_dim, Some(0.5));
        let s2 = make_reciprocal_powers(2.0, 10).unwrap();
        assert!((s2.theoretical_dim.unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(make_reciprocal_powers(1.0, 1).is_err());
        assert!(make_reciprocal_powers(0.5, 5).is_err());
    }

    #[test]
    fn quadratic_graph_section_at_one() {
        let s0 = make_reciprocal_powers(1.0, 20).unwrap();
        let b = TrajectoryBundle::with_known_holder(Motion::Quadratic, &s0.points, 1.0).unwrap();
        let g = make_graph(s0.clone(), b).unwrap();
        assert_eq!(g.temporal_section(0.0), s0.points);
        let s1 = g.temporal_section(1.0);
        for (n, x) in s1.iter().take(20).enumerate() {
            let k = (n + 1) as f64;
            assert!((x[0] - 1.0 / (k * k)).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_graph_is_time_segment() {
        let s0 = InitialSet::new(PointSet::from_scalars(&[0.0]), Some(0.0), "origin").unwrap();
        let b = TrajectoryBundle::with_known_holder(Motion::Identity, &s0.points, 1.0).unwrap();
        let g = make_graph(s0, b).unwrap();
        assert_eq!(g.temporal_section(0.3).coords(), &[0.0]);
    }

    #[test]
    fn graph_rejects_false_holder_constant() {
        let s0 = make_cantor(0.25, 4).unwrap().embed(2).unwrap();
        let motion = Motion::PowerDrift {
            direction: vec![1.0, 0.0],
            exponent: 0.5,
        };
        // claims Lipschitz with K = 1, false near t = 0
        let b = TrajectoryBundle::new(motion, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(make_graph(s0, b), Err(Error::HolderViolation { .. })));
    }

    #[test]
    fn product_sections() {
        let a = make_cantor(0.25, 2).unwrap();
        let p = make_product(TimeSet::interval(0.0, 0.5).unwrap(), a.clone(), 1.0).unwrap();
        assert!(p.temporal_section(0.9).is_empty());
        assert_eq!(p.temporal_section(0.25), a.points);
    }

    #[test]
    fn cloud_snap_tolerance_defaults_to_half_median_gap() {
        let pts = PointSet::from_rows(2, [[0.0, 1.0], [0.1, 2.0], [0.2, 3.0], [0.2, 4.0]]).unwrap();
        let c = make_cloud(pts, None, 1.0).unwrap();
        match &c.representation {
            Representation::Cloud { snap_tolerance, .. } => assert!((snap_tolerance - 0.05).abs() < 1e-12),
            _ => unreachable!(),
        }
        assert_eq!(c.temporal_section(0.21).len(), 2);
    }
}
