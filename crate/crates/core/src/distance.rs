//! Space-time and sectional distance functions, Monte Carlo neighbourhood
//! measures and the Hölder section bound.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::geometry::{dist2, norm, BoxDomain, KdTree, PointSet};
use crate::rng::{key2, keyed, uniform, Rng};
use crate::sets::{Motion, Representation, SpaceTimeSet, TimeSet};

/// Reciprocal distances must never be formed below this floor.
pub const DEFAULT_DELTA_MIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMode {
    /// Closed form (products, static graphs, clouds).
    ExactParametric,
    /// Minimum over a time-sampled polyline of each trajectory.
    Sampled,
}

#[derive(Debug, Clone)]
enum SectionIndex {
    /// Sections are isometric images of the base set.
    Base(KdTree),
    /// Sections must be recomputed per query.
    Brute,
}

#[derive(Debug, Clone)]
enum Engine {
    Product {
        times: TimeSet,
        space: KdTree,
    },
    Graph {
        vertices: KdTree,
        times: Vec<f64>,
        curves: usize,
    },
    Cloud {
        tree: KdTree,
    },
}

/// Distance evaluator for a fixed [`SpaceTimeSet`].
#[derive(Debug, Clone)]
pub struct DistanceEvaluator {
    target: SpaceTimeSet,
    mode: DistanceMode,
    time_resolution: f64,
    error_bound: f64,
    engine: Engine,
    section: SectionIndex,
}

impl DistanceEvaluator {
    /// Builds an evaluator. `time_resolution` is the nominal time step of
    /// the trajectory sampling used for non-static graphs; samples are
    /// spaced uniformly in `t^α`.
    pub fn new(target: SpaceTimeSet, time_resolution: f64) -> Result<Self> {
        if !(time_resolution > 0.0) {
            return Err(invalid("time_resolution", "must be positive"));
        }
        let n = target.ambient_dim;
        let (engine, mode, error_bound, section) = match &target.representation {
            Representation::Product { times, space } => (
                Engine::Product {
                    times: times.clone(),
                    space: KdTree::build(space.points.clone()),
                },
                DistanceMode::ExactParametric,
                0.0,
                SectionIndex::Base(KdTree::build(space.points.clone())),
            ),
            Representation::Graph { base, bundle } => {
                let section = match bundle.motion {
                    Motion::Identity
                    | Motion::Rotation { .. }
                    | Motion::PowerDrift { .. }
                    | Motion::Polyline { .. } => SectionIndex::Base(KdTree::build(base.points.clone())),
                    _ => SectionIndex::Brute,
                };
                if matches!(bundle.motion, Motion::Identity) {
                    (
                        Engine::Product {
                            times: TimeSet::Interval {
                                start: 0.0,
                                end: target.horizon,
                            },
                            space: KdTree::build(base.points.clone()),
                        },
                        DistanceMode::ExactParametric,
                        0.0,
                        section,
                    )
                } else {
                    let horizon = bundle.horizon;
                    let alpha = bundle.holder_exponent;
                    let m = libm::ceil(horizon / time_resolution).max(1.0) as usize;
                    let times: Vec<f64> = (0..=m)
                        .map(|j| horizon * libm::pow(j as f64 / m as f64, 1.0 / alpha))
                        .collect();
                    let mut err: f64 = 0.0;
                    for w in times.windows(2) {
                        let ds = w[1] - w[0];
                        let dz = match &bundle.motion {
                            // monotone along a fixed direction: curve and chord share the
                            // box spanned by consecutive samples
                            Motion::PowerDrift { direction, exponent } => {
                                (libm::pow(w[1], *exponent) - libm::pow(w[0], *exponent)) * norm(direction)
                            }
                            _ => bundle.holder_constant * libm::pow(ds, alpha),
                        };
                        err = err.max(libm::sqrt(ds * ds + dz * dz));
                    }
                    let mut coords = Vec::with_capacity(base.points.len() * (m + 1) * (n + 1));
                    let mut z = vec![0.0; n];
                    for y in base.points.iter() {
                        for &s in &times {
                            bundle.motion.apply(s, y, &mut z);
                            coords.push(s);
                            coords.extend_from_slice(&z);
                        }
                    }
                    let pts = PointSet::new(n + 1, coords)?;
                    (
                        Engine::Graph {
                            vertices: KdTree::build(pts),
                            times,
                            curves: base.points.len(),
                        },
                        DistanceMode::Sampled,
                        err,
                        section,
                    )
                }
            }
            Representation::Cloud { points, .. } => (
                Engine::Cloud {
                    tree: KdTree::build(points.clone()),
                },
                DistanceMode::ExactParametric,
                0.0,
                SectionIndex::Brute,
            ),
        };
        Ok(Self {
            target,
            mode,
            time_resolution,
            error_bound,
            engine,
            section,
        })
    }

    pub fn target(&self) -> &SpaceTimeSet {
        &self.target
    }

    pub fn mode(&self) -> DistanceMode {
        self.mode
    }

    pub fn time_resolution(&self) -> f64 {
        self.time_resolution
    }

    /// Bound on `|reported d_S − true d_S|`.
    pub fn error_bound(&self) -> f64 {
        self.error_bound
    }

    pub fn ambient_dim(&self) -> usize {
        self.target.ambient_dim
    }

    /// `d_S(t, x)`.
    pub fn dist_spacetime(&self, t: f64, x: &[f64]) -> Result<f64> {
        let n = self.ambient_dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        match &self.engine {
            Engine::Product { times, space } => {
                let (_, ds2) = space.nearest(x).ok_or(Error::EmptySet)?;
                let dt = times.distance(t);
                Ok(libm::sqrt(dt * dt + ds2))
            }
            Engine::Cloud { tree } => {
                let mut q = Vec::with_capacity(n + 1);
                q.push(t);
                q.extend_from_slice(x);
                let (_, d2) = tree.nearest(&q).ok_or(Error::EmptySet)?;
                Ok(libm::sqrt(d2))
            }
            Engine::Graph {
                vertices,
                times,
                curves: _,
            } => {
                let mut q = Vec::with_capacity(n + 1);
                q.push(t);
                q.extend_from_slice(x);
                let (idx, d2) = vertices.nearest(&q).ok_or(Error::EmptySet)?;
                let mut best = d2;
                let stride = times.len();
                let j = idx % stride;
                let pts = vertices.points();
                if j > 0 {
                    best = best.min(segment_dist2(&q, pts.point(idx - 1), pts.point(idx)));
                }
                if j + 1 < stride {
                    best = best.min(segment_dist2(&q, pts.point(idx), pts.point(idx + 1)));
                }
                let mut d = libm::sqrt(best);
                if (0.0..=self.target.horizon).contains(&t) {
                    if let Ok(s) = self.dist_section(t, x) {
                        d = d.min(s);
                    }
                }
                Ok(d)
            }
        }
    }

    /// `d_{S(t)}(x)`.
    pub fn dist_section(&self, t: f64, x: &[f64]) -> Result<f64> {
        let n = self.ambient_dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        match (&self.target.representation, &self.section) {
            (Representation::Product { times, .. }, SectionIndex::Base(tree)) => {
                if !times.contains(t) {
                    return Err(Error::EmptySection { t });
                }
                Ok(libm::sqrt(tree.nearest(x).ok_or(Error::EmptySet)?.1))
            }
            (Representation::Graph { bundle, .. }, SectionIndex::Base(tree)) => {
                let q = pull_back(&bundle.motion, t, x);
                Ok(libm::sqrt(tree.nearest(&q).ok_or(Error::EmptySet)?.1))
            }
            _ => {
                let sec = self.target.temporal_section(t);
                if sec.is_empty() {
                    return Err(Error::EmptySection { t });
                }
                Ok(libm::sqrt(
                    sec.iter().map(|p| dist2(p, x)).fold(f64::INFINITY, f64::min),
                ))
            }
        }
    }

    /// Spatial points of `S` whose time lies within `radius` of `t`
    /// (vertices for sampled graphs). Used to bound neighbourhoods.
    pub fn spatial_support_near(&self, t: f64, radius: f64) -> PointSet {
        let n = self.ambient_dim();
        let mut out = PointSet::new(n, Vec::new()).expect("positive dim");
        match (&self.engine, &self.target.representation) {
            (Engine::Product { times, space }, _) => {
                if times.distance(t) < radius {
                    for p in space.points().iter() {
                        out.push(p);
                    }
                }
            }
            (Engine::Cloud { tree }, _) => {
                for p in tree.points().iter() {
                    if (p[0] - t).abs() < radius {
                        out.push(&p[1..]);
                    }
                }
            }
            (
                Engine::Graph {
                    vertices,
                    times,
                    curves,
                },
                _,
            ) => {
                let lo = times.partition_point(|&s| s < t - radius);
                let hi = times.partition_point(|&s| s <= t + radius);
                // keep the bracketing samples so the polyline is covered
                let lo = lo.saturating_sub(1);
                let hi = (hi + 1).min(times.len());
                let stride = times.len();
                let pts = vertices.points();
                for c in 0..*curves {
                    for j in lo..hi {
                        out.push(&pts.point(c * stride + j)[1..]);
                    }
                }
            }
        }
        out
    }
}

/// Maps `x` back through an isometric motion so that the section query
/// becomes a query against the base set.
fn pull_back(motion: &Motion, t: f64, x: &[f64]) -> Vec<f64> {
    match motion {
        Motion::Rotation { center, omega } => Motion::Rotation {
            center: *center,
            omega: -omega,
        }
        .eval(t, x),
        Motion::Identity => x.to_vec(),
        _ => {
            // translations: Z(t, x) = x + Z(t, 0)
            let zero = vec![0.0; x.len()];
            let off = motion.eval(t, &zero);
            x.iter().zip(&off).map(|(a, o)| a - o).collect()
        }
    }
}

fn segment_dist2(q: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut ab2 = 0.0;
    let mut proj = 0.0;
    for k in 0..q.len() {
        let d = b[k] - a[k];
        ab2 += d * d;
        proj += (q[k] - a[k]) * d;
    }
    if ab2 <= 0.0 {
        return dist2(q, a);
    }
    let s = (proj / ab2).clamp(0.0, 1.0);
    let mut acc = 0.0;
    for k in 0..q.len() {
        let c = a[k] + s * (b[k] - a[k]) - q[k];
        acc += c * c;
    }
    acc
}

/// Hit-or-miss estimate of a Lebesgue measure.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureEstimate {
    pub value: f64,
    /// Binomial standard error of `value`.
    pub standard_error: f64,
    pub sample_count: usize,
    pub hits: usize,
    pub domain: BoxDomain,
    /// Sample budget ran out before the target relative error was met.
    pub low_confidence: bool,
    /// The section's ε-neighbourhood leaves the domain.
    pub domain_warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureConfig {
    pub seed: u64,
    /// Caller-chosen key (usually the time index) mixed into every stream.
    pub key: u64,
    pub chunk_size: usize,
    /// Chunks evaluated between stopping checks.
    pub batch_chunks: usize,
    pub min_samples: usize,
    pub max_samples: usize,
    /// Target relative standard error.
    pub target_rel_error: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            key: 0,
            chunk_size: 4096,
            batch_chunks: 16,
            min_samples: 65_536,
            max_samples: 1 << 21,
            target_rel_error: 0.01,
        }
    }
}

const MAX_CELL_DIM: usize = 4;
type Cell = [i64; MAX_CELL_DIM];

/// Region made of the cubes of side `h` that lie within one cell of a
/// support point. It contains every point within distance `h` of the
/// support.
#[derive(Debug, Clone)]
struct CellCover {
    origin: Vec<f64>,
    h: f64,
    cells: Vec<Cell>,
    dim: usize,
}

impl CellCover {
    fn build(support: &PointSet, h: f64) -> Result<Self> {
        let dim = support.dim();
        if dim > MAX_CELL_DIM {
            return Err(invalid("dim", "cell covers support at most 4 dimensions"));
        }
        let origin = match support.bounding_box() {
            Some(b) => b.lo,
            None => vec![0.0; dim],
        };
        let mut base: Vec<Cell> = support
            .iter()
            .map(|p| {
                let mut c = [0i64; MAX_CELL_DIM];
                for k in 0..dim {
                    c[k] = libm::floor((p[k] - origin[k]) / h) as i64;
                }
                c
            })
            .collect();
        base.sort_unstable();
        base.dedup();
        let mut cells = Vec::with_capacity(base.len() * 3usize.pow(dim as u32));
        let reach = 3usize.pow(dim as u32);
        for c in &base {
            for code in 0..reach {
                let mut m = code;
                let mut d = *c;
                for k in 0..dim {
                    d[k] += (m % 3) as i64 - 1;
                    m /= 3;
                }
                cells.push(d);
            }
        }
        cells.sort_unstable();
        cells.dedup();
        Ok(Self { origin, h, cells, dim })
    }

    fn volume(&self) -> f64 {
        self.cells.len() as f64 * libm::pow(self.h, self.dim as f64)
    }

    fn sample(&self, rng: &mut crate::rng::StreamRng, out: &mut [f64]) {
        let c = &self.cells[rng.random_range(0..self.cells.len())];
        for k in 0..self.dim {
            out[k] = self.origin[k] + (c[k] as f64 + rng.random::<f64>()) * self.h;
        }
    }
}

/// Hit-or-miss Monte Carlo for `μ({x ∈ domain : inside(x)})` where the set
/// is known to lie within distance `reach` of `support`.
///
/// Samples are drawn from whichever is smaller: the domain, or a cell cover
/// of the support. Chunks are keyed by `(seed, key, chunk)` and evaluated in
/// fixed-size batches so results do not depend on the executor.
pub fn hit_or_miss<E, F>(
    exec: &E,
    support: &PointSet,
    reach: f64,
    domain: &BoxDomain,
    cfg: &MeasureConfig,
    inside: F,
) -> Result<MeasureEstimate>
where
    E: Executor,
    F: Fn(&[f64]) -> bool + Sync + Send,
{
    let dim = domain.dim();
    if support.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: support.dim(),
        });
    }
    if cfg.chunk_size == 0 || cfg.batch_chunks == 0 {
        return Err(invalid("measure", "chunk sizes must be positive"));
    }
    let domain_warning = match support.bounding_box() {
        Some(b) => !domain.contains_box(&b.inflate(reach)),
        None => false,
    };
    if support.is_empty() {
        return Ok(MeasureEstimate {
            value: 0.0,
            standard_error: 0.0,
            sample_count: 0,
            hits: 0,
            domain: domain.clone(),
            low_confidence: false,
            domain_warning,
        });
    }
    let cover = if dim <= MAX_CELL_DIM {
        let c = CellCover::build(support, reach)?;
        if c.volume() < domain.volume() {
            Some(c)
        } else {
            None
        }
    } else {
        None
    };
    let region_volume = cover.as_ref().map_or(domain.volume(), CellCover::volume);

    let run_chunk = |chunk: usize| -> usize {
        let mut rng = keyed(cfg.seed, key2(cfg.key, chunk as u64));
        let mut x = vec![0.0; dim];
        let mut hits = 0;
        for _ in 0..cfg.chunk_size {
            match &cover {
                Some(c) => c.sample(&mut rng, &mut x),
                None => {
                    for k in 0..dim {
                        x[k] = uniform(&mut rng, domain.lo[k], domain.hi[k]);
                    }
                }
            }
            if domain.contains(&x) && inside(&x) {
                hits += 1;
            }
        }
        hits
    };

    let mut hits = 0usize;
    let mut samples = 0usize;
    let mut next_chunk = 0usize;
    loop {
        let batch = exec.map(cfg.batch_chunks, |i| run_chunk(next_chunk + i));
        next_chunk += cfg.batch_chunks;
        hits += batch.iter().sum::<usize>();
        samples += cfg.batch_chunks * cfg.chunk_size;
        let p = hits as f64 / samples as f64;
        let rel = if hits == 0 {
            f64::INFINITY
        } else {
            libm::sqrt((1.0 - p) / (p * samples as f64))
        };
        let done_precision = samples >= cfg.min_samples && rel <= cfg.target_rel_error;
        let budget_out = samples + cfg.batch_chunks * cfg.chunk_size > cfg.max_samples;
        if done_precision || budget_out {
            let value = region_volume * p;
            let se = region_volume * libm::sqrt(p * (1.0 - p) / samples as f64);
            return Ok(MeasureEstimate {
                value,
                standard_error: se,
                sample_count: samples,
                hits,
                domain: domain.clone(),
                low_confidence: !done_precision && hits > 0 && rel > cfg.target_rel_error,
                domain_warning,
            });
        }
    }
}

impl DistanceEvaluator {
    /// `μₙ({x ∈ domain : d_{S(t)}(x) < ε})`.
    pub fn neighborhood_measure<E: Executor>(
        &self,
        exec: &E,
        t: f64,
        eps: f64,
        domain: &BoxDomain,
        cfg: &MeasureConfig,
    ) -> Result<MeasureEstimate> {
        if !(eps > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        let section = self.target.temporal_section(t);
        if section.is_empty() {
            return Err(Error::EmptySection { t });
        }
        let tree = KdTree::build(section.clone());
        let eps2 = eps * eps;
        hit_or_miss(exec, &section, eps, domain, cfg, |x| {
            tree.nearest(x).is_some_and(|(_, d2)| d2 < eps2)
        })
    }

    /// `μₙ({x ∈ domain : d_S(t, x) < ε})`, the slice of the space-time
    /// neighbourhood at time `t`.
    pub fn slice_measure<E: Executor>(
        &self,
        exec: &E,
        t: f64,
        eps: f64,
        domain: &BoxDomain,
        cfg: &MeasureConfig,
    ) -> Result<MeasureEstimate> {
        if !(eps > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        let reach = eps + self.error_bound;
        let support = self.spatial_support_near(t, reach);
        hit_or_miss(exec, &support, reach, domain, cfg, |x| {
            self.dist_spacetime(t, x).is_ok_and(|d| d < eps)
        })
    }
}

/// Outcome of the Hölder section-bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionBoundReport {
    pub samples: usize,
    /// Points with `d_{S(t)} < d_S` or `d_{S(t)} > (K+1) d_S^α` beyond the
    /// evaluator tolerance.
    pub violations: usize,
    /// For Lipschitz graphs: violations of `d_{S(t)}/(K+1) ≤ d_S`.
    pub lipschitz_violations: usize,
    /// Largest `d_{S(t)} / ((K+1) d_S^α)` observed.
    pub worst_ratio: f64,
    pub evaluator_error: f64,
    pub alpha: f64,
    pub k: f64,
}

impl DistanceEvaluator {
    /// Samples `(t, x)` with `d_S(t,x) < 1` and checks
    /// `d_S ≤ d_{S(t)} ≤ (K+1) d_S^α`.
    pub fn check_section_bound(&self, samples: usize, seed: u64) -> Result<SectionBoundReport> {
        let (alpha, k) = self
            .target
            .holder()
            .ok_or_else(|| invalid("set", "section bound needs a graph with Hölder data"))?;
        let n = self.ambient_dim();
        let horizon = self.target.horizon;
        let bbox = self.target.spatial_bounding_box().ok_or(Error::EmptySet)?.inflate(1.0);
        let err = self.error_bound;
        let mut rng = keyed(seed, 0x5ec7);
        let mut report = SectionBoundReport {
            samples: 0,
            violations: 0,
            lipschitz_violations: 0,
            worst_ratio: 0.0,
            evaluator_error: err,
            alpha,
            k,
        };
        let mut x = vec![0.0; n];
        let mut attempts = 0usize;
        while report.samples < samples {
            attempts += 1;
            if attempts > samples.saturating_mul(100) {
                break;
            }
            let t = uniform(&mut rng, 0.0, horizon);
            if rng.random::<bool>() {
                for j in 0..n {
                    x[j] = uniform(&mut rng, bbox.lo[j], bbox.hi[j]);
                }
            } else {
                // near the section: random section point plus a log-uniform offset
                let sec = self.target.temporal_section(t);
                if sec.is_empty() {
                    continue;
                }
                let p = sec.point(rng.random_range(0..sec.len()));
                let r = libm::exp(uniform(&mut rng, libm::log(1e-4), 0.0));
                let mut dir = vec![0.0; n];
                let mut nd = 0.0;
                while nd < 1e-12 {
                    for v in dir.iter_mut() {
                        *v = uniform(&mut rng, -1.0, 1.0);
                    }
                    nd = crate::geometry::norm(&dir);
                }
                for j in 0..n {
                    x[j] = p[j] + r * dir[j] / nd;
                }
            }
            let ds = self.dist_spacetime(t, &x)?;
            if !(ds < 1.0) || ds <= 0.0 {
                continue;
            }
            let dsec = match self.dist_section(t, &x) {
                Ok(v) => v,
                Err(Error::EmptySection { .. }) => continue,
                Err(e) => return Err(e),
            };
            report.samples += 1;
            let upper = (k + 1.0) * libm::pow(ds + err, alpha);
            let ratio = dsec / ((k + 1.0) * libm::pow(ds, alpha));
            report.worst_ratio = report.worst_ratio.max(ratio);
            if dsec + err < ds || dsec > upper * (1.0 + 1e-12) {
                report.violations += 1;
            }
            if alpha >= 1.0 && dsec / (k + 1.0) > ds + err + 1e-12 {
                report.lipschitz_violations += 1;
            }
        }
        Ok(report)
    }
}
