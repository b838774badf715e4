//! Singular vector fields: point vortices over a smooth background,
//! normal components `b·∇d_S`, mixed norms and the well-posedness checks.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::dimension::{print_membership, PrintConfig, Verdict};
use crate::distance::{DistanceEvaluator, DEFAULT_DELTA_MIN};
use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::geometry::{dot, norm, BoxDomain, PointSet};
use crate::sets::{make_graph, make_product, InitialSet, Motion, SpaceTimeSet, TimeSet, TrajectoryBundle};

pub type PathFn = dyn Fn(f64) -> [f64; 2] + Send + Sync;
pub type VectorFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
pub type ScalarFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

/// Trajectory `z(t)` of a point vortex.
#[derive(Clone)]
pub enum Path {
    Fixed([f64; 2]),
    Circular {
        center: [f64; 2],
        radius: f64,
        omega: f64,
        phase: f64,
    },
    /// Piecewise linear through `(times[k], points[k])`, constant outside.
    Polyline {
        times: Vec<f64>,
        points: Vec<[f64; 2]>,
    },
    /// `z(t) = start + t^exponent · direction`.
    PowerDrift {
        start: [f64; 2],
        direction: [f64; 2],
        exponent: f64,
    },
    /// Closure with a declared Hölder pair `(α, K)`.
    Custom {
        f: Arc<PathFn>,
        holder: (f64, f64),
    },
}

impl fmt::Debug for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Path::Fixed(z) => f.debug_tuple("Fixed").field(z).finish(),
            Path::Circular {
                center,
                radius,
                omega,
                phase,
            } => f
                .debug_struct("Circular")
                .field("center", center)
                .field("radius", radius)
                .field("omega", omega)
                .field("phase", phase)
                .finish(),
            Path::Polyline { times, points } => f
                .debug_struct("Polyline")
                .field("times", times)
                .field("points", points)
                .finish(),
            Path::PowerDrift {
                start,
                direction,
                exponent,
            } => f
                .debug_struct("PowerDrift")
                .field("start", start)
                .field("direction", direction)
                .field("exponent", exponent)
                .finish(),
            Path::Custom { holder, .. } => f.debug_struct("Custom").field("holder", holder).finish(),
        }
    }
}

impl Path {
    pub fn position(&self, t: f64) -> [f64; 2] {
        match self {
            Path::Fixed(z) => *z,
            Path::Circular {
                center,
                radius,
                omega,
                phase,
            } => {
                let (s, c) = libm::sincos(omega * t + phase);
                [center[0] + radius * c, center[1] + radius * s]
            }
            Path::Polyline { times, points } => {
                if t <= times[0] {
                    return points[0];
                }
                for i in 1..times.len() {
                    if t <= times[i] {
                        let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
                        let (a, b) = (points[i - 1], points[i]);
                        return [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])];
                    }
                }
                points[points.len() - 1]
            }
            Path::PowerDrift {
                start,
                direction,
                exponent,
            } => {
                let s = libm::pow(t.max(0.0), *exponent);
                [start[0] + s * direction[0], start[1] + s * direction[1]]
            }
            Path::Custom { f, .. } => f(t),
        }
    }

    fn motion(&self) -> Motion {
        match self {
            Path::Fixed(_) => Motion::Identity,
            Path::Circular { center, omega, .. } => Motion::Rotation {
                center: *center,
                omega: *omega,
            },
            Path::Polyline { times, points } => Motion::Polyline {
                times: times.clone(),
                offsets: points
                    .iter()
                    .map(|p| vec![p[0] - points[0][0], p[1] - points[0][1]])
                    .collect(),
            },
            Path::PowerDrift {
                direction, exponent, ..
            } => Motion::PowerDrift {
                direction: direction.to_vec(),
                exponent: *exponent,
            },
            Path::Custom { f, .. } => {
                let f = f.clone();
                let z0 = f(0.0);
                Motion::Custom(Arc::new(move |t: f64, x: &[f64], out: &mut [f64]| {
                    let z = f(t);
                    out[0] = x[0] + z[0] - z0[0];
                    out[1] = x[1] + z[1] - z0[1];
                }))
            }
        }
    }

    /// Graph `{(t, z(t)) : t ∈ [0, T]}` as a space-time set.
    pub fn to_set(&self, horizon: f64) -> Result<SpaceTimeSet> {
        let z0 = self.position(0.0);
        let s0 = InitialSet::new(PointSet::new(2, z0.to_vec())?, Some(0.0), "vortex")?;
        if let Path::Fixed(_) = self {
            return make_product(TimeSet::interval(0.0, horizon)?, s0, horizon);
        }
        let motion = self.motion();
        let bundle = match self {
            Path::Custom { holder, .. } => TrajectoryBundle::new(motion, holder.0, holder.1, horizon)?,
            _ => TrajectoryBundle::with_known_holder(motion, &s0.points, horizon)?,
        };
        make_graph(s0, bundle)
    }
}

/// Point vortex `Γ (x − z(t))^⊥ / |x − z(t)|²`, optionally divided by 2π.
#[derive(Debug, Clone)]
pub struct VortexTerm {
    pub path: Path,
    pub strength: f64,
    pub normalized: bool,
}

/// The perpendicular kernel `(a, b)^⊥ / (a² + b² + ρ²)` with `(a,b)^⊥ = (−b, a)`.
#[inline]
pub fn perp_kernel(dx: f64, dy: f64, rho2: f64) -> [f64; 2] {
    let r2 = dx * dx + dy * dy + rho2;
    [-dy / r2, dx / r2]
}

/// Regular 2D grid with bilinear interpolation and constant extension.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    /// Row-major `(ny, nx)` samples of each component.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl GridTable {
    pub fn new(lo: [f64; 2], hi: [f64; 2], nx: usize, ny: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if nx < 2 || ny < 2 || u.len() != nx * ny || v.len() != nx * ny {
            return Err(invalid("table", "needs at least 2×2 samples per component"));
        }
        if !(hi[0] > lo[0] && hi[1] > lo[1]) {
            return Err(invalid("table", "empty extent"));
        }
        Ok(Self { lo, hi, nx, ny, u, v })
    }

    pub fn eval(&self, x: &[f64]) -> [f64; 2] {
        let fx =
            ((x[0] - self.lo[0]) / (self.hi[0] - self.lo[0]) * (self.nx - 1) as f64).clamp(0.0, (self.nx - 1) as f64);
        let fy =
            ((x[1] - self.lo[1]) / (self.hi[1] - self.lo[1]) * (self.ny - 1) as f64).clamp(0.0, (self.ny - 1) as f64);
        let i = (fx as usize).min(self.nx - 2);
        let j = (fy as usize).min(self.ny - 2);
        let (a, b) = (fx - i as f64, fy - j as f64);
        let at = |g: &[f64]| {
            let k = j * self.nx + i;
            (1.0 - a) * (1.0 - b) * g[k]
                + a * (1.0 - b) * g[k + 1]
                + (1.0 - a) * b * g[k + self.nx]
                + a * b * g[k + self.nx + 1]
        };
        [at(&self.u), at(&self.v)]
    }
}

/// Smooth (or explicitly singular) part of the field.
#[derive(Clone)]
pub enum Background {
    Zero,
    /// `ω (−x₂, x₁)`.
    Rotation {
        omega: f64,
    },
    Uniform(Vec<f64>),
    /// `A x + c` with `A` row-major.
    Linear {
        matrix: Vec<f64>,
        offset: Vec<f64>,
    },
    /// `s (x − c) / |x − c|`, singular at `c`.
    Radial {
        center: Vec<f64>,
        strength: f64,
    },
    Table(GridTable),
    Custom {
        f: Arc<VectorFn>,
        divergence: Option<Arc<ScalarFn>>,
    },
}

impl fmt::Debug for Background {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Background::Zero => write!(f, "Zero"),
            Background::Rotation { omega } => f.debug_struct("Rotation").field("omega", omega).finish(),
            Background::Uniform(c) => f.debug_tuple("Uniform").field(c).finish(),
            Background::Linear { matrix, offset } => f
                .debug_struct("Linear")
                .field("matrix", matrix)
                .field("offset", offset)
                .finish(),
            Background::Radial { center, strength } => f
                .debug_struct("Radial")
                .field("center", center)
                .field("strength", strength)
                .finish(),
            Background::Table(t) => f.debug_tuple("Table").field(&(t.nx, t.ny)).finish(),
            Background::Custom { .. } => write!(f, "Custom(..)"),
        }
    }
}

/// `b(t,x) = v(t,x) + Σ vortex terms`.
#[derive(Debug, Clone)]
pub struct FieldSpec {
    pub dim: usize,
    pub horizon: f64,
    pub background: Background,
    pub vortices: Vec<VortexTerm>,
    /// Structural assertion that `b` is BV away from the singular set,
    /// carried by the construction recipe.
    pub bv_off_singular_set: bool,
}

impl FieldSpec {
    pub fn new(dim: usize, horizon: f64, background: Background) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if !(horizon > 0.0) {
            return Err(invalid("horizon", "must be positive"));
        }
        let ok = match &background {
            Background::Rotation { .. } | Background::Table(_) => dim == 2,
            Background::Uniform(c) => c.len() == dim,
            Background::Linear { matrix, offset } => matrix.len() == dim * dim && offset.len() == dim,
            Background::Radial { center, .. } => center.len() == dim,
            _ => true,
        };
        if !ok {
            return Err(invalid("background", "dimension does not match the field"));
        }
        Ok(Self {
            dim,
            horizon,
            background,
            vortices: Vec::new(),
            bv_off_singular_set: true,
        })
    }

    pub fn with_vortex(mut self, term: VortexTerm) -> Result<Self> {
        if self.dim != 2 {
            return Err(invalid("vortex", "point vortices need n = 2"));
        }
        self.vortices.push(term);
        Ok(self)
    }

    /// Evaluates `b(t, x)` into `out`.
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim || out.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        match &self.background {
            Background::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            Background::Rotation { omega } => {
                out[0] = -omega * x[1];
                out[1] = omega * x[0];
            }
            Background::Uniform(c) => out.copy_from_slice(c),
            Background::Linear { matrix, offset } => {
                for i in 0..self.dim {
                    out[i] = offset[i] + dot(&matrix[i * self.dim..(i + 1) * self.dim], x);
                }
            }
            Background::Radial { center, strength } => {
                let r = libm::sqrt(crate::geometry::dist2(x, center));
                if r == 0.0 {
                    return Err(Error::SingularPoint { t });
                }
                for i in 0..self.dim {
                    out[i] = strength * (x[i] - center[i]) / r;
                }
            }
            Background::Table(g) => out.copy_from_slice(&g.eval(x)),
            Background::Custom { f, .. } => f(t, x, out),
        }
        for v in &self.vortices {
            let z = v.path.position(t);
            let (dx, dy) = (x[0] - z[0], x[1] - z[1]);
            if dx == 0.0 && dy == 0.0 {
                return Err(Error::SingularPoint { t });
            }
            let k = perp_kernel(dx, dy, 0.0);
            let s = if v.normalized {
                v.strength / (2.0 * PI)
            } else {
                v.strength
            };
            out[0] += s * k[0];
            out[1] += s * k[1];
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, x, &mut out)?;
        Ok(out)
    }

    /// Spatial divergence: analytic where known, central differences
    /// otherwise. Vortex terms are divergence-free.
    pub fn divergence(&self, t: f64, x: &[f64]) -> Result<f64> {
        match &self.background {
            Background::Zero | Background::Rotation { .. } | Background::Uniform(_) => Ok(0.0),
            Background::Linear { matrix, .. } => Ok((0..self.dim).map(|i| matrix[i * self.dim + i]).sum()),
            Background::Radial { center, strength } => {
                let r = libm::sqrt(crate::geometry::dist2(x, center));
                if r == 0.0 {
                    return Err(Error::SingularPoint { t });
                }
                Ok(strength * (self.dim as f64 - 1.0) / r)
            }
            Background::Custom {
                divergence: Some(d), ..
            } => Ok(d(t, x)),
            _ => {
                let bg = FieldSpec {
                    vortices: Vec::new(),
                    ..self.clone()
                };
                fd_divergence(&bg, t, x, 1e-5)
            }
        }
    }
}

/// Fourth-order central-difference divergence with step `h`.
pub fn fd_divergence(b: &FieldSpec, t: f64, x: &[f64], h: f64) -> Result<f64> {
    let mut xp = x.to_vec();
    let mut acc = 0.0;
    for k in 0..b.dim {
        let mut at = |s: f64| -> Result<f64> {
            xp[k] = x[k] + s;
            let v = b.eval(t, &xp)?[k];
            xp[k] = x[k];
            Ok(v)
        };
        let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
        acc += (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
    }
    Ok(acc)
}

/// Mixed norms below this are treated as zero when judging trends.
pub const NORM_FLOOR: f64 = 1e-8;

/// `b·∇d_S` with its non-differentiability flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalComponent {
    pub value: f64,
    pub distance: f64,
    /// The one-sided gradients disagree (a ridge of `d_S`).
    pub flagged: bool,
}

/// `b(t,x)·∇ₓd_S(t,x)` by fourth-order central differences of step
/// `d_S/1000`. At ridges of `d_S` the one-sided gradient giving
/// the smaller magnitude is used and the result is flagged.
pub fn normal_component(
    b: &FieldSpec,
    e: &DistanceEvaluator,
    t: f64,
    x: &[f64],
    delta_min: f64,
) -> Result<NormalComponent> {
    let n = b.dim;
    let d = e.dist_spacetime(t, x)?;
    if d <= delta_min {
        return Err(Error::DistanceFloor {
            distance: d,
            floor: delta_min,
        });
    }
    let bx = b.eval(t, x)?;
    let h = d * 1e-3;
    let mut central = vec![0.0; n];
    let mut fwd = vec![0.0; n];
    let mut bwd = vec![0.0; n];
    let mut xp = x.to_vec();
    let at = |k: usize, s: f64, xp: &mut Vec<f64>| -> Result<f64> {
        xp[k] = x[k] + s;
        let v = e.dist_spacetime(t, xp);
        xp[k] = x[k];
        v
    };
    for k in 0..n {
        let p1 = at(k, h, &mut xp)?;
        let m1 = at(k, -h, &mut xp)?;
        let p2 = at(k, 2.0 * h, &mut xp)?;
        let m2 = at(k, -2.0 * h, &mut xp)?;
        central[k] = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
        fwd[k] = (-p2 + 4.0 * p1 - 3.0 * d) / (2.0 * h);
        bwd[k] = (3.0 * d - 4.0 * m1 + m2) / (2.0 * h);
    }
    let jump = fwd.iter().zip(&bwd).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
    let ridge = jump > 0.25 || norm(&central) > 1.0 + 1e-6;
    if ridge {
        let vf = dot(&bx, &fwd);
        let vb = dot(&bx, &bwd);
        let value = if vf.abs() <= vb.abs() { vf } else { vb };
        return Ok(NormalComponent {
            value,
            distance: d,
            flagged: true,
        });
    }
    Ok(NormalComponent {
        value: dot(&bx, &central),
        distance: d,
        flagged: false,
    })
}

/// Quadrature settings for [`mixed_norm_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixedNormConfig {
    pub time_interval: (f64, f64),
    pub time_samples: usize,
    pub cells_per_axis: usize,
    /// Tube radius removed around `S`; the value at half this radius is
    /// also reported.
    pub excision: f64,
}

/// Value of `(∫(∫|f|^q dx)^{p/q} dt)^{1/p}` at two excision radii.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedNorm {
    pub value: f64,
    pub value_half: f64,
    pub radius: f64,
    /// `log₂(value_half / value)`; large values indicate divergence.
    pub trend: f64,
}

impl MixedNorm {
    /// Values below `floor` count as numerically zero.
    pub fn diverging(&self, threshold: f64, floor: f64) -> bool {
        !self.value_half.is_finite() || (self.trend > threshold && self.value_half > floor)
    }
}

fn combine(vals: &[f64], weights: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        vals.iter().copied().fold(0.0, f64::max)
    } else {
        libm::pow(
            vals.iter().zip(weights).map(|(v, w)| w * libm::pow(*v, p)).sum::<f64>(),
            1.0 / p,
        )
    }
}

/// Midpoint quadrature of a mixed Lebesgue norm over `domain × time`,
/// skipping cells whose centre lies within the excision radius of `S`.
pub fn mixed_norm_estimate<E, F>(
    exec: &E,
    f: F,
    p: f64,
    q: f64,
    domain: &BoxDomain,
    excise: Option<&DistanceEvaluator>,
    cfg: &MixedNormConfig,
) -> Result<MixedNorm>
where
    E: Executor,
    F: Fn(f64, &[f64]) -> Result<f64> + Sync + Send,
{
    if !(p >= 1.0) || !(q >= 1.0) {
        return Err(invalid("exponents", "mixed norms need p, q ≥ 1"));
    }
    if cfg.time_samples == 0 || cfg.cells_per_axis == 0 {
        return Err(invalid("quadrature", "sample counts must be positive"));
    }
    let r = cfg.excision;
    if excise.is_some() && !(r >= DEFAULT_DELTA_MIN) {
        return Err(invalid("excision", "radius below the distance floor"));
    }
    let n = domain.dim();
    let m = cfg.cells_per_axis;
    let hs: Vec<f64> = (0..n).map(|k| (domain.hi[k] - domain.lo[k]) / m as f64).collect();
    let cell_vol: f64 = hs.iter().product();
    let (t0, t1) = cfg.time_interval;
    let dt = (t1 - t0) / cfg.time_samples as f64;
    let total_cells = m.pow(n as u32);

    let per_time = exec.map(cfg.time_samples, |ti| -> Result<(f64, f64)> {
        let t = t0 + (ti as f64 + 0.5) * dt;
        let mut x = vec![0.0; n];
        let (mut acc, mut acc_half) = (0.0f64, 0.0f64);
        for c in 0..total_cells {
            let mut code = c;
            for k in 0..n {
                x[k] = domain.lo[k] + ((code % m) as f64 + 0.5) * hs[k];
                code /= m;
            }
            let far = match excise {
                Some(e) => {
                    let d = e.dist_spacetime(t, &x)?;
                    if d < 0.5 * r {
                        continue;
                    }
                    d >= r
                }
                None => true,
            };
            let v = f(t, &x)?.abs();
            if !v.is_finite() {
                return Err(Error::NonFinite { t });
            }
            if q.is_infinite() {
                acc_half = acc_half.max(v);
                if far {
                    acc = acc.max(v);
                }
            } else {
                let w = libm::pow(v, q) * cell_vol;
                acc_half += w;
                if far {
                    acc += w;
                }
            }
        }
        if q.is_infinite() {
            Ok((acc, acc_half))
        } else {
            Ok((libm::pow(acc, 1.0 / q), libm::pow(acc_half, 1.0 / q)))
        }
    });
    let per_time = per_time.into_iter().collect::<Result<Vec<_>>>()?;
    let w = vec![dt; per_time.len()];
    let a: Vec<f64> = per_time.iter().map(|v| v.0).collect();
    let b: Vec<f64> = per_time.iter().map(|v| v.1).collect();
    let value = combine(&a, &w, p);
    let value_half = combine(&b, &w, p);
    let trend = if value > 0.0 {
        libm::log2(value_half / value)
    } else if value_half > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(MixedNorm {
        value,
        value_half,
        radius: r,
        trend,
    })
}

/// Smallest `q̄` with `1/q + 1/(α(n − D)) < 1` iff `q > q̄`, where `D` is
/// the supremum of the section dimensions. `None` when no finite `q`
/// satisfies the inequality.
pub fn trajectory_threshold(alpha_h: f64, n: usize, sup_dim: f64) -> Option<f64> {
    let s = alpha_h * (n as f64 - sup_dim);
    if s > 1.0 {
        Some(1.0 / (1.0 - 1.0 / s))
    } else {
        None
    }
}

/// Hölder conjugate exponent.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionId {
    LocalIntegrability,
    BoundedDivergence,
    Growth,
    BvOffSet,
    NormalComponent,
    TrajectoryThreshold,
}

impl ConditionId {
    pub fn label(self) -> &'static str {
        match self {
            ConditionId::LocalIntegrability => "i",
            ConditionId::BoundedDivergence => "ii",
            ConditionId::Growth => "iii",
            ConditionId::BvOffSet => "iv",
            ConditionId::NormalComponent => "v",
            ConditionId::TrajectoryThreshold => "trajectory",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionStatus {
    Satisfied,
    Violated,
    UnverifiableNumerically,
}

impl ConditionStatus {
    pub fn label(self) -> &'static str {
        match self {
            ConditionStatus::Satisfied => "satisfied",
            ConditionStatus::Violated => "violated",
            ConditionStatus::UnverifiableNumerically => "unverifiable_numerically",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEntry {
    pub id: ConditionId,
    pub status: ConditionStatus,
    pub evidence: String,
    pub values: Vec<(&'static str, f64)>,
    pub exponents: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
    pub p: f64,
    pub q: f64,
    pub p_star: f64,
    pub q_star: f64,
    /// `q̄`, or `None` when the trajectory condition is unsatisfiable.
    pub threshold: Option<f64>,
}

impl ConditionReport {
    pub fn get(&self, id: ConditionId) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WellposednessConfig {
    pub domain: BoxDomain,
    pub quadrature: MixedNormConfig,
    pub print: PrintConfig,
    pub eps_floor: f64,
    /// Divergence trend above which a norm is declared infinite.
    pub trend_threshold: f64,
    pub delta_min: f64,
    /// Skip the Monte Carlo print test in condition (v).
    pub skip_print: bool,
}

impl WellposednessConfig {
    pub fn new(domain: BoxDomain, horizon: f64) -> Self {
        Self {
            domain,
            quadrature: MixedNormConfig {
                time_interval: (0.0, horizon),
                time_samples: 4,
                cells_per_axis: 128,
                excision: 0.05,
            },
            print: PrintConfig::default(),
            eps_floor: 1e-3,
            trend_threshold: 0.1,
            delta_min: DEFAULT_DELTA_MIN,
            skip_print: false,
        }
    }
}

fn norm_entry(id: ConditionId, m: &MixedNorm, thr: f64, exps: (f64, f64), what: &str) -> ConditionEntry {
    let bad = m.diverging(thr, NORM_FLOOR);
    ConditionEntry {
        id,
        status: if bad {
            ConditionStatus::Violated
        } else {
            ConditionStatus::Satisfied
        },
        evidence: format!(
            "{what}: {:.6e} at radius {:.3e}, {:.6e} at half radius (trend {:.3})",
            m.value, m.radius, m.value_half, m.trend
        ),
        values: vec![("value", m.value), ("value_half", m.value_half), ("trend", m.trend)],
        exponents: exps,
    }
}

/// Evaluates the well-posedness conditions for `b` with singular set `S`
/// (through its evaluator) and exponents `(p, q)`.
pub fn wellposedness_check<E: Executor>(
    exec: &E,
    b: &FieldSpec,
    e: &DistanceEvaluator,
    p: f64,
    q: f64,
    alpha_h: f64,
    sup_dim: f64,
    cfg: &WellposednessConfig,
) -> Result<ConditionReport> {
    if !(p >= 1.0) || !(q >= 1.0) {
        return Err(invalid("exponents", "need 1 ≤ p, q ≤ ∞"));
    }
    let (ps, qs) = (conjugate(p), conjugate(q));
    let thr = cfg.trend_threshold;
    let mut entries = Vec::new();

    let m1 = mixed_norm_estimate(
        exec,
        |t, x| Ok(norm(&b.eval(t, x)?)),
        1.0,
        1.0,
        &cfg.domain,
        Some(e),
        &cfg.quadrature,
    )?;
    entries.push(norm_entry(
        ConditionId::LocalIntegrability,
        &m1,
        thr,
        (1.0, 1.0),
        "‖b‖_L1",
    ));

    let m2 = mixed_norm_estimate(
        exec,
        |t, x| b.divergence(t, x),
        1.0,
        f64::INFINITY,
        &cfg.domain,
        Some(e),
        &cfg.quadrature,
    )?;
    entries.push(norm_entry(
        ConditionId::BoundedDivergence,
        &m2,
        thr,
        (1.0, f64::INFINITY),
        "‖div b‖_L1Linf",
    ));

    let m3 = mixed_norm_estimate(
        exec,
        |t, x| Ok(norm(&b.eval(t, x)?) / (1.0 + norm(x))),
        1.0,
        1.0,
        &cfg.domain,
        Some(e),
        &cfg.quadrature,
    )?;
    let mut g = norm_entry(
        ConditionId::Growth,
        &m3,
        thr,
        (1.0, 1.0),
        "‖b/(1+|x|)‖_L1 on the configured domain",
    );
    g.evidence.push_str("; checked on the configured domain only");
    entries.push(g);

    entries.push(ConditionEntry {
        id: ConditionId::BvOffSet,
        status: ConditionStatus::UnverifiableNumerically,
        evidence: format!(
            "analytic hypothesis; construction recipe asserts BV off S: {}",
            b.bv_off_singular_set
        ),
        values: Vec::new(),
        exponents: (1.0, 1.0),
    });

    let m5 = mixed_norm_estimate(
        exec,
        |t, x| Ok(normal_component(b, e, t, x, cfg.delta_min)?.value),
        p,
        q,
        &cfg.domain,
        Some(e),
        &cfg.quadrature,
    )?;
    let normal_ok = !m5.diverging(thr, NORM_FLOOR);
    let (print_status, print_text) = if cfg.skip_print {
        (Verdict::Inconclusive, String::from("print test skipped"))
    } else {
        let v = print_membership(exec, e, qs, ps, &cfg.domain, cfg.eps_floor, &cfg.print)?;
        let text = format!(
            "print ({qs}, {ps}): {:?} (gamma_min {:.3}, theta {:.3}; {})",
            v.verdict, v.gamma_min, v.theta, v.reason
        );
        (v.verdict, text)
    };
    let status = match (normal_ok, print_status) {
        (true, Verdict::Member) => ConditionStatus::Satisfied,
        (false, _) | (_, Verdict::NonMember) => ConditionStatus::Violated,
        _ => ConditionStatus::UnverifiableNumerically,
    };
    entries.push(ConditionEntry {
        id: ConditionId::NormalComponent,
        status,
        evidence: format!(
            "‖b·∇d_S‖: {:.6e} / {:.6e} (trend {:.3}); {print_text}",
            m5.value, m5.value_half, m5.trend
        ),
        values: vec![("value", m5.value), ("value_half", m5.value_half), ("trend", m5.trend)],
        exponents: (p, q),
    });

    let threshold = trajectory_threshold(alpha_h, b.dim, sup_dim);
    let (status, evidence) = match threshold {
        Some(qb) if q > qb => (ConditionStatus::Satisfied, format!("q = {q} > threshold {qb}")),
        Some(qb) => (ConditionStatus::Violated, format!("q = {q} ≤ threshold {qb}")),
        None => (
            ConditionStatus::Violated,
            format!(
                "condition unsatisfiable: alpha (n - sup dim) = {} ≤ 1",
                alpha_h * (b.dim as f64 - sup_dim)
            ),
        ),
    };
    entries.push(ConditionEntry {
        id: ConditionId::TrajectoryThreshold,
        status,
        evidence,
        values: vec![
            ("threshold", threshold.unwrap_or(f64::INFINITY)),
            ("alpha_h", alpha_h),
            ("sup_dim", sup_dim),
        ],
        exponents: (1.0, q),
    });

    Ok(ConditionReport {
        entries,
        p,
        q,
        p_star: ps,
        q_star: qs,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::rng::{keyed, uniform};

    fn vortex_at(z: [f64; 2]) -> FieldSpec {
        FieldSpec::new(2, 1.0, Background::Zero)
            .unwrap()
            .with_vortex(VortexTerm {
                path: Path::Fixed(z),
                strength: 1.0,
                normalized: false,
            })
            .unwrap()
    }

    #[test]
    fn vortex_kernel_examples() {
        let b = vortex_at([1.0, 0.0]);
        let v = b.eval(0.0, &[0.0, 0.0]).unwrap();
        assert!((v[0] - 0.0).abs() < 1e-15 && (v[1] + 1.0).abs() < 1e-15);
        let b0 = vortex_at([0.0, 0.0]);
        let v = b0.eval(0.3, &[0.25, 0.0]).unwrap();
        assert!(v[0].abs() < 1e-15 && (v[1] - 4.0).abs() < 1e-12);
        assert!(matches!(b0.eval(0.0, &[0.0, 0.0]), Err(Error::SingularPoint { .. })));
        let n = FieldSpec::new(2, 1.0, Background::Zero)
            .unwrap()
            .with_vortex(VortexTerm {
                path: Path::Fixed([0.0, 0.0]),
                strength: 1.0,
                normalized: true,
            })
            .unwrap();
        assert!((n.eval(0.0, &[1.0, 0.0]).unwrap()[1] - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn vortex_fd_divergence_vanishes() {
        let b = vortex_at([0.0, 0.0]);
        assert!(fd_divergence(&b, 0.0, &[0.3, 0.4], 1e-5).unwrap().abs() < 1e-6);
        let mut rng = keyed(11, 0);
        let mut worst: f64 = 0.0;
        let mut count = 0;
        while count < 10_000 {
            let x = [uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0)];
            if libm::hypot(x[0], x[1]) < 0.1 {
                continue;
            }
            count += 1;
            worst = worst.max(fd_divergence(&b, 0.0, &x, 1e-4).unwrap().abs());
        }
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn rotation_and_superposition() {
        let r = FieldSpec::new(2, 1.0, Background::Rotation { omega: 1.0 }).unwrap();
        assert_eq!(r.eval(0.0, &[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        let d = 0.5;
        let b = FieldSpec::new(2, 1.0, Background::Zero)
            .unwrap()
            .with_vortex(VortexTerm {
                path: Path::Fixed([d, 0.0]),
                strength: 1.0,
                normalized: false,
            })
            .unwrap()
            .with_vortex(VortexTerm {
                path: Path::Fixed([-d, 0.0]),
                strength: -1.0,
                normalized: false,
            })
            .unwrap();
        let v = b.eval(0.0, &[0.0, 0.0]).unwrap();
        // each term contributes (0, -1/d) at the origin
        let oracle: f64 = [(d, 1.0), (-d, -1.0)].iter().map(|(zx, g)| g * (-zx) / (zx * zx)).sum();
        assert!(v[0].abs() < 1e-15);
        assert!((v[1] - oracle).abs() < 1e-12 && (v[1] + 2.0 / d).abs() < 1e-12);
    }

    #[test]
    fn static_vortex_normal_component_cancels() {
        let b = vortex_at([0.0, 0.0]);
        let e = DistanceEvaluator::new(Path::Fixed([0.0, 0.0]).to_set(1.0).unwrap(), 1e-3).unwrap();
        let mut rng = keyed(5, 1);
        let mut worst: f64 = 0.0;
        for _ in 0..2000 {
            let x = [uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0)];
            if libm::hypot(x[0], x[1]) < 0.1 {
                continue;
            }
            let nc = normal_component(&b, &e, 0.5, &x, 1e-9).unwrap();
            worst = worst.max(nc.value.abs());
        }
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn radial_field_is_fully_normal() {
        let b = FieldSpec::new(
            2,
            1.0,
            Background::Radial {
                center: vec![0.0, 0.0],
                strength: 1.0,
            },
        )
        .unwrap();
        let e = DistanceEvaluator::new(Path::Fixed([0.0, 0.0]).to_set(1.0).unwrap(), 1e-3).unwrap();
        let nc = normal_component(&b, &e, 0.5, &[0.3, -0.2], 1e-9).unwrap();
        assert!((nc.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ridge_is_flagged() {
        let s0 = InitialSet::new(PointSet::from_scalars(&[-1.0, 1.0]), None, "pair").unwrap();
        let s = make_product(TimeSet::interval(0.0, 1.0).unwrap(), s0, 1.0).unwrap();
        let e = DistanceEvaluator::new(s, 1e-3).unwrap();
        let b = FieldSpec::new(1, 1.0, Background::Uniform(vec![1.0])).unwrap();
        let nc = normal_component(&b, &e, 0.5, &[0.0], 1e-9).unwrap();
        assert!(nc.flagged);
        assert!((nc.value.abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_mixed_norm() {
        let dom = BoxDomain::new(vec![0.0, 0.0], vec![2.0, 1.5]).unwrap();
        let cfg = MixedNormConfig {
            time_interval: (0.0, 3.0),
            time_samples: 5,
            cells_per_axis: 10,
            excision: 0.0,
        };
        let m = mixed_norm_estimate(&Sequential, |_, _| Ok(2.0), 2.0, 3.0, &dom, None, &cfg).unwrap();
        let exact = 2.0 * libm::pow(3.0, 1.0 / 3.0) * libm::pow(3.0, 0.5);
        assert!((m.value - exact).abs() < 1e-12);
    }

    #[test]
    fn reciprocal_distance_norm_trend() {
        let e = DistanceEvaluator::new(Path::Fixed([0.0, 0.0]).to_set(1.0).unwrap(), 1e-3).unwrap();
        let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let cfg = MixedNormConfig {
            time_interval: (0.0, 1.0),
            time_samples: 1,
            cells_per_axis: 1000,
            excision: 0.02,
        };
        let f = |t: f64, x: &[f64]| Ok(1.0 / e.dist_spacetime(t, x)?);
        let a = mixed_norm_estimate(&Sequential, f, f64::INFINITY, 1.5, &dom, Some(&e), &cfg).unwrap();
        let b = mixed_norm_estimate(&Sequential, f, f64::INFINITY, 2.5, &dom, Some(&e), &cfg).unwrap();
        assert!(!a.diverging(0.1, NORM_FLOOR), "{a:?}");
        assert!(b.diverging(0.1, NORM_FLOOR), "{b:?}");
        // analytic radial oracle on the unit disc portion: ∫_r^1 s^{1-q} 2π ds
        let disc = |q: f64, r: f64| 2.0 * PI * (1.0 - libm::pow(r, 2.0 - q)) / (2.0 - q);
        let ratio = libm::pow(disc(2.5, 0.01) / disc(2.5, 0.02), 1.0 / 2.5);
        assert!(libm::pow(2.0, b.trend) > 0.9 * ratio);
    }

    #[test]
    fn threshold_values() {
        assert_eq!(trajectory_threshold(1.0, 2, 0.0), Some(2.0));
        assert_eq!(trajectory_threshold(0.5, 2, 0.5), None);
        assert_eq!(conjugate(2.0), 2.0);
        assert_eq!(conjugate(1.0), f64::INFINITY);
        assert_eq!(conjugate(f64::INFINITY), 1.0);
    }

    #[test]
    fn static_vortex_conditions() {
        let b = vortex_at([0.0, 0.0]);
        let e = DistanceEvaluator::new(Path::Fixed([0.0, 0.0]).to_set(1.0).unwrap(), 1e-3).unwrap();
        let mut cfg = WellposednessConfig::new(BoxDomain::cube(2, -1.0, 1.0).unwrap(), 1.0);
        cfg.quadrature.cells_per_axis = 64;
        cfg.quadrature.time_samples = 2;
        let r = wellposedness_check(&Sequential, &b, &e, f64::INFINITY, f64::INFINITY, 1.0, 0.0, &cfg).unwrap();
        assert_eq!(
            r.get(ConditionId::NormalComponent).unwrap().status,
            ConditionStatus::Satisfied,
            "{r:#?}"
        );
        assert_eq!(
            r.get(ConditionId::BvOffSet).unwrap().status,
            ConditionStatus::UnverifiableNumerically
        );
        assert_eq!(
            r.get(ConditionId::BoundedDivergence).unwrap().status,
            ConditionStatus::Satisfied
        );
        assert_eq!(r.threshold, Some(2.0));
        let r = wellposedness_check(
            &Sequential,
            &b,
            &e,
            1.0,
            1.5,
            1.0,
            0.0,
            &WellposednessConfig {
                skip_print: true,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(
            r.get(ConditionId::TrajectoryThreshold).unwrap().status,
            ConditionStatus::Violated
        );
    }

    #[test]
    fn moving_path_sets() {
        let p = Path::Circular {
            center: [0.0, 0.0],
            radius: 0.5,
            omega: 2.0,
            phase: 0.0,
        };
        let s = p.to_set(1.0).unwrap();
        let z = p.position(0.7);
        let sec = s.temporal_section(0.7);
        assert!(libm::hypot(sec.point(0)[0] - z[0], sec.point(0)[1] - z[1]) < 1e-12);
        assert_eq!(s.holder(), Some((1.0, 1.0)));
    }
}
