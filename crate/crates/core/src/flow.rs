//! Lagrangian flow ensembles past singular sets: adaptive integration,
//! compressibility, and the avoidance functional with its bound.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use crate::distance::{DistanceEvaluator, DEFAULT_DELTA_MIN};
use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::fields::{normal_component, FieldSpec};
use crate::geometry::{norm, BoxDomain, PointSet};
use crate::integrator::{advance, Outcome, StepControl, StepState, Workspace};
use crate::rng::{key2, keyed, uniform, Rng};

/// How initial points are laid out.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// Cell centres of a uniform grid; weight = cell volume.
    Grid {
        domain: BoxDomain,
        per_axis: usize,
    },
    /// Uniform random points; weight = volume / count.
    Random {
        domain: BoxDomain,
        count: usize,
        seed: u64,
    },
    Points {
        points: PointSet,
        weights: Vec<f64>,
    },
}

impl InitialSpec {
    pub fn realize(&self) -> Result<(PointSet, Vec<f64>)> {
        match self {
            InitialSpec::Grid { domain, per_axis } => {
                let n = domain.dim();
                let m = *per_axis;
                if m == 0 {
                    return Err(invalid("per_axis", "must be positive"));
                }
                let hs: Vec<f64> = (0..n).map(|k| (domain.hi[k] - domain.lo[k]) / m as f64).collect();
                let total = m
                    .checked_pow(n as u32)
                    .ok_or_else(|| invalid("per_axis", "grid too large"))?;
                let mut coords = Vec::with_capacity(total * n);
                for c in 0..total {
                    let mut code = c;
                    for k in 0..n {
                        coords.push(domain.lo[k] + ((code % m) as f64 + 0.5) * hs[k]);
                        code /= m;
                    }
                }
                let w = hs.iter().product::<f64>();
                Ok((PointSet::new(n, coords)?, vec![w; total]))
            }
            InitialSpec::Random { domain, count, seed } => {
                if *count == 0 {
                    return Err(invalid("count", "must be positive"));
                }
                let n = domain.dim();
                let mut coords = Vec::with_capacity(count * n);
                for i in 0..*count {
                    let mut rng = keyed(*seed, key2(0x1417, i as u64));
                    for k in 0..n {
                        coords.push(uniform(&mut rng, domain.lo[k], domain.hi[k]));
                    }
                }
                let w = domain.volume() / *count as f64;
                Ok((PointSet::new(n, coords)?, vec![w; *count]))
            }
            InitialSpec::Points { points, weights } => {
                if weights.len() != points.len() {
                    return Err(invalid("weights", "one weight per point"));
                }
                Ok((points.clone(), weights.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub control: StepControl,
    /// Increasing storage times; the last one is the horizon.
    pub output_times: Vec<f64>,
    pub delta_min: f64,
    /// Trajectories leaving this box are frozen as escaped.
    pub escape: Option<BoxDomain>,
    /// Thresholds for which first-entry times `τ_δ` are recorded.
    pub tau_ladder: Vec<f64>,
}

impl FlowConfig {
    pub fn new(horizon: f64, outputs: usize) -> Self {
        let m = outputs.max(1);
        Self {
            control: StepControl::default(),
            output_times: (0..=m).map(|k| horizon * k as f64 / m as f64).collect(),
            delta_min: 1e-6,
            escape: None,
            tau_ladder: Vec::new(),
        }
    }

    pub fn horizon(&self) -> f64 {
        *self.output_times.last().unwrap_or(&0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbsorbReason {
    /// `d_S` fell below the floor `δ_min`.
    DistanceFloor,
    StepUnderflow,
    FieldError,
    MaxSteps,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Status {
    Alive,
    Absorbed { t: f64, reason: AbsorbReason },
    Escaped { t: f64 },
}

impl Status {
    /// Absorbed for a numerical reason rather than by reaching `δ_min`.
    pub fn flagged(&self) -> bool {
        matches!(self, Status::Absorbed { reason, .. } if *reason != AbsorbReason::DistanceFloor)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Status::Alive => "alive",
            Status::Absorbed {
                reason: AbsorbReason::DistanceFloor,
                ..
            } => "absorbed",
            Status::Absorbed { .. } => "absorbed_flagged",
            Status::Escaped { .. } => "escaped",
        }
    }
}

/// Result of integrating one initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Positions at the output times, row-major.
    pub positions: Vec<f64>,
    /// `b(t_k, X(t_k))` at the output times (zero once frozen).
    pub velocities: Vec<f64>,
    pub status: Status,
    pub initial_dist: f64,
    pub min_dist: f64,
    /// `τ_δ` per ladder entry, `+∞` when never reached.
    pub tau: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

/// Step cap `c_step · d / (1 + |b|)`.
fn step_cap(ctl: &StepControl, d: f64, b: &[f64]) -> f64 {
    ctl.c_step * d / (1.0 + norm(b))
}

/// Integrates a single trajectory, optionally reporting every accepted step
/// as `(t0, y0, d0, t1, y1, d1)`.
pub fn integrate_trajectory<R>(
    b: &FieldSpec,
    e: &DistanceEvaluator,
    x0: &[f64],
    cfg: &FlowConfig,
    mut record: R,
) -> Result<Trajectory>
where
    R: FnMut(f64, &[f64], f64, f64, &[f64], f64),
{
    let n = b.dim;
    let outs = &cfg.output_times;
    if outs.is_empty() || outs[0] < 0.0 || outs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("output_times", "must be increasing and nonnegative"));
    }
    let ctl = &cfg.control;
    let d0 = e.dist_spacetime(0.0, x0)?;
    let mut traj = Trajectory {
        positions: Vec::with_capacity(outs.len() * n),
        velocities: Vec::with_capacity(outs.len() * n),
        status: Status::Alive,
        initial_dist: d0,
        min_dist: d0,
        tau: cfg
            .tau_ladder
            .iter()
            .map(|&dl| if d0 <= dl { 0.0 } else { f64::INFINITY })
            .collect(),
        accepted: 0,
        rejected: 0,
    };
    let mut y = x0.to_vec();
    let mut t = 0.0;
    if d0 <= cfg.delta_min {
        traj.status = Status::Absorbed {
            t: 0.0,
            reason: AbsorbReason::DistanceFloor,
        };
    }
    let d_cur = Cell::new(d0);
    let stop: Cell<Option<Status>> = Cell::new(None);
    let failure: Cell<Option<Error>> = Cell::new(None);
    let mut st = StepState::new(ctl);
    let mut ws = Workspace::new(n);
    let mut min_dist = d0;
    let mut tau = traj.tau.clone();

    for &tk in outs {
        if traj.status == Status::Alive && tk > t {
            let mut f = |s: f64, z: &[f64], out: &mut [f64]| b.eval_into(s, z, out);
            let mut cap = |_s: f64, _z: &[f64], bv: &[f64]| Ok(step_cap(ctl, d_cur.get(), bv));
            let mut on_step = |t0: f64, y0: &[f64], t1: f64, y1: &[f64]| -> bool {
                let d1 = match e.dist_spacetime(t1, y1) {
                    Ok(v) => v,
                    Err(err) => {
                        failure.set(Some(err));
                        return false;
                    }
                };
                let dp = d_cur.get();
                record(t0, y0, dp, t1, y1, d1);
                for (slot, &dl) in tau.iter_mut().zip(&cfg.tau_ladder) {
                    if slot.is_infinite() && d1 <= dl {
                        *slot = if dp > dl {
                            t0 + (dp - dl) / (dp - d1) * (t1 - t0)
                        } else {
                            t0
                        };
                    }
                }
                min_dist = min_dist.min(d1);
                d_cur.set(d1);
                if d1 <= cfg.delta_min {
                    stop.set(Some(Status::Absorbed {
                        t: t1,
                        reason: AbsorbReason::DistanceFloor,
                    }));
                    return false;
                }
                if let Some(bx) = &cfg.escape {
                    if !bx.contains(y1) {
                        stop.set(Some(Status::Escaped { t: t1 }));
                        return false;
                    }
                }
                true
            };
            let outcome = advance(
                &mut f,
                &mut cap,
                &mut on_step,
                &mut t,
                &mut y,
                tk,
                ctl,
                &mut st,
                &mut ws,
            );
            if let Some(err) = failure.take() {
                return Err(err);
            }
            traj.status = match outcome {
                Outcome::Reached => Status::Alive,
                Outcome::Stopped => stop.take().unwrap_or(Status::Alive),
                Outcome::Underflow => Status::Absorbed {
                    t,
                    reason: AbsorbReason::StepUnderflow,
                },
                Outcome::MaxSteps => Status::Absorbed {
                    t,
                    reason: AbsorbReason::MaxSteps,
                },
                Outcome::Failed(_) => Status::Absorbed {
                    t,
                    reason: AbsorbReason::FieldError,
                },
            };
        }
        traj.positions.extend_from_slice(&y);
        if traj.status == Status::Alive {
            match b.eval(tk, &y) {
                Ok(v) => traj.velocities.extend_from_slice(&v),
                Err(_) => {
                    traj.status = Status::Absorbed {
                        t: tk,
                        reason: AbsorbReason::FieldError,
                    };
                    traj.velocities.extend(core::iter::repeat_n(0.0, n));
                }
            }
        } else {
            traj.velocities.extend(core::iter::repeat_n(0.0, n));
        }
    }
    traj.min_dist = min_dist;
    traj.tau = tau;
    traj.accepted = st.accepted;
    traj.rejected = st.rejected;
    Ok(traj)
}

/// Trajectories from a sampled set of initial points.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEnsemble {
    pub dim: usize,
    pub output_times: Vec<f64>,
    pub initial: PointSet,
    pub weights: Vec<f64>,
    /// `positions[(i · n_out + k) · dim ..]` is `X(t_k, x_i)`.
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub status: Vec<Status>,
    pub initial_dist: Vec<f64>,
    pub min_dist: Vec<f64>,
    pub tau_ladder: Vec<f64>,
    /// `tau[i · ladder_len + j]`.
    pub tau: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl FlowEnsemble {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn position(&self, i: usize, k: usize) -> &[f64] {
        let m = self.output_times.len();
        let s = (i * m + k) * self.dim;
        &self.positions[s..s + self.dim]
    }

    pub fn velocity(&self, i: usize, k: usize) -> &[f64] {
        let m = self.output_times.len();
        let s = (i * m + k) * self.dim;
        &self.velocities[s..s + self.dim]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().fold(0.0, |a, w| a + w)
    }
}

/// Integrates every initial point of `spec` independently.
pub fn integrate_flow<E: Executor>(
    exec: &E,
    b: &FieldSpec,
    e: &DistanceEvaluator,
    spec: &InitialSpec,
    cfg: &FlowConfig,
) -> Result<FlowEnsemble> {
    let (initial, weights) = spec.realize()?;
    if initial.dim() != b.dim {
        return Err(Error::DimensionMismatch {
            expected: b.dim,
            got: initial.dim(),
        });
    }
    let results = exec.map(initial.len(), |i| {
        integrate_trajectory(b, e, initial.point(i), cfg, |_, _, _, _, _, _| {})
    });
    let m = cfg.output_times.len();
    let l = cfg.tau_ladder.len();
    let count = initial.len();
    let mut ens = FlowEnsemble {
        dim: b.dim,
        output_times: cfg.output_times.clone(),
        initial,
        weights,
        positions: Vec::with_capacity(count * m * b.dim),
        velocities: Vec::with_capacity(count * m * b.dim),
        status: Vec::with_capacity(count),
        initial_dist: Vec::with_capacity(count),
        min_dist: Vec::with_capacity(count),
        tau_ladder: cfg.tau_ladder.clone(),
        tau: Vec::with_capacity(count * l),
        accepted_steps: 0,
        rejected_steps: 0,
    };
    for r in results {
        let r = r?;
        ens.positions.extend_from_slice(&r.positions);
        ens.velocities.extend_from_slice(&r.velocities);
        ens.status.push(r.status);
        ens.initial_dist.push(r.initial_dist);
        ens.min_dist.push(r.min_dist);
        ens.tau.extend_from_slice(&r.tau);
        ens.accepted_steps += r.accepted;
        ens.rejected_steps += r.rejected;
    }
    Ok(ens)
}

/// `|X(T) − x − ∫₀ᵀ b(τ, X(τ)) dτ| / T`, with the integral re-evaluated by
/// three-point Gauss quadrature on the cubic Hermite interpolant of each
/// accepted step.
pub fn integral_residual(b: &FieldSpec, e: &DistanceEvaluator, x0: &[f64], cfg: &FlowConfig) -> Result<f64> {
    let n = b.dim;
    let mut integral = vec![0.0; n];
    let mut failure = None;
    let gauss = [
        (0.5 - 0.5 * libm::sqrt(0.6), 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + 0.5 * libm::sqrt(0.6), 5.0 / 18.0),
    ];
    let mut p = vec![0.0; n];
    let traj = integrate_trajectory(b, e, x0, cfg, |t0, y0, _, t1, y1, _| {
        if failure.is_some() {
            return;
        }
        let h = t1 - t0;
        let (b0, b1) = match (b.eval(t0, y0), b.eval(t1, y1)) {
            (Ok(u), Ok(v)) => (u, v),
            (Err(err), _) | (_, Err(err)) => {
                failure = Some(err);
                return;
            }
        };
        for &(s, w) in &gauss {
            let (h00, h10, h01, h11) = (
                2.0 * s * s * s - 3.0 * s * s + 1.0,
                s * s * s - 2.0 * s * s + s,
                -2.0 * s * s * s + 3.0 * s * s,
                s * s * s - s * s,
            );
            for k in 0..n {
                p[k] = h00 * y0[k] + h10 * h * b0[k] + h01 * y1[k] + h11 * h * b1[k];
            }
            match b.eval(t0 + s * h, &p) {
                Ok(v) => {
                    for k in 0..n {
                        integral[k] += w * h * v[k];
                    }
                }
                Err(err) => failure = Some(err),
            }
        }
    })?;
    if let Some(err) = failure {
        return Err(err);
    }
    let m = cfg.output_times.len();
    let end = &traj.positions[(m - 1) * n..m * n];
    let t_end = match traj.status {
        Status::Alive => cfg.horizon(),
        Status::Absorbed { t, .. } | Status::Escaped { t } => t,
    };
    let r: Vec<f64> = (0..n).map(|k| end[k] - x0[k] - integral[k]).collect();
    Ok(norm(&r) / t_end.max(f64::MIN_POSITIVE))
}

/// One accepted step of a traced trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovRow {
    pub t: f64,
    pub d: f64,
    /// `g(d) = log(r₀/d)` inside the shell, 0 above `r₀`.
    pub g: f64,
    /// `(d(t₁) − d(t₀)) / (t₁ − t₀)`.
    pub quotient: f64,
    /// `1 + max |b·∇d_S|` over the step ends.
    pub bound: f64,
    pub ok: bool,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovTrace {
    pub rows: Vec<LyapunovRow>,
    pub violations: usize,
    /// Violations at steps without a ridge flag.
    pub unflagged_violations: usize,
}

pub fn g_of(r0: f64, y: f64) -> f64 {
    if y > r0 {
        0.0
    } else {
        libm::log(r0 / y)
    }
}

/// Traces `d_S` along one trajectory and checks the discrete form of
/// `|d/dt d_S(t, X)| ≤ 1 + |b·∇d_S|`.
pub fn lyapunov_trace(
    b: &FieldSpec,
    e: &DistanceEvaluator,
    x0: &[f64],
    cfg: &FlowConfig,
    r0: f64,
    tol: f64,
) -> Result<LyapunovTrace> {
    let mut rows = Vec::new();
    let mut failure = None;
    let normal = |t: f64, y: &[f64]| normal_component(b, e, t, y, cfg.delta_min);
    integrate_trajectory(b, e, x0, cfg, |t0, y0, d0, t1, y1, d1| {
        if failure.is_some() {
            return;
        }
        let a = match normal(t0, y0) {
            Ok(v) => v,
            Err(err) => {
                failure = Some(err);
                return;
            }
        };
        let c = match normal(t1, y1) {
            Ok(v) => v,
            Err(Error::DistanceFloor { .. }) => a,
            Err(err) => {
                failure = Some(err);
                return;
            }
        };
        let q = (d1 - d0) / (t1 - t0);
        let bound = 1.0 + a.value.abs().max(c.value.abs());
        let ok = q.abs() <= bound * (1.0 + tol) + tol;
        rows.push(LyapunovRow {
            t: t1,
            d: d1,
            g: g_of(r0, d1),
            quotient: q,
            bound,
            ok,
            flagged: a.flagged || c.flagged,
        });
    })?;
    if let Some(err) = failure {
        return Err(err);
    }
    let violations = rows.iter().filter(|r| !r.ok).count();
    let unflagged_violations = rows.iter().filter(|r| !r.ok && !r.flagged).count();
    Ok(LyapunovTrace {
        rows,
        violations,
        unflagged_violations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxRatio {
    pub box_index: usize,
    pub time_index: usize,
    pub count: usize,
    /// Preimage weight divided by the box volume.
    pub ratio: f64,
    pub stderr: f64,
    /// Fewer endpoints than the configured minimum.
    pub sparse: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressibilityReport {
    /// Largest ratio over non-sparse boxes.
    pub l: f64,
    pub stderr: f64,
    pub ratios: Vec<BoxRatio>,
    /// `(box, time)` pairs with no endpoints.
    pub skipped: Vec<(usize, usize)>,
}

/// `L = max μ(X(t,·)⁻¹(B)) / μ(B)` over boxes and output-time indices.
pub fn compressibility_estimate(
    f: &FlowEnsemble,
    boxes: &[BoxDomain],
    time_indices: &[usize],
    min_count: usize,
) -> Result<CompressibilityReport> {
    let mut ratios = Vec::new();
    let mut skipped = Vec::new();
    for &k in time_indices {
        if k >= f.output_times.len() {
            return Err(invalid("time_indices", "outside the output grid"));
        }
        for (bi, bx) in boxes.iter().enumerate() {
            if bx.dim() != f.dim {
                return Err(Error::DimensionMismatch {
                    expected: f.dim,
                    got: bx.dim(),
                });
            }
            let mut w = 0.0;
            let mut w2 = 0.0;
            let mut count = 0usize;
            for i in 0..f.len() {
                if bx.contains(f.position(i, k)) {
                    w += f.weights[i];
                    w2 += f.weights[i] * f.weights[i];
                    count += 1;
                }
            }
            if count == 0 {
                skipped.push((bi, k));
                continue;
            }
            let vol = bx.volume();
            ratios.push(BoxRatio {
                box_index: bi,
                time_index: k,
                count,
                ratio: w / vol,
                stderr: libm::sqrt(w2) / vol,
                sparse: count < min_count,
            });
        }
    }
    let best = ratios
        .iter()
        .filter(|r| !r.sparse)
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio));
    let (l, stderr) = best.map_or((f64::NAN, f64::NAN), |r| (r.ratio, r.stderr));
    Ok(CompressibilityReport {
        l,
        stderr,
        ratios,
        skipped,
    })
}

/// Monte Carlo settings for the tube integral in the avoidance bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundConfig {
    pub samples: usize,
    pub chunk: usize,
    pub seed: u64,
    /// Excision radius; reciprocal distances are never formed below it.
    pub excision: f64,
    /// Sections with at most this many points get log-radial importance
    /// sampling around each point.
    pub max_centres: usize,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            samples: 200_000,
            chunk: 4096,
            seed: 0,
            excision: DEFAULT_DELTA_MIN,
            max_centres: 64,
        }
    }
}

/// Estimate of `∫₀ᵀ ∫_{δ_min ≤ d < r₀} d⁻¹ (1 + |N|) dx dt` with standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeIntegral {
    pub value: f64,
    pub stderr: f64,
}

/// Mixture importance sampling over `[0,T] × region`: half uniform, half
/// log-radial around the centres returned for each time.
pub fn tube_integral<E, C, D, N>(
    exec: &E,
    horizon: f64,
    region: &BoxDomain,
    centres: C,
    dist: D,
    normal: N,
    r0: f64,
    cfg: &BoundConfig,
) -> Result<TubeIntegral>
where
    E: Executor,
    C: Fn(f64) -> PointSet + Sync + Send,
    D: Fn(f64, &[f64]) -> Result<f64> + Sync + Send,
    N: Fn(f64, &[f64]) -> Result<f64> + Sync + Send,
{
    if !(r0 > cfg.excision) || cfg.excision <= 0.0 {
        return Err(invalid("r0", "must exceed the excision radius"));
    }
    if cfg.samples == 0 || cfg.chunk == 0 {
        return Err(invalid("samples", "must be positive"));
    }
    let n = region.dim();
    let vol = region.volume();
    let log_span = libm::log(r0 / cfg.excision);
    // surface area of the unit sphere in ℝⁿ
    let sphere = match n {
        1 => 2.0,
        2 => 2.0 * core::f64::consts::PI,
        3 => 4.0 * core::f64::consts::PI,
        _ => {
            let h = n as f64 / 2.0;
            2.0 * libm::pow(core::f64::consts::PI, h) / libm::tgamma(h)
        }
    };
    let chunks = cfg.samples.div_ceil(cfg.chunk);
    let parts = exec.map(chunks, |c| -> Result<(f64, f64, usize)> {
        let mut rng = keyed(cfg.seed, key2(0xb0b, c as u64));
        let count = cfg.chunk.min(cfg.samples - c * cfg.chunk);
        let (mut s1, mut s2) = (0.0, 0.0);
        let mut x = vec![0.0; n];
        let mut dir = vec![0.0; n];
        for _ in 0..count {
            let t = uniform(&mut rng, 0.0, horizon);
            let cs = centres(t);
            let use_centres = !cs.is_empty() && cs.len() <= cfg.max_centres;
            let wb = if use_centres { 0.5 } else { 0.0 };
            if use_centres && rng.random::<bool>() {
                let y = cs.point(rng.random_range(0..cs.len()));
                let rho = cfg.excision * libm::exp(rng.random::<f64>() * log_span);
                let mut nd = 0.0;
                while nd < 1e-12 {
                    for v in dir.iter_mut() {
                        *v = uniform(&mut rng, -1.0, 1.0);
                    }
                    nd = norm(&dir);
                    if nd > 1.0 {
                        nd = 0.0;
                    }
                }
                for k in 0..n {
                    x[k] = y[k] + rho * dir[k] / nd;
                }
            } else {
                for k in 0..n {
                    x[k] = uniform(&mut rng, region.lo[k], region.hi[k]);
                }
            }
            let d = dist(t, &x)?;
            if !(d >= cfg.excision && d < r0) {
                continue;
            }
            let mut g = 0.0;
            if use_centres {
                for y in cs.iter() {
                    let rho = libm::sqrt(crate::geometry::dist2(&x, y));
                    if rho >= cfg.excision && rho <= r0 {
                        g += 1.0 / (rho * log_span * sphere * libm::pow(rho, n as f64 - 1.0));
                    }
                }
                g /= cs.len() as f64;
            }
            let inside = if region.contains(&x) { 1.0 / vol } else { 0.0 };
            let q = ((1.0 - wb) * inside + wb * g) / horizon;
            if q <= 0.0 {
                return Err(invalid("region", "tube leaves the sampling region"));
            }
            let val = (1.0 + normal(t, &x)?.abs()) / d / q;
            s1 += val;
            s2 += val * val;
        }
        Ok((s1, s2, count))
    });
    let (mut s1, mut s2, mut m) = (0.0, 0.0, 0usize);
    for p in parts {
        let (a, b, c) = p?;
        s1 += a;
        s2 += b;
        m += c;
    }
    let mf = m as f64;
    let mean = s1 / mf;
    let var = (s2 / mf - mean * mean).max(0.0);
    Ok(TubeIntegral {
        value: mean,
        stderr: libm::sqrt(var / mf),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvoidanceReport {
    pub r0: f64,
    pub deltas: Vec<f64>,
    pub mu: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `μ(F(δ)) · log(r₀/δ)`.
    pub product: Vec<f64>,
    /// `B = L · tube integral`.
    pub bound: f64,
    pub bound_stderr: f64,
    pub compressibility: f64,
    /// Weight of trajectories starting at distance ≥ r₀.
    pub eligible_weight: f64,
    pub eligible_count: usize,
    /// Trajectories counted as entering for numerical reasons.
    pub flagged: usize,
    /// Every trajectory in `F(δ')` is in `F(δ)` for `δ' ≤ δ`.
    pub nested: bool,
    pub tolerance: f64,
    /// `product ≤ B (1 + tolerance)` per δ.
    pub holds: Vec<bool>,
}

impl AvoidanceReport {
    pub fn all_hold(&self) -> bool {
        self.nested && self.holds.iter().all(|h| *h)
    }
}

/// `μ(F(δ))` from per-trajectory minima. Flagged trajectories count as
/// entering every tube.
pub fn avoidance_from_minima(
    weights: &[f64],
    initial_dist: &[f64],
    min_dist: &[f64],
    flagged: &[bool],
    r0: f64,
    deltas: &[f64],
    bound: TubeIntegral,
    compressibility: f64,
    tolerance: f64,
) -> Result<AvoidanceReport> {
    if deltas.iter().any(|&d| !(d > 0.0 && d < r0)) {
        return Err(invalid("delta", "ladder must lie in (0, r0)"));
    }
    let eligible: Vec<usize> = (0..weights.len()).filter(|&i| initial_dist[i] >= r0).collect();
    let eligible_weight: f64 = eligible.iter().map(|&i| weights[i]).fold(0.0, |a, w| a + w);
    let count = eligible.len().max(1) as f64;
    let mut mu = Vec::with_capacity(deltas.len());
    let mut stderr = Vec::with_capacity(deltas.len());
    let mut members: Vec<Vec<bool>> = Vec::with_capacity(deltas.len());
    for &dl in deltas {
        let inside: Vec<bool> = eligible.iter().map(|&i| flagged[i] || min_dist[i] < dl).collect();
        let w: f64 = eligible
            .iter()
            .zip(&inside)
            .filter(|(_, &m)| m)
            .map(|(&i, _)| weights[i])
            .fold(0.0, |a, w| a + w);
        let p = inside.iter().filter(|m| **m).count() as f64 / count;
        mu.push(w);
        stderr.push(eligible_weight * libm::sqrt(p * (1.0 - p) / count));
        members.push(inside);
    }
    let mut nested = true;
    for a in 0..deltas.len() {
        for c in 0..deltas.len() {
            if deltas[c] <= deltas[a] {
                nested &= members[c].iter().zip(&members[a]).all(|(small, big)| !*small || *big);
            }
        }
    }
    let b = compressibility * bound.value;
    let product: Vec<f64> = deltas.iter().zip(&mu).map(|(&d, &m)| m * libm::log(r0 / d)).collect();
    let holds = product.iter().map(|p| *p <= b * (1.0 + tolerance)).collect();
    Ok(AvoidanceReport {
        r0,
        deltas: deltas.to_vec(),
        mu,
        stderr,
        product,
        bound: b,
        bound_stderr: compressibility * bound.stderr,
        compressibility,
        eligible_weight,
        eligible_count: eligible.len(),
        flagged: eligible.iter().filter(|&&i| flagged[i]).count(),
        nested,
        tolerance,
        holds,
    })
}

/// Avoidance statistics of an ensemble for the set behind `e`.
pub fn avoidance_statistics<E: Executor>(
    exec: &E,
    f: &FlowEnsemble,
    b: &FieldSpec,
    e: &DistanceEvaluator,
    r0: f64,
    deltas: &[f64],
    compressibility: f64,
    cfg: &BoundConfig,
) -> Result<AvoidanceReport> {
    let horizon = *f
        .output_times
        .last()
        .ok_or_else(|| invalid("ensemble", "no output times"))?;
    let region = e
        .target()
        .spatial_bounding_box()
        .ok_or(Error::EmptySet)?
        .inflate(r0 + e.error_bound());
    let target = e.target();
    let tube = tube_integral(
        exec,
        horizon,
        &region,
        |t| {
            if t <= target.horizon {
                target.temporal_section(t)
            } else {
                PointSet::new(region.dim(), Vec::new()).expect("positive dim")
            }
        },
        |t, x| e.dist_spacetime(t, x),
        |t, x| Ok(normal_component(b, e, t, x, cfg.excision * 0.5)?.value),
        r0,
        cfg,
    )?;
    let flagged: Vec<bool> = f.status.iter().map(Status::flagged).collect();
    avoidance_from_minima(
        &f.weights,
        &f.initial_dist,
        &f.min_dist,
        &flagged,
        r0,
        deltas,
        tube,
        compressibility,
        0.1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::fields::{Background, Path, VortexTerm};
    use core::f64::consts::PI;

    fn origin() -> DistanceEvaluator {
        DistanceEvaluator::new(Path::Fixed([0.0, 0.0]).to_set(10.0).unwrap(), 1e-3).unwrap()
    }

    fn far_set() -> DistanceEvaluator {
        DistanceEvaluator::new(Path::Fixed([100.0, 100.0]).to_set(10.0).unwrap(), 1e-3).unwrap()
    }

    #[test]
    fn rotation_returns_after_full_turn() {
        let b = FieldSpec::new(2, 2.0 * PI, Background::Rotation { omega: 1.0 }).unwrap();
        let cfg = FlowConfig::new(2.0 * PI, 4);
        let tr = integrate_trajectory(&b, &far_set(), &[1.0, 0.0], &cfg, |_, _, _, _, _, _| {}).unwrap();
        let end = &tr.positions[8..10];
        assert!(libm::hypot(end[0] - 1.0, end[1]) < 1e-6, "{end:?}");
        assert_eq!(tr.status, Status::Alive);
    }

    #[test]
    fn static_vortex_orbit() {
        let b = FieldSpec::new(2, 1.0, Background::Zero)
            .unwrap()
            .with_vortex(VortexTerm {
                path: Path::Fixed([0.0, 0.0]),
                strength: 1.0,
                normalized: false,
            })
            .unwrap();
        let r = 0.5;
        let period = 2.0 * PI * r * r;
        let mut cfg = FlowConfig::new(period, 8);
        cfg.control.h_max = 0.01;
        let e = origin();
        let tr = integrate_trajectory(&b, &e, &[r, 0.0], &cfg, |_, _, _, _, _, _| {}).unwrap();
        let end = &tr.positions[16..18];
        assert!((libm::hypot(end[0], end[1]) - r).abs() / r < 1e-3);
        assert!(libm::hypot(end[0] - r, end[1]) < 1e-4, "{end:?}");
        let res = integral_residual(&b, &e, &[r, 0.0], &cfg).unwrap();
        assert!(res < 1e-6, "{res}");
    }

    #[test]
    fn zero_field_is_identity_and_incompressible() {
        let b = FieldSpec::new(2, 1.0, Background::Zero).unwrap();
        let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let spec = InitialSpec::Grid {
            domain: dom.clone(),
            per_axis: 60,
        };
        let ens = integrate_flow(&Sequential, &b, &far_set(), &spec, &FlowConfig::new(1.0, 2)).unwrap();
        assert!((ens.total_weight() - dom.volume()).abs() < 1e-12);
        for i in 0..ens.len() {
            assert_eq!(ens.position(i, 2), ens.initial.point(i));
        }
        let boxes = vec![BoxDomain::new(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap()];
        let c = compressibility_estimate(&ens, &boxes, &[0, 2], 100).unwrap();
        assert!((c.l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expanding_flow_preimages_shrink() {
        let b = FieldSpec::new(
            2,
            1.0,
            Background::Linear {
                matrix: vec![1.0, 0.0, 0.0, 0.0],
                offset: vec![0.0, 0.0],
            },
        )
        .unwrap();
        let spec = InitialSpec::Grid {
            domain: BoxDomain::cube(2, -1.0, 1.0).unwrap(),
            per_axis: 100,
        };
        let ens = integrate_flow(&Sequential, &b, &far_set(), &spec, &FlowConfig::new(1.0, 2)).unwrap();
        let bx = BoxDomain::new(vec![-0.4, -0.4], vec![0.4, 0.4]).unwrap();
        let c = compressibility_estimate(&ens, &[bx], &[0, 1, 2], 100).unwrap();
        let at = |k: usize| c.ratios.iter().find(|r| r.time_index == k).unwrap().ratio;
        assert!((at(0) - 1.0).abs() < 1e-12);
        // exact preimage measure ratio e^{-t}
        assert!((at(2) - libm::exp(-1.0)).abs() < 0.03, "{}", at(2));
        assert!((c.l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radial_inflow_enters_every_tube() {
        let b = FieldSpec::new(
            2,
            1.0,
            Background::Radial {
                center: vec![0.0, 0.0],
                strength: -1.0,
            },
        )
        .unwrap();
        let e = DistanceEvaluator::new(Path::Fixed([0.0, 0.0]).to_set(1.0).unwrap(), 1e-3).unwrap();
        let spec = InitialSpec::Grid {
            domain: BoxDomain::cube(2, -1.0, 1.0).unwrap(),
            per_axis: 40,
        };
        let mut cfg = FlowConfig::new(1.0, 1);
        cfg.tau_ladder = vec![0.1];
        let ens = integrate_flow(&Sequential, &b, &e, &spec, &cfg).unwrap();
        for i in 0..ens.len() {
            let r = norm(ens.initial.point(i));
            if r > 0.1 && r < 0.95 {
                assert!(ens.min_dist[i] < 0.1);
                // straight characteristics: τ = r − δ
                assert!((ens.tau[i] - (r - 0.1)).abs() < 1e-6, "{} {}", ens.tau[i], r);
            }
            if r > 1.05 {
                assert!(ens.min_dist[i] > 0.04);
            }
        }
        let tr = lyapunov_trace(&b, &e, &[0.6, 0.0], &cfg, 1.0, 1e-6).unwrap();
        assert_eq!(tr.violations, 0);
        assert!(tr.rows.iter().all(|r| (r.quotient + 1.0).abs() < 1e-6));
    }

    #[test]
    fn static_vortex_never_enters() {
        let b = FieldSpec::new(2, 1.0, Background::Zero)
            .unwrap()
            .with_vortex(VortexTerm {
                path: Path::Fixed([0.0, 0.0]),
                strength: 1.0,
                normalized: true,
            })
            .unwrap();
        let e = DistanceEvaluator::new(Path::Fixed([0.0, 0.0]).to_set(1.0).unwrap(), 1e-3).unwrap();
        let spec = InitialSpec::Grid {
            domain: BoxDomain::cube(2, -1.0, 1.0).unwrap(),
            per_axis: 30,
        };
        let cfg = FlowConfig::new(1.0, 2);
        let ens = integrate_flow(&Sequential, &b, &e, &spec, &cfg).unwrap();
        let bc = BoundConfig {
            samples: 20_000,
            ..BoundConfig::default()
        };
        let rep = avoidance_statistics(&Sequential, &ens, &b, &e, 0.25, &[0.125, 0.0625, 0.03125], 1.0, &bc).unwrap();
        assert!(rep.mu.iter().all(|m| *m == 0.0));
        assert!(rep.all_hold());
        // B for a static vortex is ∫∫ 1/r over the r0-disc: 2π r0 T
        let exact = 2.0 * PI * (0.25 - 1e-9);
        assert!(
            (rep.bound - exact).abs() < 4.0 * rep.bound_stderr + 1e-3,
            "{} {}",
            rep.bound,
            rep.bound_stderr
        );
        let tr = lyapunov_trace(&b, &e, &[0.3, 0.1], &cfg, 1.0, 1e-6).unwrap();
        assert!(tr.rows.iter().all(|r| r.quotient.abs() < 1e-6));
        assert!((g_of(1.0, libm::exp(-1.0)) - 1.0).abs() < 1e-15);
    }
}
