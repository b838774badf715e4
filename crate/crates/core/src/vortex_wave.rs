//! Particle approximation of a vorticity density coupled to one point
//! vortex that moves with the regular part of the velocity only.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::exec::Executor;
use crate::fields::perp_kernel;
use crate::flow::{avoidance_from_minima, tube_integral, AvoidanceReport, BoundConfig};
use crate::geometry::{BoxDomain, PointSet};
use crate::integrator::{advance, Outcome, StepControl, StepState, Workspace};

/// Particles with fixed vorticity weights plus the vortex position.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub t: f64,
    pub positions: Vec<[f64; 2]>,
    pub omega: Vec<f64>,
    pub z: [f64; 2],
    pub absorbed: Vec<bool>,
}

impl ParticleState {
    /// Cell-centre particles for `ω₀` on a uniform grid; zero cells dropped.
    pub fn from_density<W: Fn(&[f64]) -> f64>(
        omega0: W,
        domain: &BoxDomain,
        cells: usize,
        z: [f64; 2],
    ) -> Result<Self> {
        if domain.dim() != 2 || cells == 0 {
            return Err(invalid("domain", "need a planar box and cells ≥ 1"));
        }
        let hx = (domain.hi[0] - domain.lo[0]) / cells as f64;
        let hy = (domain.hi[1] - domain.lo[1]) / cells as f64;
        let mut positions = Vec::new();
        let mut omega = Vec::new();
        for j in 0..cells {
            for i in 0..cells {
                let p = [
                    domain.lo[0] + (i as f64 + 0.5) * hx,
                    domain.lo[1] + (j as f64 + 0.5) * hy,
                ];
                let w = omega0(&p) * hx * hy;
                if w != 0.0 {
                    positions.push(p);
                    omega.push(w);
                }
            }
        }
        Self::from_particles(positions, omega, z)
    }

    pub fn from_particles(positions: Vec<[f64; 2]>, omega: Vec<f64>, z: [f64; 2]) -> Result<Self> {
        if positions.len() != omega.len() {
            return Err(invalid("omega", "one weight per particle"));
        }
        let n = positions.len();
        Ok(Self {
            t: 0.0,
            positions,
            omega,
            z,
            absorbed: vec![false; n],
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_vorticity(&self) -> f64 {
        self.omega.iter().fold(0.0, |a, w| a + w)
    }

    /// `Σ ω_i p_i + Γ z`.
    pub fn circulation_moment(&self, gamma: f64) -> [f64; 2] {
        let mut m = [gamma * self.z[0], gamma * self.z[1]];
        for (p, w) in self.positions.iter().zip(&self.omega) {
            m[0] += w * p[0];
            m[1] += w * p[1];
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VortexWaveConfig {
    /// Vortex circulation Γ.
    pub gamma: f64,
    /// Divide kernels by 2π.
    pub normalized: bool,
    /// Blob radius ρ for particle–particle interactions.
    pub blob_radius: f64,
    pub horizon: f64,
    pub snapshots: usize,
    pub delta_min: f64,
    pub control: StepControl,
}

impl VortexWaveConfig {
    pub fn new(gamma: f64, blob_radius: f64, horizon: f64) -> Self {
        Self {
            gamma,
            normalized: false,
            blob_radius,
            horizon,
            snapshots: 10,
            delta_min: 1e-6,
            control: StepControl::default(),
        }
    }

    fn scale(&self) -> f64 {
        if self.normalized {
            1.0 / (2.0 * PI)
        } else {
            1.0
        }
    }
}

/// Blob radius twice the smallest inter-particle spacing.
pub fn default_blob_radius(positions: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..positions.len() {
        for j in 0..i {
            let d = libm::hypot(positions[i][0] - positions[j][0], positions[i][1] - positions[j][1]);
            if d > 0.0 {
                best = best.min(d);
            }
        }
    }
    if best.is_finite() {
        2.0 * best
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VortexWaveRun {
    pub snapshots: Vec<ParticleState>,
    /// `(t, z(t))` at every accepted step.
    pub vortex: Vec<(f64, [f64; 2])>,
    pub initial_dist: Vec<f64>,
    /// Smallest `|p_i − z|` over accepted steps.
    pub min_dist: Vec<f64>,
    pub absorbed_at: Vec<Option<f64>>,
    /// Accepted steps with the vortex inside some particle's blob core.
    pub core_warnings: usize,
    pub accepted_steps: usize,
    pub outcome_flagged: bool,
    pub gamma: f64,
    pub normalized: bool,
    pub blob_radius: f64,
}

/// Regular velocity `v(x) = Σ ω_j K_ρ(x − p_j)`; `skip` excludes a self-term.
pub fn particle_velocity(
    x: [f64; 2],
    positions: &[[f64; 2]],
    omega: &[f64],
    rho2: f64,
    skip: Option<usize>,
    scale: f64,
) -> [f64; 2] {
    let mut v = [0.0; 2];
    for (j, (p, w)) in positions.iter().zip(omega).enumerate() {
        if Some(j) == skip {
            continue;
        }
        let k = perp_kernel(x[0] - p[0], x[1] - p[1], rho2);
        v[0] += w * k[0];
        v[1] += w * k[1];
    }
    [scale * v[0], scale * v[1]]
}

fn unpack(y: &[f64], n: usize) -> (Vec<[f64; 2]>, [f64; 2]) {
    let p = (0..n).map(|i| [y[2 * i], y[2 * i + 1]]).collect();
    (p, [y[2 * n], y[2 * n + 1]])
}

/// Integrates the coupled system. Particles use the blob kernel among
/// themselves and the exact kernel with the vortex; the vortex moves with
/// the particle field alone.
pub fn simulate_vortex_wave<E: Executor>(
    exec: &E,
    initial: &ParticleState,
    cfg: &VortexWaveConfig,
) -> Result<VortexWaveRun> {
    let n = initial.len();
    if !(cfg.horizon > 0.0) || cfg.snapshots == 0 {
        return Err(invalid("horizon", "need a positive horizon and at least one snapshot"));
    }
    if cfg.blob_radius < 0.0 {
        return Err(invalid("blob_radius", "must be nonnegative"));
    }
    let dist_z = |p: &[f64; 2], z: &[f64; 2]| libm::hypot(p[0] - z[0], p[1] - z[1]);
    let initial_dist: Vec<f64> = initial.positions.iter().map(|p| dist_z(p, &initial.z)).collect();
    if initial_dist.iter().any(|d| *d <= cfg.delta_min) {
        return Err(invalid("z0", "vortex starts inside the particle support's δ_min tube"));
    }
    let scale = cfg.scale();
    let rho2 = cfg.blob_radius * cfg.blob_radius;
    let gamma = cfg.gamma;
    let omega = &initial.omega;

    let mut y = Vec::with_capacity(2 * n + 2);
    for p in &initial.positions {
        y.extend_from_slice(p);
    }
    y.extend_from_slice(&initial.z);
    let mut absorbed = initial.absorbed.clone();
    let mut absorbed_at = vec![None; n];
    let mut min_dist = initial_dist.clone();
    let mut vortex = vec![(0.0, initial.z)];
    let mut snapshots = vec![initial.clone()];
    let mut core_warnings = 0usize;
    let mut flagged = false;
    let mut t = 0.0;
    let mut st = StepState::new(&cfg.control);
    let mut ws = Workspace::new(2 * n + 2);

    for k in 1..=cfg.snapshots {
        let t_end = cfg.horizon * k as f64 / cfg.snapshots as f64;
        while t < t_end && !flagged {
            let mut newly: Vec<usize> = Vec::new();
            let outcome = {
                let abs = &absorbed;
                let mut f = |_t: f64, s: &[f64], out: &mut [f64]| -> Result<()> {
                    let (p, z) = unpack(s, n);
                    let vel = exec.map(n + 1, |i| {
                        if i == n {
                            let mut v = [0.0; 2];
                            for j in 0..n {
                                let r2 = if abs[j] { rho2 } else { 0.0 };
                                let kk = perp_kernel(z[0] - p[j][0], z[1] - p[j][1], r2);
                                v[0] += omega[j] * kk[0];
                                v[1] += omega[j] * kk[1];
                            }
                            [scale * v[0], scale * v[1]]
                        } else if abs[i] {
                            [0.0; 2]
                        } else {
                            let mut v = particle_velocity(p[i], &p, omega, rho2, Some(i), scale);
                            let kk = perp_kernel(p[i][0] - z[0], p[i][1] - z[1], 0.0);
                            v[0] += scale * gamma * kk[0];
                            v[1] += scale * gamma * kk[1];
                            v
                        }
                    });
                    for (i, v) in vel.into_iter().enumerate() {
                        out[2 * i] = v[0];
                        out[2 * i + 1] = v[1];
                    }
                    Ok(())
                };
                let mut cap = |_t: f64, s: &[f64], b: &[f64]| -> Result<f64> {
                    let z = [s[2 * n], s[2 * n + 1]];
                    let mut d = f64::INFINITY;
                    let mut speed = 0.0f64;
                    for i in 0..n {
                        if !abs[i] {
                            d = d.min(libm::hypot(s[2 * i] - z[0], s[2 * i + 1] - z[1]));
                        }
                        speed = speed.max(libm::hypot(b[2 * i], b[2 * i + 1]));
                    }
                    speed = speed.max(libm::hypot(b[2 * n], b[2 * n + 1]));
                    Ok(cfg.control.c_step * d / (1.0 + speed))
                };
                let mut on_step = |_t0: f64, _y0: &[f64], t1: f64, y1: &[f64]| -> bool {
                    let z = [y1[2 * n], y1[2 * n + 1]];
                    vortex.push((t1, z));
                    let mut in_core = false;
                    for i in 0..n {
                        let d = libm::hypot(y1[2 * i] - z[0], y1[2 * i + 1] - z[1]);
                        if d < cfg.blob_radius {
                            in_core = true;
                        }
                        if abs[i] {
                            continue;
                        }
                        min_dist[i] = min_dist[i].min(d);
                        if d <= cfg.delta_min {
                            newly.push(i);
                            absorbed_at[i] = Some(t1);
                        }
                    }
                    core_warnings += usize::from(in_core);
                    newly.is_empty()
                };
                advance(
                    &mut f,
                    &mut cap,
                    &mut on_step,
                    &mut t,
                    &mut y,
                    t_end,
                    &cfg.control,
                    &mut st,
                    &mut ws,
                )
            };
            for i in newly {
                absorbed[i] = true;
            }
            match outcome {
                Outcome::Reached | Outcome::Stopped => {}
                Outcome::Failed(e) => return Err(e),
                Outcome::Underflow | Outcome::MaxSteps => flagged = true,
            }
        }
        let (p, z) = unpack(&y, n);
        snapshots.push(ParticleState {
            t,
            positions: p,
            omega: omega.clone(),
            z,
            absorbed: absorbed.clone(),
        });
    }
    Ok(VortexWaveRun {
        snapshots,
        vortex,
        initial_dist,
        min_dist,
        absorbed_at,
        core_warnings,
        accepted_steps: st.accepted,
        outcome_flagged: flagged,
        gamma,
        normalized: cfg.normalized,
        blob_radius: cfg.blob_radius,
    })
}

impl VortexWaveRun {
    /// Vortex position at `t` by linear interpolation of the recorded path.
    pub fn z_at(&self, t: f64) -> [f64; 2] {
        let v = &self.vortex;
        let k = v.partition_point(|(s, _)| *s <= t);
        if k == 0 {
            return v[0].1;
        }
        if k >= v.len() {
            return v[v.len() - 1].1;
        }
        let (t0, a) = v[k - 1];
        let (t1, b) = v[k];
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
    }

    /// Largest difference quotient of the recorded vortex path.
    pub fn lipschitz_estimate(&self) -> f64 {
        self.vortex
            .windows(2)
            .filter(|w| w[1].0 > w[0].0)
            .map(|w| libm::hypot(w[1].1[0] - w[0].1[0], w[1].1[1] - w[0].1[1]) / (w[1].0 - w[0].0))
            .fold(0.0, f64::max)
    }

    /// Net displacement of the vortex over the run.
    pub fn vortex_drift(&self) -> f64 {
        let a = self.vortex[0].1;
        let b = self.vortex[self.vortex.len() - 1].1;
        libm::hypot(b[0] - a[0], b[1] - a[1])
    }

    fn snapshot_near(&self, t: f64) -> &ParticleState {
        let k = self
            .snapshots
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.t - t).abs().total_cmp(&(b.1.t - t).abs()))
            .map_or(0, |(k, _)| k);
        &self.snapshots[k]
    }
}

/// Avoidance of the vortex path by particles, weighted by `|ω_i|`, with the
/// sectional distance `|x − z(t)|`. Only the regular field enters the
/// normal component since the vortex term is tangent to circles about `z`.
pub fn vortex_avoidance_report<E: Executor>(
    exec: &E,
    run: &VortexWaveRun,
    deltas: &[f64],
    r0: f64,
    cfg: &BoundConfig,
) -> Result<AvoidanceReport> {
    let horizon = run.snapshots.last().map_or(0.0, |s| s.t);
    let scale = if run.normalized { 1.0 / (2.0 * PI) } else { 1.0 };
    let rho2 = run.blob_radius * run.blob_radius;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (_, z) in &run.vortex {
        for k in 0..2 {
            lo[k] = lo[k].min(z[k]);
            hi[k] = hi[k].max(z[k]);
        }
    }
    let region = BoxDomain::new(lo.to_vec(), hi.to_vec())?.inflate(r0);
    let tube = tube_integral(
        exec,
        horizon,
        &region,
        |t| PointSet::new(2, run.z_at(t).to_vec()).expect("planar point"),
        |t, x| {
            let z = run.z_at(t);
            Ok(libm::hypot(x[0] - z[0], x[1] - z[1]))
        },
        |t, x| {
            let z = run.z_at(t);
            let s = run.snapshot_near(t);
            let v = particle_velocity([x[0], x[1]], &s.positions, &s.omega, rho2, None, scale);
            let d = libm::hypot(x[0] - z[0], x[1] - z[1]);
            Ok((v[0] * (x[0] - z[0]) + v[1] * (x[1] - z[1])) / d)
        },
        r0,
        cfg,
    )?;
    let first = &run.snapshots[0];
    let weights: Vec<f64> = first.omega.iter().map(|w| w.abs()).collect();
    let flagged = vec![run.outcome_flagged; weights.len()];
    avoidance_from_minima(
        &weights,
        &run.initial_dist,
        &run.min_dist,
        &flagged,
        r0,
        deltas,
        tube,
        1.0,
        0.1,
    )
}
