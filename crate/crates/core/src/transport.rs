//! Backward semi-Lagrangian solver for `∂ₜu + b·∇u = 0` on planar grids,
//! plus weak-form residuals and the energy (Gronwall) check.

use alloc::vec;
use alloc::vec::Vec;

use crate::distance::DistanceEvaluator;
use crate::error::{invalid, Error, Result};
use crate::exec::Executor;
use crate::fields::FieldSpec;
use crate::geometry::{norm, BoxDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Nodes cover `[lo, hi)`; feet wrap around.
    Periodic,
    /// Nodes include both ends; feet outside the box see the nearest edge.
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    Bilinear,
    /// Catmull-Rom clipped to the range of the enclosing cell.
    MonotoneCubic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportConfig {
    pub domain: BoxDomain,
    pub cells: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Store every `stride`-th time level.
    pub stride: usize,
    pub boundary: Boundary,
    pub interpolation: Interpolation,
    /// Upper limit on `max|b|·dt/h`.
    pub cfl_bound: f64,
    pub delta_min: f64,
    pub c_step: f64,
    /// Longest RK4 substep along a characteristic.
    pub max_substep: f64,
}

impl TransportConfig {
    pub fn new(domain: BoxDomain, cells: usize, dt: f64, horizon: f64) -> Self {
        Self {
            domain,
            cells,
            dt,
            horizon,
            stride: 1,
            boundary: Boundary::Clamp,
            interpolation: Interpolation::Bilinear,
            cfl_bound: 64.0,
            delta_min: 1e-6,
            c_step: 0.1,
            max_substep: f64::INFINITY,
        }
    }
}

/// Values on a regular planar grid at the stored time levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub domain: BoxDomain,
    pub cells: usize,
    pub boundary: Boundary,
    pub interpolation: Interpolation,
    pub h: [f64; 2],
    pub dt: f64,
    pub times: Vec<f64>,
    /// `values[k][j · nodes + i]` at `times[k]`.
    pub values: Vec<Vec<f64>>,
    /// Per node: a characteristic through it met the singular tube.
    pub contaminated: Vec<bool>,
}

impl ScalarField {
    /// Nodes per axis.
    pub fn nodes(&self) -> usize {
        match self.boundary {
            Boundary::Periodic => self.cells,
            Boundary::Clamp => self.cells + 1,
        }
    }

    pub fn node(&self, idx: usize) -> [f64; 2] {
        let m = self.nodes();
        [
            self.domain.lo[0] + (idx % m) as f64 * self.h[0],
            self.domain.lo[1] + (idx / m) as f64 * self.h[1],
        ]
    }

    /// Quadrature weight of a node (trapezoid on clamped grids).
    pub fn weight(&self, idx: usize) -> f64 {
        let base = self.h[0] * self.h[1];
        match self.boundary {
            Boundary::Periodic => base,
            Boundary::Clamp => {
                let m = self.nodes();
                let edge = |i: usize| if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
                base * edge(idx % m) * edge(idx / m)
            }
        }
    }

    fn index(s: f64) -> (i64, f64) {
        let f = libm::floor(s);
        (f as i64, s - f)
    }

    fn wrap(&self, i: i64) -> usize {
        let m = self.nodes() as i64;
        match self.boundary {
            Boundary::Periodic => i.rem_euclid(m) as usize,
            Boundary::Clamp => i.clamp(0, m - 1) as usize,
        }
    }

    /// Interpolates a level at `x`.
    pub fn sample(&self, level: &[f64], x: &[f64]) -> f64 {
        let m = self.nodes();
        let mut s = [0.0; 2];
        for k in 0..2 {
            let r = (x[k] - self.domain.lo[k]) / self.h[k];
            s[k] = match self.boundary {
                Boundary::Periodic => r,
                Boundary::Clamp => r.clamp(0.0, self.cells as f64),
            };
        }
        let (i0, a) = Self::index(s[0]);
        let (j0, b) = Self::index(s[1]);
        let at = |i: i64, j: i64| level[self.wrap(j) * m + self.wrap(i)];
        let c00 = at(i0, j0);
        let c10 = at(i0 + 1, j0);
        let c01 = at(i0, j0 + 1);
        let c11 = at(i0 + 1, j0 + 1);
        match self.interpolation {
            Interpolation::Bilinear => {
                (1.0 - a) * (1.0 - b) * c00 + a * (1.0 - b) * c10 + (1.0 - a) * b * c01 + a * b * c11
            }
            Interpolation::MonotoneCubic => {
                let w = |u: f64| {
                    let u2 = u * u;
                    let u3 = u2 * u;
                    [
                        0.5 * (-u3 + 2.0 * u2 - u),
                        0.5 * (3.0 * u3 - 5.0 * u2 + 2.0),
                        0.5 * (-3.0 * u3 + 4.0 * u2 + u),
                        0.5 * (u3 - u2),
                    ]
                };
                let (wa, wb) = (w(a), w(b));
                let mut v = 0.0;
                for (dj, wj) in wb.iter().enumerate() {
                    for (di, wi) in wa.iter().enumerate() {
                        v += wi * wj * at(i0 - 1 + di as i64, j0 - 1 + dj as i64);
                    }
                }
                let lo = c00.min(c10).min(c01).min(c11);
                let hi = c00.max(c10).max(c01).max(c11);
                v.clamp(lo, hi)
            }
        }
    }

    pub fn final_values(&self) -> &[f64] {
        self.values.last().map_or(&[], |v| v.as_slice())
    }

    /// `∫ f(u(t_k,·)) dx`.
    pub fn integral<F: Fn(f64) -> f64>(&self, k: usize, f: F) -> f64 {
        self.values[k]
            .iter()
            .enumerate()
            .map(|(i, &u)| self.weight(i) * f(u))
            .sum()
    }

    /// Discrete L² distance between level `k` and `reference` sampled at nodes.
    pub fn l2_error<F: Fn(&[f64]) -> f64>(&self, k: usize, reference: F) -> f64 {
        let mut s = 0.0;
        for (i, &u) in self.values[k].iter().enumerate() {
            let d = u - reference(&self.node(i));
            s += self.weight(i) * d * d;
        }
        libm::sqrt(s)
    }

    pub fn contaminated_nodes(&self) -> Vec<usize> {
        (0..self.contaminated.len()).filter(|&i| self.contaminated[i]).collect()
    }
}

/// Follows the characteristic through `(t1, x)` back to `t0` with RK4,
/// substeps capped by the distance to the singular set. `None` means the
/// characteristic met the `δ_min` tube or a field singularity.
fn foot(
    b: &FieldSpec,
    e: Option<&DistanceEvaluator>,
    t1: f64,
    t0: f64,
    x: [f64; 2],
    cfg: &TransportConfig,
) -> Option<[f64; 2]> {
    let f = |t: f64, y: [f64; 2]| -> Option<[f64; 2]> {
        let mut out = [0.0; 2];
        b.eval_into(t, &y, &mut out).ok()?;
        Some(out)
    };
    let mut t = t1;
    let mut y = x;
    let mut guard = 0usize;
    while t > t0 {
        let k1 = f(t, y)?;
        let mut h = (t - t0).min(cfg.max_substep);
        if let Some(e) = e {
            let d = e.dist_spacetime(t, &y).ok()?;
            if d <= cfg.delta_min {
                return None;
            }
            h = h.min(cfg.c_step * d / (1.0 + norm(&k1)));
        }
        guard += 1;
        if guard > 1_000_000 || h <= 0.0 {
            return None;
        }
        let hh = -h;
        let k2 = f(t + 0.5 * hh, [y[0] + 0.5 * hh * k1[0], y[1] + 0.5 * hh * k1[1]])?;
        let k3 = f(t + 0.5 * hh, [y[0] + 0.5 * hh * k2[0], y[1] + 0.5 * hh * k2[1]])?;
        let k4 = f(t + hh, [y[0] + hh * k3[0], y[1] + hh * k3[1]])?;
        for k in 0..2 {
            y[k] += hh / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        t = if t - h <= t0 { t0 } else { t - h };
    }
    if let Some(e) = e {
        if e.dist_spacetime(t0, &y).ok()? <= cfg.delta_min {
            return None;
        }
    }
    Some(y)
}

/// Solves the transport equation with initial data `u0` (sampled exactly
/// at the nodes). Planar only.
pub fn solve_transport<E, U>(
    exec: &E,
    b: &FieldSpec,
    e: Option<&DistanceEvaluator>,
    u0: U,
    cfg: &TransportConfig,
) -> Result<ScalarField>
where
    E: Executor,
    U: Fn(&[f64]) -> f64 + Sync,
{
    if b.dim != 2 || cfg.domain.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: b.dim.max(cfg.domain.dim()),
        });
    }
    if cfg.cells < 2 || !(cfg.dt > 0.0) || !(cfg.horizon > 0.0) || cfg.stride == 0 {
        return Err(invalid("grid", "need cells ≥ 2, dt > 0, horizon > 0, stride ≥ 1"));
    }
    let h = [
        (cfg.domain.hi[0] - cfg.domain.lo[0]) / cfg.cells as f64,
        (cfg.domain.hi[1] - cfg.domain.lo[1]) / cfg.cells as f64,
    ];
    let mut field = ScalarField {
        domain: cfg.domain.clone(),
        cells: cfg.cells,
        boundary: cfg.boundary,
        interpolation: cfg.interpolation,
        h,
        dt: cfg.dt,
        times: vec![0.0],
        values: Vec::new(),
        contaminated: Vec::new(),
    };
    let total = field.nodes() * field.nodes();
    let nodes: Vec<[f64; 2]> = (0..total).map(|i| field.node(i)).collect();

    let bmax = exec
        .map(total, |i| b.eval(0.0, &nodes[i]).map_or(0.0, |v| norm(&v)))
        .into_iter()
        .fold(0.0, f64::max);
    let cfl = bmax * cfg.dt / h[0].min(h[1]);
    if cfl > cfg.cfl_bound {
        return Err(invalid("dt", "max|b|·dt/h exceeds the configured bound"));
    }

    let mut current: Vec<f64> = nodes.iter().map(|x| u0(x)).collect();
    if current.iter().any(|v| !v.is_finite()) {
        return Err(invalid("u0", "non-finite initial value"));
    }
    field.values.push(current.clone());
    field.contaminated = vec![false; total];

    let steps = libm::ceil(cfg.horizon / cfg.dt - 1e-9) as usize;
    for s in 0..steps {
        let t0 = s as f64 * cfg.dt;
        let t1 = if s + 1 == steps { cfg.horizon } else { t0 + cfg.dt };
        let prev = &current;
        let fr = &field;
        let next: Vec<Option<f64>> = exec.map(total, |i| {
            foot(b, e, t1, t0, nodes[i], cfg).map(|y| fr.sample(prev, &y))
        });
        let mut updated = Vec::with_capacity(total);
        for (i, v) in next.into_iter().enumerate() {
            match v {
                Some(v) => updated.push(v),
                None => {
                    field.contaminated[i] = true;
                    updated.push(current[i]);
                }
            }
        }
        current = updated;
        if (s + 1) % cfg.stride == 0 || s + 1 == steps {
            field.times.push(t1);
            field.values.push(current.clone());
        }
    }
    Ok(field)
}

/// Smooth bump `exp(1 − 1/(1−q))` with `q = Σ ((z−c)/r)²` over `(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    /// `(t₀, x₀…)`.
    pub center: Vec<f64>,
    /// `(r_t, r_x…)`.
    pub radii: Vec<f64>,
}

impl TestFunction {
    pub fn new(center: Vec<f64>, radii: Vec<f64>) -> Result<Self> {
        if center.len() != radii.len() || center.len() < 2 {
            return Err(invalid("radii", "one radius per space-time coordinate"));
        }
        if radii.iter().any(|r| !(*r > 0.0)) {
            return Err(invalid("radii", "must be positive"));
        }
        Ok(Self { center, radii })
    }

    fn q(&self, t: f64, x: &[f64]) -> f64 {
        let s = (t - self.center[0]) / self.radii[0];
        let mut q = s * s;
        for k in 0..x.len() {
            let s = (x[k] - self.center[k + 1]) / self.radii[k + 1];
            q += s * s;
        }
        q
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let q = self.q(t, x);
        if q >= 1.0 {
            0.0
        } else {
            libm::exp(1.0 - 1.0 / (1.0 - q))
        }
    }

    /// `(∂ₜφ, ∇φ)` in closed form.
    pub fn gradient(&self, t: f64, x: &[f64]) -> (f64, Vec<f64>) {
        let q = self.q(t, x);
        if q >= 1.0 {
            return (0.0, vec![0.0; x.len()]);
        }
        let fq = libm::exp(1.0 - 1.0 / (1.0 - q)) * (-1.0 / ((1.0 - q) * (1.0 - q)));
        let dt = fq * 2.0 * (t - self.center[0]) / (self.radii[0] * self.radii[0]);
        let dx = (0..x.len())
            .map(|k| fq * 2.0 * (x[k] - self.center[k + 1]) / (self.radii[k + 1] * self.radii[k + 1]))
            .collect();
        (dt, dx)
    }

    /// Spatial support box.
    pub fn spatial_support(&self) -> Result<BoxDomain> {
        let n = self.center.len() - 1;
        BoxDomain::new(
            (0..n).map(|k| self.center[k + 1] - self.radii[k + 1]).collect(),
            (0..n).map(|k| self.center[k + 1] + self.radii[k + 1]).collect(),
        )
    }
}

/// `|∬ β(u)(∂ₜφ + b·∇φ + div b·φ) + ∫ β(u₀) φ(0,·)|` by trapezoid in time
/// over the stored levels and node quadrature in space.
pub fn renormalization_residual<B: Fn(f64) -> f64>(
    u: &ScalarField,
    b: &FieldSpec,
    beta: B,
    phi: &TestFunction,
) -> Result<f64> {
    if phi.center.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: phi.center.len(),
        });
    }
    let support = phi.spatial_support()?;
    if !u.domain.contains(&support.lo) || !u.domain.contains(&support.hi) {
        return Err(invalid("phi", "support must lie inside the domain"));
    }
    let bad: Vec<(usize, usize)> = u
        .contaminated_nodes()
        .into_iter()
        .filter(|&i| support.contains(&u.node(i)))
        .map(|i| (i % u.nodes(), i / u.nodes()))
        .collect();
    if !bad.is_empty() {
        return Err(Error::ContaminatedSupport { nodes: bad });
    }
    let m = u.nodes();
    let (i_lo, i_hi) = node_range(support.lo[0], support.hi[0], u.domain.lo[0], u.h[0], m);
    let (j_lo, j_hi) = node_range(support.lo[1], support.hi[1], u.domain.lo[1], u.h[1], m);
    let slice = |k: usize| -> Result<f64> {
        let t = u.times[k];
        let mut s = 0.0;
        for j in j_lo..=j_hi {
            for i in i_lo..=i_hi {
                let idx = j * m + i;
                let x = u.node(idx);
                let p = phi.eval(t, &x);
                let (pt, px) = phi.gradient(t, &x);
                if p == 0.0 && pt == 0.0 {
                    continue;
                }
                let v = b.eval(t, &x)?;
                let div = b.divergence(t, &x)?;
                s += u.weight(idx) * beta(u.values[k][idx]) * (pt + v[0] * px[0] + v[1] * px[1] + div * p);
            }
        }
        Ok(s)
    };
    let mut total = 0.0;
    let mut prev = slice(0)?;
    for k in 1..u.times.len() {
        let cur = slice(k)?;
        total += 0.5 * (u.times[k] - u.times[k - 1]) * (prev + cur);
        prev = cur;
    }
    let mut initial = 0.0;
    for j in j_lo..=j_hi {
        for i in i_lo..=i_hi {
            let idx = j * m + i;
            initial += u.weight(idx) * beta(u.values[0][idx]) * phi.eval(0.0, &u.node(idx));
        }
    }
    Ok((total + initial).abs())
}

fn node_range(lo: f64, hi: f64, origin: f64, h: f64, m: usize) -> (usize, usize) {
    let a = libm::floor((lo - origin) / h).max(0.0) as usize;
    let b = (libm::ceil((hi - origin) / h) as usize).min(m - 1);
    (a.min(m - 1), b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallRow {
    pub t: f64,
    /// `∫ u²`.
    pub energy: f64,
    /// `‖div b(t)‖_∞` over uncontaminated nodes.
    pub div_sup: f64,
    /// `‖div b(t)‖_∞ · ∫ u²`.
    pub rhs: f64,
    /// Backward difference of the energy (0 on the first row).
    pub rate: f64,
    /// `(rate − mean rhs over the interval)·T / ∫u²`, positive when the
    /// bound fails.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GronwallReport {
    pub rows: Vec<GronwallRow>,
    pub max_margin: f64,
    /// `max_t ∫u²(t) / (∫u₀² · exp ∫₀ᵗ ‖div b‖_∞) − 1`.
    pub integral_margin: f64,
}

/// Compares the energy growth against `‖div b‖_∞ ∫u²` at each stored level.
pub fn gronwall_check(u: &ScalarField, b: &FieldSpec) -> Result<GronwallReport> {
    let k_len = u.times.len();
    let energy: Vec<f64> = (0..k_len).map(|k| u.integral(k, |v| v * v)).collect();
    let total = u.values[0].len();
    let mut div_sup = Vec::with_capacity(k_len);
    for &t in &u.times {
        let mut m = 0.0f64;
        for i in 0..total {
            if !u.contaminated[i] {
                m = m.max(b.divergence(t, &u.node(i))?.abs());
            }
        }
        div_sup.push(m);
    }
    let horizon = *u.times.last().unwrap_or(&0.0);
    let mut rows = Vec::with_capacity(k_len);
    let mut cumulative = 0.0;
    let mut integral_margin = f64::NEG_INFINITY;
    for k in 0..k_len {
        let rhs = div_sup[k] * energy[k];
        // backward difference against the trapezoid mean of the bound
        let (rate, bound) = if k == 0 {
            (0.0, 0.0)
        } else {
            let dt = u.times[k] - u.times[k - 1];
            cumulative += 0.5 * dt * (div_sup[k] + div_sup[k - 1]);
            (
                (energy[k] - energy[k - 1]) / dt,
                0.5 * (rhs + div_sup[k - 1] * energy[k - 1]),
            )
        };
        let margin = if energy[k] > 0.0 {
            (rate - bound) * horizon / energy[k]
        } else {
            0.0
        };
        if energy[0] > 0.0 {
            integral_margin = integral_margin.max(energy[k] / (energy[0] * libm::exp(cumulative)) - 1.0);
        }
        rows.push(GronwallRow {
            t: u.times[k],
            energy: energy[k],
            div_sup: div_sup[k],
            rhs,
            rate,
            margin,
        });
    }
    let max_margin = rows.iter().map(|r| r.margin).fold(f64::NEG_INFINITY, f64::max);
    Ok(GronwallReport {
        rows,
        max_margin,
        integral_margin,
    })
}

/// Least-squares order of `residual ∝ hᵖ`.
pub fn empirical_order(h: &[f64], residual: &[f64]) -> Option<f64> {
    let xs: Vec<f64> = h.iter().map(|v| libm::log(*v)).collect();
    let ys: Vec<f64> = residual.iter().map(|v| libm::log(*v)).collect();
    crate::fit::least_squares(&xs, &ys).map(|f| f.slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::fields::Background;
    use core::f64::consts::PI;

    fn gauss(c: [f64; 2], s: f64) -> impl Fn(&[f64]) -> f64 + Sync {
        move |x: &[f64]| libm::exp(-((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (2.0 * s * s))
    }

    #[test]
    fn zero_field_is_exact() {
        let b = FieldSpec::new(2, 1.0, Background::Zero).unwrap();
        let cfg = TransportConfig::new(BoxDomain::cube(2, -1.0, 1.0).unwrap(), 32, 0.1, 1.0);
        let u = solve_transport(&Sequential, &b, None, gauss([0.2, 0.1], 0.2), &cfg).unwrap();
        assert_eq!(u.values[0], *u.values.last().unwrap());
        let g = gronwall_check(&u, &b).unwrap();
        assert!(g.rows.iter().all(|r| r.energy == g.rows[0].energy));
    }

    #[test]
    fn uniform_translation_on_periodic_grid() {
        let b = FieldSpec::new(2, 1.0, Background::Uniform(vec![1.0, 0.0])).unwrap();
        let mut cfg = TransportConfig::new(BoxDomain::cube(2, 0.0, 1.0).unwrap(), 64, 1.0 / 64.0, 0.25);
        cfg.boundary = Boundary::Periodic;
        let u0 = |x: &[f64]| libm::sin(2.0 * PI * x[0]) * libm::cos(2.0 * PI * x[1]);
        let u = solve_transport(&Sequential, &b, None, u0, &cfg).unwrap();
        // foot lands on nodes: shift by exactly one cell per step
        let err = u.l2_error(u.times.len() - 1, |x| u0(&[x[0] - 0.25, x[1]]));
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn rotation_returns_and_conserves_energy() {
        let b = FieldSpec::new(2, 2.0 * PI, Background::Rotation { omega: 1.0 }).unwrap();
        let mut cfg = TransportConfig::new(BoxDomain::cube(2, -1.0, 1.0).unwrap(), 512, 2.0 * PI / 64.0, 2.0 * PI);
        cfg.stride = 8;
        let u0 = gauss([0.5, 0.0], 0.15);
        let u = solve_transport(&Sequential, &b, None, &u0, &cfg).unwrap();
        let k = u.times.len() - 1;
        let rel = u.l2_error(k, &u0) / libm::sqrt(u.integral(0, |v| v * v));
        assert!(rel < 0.02, "{rel}");
        let g = gronwall_check(&u, &b).unwrap();
        assert!(g.max_margin <= 0.01);
        let drift = (g.rows[k].energy / g.rows[0].energy - 1.0).abs();
        assert!(drift < 0.01, "{drift}");
        let lo = u.values[0].iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = u.values[0].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(u.values.iter().flatten().all(|v| *v >= lo && *v <= hi));
    }

    #[test]
    fn expanding_flow_energy_growth() {
        let b = FieldSpec::new(
            2,
            1.0,
            Background::Linear {
                matrix: vec![1.0, 0.0, 0.0, 0.0],
                offset: vec![0.0, 0.0],
            },
        )
        .unwrap();
        let mut cfg = TransportConfig::new(BoxDomain::cube(2, -2.0, 2.0).unwrap(), 200, 0.02, 1.0);
        cfg.stride = 5;
        let u = solve_transport(&Sequential, &b, None, gauss([0.0, 0.0], 0.2), &cfg).unwrap();
        let g = gronwall_check(&u, &b).unwrap();
        let last = g.rows.last().unwrap();
        let growth = last.energy / g.rows[0].energy;
        assert!(growth <= libm::exp(1.0) * 1.01, "{growth}");
        assert!(growth > libm::exp(1.0) * 0.97, "{growth}");
        assert!(g.integral_margin <= 0.01);
        assert!(g.max_margin <= 0.01, "{}", g.max_margin);
    }

    #[test]
    fn test_function_derivatives_match_differences() {
        let phi = TestFunction::new(vec![0.5, 0.1, -0.2], vec![0.4, 0.5, 0.3]).unwrap();
        let (t, x) = (0.62, [0.25, -0.1]);
        let (pt, px) = phi.gradient(t, &x);
        let h = 1e-5;
        let fd_t = (phi.eval(t + h, &x) - phi.eval(t - h, &x)) / (2.0 * h);
        let fd_x = (phi.eval(t, &[x[0] + h, x[1]]) - phi.eval(t, &[x[0] - h, x[1]])) / (2.0 * h);
        let fd_y = (phi.eval(t, &[x[0], x[1] + h]) - phi.eval(t, &[x[0], x[1] - h])) / (2.0 * h);
        assert!((pt - fd_t).abs() < 1e-6 && (px[0] - fd_x).abs() < 1e-6 && (px[1] - fd_y).abs() < 1e-6);
        assert_eq!(phi.eval(0.0, &x), 0.0);
    }

    #[test]
    fn constant_solution_has_vanishing_residual() {
        let b = FieldSpec::new(2, 1.0, Background::Rotation { omega: 1.0 }).unwrap();
        let cfg = TransportConfig::new(BoxDomain::cube(2, -1.0, 1.0).unwrap(), 64, 0.05, 1.0);
        let u = solve_transport(&Sequential, &b, None, |_: &[f64]| 2.0, &cfg).unwrap();
        let phi = TestFunction::new(vec![0.5, 0.2, 0.0], vec![0.4, 0.5, 0.5]).unwrap();
        let r = renormalization_residual(&u, &b, |z| z * z, &phi).unwrap();
        assert!(r < 1e-4, "{r}");
    }

    #[test]
    fn residual_converges_for_squared_solution() {
        let b = FieldSpec::new(2, 1.0, Background::Rotation { omega: 1.0 }).unwrap();
        let phi = TestFunction::new(vec![0.0, 0.4, 0.1], vec![0.8, 0.45, 0.45]).unwrap();
        let mut hs = Vec::new();
        let mut rs = Vec::new();
        for cells in [32usize, 64, 128] {
            let h = 2.0 / cells as f64;
            let cfg = TransportConfig::new(BoxDomain::cube(2, -1.0, 1.0).unwrap(), cells, 2.0 * h, 0.8);
            let u = solve_transport(&Sequential, &b, None, gauss([0.5, 0.0], 0.15), &cfg).unwrap();
            hs.push(h);
            rs.push(renormalization_residual(&u, &b, |z| z * z, &phi).unwrap());
        }
        assert!(rs[0] > rs[1] && rs[1] > rs[2], "{rs:?}");
        let p = empirical_order(&hs, &rs).unwrap();
        assert!(p >= 0.8, "{p} {rs:?}");
    }
}
