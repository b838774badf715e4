//! Embedded Cash–Karp Runge–Kutta stepping with a singularity-aware step cap.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_max: f64,
    /// Steps below this end the integration with [`Outcome::Underflow`].
    pub h_floor: f64,
    /// Near `S` the step obeys `h ≤ c_step · d_S / (1 + |b|)`.
    pub c_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: 1e-3,
            h_max: 0.05,
            h_floor: 1e-13,
            c_step: 0.1,
            max_steps: 5_000_000,
        }
    }
}

const C: [f64; 6] = [0.0, 0.2, 0.3, 0.6, 1.0, 0.875];
const A: [[f64; 5]; 6] = [
    [0.0; 5],
    [0.2, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [0.3, -0.9, 1.2, 0.0, 0.0],
    [-11.0 / 54.0, 2.5, -70.0 / 27.0, 35.0 / 27.0, 0.0],
    [
        1631.0 / 55296.0,
        175.0 / 512.0,
        575.0 / 13824.0,
        44275.0 / 110592.0,
        253.0 / 4096.0,
    ],
];
const B5: [f64; 6] = [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0];
const B4: [f64; 6] = [
    2825.0 / 27648.0,
    0.0,
    18575.0 / 48384.0,
    13525.0 / 55296.0,
    277.0 / 14336.0,
    0.25,
];

/// Scratch space for one system size.
#[derive(Debug, Clone)]
pub struct Workspace {
    k: [Vec<f64>; 6],
    tmp: Vec<f64>,
    err: Vec<f64>,
}

impl Workspace {
    pub fn new(dim: usize) -> Self {
        Self {
            k: core::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
            err: vec![0.0; dim],
        }
    }
}

/// One Cash–Karp step from `(t, y)` with `k1 = f(t, y)` supplied.
/// Writes the fourth-order solution to `out` and returns the scaled
/// error norm (≤ 1 means acceptable).
pub fn cash_karp_step<F>(
    f: &mut F,
    t: f64,
    y: &[f64],
    k1: &[f64],
    h: f64,
    ctl: &StepControl,
    ws: &mut Workspace,
    out: &mut [f64],
) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    ws.k[0].copy_from_slice(k1);
    for s in 1..6 {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..s {
                acc += A[s][j] * ws.k[j][i];
            }
            ws.tmp[i] = y[i] + h * acc;
        }
        f(t + C[s] * h, &ws.tmp, &mut ws.k[s])?;
    }
    let mut enorm: f64 = 0.0;
    for i in 0..n {
        let mut y4 = 0.0;
        let mut y5 = 0.0;
        for s in 0..6 {
            y4 += B4[s] * ws.k[s][i];
            y5 += B5[s] * ws.k[s][i];
        }
        out[i] = y[i] + h * y4;
        ws.err[i] = h * (y5 - y4);
        let scale = ctl.atol + ctl.rtol * y[i].abs().max(out[i].abs());
        enorm = enorm.max(ws.err[i].abs() / scale);
    }
    if !enorm.is_finite() || out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t });
    }
    Ok(enorm)
}

/// Why [`advance`] returned.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Reached,
    /// The step callback asked to stop.
    Stopped,
    Underflow,
    MaxSteps,
    Failed(Error),
}

/// Step statistics carried across calls to [`advance`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepState {
    /// Proposed next step.
    pub h: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl StepState {
    pub fn new(ctl: &StepControl) -> Self {
        Self {
            h: ctl.h_init,
            ..Self::default()
        }
    }
}

/// Integrates `y' = f(t, y)` from `t` to `t_end` (which may lie before
/// `t`). `cap(t, y, f(t,y))` bounds the step magnitude; `on_step(t0, y0,
/// t1, y1)` runs after every accepted step and returns `false` to stop.
pub fn advance<F, Cp, S>(
    f: &mut F,
    cap: &mut Cp,
    on_step: &mut S,
    t: &mut f64,
    y: &mut [f64],
    t_end: f64,
    ctl: &StepControl,
    st: &mut StepState,
    ws: &mut Workspace,
) -> Outcome
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    Cp: FnMut(f64, &[f64], &[f64]) -> Result<f64>,
    S: FnMut(f64, &[f64], f64, &[f64]) -> bool,
{
    let n = y.len();
    let dir = if t_end >= *t { 1.0 } else { -1.0 };
    let mut k1 = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut y_old = vec![0.0; n];
    while dir * (t_end - *t) > 0.0 {
        if st.accepted + st.rejected >= ctl.max_steps {
            return Outcome::MaxSteps;
        }
        if let Err(e) = f(*t, y, &mut k1) {
            return Outcome::Failed(e);
        }
        st.evaluations += 1;
        let limit = match cap(*t, y, &k1) {
            Ok(v) => v,
            Err(e) => return Outcome::Failed(e),
        };
        let remaining = dir * (t_end - *t);
        let mut h = st.h.abs().min(ctl.h_max).min(limit);
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h < ctl.h_floor && !last {
            return Outcome::Underflow;
        }
        let e = match cash_karp_step(f, *t, y, &k1, dir * h, ctl, ws, &mut next) {
            Ok(e) => e,
            Err(e) => return Outcome::Failed(e),
        };
        st.evaluations += 5;
        if e <= 1.0 {
            let t_new = if last { t_end } else { *t + dir * h };
            let t_old = *t;
            y_old.copy_from_slice(y);
            y.copy_from_slice(&next);
            *t = t_new;
            let keep_going = on_step(t_old, &y_old, t_new, y);
            st.accepted += 1;
            let grow = if e == 0.0 {
                5.0
            } else {
                (0.9 * libm::pow(e, -0.2)).clamp(0.2, 5.0)
            };
            // keep the unclipped proposal when the last step was shortened
            if !last || h * grow > st.h {
                st.h = h * grow;
            }
            if !keep_going {
                return Outcome::Stopped;
            }
        } else {
            st.rejected += 1;
            st.h = h * (0.9 * libm::pow(e, -0.25)).clamp(0.1, 0.9);
            if st.h < ctl.h_floor {
                return Outcome::Underflow;
            }
        }
    }
    Outcome::Reached
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_accuracy() {
        let ctl = StepControl::default();
        let mut f = |_t: f64, y: &[f64], out: &mut [f64]| {
            out[0] = -y[0];
            Ok(())
        };
        let mut cap = |_: f64, _: &[f64], _: &[f64]| Ok(f64::INFINITY);
        let mut cb = |_: f64, _: &[f64], _: f64, _: &[f64]| true;
        let mut t = 0.0;
        let mut y = [1.0];
        let mut st = StepState::new(&ctl);
        let mut ws = Workspace::new(1);
        let o = advance(&mut f, &mut cap, &mut cb, &mut t, &mut y, 3.0, &ctl, &mut st, &mut ws);
        assert_eq!(o, Outcome::Reached);
        assert_eq!(t, 3.0);
        assert!((y[0] - libm::exp(-3.0)).abs() < 1e-8);
    }

    #[test]
    fn backward_integration() {
        let ctl = StepControl::default();
        let mut f = |_t: f64, y: &[f64], out: &mut [f64]| {
            out[0] = -y[1];
            out[1] = y[0];
            Ok(())
        };
        let mut cap = |_: f64, _: &[f64], _: &[f64]| Ok(f64::INFINITY);
        let mut cb = |_: f64, _: &[f64], _: f64, _: &[f64]| true;
        let (mut t, mut y) = (1.0, [libm::cos(1.0), libm::sin(1.0)]);
        let mut st = StepState::new(&ctl);
        let mut ws = Workspace::new(2);
        advance(&mut f, &mut cap, &mut cb, &mut t, &mut y, 0.0, &ctl, &mut st, &mut ws);
        assert!((y[0] - 1.0).abs() < 1e-8 && y[1].abs() < 1e-8);
    }

    #[test]
    fn cap_is_respected() {
        let ctl = StepControl::default();
        let mut f = |_t: f64, _y: &[f64], out: &mut [f64]| {
            out[0] = 1.0;
            Ok(())
        };
        let mut cap = |_: f64, _: &[f64], _: &[f64]| Ok(1e-3);
        let mut largest: f64 = 0.0;
        let mut cb = |a: f64, _: &[f64], b: f64, _: &[f64]| {
            largest = largest.max(b - a);
            true
        };
        let (mut t, mut y) = (0.0, [0.0]);
        let mut st = StepState::new(&ctl);
        let mut ws = Workspace::new(1);
        advance(&mut f, &mut cap, &mut cb, &mut t, &mut y, 0.1, &ctl, &mut st, &mut ws);
        assert!(largest <= 1e-3 + 1e-15);
        assert!((y[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn underflow_reported() {
        let ctl = StepControl::default();
        let mut f = |_t: f64, _y: &[f64], out: &mut [f64]| {
            out[0] = 1.0;
            Ok(())
        };
        let mut cap = |_: f64, _: &[f64], _: &[f64]| Ok(1e-20);
        let mut cb = |_: f64, _: &[f64], _: f64, _: &[f64]| true;
        let (mut t, mut y) = (0.0, [0.0]);
        let mut st = StepState::new(&ctl);
        let mut ws = Workspace::new(1);
        let o = advance(&mut f, &mut cap, &mut cb, &mut t, &mut y, 1.0, &ctl, &mut st, &mut ws);
        assert_eq!(o, Outcome::Underflow);
    }
}
