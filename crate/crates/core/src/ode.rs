//! Dormand-Prince 5(4) integration with terminal sign-change events.

use crate::error::{GeomError, Result};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions<T> {
    pub rtol: T,
    pub atol: T,
    pub h_init: T,
    pub h_min: T,
    pub max_steps: usize,
    /// Width to which event times are bisected.
    pub event_tol: T,
}

impl<T: Real> Default for OdeOptions<T> {
    fn default() -> Self {
        Self {
            rtol: lit(1e-10),
            atol: lit(1e-10),
            h_init: lit(1e-3),
            h_min: lit(1e-14),
            max_steps: 1_000_000,
            event_tol: lit(1e-12),
        }
    }
}

/// Where an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stop<T, const N: usize> {
    pub t: T,
    pub y: [T; N],
    /// Index of the event that fired, `None` when `t_end` was reached.
    pub event: Option<usize>,
    pub steps: usize,
}

/// An event fires when `g` goes from `>= 0` to `< 0`.
pub type EventFn<'a, T, const N: usize> = &'a dyn Fn(T, &[T; N]) -> T;

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One step of size `h`; returns the 5th-order solution and the embedded error estimate.
pub fn dopri_step<T: Real, const N: usize>(
    f: &impl Fn(T, &[T; N]) -> Result<[T; N]>,
    t: T,
    y: &[T; N],
    h: T,
) -> Result<([T; N], [T; N])> {
    let mut k = [[T::zero(); N]; 7];
    k[0] = f(t, y)?;
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = lit::<T>(A[s][j]);
            if A[s][j] != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * kj[i];
                }
            }
        }
        k[s] = f(t + h * lit::<T>(C[s]), &ys)?;
    }
    let mut y1 = *y;
    let mut err = [T::zero(); N];
    for i in 0..N {
        for s in 0..6 {
            y1[i] += h * lit::<T>(A[6][s]) * k[s][i];
        }
        for (s, kk) in k.iter().enumerate() {
            err[i] += h * lit::<T>(E[s]) * kk[i];
        }
    }
    Ok((y1, err))
}

fn error_norm<T: Real, const N: usize>(y0: &[T; N], y1: &[T; N], err: &[T; N], o: &OdeOptions<T>) -> T {
    let mut acc = T::zero();
    for i in 0..N {
        let sc = o.atol + o.rtol * y0[i].abs().max(y1[i].abs());
        acc += (err[i] / sc).powi(2);
    }
    (acc / lit::<T>(N as f64)).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` towards `t_end > t0`, stopping at the first event.
pub fn integrate<T: Real, const N: usize>(
    f: &impl Fn(T, &[T; N]) -> Result<[T; N]>,
    t0: T,
    y0: [T; N],
    t_end: T,
    opts: &OdeOptions<T>,
    events: &[EventFn<'_, T, N>],
) -> Result<Stop<T, N>> {
    let mut t = t0;
    let mut y = y0;
    let mut h = opts.h_init.min(t_end - t0);
    let mut steps = 0;
    while t < t_end {
        if steps >= opts.max_steps {
            return Err(GeomError::StepFailure(format!(
                "step budget exhausted at t = {}",
                t.as_f64()
            )));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let (y1, err) = dopri_step(f, t, &y, h)?;
        let e = error_norm(&y, &y1, &err, opts);
        if !e.is_finite() {
            h *= lit::<T>(0.25);
            if h < opts.h_min {
                return Err(GeomError::StepFailure(format!(
                    "non-finite state near t = {}",
                    t.as_f64()
                )));
            }
            continue;
        }
        if e <= T::one() {
            steps += 1;
            let t1 = if last { t_end } else { t + h };
            if let Some((te, ye, idx)) = locate_event(f, t, &y, h, &y1, events, opts)? {
                return Ok(Stop {
                    t: te,
                    y: ye,
                    event: Some(idx),
                    steps,
                });
            }
            t = t1;
            y = y1;
        }
        let fac = if e == T::zero() {
            lit::<T>(5.0)
        } else {
            (lit::<T>(0.9) * e.powf(lit(-0.2))).max(lit(0.2)).min(lit(5.0))
        };
        h *= fac;
        if h < opts.h_min {
            return Err(GeomError::StepFailure(format!(
                "step size underflow at t = {}",
                t.as_f64()
            )));
        }
    }
    Ok(Stop {
        t,
        y,
        event: None,
        steps,
    })
}

type Crossing<T, const N: usize> = Option<(T, [T; N], usize)>;

fn locate_event<T: Real, const N: usize>(
    f: &impl Fn(T, &[T; N]) -> Result<[T; N]>,
    t: T,
    y: &[T; N],
    h: T,
    y1: &[T; N],
    events: &[EventFn<'_, T, N>],
    opts: &OdeOptions<T>,
) -> Result<Crossing<T, N>> {
    let mut best: Crossing<T, N> = None;
    for (idx, g) in events.iter().enumerate() {
        if !(g(t, y) >= T::zero() && g(t + h, y1) < T::zero()) {
            continue;
        }
        let (mut lo, mut hi) = (T::zero(), h);
        let mut y_hi = *y1;
        while hi - lo > opts.event_tol {
            let mid = (lo + hi) / lit::<T>(2.0);
            let (ym, _) = dopri_step(f, t, y, mid)?;
            if g(t + mid, &ym) < T::zero() {
                hi = mid;
                y_hi = ym;
            } else {
                lo = mid;
            }
        }
        if best.as_ref().is_none_or(|b| t + hi < b.0) {
            best = Some((t + hi, y_hi, idx));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_to_tolerance() {
        let f = |_t: f64, y: &[f64; 2]| Ok([y[1], -y[0]]);
        let s = integrate(&f, 0.0, [0.0, 1.0], 10.0, &OdeOptions::default(), &[]).unwrap();
        assert!(s.event.is_none() && s.t == 10.0);
        assert!((s.y[0] - 10f64.sin()).abs() < 1e-8 && (s.y[1] - 10f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn event_is_located_to_tolerance() {
        let f = |_t: f64, y: &[f64; 2]| Ok([y[1], -y[0]]);
        let g = |_t: f64, y: &[f64; 2]| y[1];
        let s = integrate(&f, 0.0, [0.0, 1.0], 10.0, &OdeOptions::default(), &[&g]).unwrap();
        assert_eq!(s.event, Some(0));
        assert!((s.t - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    }

    #[test]
    fn fifth_order_single_step() {
        let f = |t: f64, _y: &[f64; 1]| Ok([t.exp()]);
        let e = |h: f64| (dopri_step(&f, 0.0, &[1.0], h).unwrap().0[0] - h.exp()).abs();
        let p = (e(0.2) / e(0.1)).log2();
        assert!(p > 5.5, "local order {p}");
    }
}
