//! Centered finite differences on vector-valued fields, with optional Richardson extrapolation.

use crate::error::Result;
use crate::scalar::{lit, Real};

/// Step and extrapolation level for centered differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdScheme<T> {
    pub step: T,
    pub richardson: bool,
}

impl<T: Real> FdScheme<T> {
    pub fn new(step: T, richardson: bool) -> Self {
        Self { step, richardson }
    }

    /// Largest offset from the base point the scheme evaluates at.
    pub fn reach(&self) -> T {
        self.step
    }

    pub fn halved(&self) -> Self {
        Self {
            step: self.step / lit::<T>(2.0),
            richardson: self.richardson,
        }
    }
}

fn combine<T: Real, const N: usize>(a: [T; N], b: [T; N], ca: T, cb: T) -> [T; N] {
    let mut out = [T::zero(); N];
    for i in 0..N {
        out[i] = ca * a[i] + cb * b[i];
    }
    out
}

fn richardson<T: Real, const N: usize>(scheme: FdScheme<T>, raw: impl Fn(T) -> Result<[T; N]>) -> Result<[T; N]> {
    let coarse = raw(scheme.step)?;
    if !scheme.richardson {
        return Ok(coarse);
    }
    let fine = raw(scheme.step / lit::<T>(2.0))?;
    let third = lit::<T>(1.0 / 3.0);
    Ok(combine(fine, coarse, lit::<T>(4.0) * third, -third))
}

/// First derivative along one axis: `f(x + h) - f(x - h)` over `2h`.
pub fn d1<T: Real, const N: usize>(scheme: FdScheme<T>, f: impl Fn(T) -> Result<[T; N]>) -> Result<[T; N]> {
    richardson(scheme, |h| {
        let p = f(h)?;
        let m = f(-h)?;
        Ok(combine(p, m, (lit::<T>(2.0) * h).recip(), -(lit::<T>(2.0) * h).recip()))
    })
}

/// Second derivative along one axis; `f` is evaluated at offsets relative to the base point.
pub fn d2<T: Real, const N: usize>(scheme: FdScheme<T>, f: impl Fn(T) -> Result<[T; N]>) -> Result<[T; N]> {
    let c = f(T::zero())?;
    richardson(scheme, |h| {
        let p = f(h)?;
        let m = f(-h)?;
        let mut out = [T::zero(); N];
        for i in 0..N {
            out[i] = (p[i] - lit::<T>(2.0) * c[i] + m[i]) / (h * h);
        }
        Ok(out)
    })
}

/// Mixed second derivative of a two-argument field.
pub fn d11<T: Real, const N: usize>(scheme: FdScheme<T>, f: impl Fn(T, T) -> Result<[T; N]>) -> Result<[T; N]> {
    richardson(scheme, |h| {
        let pp = f(h, h)?;
        let pm = f(h, -h)?;
        let mp = f(-h, h)?;
        let mm = f(-h, -h)?;
        let mut out = [T::zero(); N];
        let s = lit::<T>(4.0) * h * h;
        for i in 0..N {
            out[i] = (pp[i] - pm[i] - mp[i] + mm[i]) / s;
        }
        Ok(out)
    })
}

/// Observed convergence order from residuals at step `h` and `h / 2`.
pub fn observed_order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_smooth_functions() {
        let x0 = 0.3f64;
        let f = |dx: f64| Ok([(x0 + dx).sin(), (x0 + dx).exp()]);
        let s = FdScheme::new(1e-3, true);
        let a = d1(s, f).unwrap();
        assert!((a[0] - x0.cos()).abs() < 1e-12 && (a[1] - x0.exp()).abs() < 1e-12);
        let b = d2(s, f).unwrap();
        assert!((b[0] + x0.sin()).abs() < 1e-9);
        let m = d11(s, |a, b| Ok([(x0 + a) * (x0 + a) * (1.0 + b).sin()])).unwrap();
        assert!((m[0] - 2.0 * x0 * 1f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn plain_central_difference_is_second_order() {
        let f = |dx: f64| Ok([(0.7 + dx).exp()]);
        let e = |h: f64| (d1(FdScheme::new(h, false), f).unwrap()[0] - 0.7f64.exp()).abs();
        let p = observed_order(e(1e-2), e(5e-3));
        assert!((p - 2.0).abs() < 0.05, "order {p}");
    }
}
