//! Piecewise-polynomial interpolants backing sampled profiles.

use crate::error::{GeomError, Result};
use crate::scalar::{lit, Real};

/// Index `i` with `xs[i] <= x <= xs[i + 1]`, clamped to the end intervals.
fn locate<T: Real>(xs: &[T], x: T) -> usize {
    let n = xs.len();
    let i = xs.partition_point(|&v| v <= x);
    i.saturating_sub(1).min(n - 2)
}

/// Cubic spline with not-a-knot end conditions (exact on cubic data).
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline<T> {
    xs: Vec<T>,
    ys: Vec<T>,
    m: Vec<T>,
}

impl<T: Real> CubicSpline<T> {
    pub fn new(xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        let n = xs.len();
        if n != ys.len() {
            return Err(GeomError::BadInput(format!(
                "grid has {} points but {} values",
                n,
                ys.len()
            )));
        }
        if n < 4 {
            return Err(GeomError::BadInput(format!("need at least 4 samples, got {n}")));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GeomError::BadInput("grid is not strictly increasing".into()));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(GeomError::BadInput("non-finite sample".into()));
        }
        let h: Vec<T> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let six = lit::<T>(6.0);
        let two = lit::<T>(2.0);
        let rhs = |i: usize| six * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);

        // Unknowns M_1..M_{n-2}; M_0 and M_{n-1} eliminated with the not-a-knot rows.
        let k = n - 2;
        let mut sub = vec![T::zero(); k];
        let mut diag = vec![T::zero(); k];
        let mut sup = vec![T::zero(); k];
        let mut r = vec![T::zero(); k];
        for j in 0..k {
            let i = j + 1;
            sub[j] = h[i - 1];
            diag[j] = two * (h[i - 1] + h[i]);
            sup[j] = h[i];
            r[j] = rhs(i);
        }
        // M_0 = ((h0 + h1) M_1 - h0 M_2) / h1
        let (h0, h1) = (h[0], h[1]);
        diag[0] += h0 * (h0 + h1) / h1;
        if k > 1 {
            sup[0] -= h0 * h0 / h1;
        }
        // M_{n-1} = ((a + b) M_{n-2} - b M_{n-3}) / a  with a = h_{n-3}, b = h_{n-2}
        let (a, b) = (h[n - 3], h[n - 2]);
        diag[k - 1] += b * (a + b) / a;
        if k > 1 {
            sub[k - 1] -= b * b / a;
        }
        let inner = thomas(&sub, &diag, &sup, &r);
        let mut m = Vec::with_capacity(n);
        m.push(((h0 + h1) * inner[0] - h0 * inner.get(1).copied().unwrap_or(inner[0])) / h1);
        m.extend_from_slice(&inner);
        let last = inner[k - 1];
        let prev = if k > 1 { inner[k - 2] } else { last };
        m.push(((a + b) * last - b * prev) / a);
        Ok(Self { xs, ys, m })
    }

    pub fn knots(&self) -> &[T] {
        &self.xs
    }

    pub fn values(&self) -> &[T] {
        &self.ys
    }

    /// Value, first and second derivative.
    pub fn eval(&self, x: T) -> (T, T, T) {
        let i = locate(&self.xs, x);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let (a, b) = (x1 - x, x - x0);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let six = lit::<T>(6.0);
        let two = lit::<T>(2.0);
        let c0 = self.ys[i] / h - m0 * h / six;
        let c1 = self.ys[i + 1] / h - m1 * h / six;
        let v = m0 * a * a * a / (six * h) + m1 * b * b * b / (six * h) + c0 * a + c1 * b;
        let d1 = -m0 * a * a / (two * h) + m1 * b * b / (two * h) - c0 + c1;
        let d2 = (m0 * a + m1 * b) / h;
        (v, d1, d2)
    }
}

fn thomas<T: Real>(sub: &[T], diag: &[T], sup: &[T], rhs: &[T]) -> Vec<T> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / den;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / den;
    }
    let mut x = vec![T::zero(); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

// Quintic Hermite basis on [0, 1], coefficients in increasing powers.
const BASIS: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, -10.0, 15.0, -6.0], // value at 0
    [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],   // slope at 0
    [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],   // curvature at 0
    [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],  // value at 1
    [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],   // slope at 1
    [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],    // curvature at 1
];

fn poly_derivs<T: Real>(c: &[f64; 6], tau: T) -> [T; 3] {
    let mut v = T::zero();
    let mut d1 = T::zero();
    let mut d2 = T::zero();
    for k in (0..6).rev() {
        let ck = lit::<T>(c[k]);
        v = v * tau + ck;
        if k >= 1 {
            d1 = d1 * tau + lit::<T>(k as f64) * ck;
        }
        if k >= 2 {
            d2 = d2 * tau + lit::<T>((k * (k - 1)) as f64) * ck;
        }
    }
    [v, d1, d2]
}

/// C^2 curve in `R^d` through nodes carrying value, slope and second derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct QuinticHermite<T, const D: usize> {
    knots: Vec<T>,
    /// `data[i][c] = [value, slope, second derivative]` of component `c` at knot `i`.
    data: Vec<[[T; 3]; D]>,
}

impl<T: Real, const D: usize> QuinticHermite<T, D> {
    pub fn new(knots: Vec<T>, data: Vec<[[T; 3]; D]>) -> Result<Self> {
        if knots.len() != data.len() || knots.len() < 2 {
            return Err(GeomError::BadInput(
                "hermite curve needs matching knots and data (>= 2)".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GeomError::BadInput("hermite knots must be strictly increasing".into()));
        }
        Ok(Self { knots, data })
    }

    pub fn domain(&self) -> (T, T) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// `[value, first, second]` derivatives per component.
    pub fn eval(&self, s: T) -> [[T; 3]; D] {
        let i = locate(&self.knots, s);
        let h = self.knots[i + 1] - self.knots[i];
        let tau = (s - self.knots[i]) / h;
        let b: Vec<[T; 3]> = BASIS.iter().map(|c| poly_derivs(c, tau)).collect();
        let mut out = [[T::zero(); 3]; D];
        for (c, o) in out.iter_mut().enumerate() {
            let l = self.data[i][c];
            let r = self.data[i + 1][c];
            let w = [l[0], h * l[1], h * h * l[2], r[0], h * r[1], h * h * r[2]];
            for (k, ok) in o.iter_mut().enumerate() {
                let mut acc = T::zero();
                for j in 0..6 {
                    acc += w[j] * b[j][k];
                }
                *ok = acc / h.powi(k as i32);
            }
        }
        out
    }
}
