//! First and second fundamental forms, shape operator, angle function and the
//! complexified quantities used by the conformal-parameter equations.

use num_complex::Complex;

use crate::ambient::AmbientSpace;
use crate::error::{GeomError, Result};
use crate::immersion::{ImmersionJet, Orientation};
use crate::linalg::{add3, cross3, det2, inv2, mat2_vec, mul2, quad2, quad3, scale3, Mat2, Vec3};
use crate::scalar::{lit, Real};

const NU_AMBIGUITY: f64 = 1e-12;

/// Pointwise extrinsic data of an immersed surface in real parameter coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalData<T> {
    /// First form `[[E, F], [F, G]]`.
    pub first: Mat2<T>,
    /// Second form `[[L, M], [M, N]]`, with `II(X, Y) = g(SX, Y)`.
    pub second: Mat2<T>,
    /// Shape operator `I^{-1} II` acting on parameter components.
    pub shape: Mat2<T>,
    pub mean: T,
    pub extrinsic: T,
    /// Unit normal in ambient coordinates.
    pub normal: Vec3<T>,
    /// Angle function `g(xi, N)`.
    pub nu: T,
    /// Tangential part of `xi = d/dt` in the parameter basis.
    pub tangent: [T; 2],
    /// `(h_u, h_v)`
    pub grad_h: [T; 2],
    /// Height `h = t`.
    pub height: T,
}

impl<T: Real> FundamentalData<T> {
    /// `|T|^2` measured with the first fundamental form.
    pub fn tangent_norm_sq(&self) -> T {
        quad2(&self.first, self.tangent, self.tangent)
    }

    pub fn det_first(&self) -> T {
        det2(&self.first)
    }
}

/// Computes the fundamental data of `jet` in `space`.
pub fn fundamental_data<T: Real>(
    space: &AmbientSpace<T>,
    jet: &ImmersionJet<T>,
    orientation: Orientation<T>,
) -> Result<FundamentalData<T>> {
    let g = space.metric_at(&jet.p)?;
    let gamma = space.christoffels(&jet.p)?;
    let [xu, xv] = jet.d1;
    let first = [
        [quad3(&g, &xu, &xu), quad3(&g, &xu, &xv)],
        [quad3(&g, &xv, &xu), quad3(&g, &xv, &xv)],
    ];
    let det_i = det2(&first);
    if !(det_i > T::zero()) || !det_i.is_finite() {
        return Err(GeomError::DegenerateJet(det_i.as_f64()));
    }
    let first_inv = inv2(&first).ok_or(GeomError::DegenerateJet(det_i.as_f64()))?;

    // The coordinate cross product annihilates both tangents; raising its index gives the normal.
    let co = cross3(xu, xv);
    let mut n = [co[0] / g[0][0], co[1] / g[1][1], co[2] / g[2][2]];
    let len = quad3(&g, &n, &n).sqrt();
    if !(len > T::zero()) {
        return Err(GeomError::DegenerateJet(det_i.as_f64()));
    }
    n = scale3(len.recip(), n);
    let nu_raw = g[0][0] * n[0];
    let flip = match orientation {
        Orientation::Up | Orientation::Down => {
            if nu_raw.abs() < lit::<T>(NU_AMBIGUITY) {
                return Err(GeomError::OrientationAmbiguous(nu_raw.abs().as_f64()));
            }
            (nu_raw < T::zero()) == matches!(orientation, Orientation::Up)
        }
        Orientation::Seed(s) => quad3(&g, &n, &s) < T::zero(),
        Orientation::Parametric { flip } => flip,
    };
    if flip {
        n = scale3(-T::one(), n);
    }
    let nu = g[0][0] * n[0];

    let ii = |a: usize, b: usize, d2: &Vec3<T>| {
        let acc = add3(*d2, AmbientSpace::connection_term(&gamma, &jet.d1[a], &jet.d1[b]));
        quad3(&g, &acc, &n)
    };
    let l = ii(0, 0, &jet.d2[0]);
    let m = ii(0, 1, &jet.d2[1]);
    let nn = ii(1, 1, &jet.d2[2]);
    let second = [[l, m], [m, nn]];
    let shape = mul2(&first_inv, &second);
    let two = lit::<T>(2.0);
    let grad_h = jet.height_gradient();
    Ok(FundamentalData {
        first,
        second,
        shape,
        mean: (shape[0][0] + shape[1][1]) / two,
        extrinsic: det2(&second) / det_i,
        normal: n,
        nu,
        tangent: mat2_vec(&first_inv, grad_h),
        grad_h,
        height: jet.p.t,
    })
}

/// Christoffel symbols `gamma[k][i][j]` of the induced metric, from the tangential part of
/// the ambient covariant derivative `D_{d_i} d_j = phi_ij + Gamma(phi_i, phi_j)`.
pub fn surface_christoffels<T: Real>(
    space: &AmbientSpace<T>,
    jet: &ImmersionJet<T>,
    first: &Mat2<T>,
) -> Result<[Mat2<T>; 2]> {
    let g = space.metric_at(&jet.p)?;
    let gamma = space.christoffels(&jet.p)?;
    let first_inv = inv2(first).ok_or(GeomError::DegenerateJet(det2(first).as_f64()))?;
    let mut out = [[[T::zero(); 2]; 2]; 2];
    for i in 0..2 {
        for j in i..2 {
            let d2 = jet.d2[i + j];
            let acc = add3(d2, AmbientSpace::connection_term(&gamma, &jet.d1[i], &jet.d1[j]));
            let lowered = [quad3(&g, &acc, &jet.d1[0]), quad3(&g, &acc, &jet.d1[1])];
            let up = mat2_vec(&first_inv, lowered);
            for k in 0..2 {
                out[k][i][j] = up[k];
                out[k][j][i] = up[k];
            }
        }
    }
    Ok(out)
}

/// Quantities in the complex coordinate `z = u + i v`, `d_z = (d_u - i d_v) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexFundData<T> {
    /// `<phi_z, phi_z>`
    pub e: Complex<T>,
    /// `<phi_z, phi_zbar>`
    pub f: T,
    /// `|E|^2 - F^2`
    pub d: T,
    /// `II(d_z, d_zbar)`
    pub rho: T,
    /// `conj(E) h_z - F h_zbar`
    pub alpha: Complex<T>,
    pub hz: Complex<T>,
    /// `nu_z`, filled in by callers that differentiate the angle function.
    pub nu_z: Option<Complex<T>>,
    /// Hopf coefficient `II(d_z, d_z)`.
    pub p: Complex<T>,
    /// Isothermal factor `2F`, present when the chart is conformal for `I`.
    pub lambda_conf: Option<T>,
}

const ISOTHERMAL_REL: f64 = 1e-8;

pub fn complexify<T: Real>(fd: &FundamentalData<T>, _jet: &ImmersionJet<T>) -> ComplexFundData<T> {
    let quarter = lit::<T>(0.25);
    let half = lit::<T>(0.5);
    let [[er, fr], [_, gr]] = fd.first;
    let [[l, m], [_, n]] = fd.second;
    let e = Complex::new(quarter * (er - gr), -half * fr);
    let f = quarter * (er + gr);
    let d = e.norm_sqr() - f * f;
    let hz = Complex::new(half * fd.grad_h[0], -half * fd.grad_h[1]);
    let alpha = e.conj() * hz - hz.conj() * f;
    let isothermal = e.norm() <= lit::<T>(ISOTHERMAL_REL) * f;
    ComplexFundData {
        e,
        f,
        d,
        rho: quarter * (l + n),
        alpha,
        hz,
        nu_z: None,
        p: Complex::new(quarter * (l - n), -half * m),
        lambda_conf: isothermal.then(|| lit::<T>(2.0) * f),
    }
}

/// Pointwise residuals of the tangent-field identities (labels `e4`..`e9`).
///
/// Every identity is algebraic; `fd` supplies the real-coordinate `T` and `|T|^2`
/// the complex expressions are compared against.
pub fn check_lemma31<T: Real>(cfd: &ComplexFundData<T>, fd: &FundamentalData<T>) -> Result<[(&'static str, T); 6]> {
    let d = cfd.d;
    if d.abs() < lit::<T>(1e-14) {
        return Err(GeomError::DivByZeroD(d.as_f64()));
    }
    let (e, f, alpha, hz) = (cfd.e, cfd.f, cfd.alpha, cfd.hz);
    let hzb = hz.conj();
    let tt = fd.tangent_norm_sq();

    // T = (alpha d_z + conj(alpha) d_zbar) / D  has real components (Re, Im) of alpha / D.
    let a = alpha / d;
    let dt = [fd.tangent[0] - a.re, fd.tangent[1] - a.im];
    let e4 = quad2(&fd.first, dt, dt).max(T::zero()).sqrt();
    let e5 = (alpha - (e.conj() * hz - hzb * f)).norm();
    let e6 = (Complex::from(tt) - (alpha * hz + alpha.conj() * hzb) / d).norm();
    let two = lit::<T>(2.0);
    let e7 = (Complex::from(tt) - (e * hzb * hzb + e.conj() * hz * hz - hz * hzb * (two * f)) / d).norm();
    let e8 = (hz - (e * alpha + alpha.conj() * f) / d).norm();
    let e9 = (hz.norm_sqr() - (tt * f + alpha.norm_sqr() / d)).abs();
    Ok([("e4", e4), ("e5", e5), ("e6", e6), ("e7", e7), ("e8", e8), ("e9", e9)])
}
