//! The warped product `R x_f M^2(kappa)` with metric `dt^2 + e^{2f(t)} lambda^2 (dx^2 + dy^2)`.
//!
//! Coordinates are always ordered `(t, x, y)`.

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::{lit, Real};

/// Warping function catalog with closed-form first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum WarpFn<T> {
    /// `f(t) = c`
    Const { c: T },
    /// `f(t) = a t + b`
    Affine { a: T, b: T },
    /// `f(t) = a e^{b t}`
    ExpScaled { a: T, b: T },
    /// `f(t) = a t^2 + b t + c`
    Quadratic { a: T, b: T, c: T },
}

impl<T: Real> WarpFn<T> {
    pub fn zero() -> Self {
        WarpFn::Const { c: T::zero() }
    }

    pub fn eval(&self, t: T) -> T {
        match *self {
            WarpFn::Const { c } => c,
            WarpFn::Affine { a, b } => a * t + b,
            WarpFn::ExpScaled { a, b } => a * (b * t).exp(),
            WarpFn::Quadratic { a, b, c } => (a * t + b) * t + c,
        }
    }

    pub fn d1(&self, t: T) -> T {
        match *self {
            WarpFn::Const { .. } => T::zero(),
            WarpFn::Affine { a, .. } => a,
            WarpFn::ExpScaled { a, b } => a * b * (b * t).exp(),
            WarpFn::Quadratic { a, b, .. } => lit::<T>(2.0) * a * t + b,
        }
    }

    pub fn d2(&self, t: T) -> T {
        match *self {
            WarpFn::Const { .. } | WarpFn::Affine { .. } => T::zero(),
            WarpFn::ExpScaled { a, b } => a * b * b * (b * t).exp(),
            WarpFn::Quadratic { a, .. } => lit::<T>(2.0) * a,
        }
    }

    /// Derivative-free closed form check used by hypothesis sampling.
    pub fn is_constant(&self) -> bool {
        match *self {
            WarpFn::Const { .. } => true,
            WarpFn::Affine { a, .. } => a == T::zero(),
            WarpFn::ExpScaled { a, b } => a == T::zero() || b == T::zero(),
            WarpFn::Quadratic { a, b, .. } => a == T::zero() && b == T::zero(),
        }
    }

    pub fn cast<U: Real>(&self) -> WarpFn<U> {
        let c = |x: T| U::lit(x.as_f64());
        match *self {
            WarpFn::Const { c: k } => WarpFn::Const { c: c(k) },
            WarpFn::Affine { a, b } => WarpFn::Affine { a: c(a), b: c(b) },
            WarpFn::ExpScaled { a, b } => WarpFn::ExpScaled { a: c(a), b: c(b) },
            WarpFn::Quadratic { a, b, c: k } => WarpFn::Quadratic {
                a: c(a),
                b: c(b),
                c: c(k),
            },
        }
    }
}

/// A point `(t, x, y)` of the ambient space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientPoint<T> {
    pub t: T,
    pub x: T,
    pub y: T,
}

impl<T: Real> AmbientPoint<T> {
    pub fn new(t: T, x: T, y: T) -> Self {
        Self { t, x, y }
    }

    pub fn coords(&self) -> Vec3<T> {
        [self.t, self.x, self.y]
    }

    pub fn from_coords(c: Vec3<T>) -> Self {
        Self::new(c[0], c[1], c[2])
    }
}

/// Conformal factor of the model space: `2 / (1 + kappa (x^2 + y^2))`, or 1 when `kappa = 0`.
pub fn model_factor<T: Real>(kappa: i32, x: T, y: T) -> Result<T> {
    match kappa {
        0 => Ok(T::one()),
        -1 | 1 => {
            let denom = T::one() + lit::<T>(kappa as f64) * (x * x + y * y);
            if denom <= T::zero() || !denom.is_finite() {
                return Err(GeomError::Domain(denom.as_f64()));
            }
            Ok(lit::<T>(2.0) / denom)
        }
        k => Err(GeomError::BadKappa(k)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientSpace<T> {
    pub kappa: i32,
    pub warp: WarpFn<T>,
}

impl<T: Real> AmbientSpace<T> {
    pub fn new(kappa: i32, warp: WarpFn<T>) -> Result<Self> {
        if !(-1..=1).contains(&kappa) {
            return Err(GeomError::BadKappa(kappa));
        }
        Ok(Self { kappa, warp })
    }

    /// Euclidean `R^3`.
    pub fn euclidean() -> Self {
        Self {
            kappa: 0,
            warp: WarpFn::zero(),
        }
    }

    pub fn check_point(&self, p: &AmbientPoint<T>) -> Result<()> {
        if !(p.t.is_finite() && p.x.is_finite() && p.y.is_finite()) {
            return Err(GeomError::Domain(f64::NAN));
        }
        model_factor(self.kappa, p.x, p.y).map(|_| ())
    }

    /// Horizontal scale `e^{2f(t)} lambda^2` of the metric.
    pub fn horizontal_scale(&self, p: &AmbientPoint<T>) -> Result<T> {
        let lam = model_factor(self.kappa, p.x, p.y)?;
        Ok((lit::<T>(2.0) * self.warp.eval(p.t)).exp() * lam * lam)
    }

    /// The combination `kappa e^{-2f(t)}` appearing in the compatibility equations.
    pub fn kappa_term(&self, t: T) -> T {
        lit::<T>(self.kappa as f64) * (-lit::<T>(2.0) * self.warp.eval(t)).exp()
    }

    pub fn metric_at(&self, p: &AmbientPoint<T>) -> Result<Mat3<T>> {
        let a = self.horizontal_scale(p)?;
        let z = T::zero();
        Ok([[T::one(), z, z], [z, a, z], [z, z, a]])
    }

    /// Closed-form partials `dg[l][i][j] = d_l g_ij`.
    pub fn metric_partials(&self, p: &AmbientPoint<T>) -> Result<[Mat3<T>; 3]> {
        let a = self.horizontal_scale(p)?;
        let lam = model_factor(self.kappa, p.x, p.y)?;
        let k = lit::<T>(self.kappa as f64);
        let two = lit::<T>(2.0);
        // d_l A = 2 A (d_l log e^f + d_l log lambda); d_x log lambda = -kappa x lambda
        let da = [
            two * a * self.warp.d1(p.t),
            -two * a * k * p.x * lam,
            -two * a * k * p.y * lam,
        ];
        let mut dg = [[[T::zero(); 3]; 3]; 3];
        for (l, dgl) in dg.iter_mut().enumerate() {
            dgl[1][1] = da[l];
            dgl[2][2] = da[l];
        }
        Ok(dg)
    }

    /// Levi-Civita symbols `gamma[k][i][j]` of the ambient metric.
    pub fn christoffels(&self, p: &AmbientPoint<T>) -> Result<[Mat3<T>; 3]> {
        let g = self.metric_at(p)?;
        let dg = self.metric_partials(p)?;
        let half = lit::<T>(0.5);
        let mut gamma = [[[T::zero(); 3]; 3]; 3];
        for (k, gk) in gamma.iter_mut().enumerate() {
            let ginv = T::one() / g[k][k];
            for i in 0..3 {
                for j in i..3 {
                    let v = half * ginv * (dg[i][j][k] + dg[j][i][k] - dg[k][i][j]);
                    gk[i][j] = v;
                    gk[j][i] = v;
                }
            }
        }
        Ok(gamma)
    }

    /// `Gamma(a, b)^k = Gamma^k_ij a^i b^j`.
    pub fn connection_term(gamma: &[Mat3<T>; 3], a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
        let mut out = [T::zero(); 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = crate::linalg::quad3(&gamma[k], a, b);
        }
        out
    }

    pub fn cast<U: Real>(&self) -> AmbientSpace<U> {
        AmbientSpace {
            kappa: self.kappa,
            warp: self.warp.cast(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::leading_minors3;
    use proptest::prelude::*;

    fn fd1(w: &WarpFn<f64>, t: f64, h: f64) -> f64 {
        (w.eval(t + h) - w.eval(t - h)) / (2.0 * h)
    }

    fn catalog() -> Vec<WarpFn<f64>> {
        vec![
            WarpFn::Const { c: 0.3 },
            WarpFn::Affine { a: 1.0, b: -0.2 },
            WarpFn::ExpScaled { a: 1.0, b: -1.0 },
            WarpFn::Quadratic {
                a: 1.0,
                b: 0.5,
                c: -0.1,
            },
        ]
    }

    #[test]
    fn model_factor_examples() {
        assert_eq!(model_factor(0, 3.7f64, -2.1).unwrap(), 1.0);
        assert_eq!(model_factor(1, 0.0f64, 0.0).unwrap(), 2.0);
        assert!((model_factor(-1, 0.5f64, 0.5).unwrap() - 4.0).abs() < 1e-15);
        assert!(matches!(model_factor(-1, 0.8f64, 0.7), Err(GeomError::Domain(_))));
        assert!(matches!(model_factor(2, 0.0f64, 0.0), Err(GeomError::BadKappa(2))));
    }

    #[test]
    fn warp_derivatives_match_central_differences() {
        for w in catalog() {
            for &t in &[-1.0, 0.0, 0.7, 2.0] {
                for &h in &[1e-3, 1e-4] {
                    assert!((w.d1(t) - fd1(&w, t, h)).abs() <= 10.0 * h * h, "{w:?} t={t}");
                    let fd2 = (w.d1(t + h) - w.d1(t - h)) / (2.0 * h);
                    assert!((w.d2(t) - fd2).abs() <= 10.0 * h * h);
                }
            }
        }
    }

    #[test]
    fn warp_serializes_as_tagged_record() {
        let w: WarpFn<f64> = serde_json::from_str(r#"{"family":"ExpScaled","a":1.0,"b":-1.0}"#).unwrap();
        assert_eq!(w, WarpFn::ExpScaled { a: 1.0, b: -1.0 });
        assert!(serde_json::from_str::<WarpFn<f64>>(r#"{"family":"Const","c":0,"d":1}"#).is_err());
    }

    #[test]
    fn metric_examples() {
        let flat = AmbientSpace::<f64>::euclidean();
        let p = AmbientPoint::new(0.4, -0.3, 2.0);
        let g = flat.metric_at(&p).unwrap();
        assert_eq!(g, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

        let lin = AmbientSpace::new(0, WarpFn::Affine { a: 1.0, b: 0.0 }).unwrap();
        let g = lin.metric_at(&AmbientPoint::new(1.0, 0.0, 0.0)).unwrap();
        let e2 = 1f64.exp().powi(2);
        assert!((g[1][1] - e2).abs() < 1e-12 && (g[2][2] - e2).abs() < 1e-12 && g[0][0] == 1.0);

        let sph = AmbientSpace::new(1, WarpFn::zero()).unwrap();
        let g = sph.metric_at(&AmbientPoint::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(g, [[1.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]]);
    }

    #[test]
    fn christoffel_examples() {
        let o = AmbientPoint::new(0.0, 0.0, 0.0);
        let flat = AmbientSpace::<f64>::euclidean();
        assert!(flat
            .christoffels(&o)
            .unwrap()
            .iter()
            .flatten()
            .flatten()
            .all(|&v| v == 0.0));

        // diag(1, e^{2t}, e^{2t}): Gamma^t_xx = -e^{2t}, Gamma^x_tx = 1
        let lin = AmbientSpace::new(0, WarpFn::Affine { a: 1.0, b: 0.0 }).unwrap();
        let g = lin.christoffels(&o).unwrap();
        assert!((g[0][1][1] + 1.0).abs() < 1e-14);
        assert!((g[1][0][1] - 1.0).abs() < 1e-14);

        let sph = AmbientSpace::new(1, WarpFn::<f64>::zero()).unwrap();
        let g = sph.christoffels(&o).unwrap();
        assert!(g[0].iter().flatten().all(|&v| v == 0.0));
    }

    /// Independent route: Christoffels from central-difference metric partials.
    fn fd_christoffels(space: &AmbientSpace<f64>, p: &AmbientPoint<f64>) -> [Mat3<f64>; 3] {
        let h = 1e-5;
        let g = space.metric_at(p).unwrap();
        let mut dg = [[[0.0; 3]; 3]; 3];
        for l in 0..3 {
            let mut cp = p.coords();
            let mut cm = p.coords();
            cp[l] += h;
            cm[l] -= h;
            let gp = space.metric_at(&AmbientPoint::from_coords(cp)).unwrap();
            let gm = space.metric_at(&AmbientPoint::from_coords(cm)).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    dg[l][i][j] = (gp[i][j] - gm[i][j]) / (2.0 * h);
                }
            }
        }
        let mut out = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    out[k][i][j] = 0.5 / g[k][k] * (dg[i][j][k] + dg[j][i][k] - dg[k][i][j]);
                }
            }
        }
        out
    }

    fn space_strategy() -> impl Strategy<Value = AmbientSpace<f64>> {
        (-1i32..=1, 0usize..4).prop_map(|(k, w)| AmbientSpace::new(k, catalog()[w]).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn metric_is_spd_and_connection_compatible(
            space in space_strategy(),
            t in -1.5f64..1.5, rad in 0.0f64..0.9, ang in 0.0f64..std::f64::consts::TAU,
        ) {
            let p = AmbientPoint::new(t, rad * ang.cos(), rad * ang.sin());
            let g = space.metric_at(&p).unwrap();
            prop_assert!(leading_minors3(&g).iter().all(|&m| m > 0.0));

            let gamma = space.christoffels(&p).unwrap();
            let dg = space.metric_partials(&p).unwrap();
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        prop_assert_eq!(gamma[k][i][j], gamma[k][j][i]);
                        // d_i g_jk - Gamma^l_ij g_lk - Gamma^l_ik g_jl
                        let mut r = dg[i][j][k];
                        for l in 0..3 {
                            r -= gamma[l][i][j] * g[l][k] + gamma[l][i][k] * g[j][l];
                        }
                        prop_assert!(r.abs() < 1e-8);
                    }
                }
            }
            let fd = fd_christoffels(&space, &p);
            for k in 0..3 { for i in 0..3 { for j in 0..3 {
                prop_assert!((fd[k][i][j] - gamma[k][i][j]).abs() < 1e-6 * (1.0 + gamma[k][i][j].abs()));
            }}}
        }

        #[test]
        fn model_factor_formula(k in prop::sample::select(vec![-1i32, 1]), x in -0.6f64..0.6, y in -0.6f64..0.6) {
            let v = model_factor(k, x, y).unwrap();
            prop_assert_eq!(v, 2.0 / (1.0 + k as f64 * (x * x + y * y)));
        }
    }
}
