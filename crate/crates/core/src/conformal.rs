//! Conformal charts on surfaces of revolution and the complex-coordinate identities checked on them.

use std::collections::BTreeMap;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientSpace;
use crate::compat::GridSpec;
use crate::error::{GeomError, Result};
use crate::fd::{d1, d11, d2, FdScheme};
use crate::fundforms::{complexify, fundamental_data, surface_christoffels, ComplexFundData, FundamentalData};
use crate::immersion::{GraphProfile, Immersion, ImmersionJet, Meridian, Orientation, SurfaceKind};
use crate::linalg::{det2, inv2, mat2_vec, Mat2};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartKind {
    /// `I = lambda |dz|^2`
    IsothermalI,
    /// `II = 2 rho |dz|^2`, requires `K_e > 0`.
    ConformalII,
}

const KNOTS: usize = 257;
const SIMPSON_REL: f64 = 1e-10;
const SIMPSON_DEPTH: u32 = 40;
const FLOW_SUBSTEPS: usize = 8;
const DW_STEP: f64 = 1e-4;

/// Chart `z = s + i theta` on a surface of revolution; `s` reparametrizes the meridian.
#[derive(Debug, Clone)]
pub struct ConformalChart<T> {
    pub kind: ChartKind,
    space: AmbientSpace<T>,
    meridian: Meridian<T>,
    /// Normal is the parametric one, reversed when set.
    flip: bool,
    sigma: Vec<T>,
    s: Vec<T>,
}

fn meridian_of<T: Real>(imm: &Immersion<T>) -> Result<(Meridian<T>, [T; 2])> {
    match &imm.kind {
        SurfaceKind::Rotational(m) => Ok((m.clone(), imm.domain[0])),
        SurfaceKind::EuclidSphere { radius, t0 } => {
            // Latitude range of the catalog chart, as polar angle.
            let half = T::FRAC_PI_2();
            let [v0, v1] = imm.domain[1];
            Ok((
                Meridian::Sphere {
                    radius: *radius,
                    t0: *t0,
                },
                [half - v1, half - v0],
            ))
        }
        SurfaceKind::Slice { t0 } => Ok((
            Meridian::Graph(GraphProfile::Polynomial(vec![*t0])),
            [lit(0.05), lit(0.5)],
        )),
        SurfaceKind::Cylinder { .. } => Err(GeomError::BadInput(
            "conformal charts need a surface of revolution about the t axis".into(),
        )),
    }
}

fn rot_jet<T: Real>(m: &Meridian<T>, sigma: T, theta: T) -> ImmersionJet<T> {
    m.eval(sigma).surface_jet(theta)
}

fn simpson<T: Real>(f: &impl Fn(T) -> Result<T>, a: T, b: T) -> Result<T> {
    let half = lit::<T>(0.5);
    let six = lit::<T>(6.0);
    let fa = f(a)?;
    let fb = f(b)?;
    let m = (a + b) * half;
    let fm = f(m)?;
    let whole = (b - a) / six * (fa + lit::<T>(4.0) * fm + fb);
    let tol = lit::<T>(SIMPSON_REL) * whole.abs().max(lit(1e-300));
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, SIMPSON_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<T: Real>(
    f: &impl Fn(T) -> Result<T>,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> Result<T> {
    let half = lit::<T>(0.5);
    let six = lit::<T>(6.0);
    let m = (a + b) * half;
    let lm = (a + m) * half;
    let rm = (m + b) * half;
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / six * (fa + lit::<T>(4.0) * flm + fm);
    let right = (b - m) / six * (fm + lit::<T>(4.0) * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(GeomError::QuadratureFail(format!(
            "non-finite integrand near {}",
            m.as_f64()
        )));
    }
    if delta.abs() <= lit::<T>(15.0) * tol {
        return Ok(left + right + delta / lit::<T>(15.0));
    }
    if depth == 0 {
        return Err(GeomError::QuadratureFail(format!(
            "no convergence on [{}, {}]",
            a.as_f64(),
            b.as_f64()
        )));
    }
    Ok(simpson_rec(f, a, m, fa, flm, fm, left, tol * half, depth - 1)?
        + simpson_rec(f, m, b, fm, frm, fb, right, tol * half, depth - 1)?)
}

impl<T: Real> ConformalChart<T> {
    /// Builds the chart of `kind` on `imm` with the immersion's usual normal
    /// (for `ConformalII` the normal making `II` positive is used instead).
    pub fn build(space: &AmbientSpace<T>, imm: &Immersion<T>, kind: ChartKind) -> Result<Self> {
        Self::build_oriented(space, imm, kind, None)
    }

    pub fn build_oriented(
        space: &AmbientSpace<T>,
        imm: &Immersion<T>,
        kind: ChartKind,
        orientation: Option<Orientation<T>>,
    ) -> Result<Self> {
        let (meridian, [a, b]) = meridian_of(imm)?;
        if !(a < b) {
            return Err(GeomError::BadInput("empty meridian range".into()));
        }
        let mid = (a + b) / lit::<T>(2.0);
        let jet = rot_jet(&meridian, mid, T::zero());
        let raw = fundamental_data(space, &jet, Orientation::Parametric { flip: false })?;
        let flip = match kind {
            ChartKind::ConformalII => raw.second[1][1] < T::zero(),
            ChartKind::IsothermalI => {
                let o = orientation.unwrap_or(match &imm.kind {
                    SurfaceKind::Slice { .. } => Orientation::Up,
                    SurfaceKind::Rotational(_) => Orientation::Parametric { flip: true },
                    _ => {
                        let c = meridian.eval(mid);
                        Orientation::Seed([-(c.t[0] - sphere_centre(&meridian)), -c.rho[0], T::zero()])
                    }
                });
                let chosen = fundamental_data(space, &jet, o)?;
                let dot: T = (0..3).map(|k| raw.normal[k] * chosen.normal[k]).sum();
                dot < T::zero()
            }
        };
        let mut chart = Self {
            kind,
            space: *space,
            meridian,
            flip,
            sigma: Vec::new(),
            s: Vec::new(),
        };
        let n = KNOTS;
        let mut sigma = Vec::with_capacity(n);
        let mut min_ke = T::infinity();
        for i in 0..n {
            let x = a + (b - a) * lit::<T>(i as f64 / (n - 1) as f64);
            let fd = chart.meridian_data(x)?;
            min_ke = min_ke.min(fd.extrinsic);
            sigma.push(x);
        }
        if kind == ChartKind::ConformalII && !(min_ke > T::zero()) {
            return Err(GeomError::NotPositivelyCurved(min_ke.as_f64()));
        }
        let inv_w = |x: T| chart.scale(x).map(|w| w.recip());
        let mut s = vec![T::zero(); n];
        for i in 1..n {
            s[i] = s[i - 1] + simpson(&inv_w, sigma[i - 1], sigma[i])?;
        }
        chart.sigma = sigma;
        chart.s = s;
        Ok(chart)
    }

    fn orientation(&self) -> Orientation<T> {
        Orientation::Parametric { flip: self.flip }
    }

    pub fn space(&self) -> &AmbientSpace<T> {
        &self.space
    }

    /// Meridian parameter range covered by the chart.
    pub fn sigma_range(&self) -> [T; 2] {
        [self.sigma[0], self.sigma[self.sigma.len() - 1]]
    }

    fn meridian_data(&self, sigma: T) -> Result<FundamentalData<T>> {
        fundamental_data(
            &self.space,
            &rot_jet(&self.meridian, sigma, T::zero()),
            self.orientation(),
        )
    }

    /// `d sigma / d s` at meridian parameter `sigma`.
    pub fn scale(&self, sigma: T) -> Result<T> {
        let fd = self.meridian_data(sigma)?;
        let ratio = match self.kind {
            ChartKind::IsothermalI => fd.first[1][1] / fd.first[0][0],
            ChartKind::ConformalII => {
                if !(fd.second[0][0] > T::zero() && fd.second[1][1] > T::zero()) {
                    return Err(GeomError::NotPositivelyCurved(fd.extrinsic.as_f64()));
                }
                fd.second[1][1] / fd.second[0][0]
            }
        };
        if !(ratio > T::zero()) || !ratio.is_finite() {
            return Err(GeomError::DegenerateJet(ratio.as_f64()));
        }
        Ok(ratio.sqrt())
    }

    fn scale_derivative(&self, sigma: T) -> Result<T> {
        let h = lit::<T>(DW_STEP);
        let w = |k: f64| self.scale(sigma + h * lit::<T>(k));
        Ok((w(-2.0)? - lit::<T>(8.0) * w(-1.0)? + lit::<T>(8.0) * w(1.0)? - w(2.0)?) / (lit::<T>(12.0) * h))
    }

    /// Chart coordinate `s` of meridian parameter `sigma`.
    pub fn s_of_sigma(&self, sigma: T) -> Result<T> {
        let i = self
            .sigma
            .partition_point(|&x| x <= sigma)
            .clamp(1, self.sigma.len() - 1)
            - 1;
        let inv_w = |x: T| self.scale(x).map(|w| w.recip());
        if sigma == self.sigma[i] {
            return Ok(self.s[i]);
        }
        Ok(self.s[i] + simpson(&inv_w, self.sigma[i], sigma)?)
    }

    /// Inverse of [`Self::s_of_sigma`] by bracketing and Newton iteration.
    pub fn sigma_of_s(&self, s: T) -> Result<T> {
        let i = self.s.partition_point(|&x| x <= s).clamp(1, self.s.len() - 1) - 1;
        let (s0, s1) = (self.s[i], self.s[i + 1]);
        let mut x = self.sigma[i] + (self.sigma[i + 1] - self.sigma[i]) * (s - s0) / (s1 - s0);
        for _ in 0..50 {
            let step = (self.s_of_sigma(x)? - s) * self.scale(x)?;
            x -= step;
            if step.abs() <= lit::<T>(1e-14) * (T::one() + x.abs()) {
                return Ok(x);
            }
        }
        Err(GeomError::QuadratureFail(format!(
            "inverse chart map did not converge at s = {}",
            s.as_f64()
        )))
    }

    /// Meridian parameter reached from `sigma` after moving `ds` in the chart coordinate.
    pub fn flow(&self, sigma: T, ds: T) -> Result<T> {
        let n = FLOW_SUBSTEPS;
        let h = ds / lit::<T>(n as f64);
        let half = lit::<T>(0.5);
        let mut x = sigma;
        for _ in 0..n {
            let k1 = self.scale(x)?;
            let k2 = self.scale(x + half * h * k1)?;
            let k3 = self.scale(x + half * h * k2)?;
            let k4 = self.scale(x + h * k3)?;
            x += h / lit::<T>(6.0) * (k1 + lit::<T>(2.0) * (k2 + k3) + k4);
        }
        Ok(x)
    }

    /// Jet of the parametrization in chart coordinates `(s, theta)`, at meridian parameter `sigma`.
    pub fn jet(&self, sigma: T, theta: T) -> Result<ImmersionJet<T>> {
        let j = rot_jet(&self.meridian, sigma, theta);
        let w = self.scale(sigma)?;
        let dw = self.scale_derivative(sigma)?;
        let ddsigma = dw * w;
        let mut out = j;
        for k in 0..3 {
            out.d1[0][k] = j.d1[0][k] * w;
            out.d2[0][k] = j.d2[0][k] * w * w + j.d1[0][k] * ddsigma;
            out.d2[1][k] = j.d2[1][k] * w;
        }
        Ok(out)
    }

    /// Fundamental data in chart coordinates.
    pub fn data(&self, sigma: T, theta: T) -> Result<(ImmersionJet<T>, FundamentalData<T>, ComplexFundData<T>)> {
        let jet = self.jet(sigma, theta)?;
        let fd = fundamental_data(&self.space, &jet, self.orientation())?;
        let cfd = complexify(&fd, &jet);
        Ok((jet, fd, cfd))
    }

    /// Relative defect of the chart's conformality: `|E| / F` or `|p| / rho`.
    pub fn conformality_defect(&self, sigma: T, theta: T) -> Result<T> {
        let (_, _, c) = self.data(sigma, theta)?;
        Ok(match self.kind {
            ChartKind::IsothermalI => c.e.norm() / c.f,
            ChartKind::ConformalII => c.p.norm() / c.rho,
        })
    }

    /// Christoffels of `I` in the basis `(d_z, d_zbar)`:
    /// `[G^1_11, G^2_11, G^1_12, G^2_12, G^1_22, G^2_22]`.
    pub fn complex_christoffels(&self, sigma: T, theta: T) -> Result<[Complex<T>; 6]> {
        let jet = self.jet(sigma, theta)?;
        let fd = fundamental_data(&self.space, &jet, self.orientation())?;
        let g = surface_christoffels(&self.space, &jet, &fd.first)?;
        Ok(complex_christoffels_from_real(&g))
    }
}

fn sphere_centre<T: Real>(m: &Meridian<T>) -> T {
    match m {
        Meridian::Sphere { t0, .. } => *t0,
        _ => T::zero(),
    }
}

/// Converts real Christoffels `g[k][i][j]` in `(s, theta)` to the complex frame.
pub fn complex_christoffels_from_real<T: Real>(g: &[[[T; 2]; 2]; 2]) -> [Complex<T>; 6] {
    let q = lit::<T>(0.25);
    let i = Complex::new(T::zero(), T::one());
    // D_{d_z} d_z = (D_ss - D_tt - 2i D_st) / 4, D_{d_z} d_zbar = (D_ss + D_tt) / 4.
    let v: Vec<Complex<T>> = (0..2)
        .map(|k| Complex::new(q * (g[k][0][0] - g[k][1][1]), -q * lit::<T>(2.0) * g[k][0][1]))
        .collect();
    let w: Vec<T> = (0..2).map(|k| q * (g[k][0][0] + g[k][1][1])).collect();
    let to_z = |a: Complex<T>, b: Complex<T>| (a + i * b, a - i * b);
    let (g111, g211) = to_z(v[0], v[1]);
    let (g112, g212) = to_z(Complex::new(w[0], T::zero()), Complex::new(w[1], T::zero()));
    let (g122, g222) = to_z(v[0].conj(), v[1].conj());
    [g111, g211, g112, g212, g122, g222]
}

// Packed real fields differentiated in chart coordinates.
const H: usize = 0;
const NU: usize = 1;
const RHO: usize = 2;
const KE: usize = 3;
const DD: usize = 4;
const MEAN: usize = 5;
const ALPHA: usize = 6;
const P: usize = 8;
const EF_NU: usize = 10;
const NF: usize = 11;

fn pack<T: Real>(space: &AmbientSpace<T>, fd: &FundamentalData<T>, c: &ComplexFundData<T>) -> [T; NF] {
    let mut out = [T::zero(); NF];
    out[H] = fd.height;
    out[NU] = fd.nu;
    out[RHO] = c.rho;
    out[KE] = fd.extrinsic;
    out[DD] = c.d;
    out[MEAN] = fd.mean;
    out[ALPHA] = c.alpha.re;
    out[ALPHA + 1] = c.alpha.im;
    out[P] = c.p.re;
    out[P + 1] = c.p.im;
    out[EF_NU] = space.warp.eval(fd.height).exp() * fd.nu;
    out
}

/// Differencing and tolerance knobs for the lemma checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalOptions<T> {
    pub scheme: FdScheme<T>,
    /// Relative spread below which `K_e` or `H` counts as constant.
    pub constancy_tol: f64,
}

impl<T: Real> Default for ConformalOptions<T> {
    fn default() -> Self {
        Self {
            scheme: FdScheme::new(lit(1e-3), true),
            constancy_tol: 1e-6,
        }
    }
}

/// Fields and their chart derivatives at one point.
#[derive(Debug, Clone)]
pub struct ChartSample<T> {
    pub fd: FundamentalData<T>,
    pub cfd: ComplexFundData<T>,
    pub gamma: [Complex<T>; 6],
    /// `f, f', f'', kappa e^{-2f}` at the point's height.
    pub warp: [T; 4],
    base: [T; NF],
    ds: [T; NF],
    dt: [T; NF],
    dss: [T; NF],
    dtt: [T; NF],
    dst: [T; NF],
}

impl<T: Real> ChartSample<T> {
    pub fn at(chart: &ConformalChart<T>, sigma: T, theta: T, scheme: FdScheme<T>) -> Result<Self> {
        let (jet, fd, cfd) = chart.data(sigma, theta)?;
        let g = surface_christoffels(&chart.space, &jet, &fd.first)?;
        let field = |ds: T, dt: T| -> Result<[T; NF]> {
            let x = if ds == T::zero() { sigma } else { chart.flow(sigma, ds)? };
            let (_, f, c) = chart.data(x, theta + dt)?;
            Ok(pack(&chart.space, &f, &c))
        };
        let warp = &chart.space.warp;
        let t = fd.height;
        Ok(Self {
            gamma: complex_christoffels_from_real(&g),
            warp: [warp.eval(t), warp.d1(t), warp.d2(t), chart.space.kappa_term(t)],
            ds: d1(scheme, |h| field(h, T::zero()))?,
            dt: d1(scheme, |h| field(T::zero(), h))?,
            dss: d2(scheme, |h| field(h, T::zero()))?,
            dtt: d2(scheme, |h| field(T::zero(), h))?,
            dst: d11(scheme, field)?,
            base: pack(&chart.space, &fd, &cfd),
            fd,
            cfd,
        })
    }

    fn pair(a: &[T; NF], idx: usize, complex: bool) -> Complex<T> {
        Complex::new(a[idx], if complex { a[idx + 1] } else { T::zero() })
    }

    /// `d_z` of a packed field (complex fields occupy two slots).
    fn dz(&self, idx: usize, complex: bool) -> Complex<T> {
        let i = Complex::new(T::zero(), T::one());
        (Self::pair(&self.ds, idx, complex) - i * Self::pair(&self.dt, idx, complex)) * lit::<T>(0.5)
    }

    fn dzbar(&self, idx: usize, complex: bool) -> Complex<T> {
        let i = Complex::new(T::zero(), T::one());
        (Self::pair(&self.ds, idx, complex) + i * Self::pair(&self.dt, idx, complex)) * lit::<T>(0.5)
    }

    fn dzzbar(&self, idx: usize) -> T {
        (self.dss[idx] + self.dtt[idx]) * lit::<T>(0.25)
    }

    fn dzz(&self, idx: usize) -> Complex<T> {
        Complex::new(self.dss[idx] - self.dtt[idx], -lit::<T>(2.0) * self.dst[idx]) * lit::<T>(0.25)
    }

    fn c(&self) -> T {
        self.warp[2] + self.warp[3]
    }

    /// Residuals of the identities in an `II`-conformal chart (`e10`..`e15`, the
    /// Christoffel trace `e12.2`, and the proof-line variant `e13.proof`).
    pub fn lemma32(&self) -> Vec<(&'static str, T)> {
        let fp = self.warp[1];
        let fpp = self.warp[2];
        let c = self.c();
        let k = &self.cfd;
        let (rho, d, f_, e) = (k.rho, k.d, k.f, k.e);
        let nu = self.fd.nu;
        let ke = self.fd.extrinsic;
        let alpha = k.alpha;
        let hz = k.hz;
        let hzb = hz.conj();
        let [g111, g211, g112, _g212, _g122, g222] = self.gamma;
        let ke_z = self.dz(KE, false);
        let ke_zb = self.dzbar(KE, false);
        let nu_z = self.dz(NU, false);
        let hzz = self.dzz(H);
        let hzzb = self.dzzbar(H);
        let four = lit::<T>(4.0);
        let two = lit::<T>(2.0);
        let quarter_ke = (four * ke).recip();

        let e10 = self.dzbar(RHO, false) / rho + g112 - g222 - alpha * (nu * c / rho);
        let e11 = nu_z - (alpha.conj() * (ke / rho) - hz * (fp * nu));
        let e12 = g112 - (-ke_zb * quarter_ke + alpha * (nu * c / (two * rho)));
        let e12_1 = hzz - (g111 * hz + g211 * hzb + e * fp - hz * hz * fp);
        let e12_2 = g112 + g222 - self.dzbar(DD, false) / (two * d);
        let mixed =
            rho * nu * (T::one() - c * (T::one() - nu * nu) / (two * ke)) - ((ke_zb * hz + ke_z * hzb) * quarter_ke).re;
        let e13 = hzzb - (mixed - fp * (f_ - hz.norm_sqr()));
        let e13_proof = hzzb - (mixed + fp * (f_ - hz.norm_sqr()));
        let e14 = self.dz(ALPHA, true)
            - (alpha * self.dz(DD, false) / (two * d) + (alpha.conj() * ke_zb - alpha * ke_z) * quarter_ke
                - Complex::new(rho * f_ * nu, T::zero())
                - (alpha * hz - d) * fp);
        let e15 = Complex::new(self.dzzbar(NU), T::zero())
            - ((alpha.conj() * ke_zb + alpha * ke_z) / (four * rho)
                - Complex::new(ke * f_ * nu, T::zero())
                - (alpha * hz - d) * (ke * fp / rho)
                - (nu_z * hzb + hzzb * nu) * fp
                - Complex::new(fpp * nu * hz.norm_sqr(), T::zero()));
        vec![
            ("e10", e10.norm()),
            ("e11", e11.norm()),
            ("e12", e12.norm()),
            ("e12.1", e12_1.norm()),
            ("e12.2", e12_2.norm()),
            ("e13", e13.abs()),
            ("e13.proof", e13_proof.abs()),
            ("e14", e14.norm()),
            ("e15", e15.norm()),
        ]
    }

    /// Residuals of the identities in an `I`-isothermal chart (`he4`..`he8`).
    pub fn lemma33(&self) -> Vec<(&'static str, T)> {
        let fp = self.warp[1];
        let fpp = self.warp[2];
        let c = self.c();
        let k = &self.cfd;
        let lambda = lit::<T>(2.0) * k.f;
        let half_l = lambda / lit::<T>(2.0);
        let nu = self.fd.nu;
        let mean = self.fd.mean;
        let p = k.p;
        let hz = k.hz;
        let hzb = hz.conj();
        let h_z = self.dz(MEAN, false);
        let h_zb = self.dzbar(MEAN, false);
        let nu_z = self.dz(NU, false);
        let nu_zb = self.dzbar(NU, false);
        let hzzb = self.dzzbar(H);
        let two_p_l = p * (lit::<T>(2.0) / lambda);

        let he4 = self.dzbar(P, true) - h_z * half_l - hz * (half_l * c * nu);
        let he5 = self.fd.tangent_norm_sq() - lit::<T>(4.0) / lambda * hz.norm_sqr();
        let he6 = nu_z + hz * mean + two_p_l * hzb + hz * (fp * nu);
        let he7 = hzzb - (nu * half_l * mean + fp * (half_l - hz.norm_sqr()));
        let bracket =
            c * (T::one() - nu * nu) + lit::<T>(8.0) * p.norm_sqr() / (lambda * lambda) + lit::<T>(2.0) * mean * mean;
        let he8 = Complex::new(self.dzzbar(NU), T::zero())
            - (-(h_zb * hz + h_z * hzb) - Complex::new(lambda * nu / lit::<T>(4.0) * bracket, T::zero())
                + (two_p_l * hzb * hzb
                    - Complex::new(mean * (half_l - hz.norm_sqr()), T::zero())
                    - (nu_zb * hz + hzzb * nu))
                    * fp
                - Complex::new(fpp * nu * hz.norm_sqr(), T::zero()));
        vec![
            ("he4", he4.norm()),
            ("he5", he5.abs()),
            ("he6", he6.norm()),
            ("he7", he7.abs()),
            ("he8", he8.norm()),
        ]
    }

    /// `(lhs, rhs)` of the Laplacian formula for `e^f nu / sqrt(K_e)` with `K_e = ke0`.
    pub fn aux_ke(&self, ke0: T) -> (T, T) {
        let k = &self.cfd;
        let [f, fp, _, _] = self.warp;
        let root = ke0.sqrt();
        let lhs = self.dzzbar(EF_NU) / root;
        let rhs = f.exp() / root * (-ke0 * k.f * self.fd.nu + ke0 * fp * k.d / k.rho);
        (lhs, rhs)
    }

    /// `(lhs, rhs)` of the Laplacian formula for `e^f nu / H` with `H = h0`.
    pub fn aux_h(&self, h0: T) -> (T, T) {
        let k = &self.cfd;
        let [f, fp, fpp, _] = self.warp;
        let lambda = lit::<T>(2.0) * k.f;
        let nu = self.fd.nu;
        let lhs = self.dzzbar(EF_NU) / h0;
        let bracket =
            fpp * (T::one() - nu * nu) + lit::<T>(8.0) * k.p.norm_sqr() / (lambda * lambda) + lit::<T>(2.0) * h0 * h0;
        let rhs = f.exp() / h0 * (-lambda * nu / lit::<T>(4.0) * bracket - fp * h0 * lambda / lit::<T>(2.0));
        (lhs, rhs)
    }

    /// `(h_{z zbar}, f' lambda (1 + nu^2) / 4)`.
    pub fn minimal(&self) -> (T, T) {
        let lambda = lit::<T>(2.0) * self.cfd.f;
        let nu = self.fd.nu;
        (
            self.dzzbar(H),
            self.warp[1] * lambda * (T::one() + nu * nu) / lit::<T>(4.0),
        )
    }

    /// `d_z d_zbar (h + scale * e^f nu)`.
    pub fn height_plus_g_zzbar(&self, scale: T) -> T {
        self.dzzbar(H) + scale * self.dzzbar(EF_NU)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaStat {
    pub max: f64,
    pub mean: f64,
    pub points: usize,
}

/// Per-equation residual maxima over a chart grid, keyed by equation label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LemmaResiduals {
    pub chart: ChartKind,
    pub equations: BTreeMap<String, LemmaStat>,
    /// Largest variation of the pointwise fields (h, nu, rho, ...) around a parallel.
    pub theta_spread: f64,
    pub step: f64,
}

impl LemmaResiduals {
    pub fn max(&self, eq: &str) -> f64 {
        self.equations.get(eq).map_or(f64::INFINITY, |s| s.max)
    }

    fn from_rows<T: Real>(
        chart: ChartKind,
        step: f64,
        rows: &[Vec<(&'static str, f64)>],
        samples: &[ChartSample<T>],
        n_theta: usize,
    ) -> Self {
        let mut equations: BTreeMap<String, LemmaStat> = BTreeMap::new();
        for row in rows {
            for &(eq, v) in row {
                let v = if v.is_nan() { f64::INFINITY } else { v.abs() };
                let e = equations.entry(eq.to_string()).or_insert(LemmaStat {
                    max: 0.0,
                    mean: 0.0,
                    points: 0,
                });
                e.mean = (e.mean * e.points as f64 + v) / (e.points + 1) as f64;
                e.points += 1;
                e.max = e.max.max(v);
            }
        }
        Self {
            chart,
            equations,
            theta_spread: theta_spread(samples, n_theta),
            step,
        }
    }
}

/// Largest variation of the pointwise fields around each parallel of the grid.
fn theta_spread<T: Real>(samples: &[ChartSample<T>], n_theta: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for ring in samples.chunks(n_theta.max(1)) {
        for k in 0..NF {
            let vals = ring.iter().map(|s| s.base[k].as_f64());
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            worst = worst.max(hi - lo);
        }
    }
    worst
}

fn grid_points<T: Real>(chart: &ConformalChart<T>, grid: &GridSpec) -> Vec<(T, T)> {
    let [a, b] = chart.sigma_range();
    grid.points(&[[a, b], [-T::PI(), T::PI()]])
}

fn require<T: Real>(chart: &ConformalChart<T>, kind: ChartKind) -> Result<()> {
    if chart.kind != kind {
        return Err(GeomError::BadInput(format!("{kind:?} chart required")));
    }
    Ok(())
}

fn sample_grid<T: Real>(
    chart: &ConformalChart<T>,
    grid: &GridSpec,
    opts: &ConformalOptions<T>,
) -> Result<Vec<ChartSample<T>>> {
    grid_points(chart, grid)
        .par_iter()
        .map(|&(s, t)| ChartSample::at(chart, s, t, opts.scheme))
        .collect()
}

fn to_f64(row: Vec<(&'static str, impl Real)>) -> Vec<(&'static str, f64)> {
    row.into_iter().map(|(k, v)| (k, v.as_f64())).collect()
}

/// Residuals of `e10`..`e15` over `grid` on an `II`-conformal chart.
pub fn check_lemma32<T: Real>(
    chart: &ConformalChart<T>,
    grid: &GridSpec,
    opts: &ConformalOptions<T>,
) -> Result<LemmaResiduals> {
    require(chart, ChartKind::ConformalII)?;
    let samples = sample_grid(chart, grid, opts)?;
    let rows: Vec<_> = samples.iter().map(|s| to_f64(s.lemma32())).collect();
    Ok(LemmaResiduals::from_rows(
        chart.kind,
        opts.scheme.step.as_f64(),
        &rows,
        &samples,
        grid.nv,
    ))
}

/// Residuals of `he4`..`he8` over `grid` on an `I`-isothermal chart.
pub fn check_lemma33<T: Real>(
    chart: &ConformalChart<T>,
    grid: &GridSpec,
    opts: &ConformalOptions<T>,
) -> Result<LemmaResiduals> {
    require(chart, ChartKind::IsothermalI)?;
    let samples = sample_grid(chart, grid, opts)?;
    let rows: Vec<_> = samples.iter().map(|s| to_f64(s.lemma33())).collect();
    Ok(LemmaResiduals::from_rows(
        chart.kind,
        opts.scheme.step.as_f64(),
        &rows,
        &samples,
        grid.nv,
    ))
}

fn constant_value<T: Real>(vals: impl Iterator<Item = T>, tol: f64) -> std::result::Result<T, f64> {
    let v: Vec<f64> = vals.map(|x| x.as_f64()).collect();
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let spread = (hi - lo) / mean.abs();
    if spread <= tol && mean.is_finite() {
        Ok(lit(mean))
    } else {
        Err(spread)
    }
}

/// Outcome of the auxiliary Laplacian checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuxCheck {
    pub residuals: LemmaResiduals,
    /// The constant `K_e` or `H` used.
    pub constant: f64,
    /// Smallest `Delta (h + g(nu))` over the grid.
    pub min_laplacian: f64,
}

/// Laplacian formula for `e^f nu / sqrt(K_e)` on a constant-`K_e` surface (`eq16g`).
pub fn check_aux_ke<T: Real>(
    chart: &ConformalChart<T>,
    grid: &GridSpec,
    opts: &ConformalOptions<T>,
) -> Result<AuxCheck> {
    require(chart, ChartKind::ConformalII)?;
    let samples = sample_grid(chart, grid, opts)?;
    let ke0 =
        constant_value(samples.iter().map(|s| s.fd.extrinsic), opts.constancy_tol).map_err(GeomError::NotConstantKe)?;
    let rows: Vec<_> = samples
        .iter()
        .map(|s| {
            let (l, r) = s.aux_ke(ke0);
            vec![("eq16g", (l - r).abs().as_f64())]
        })
        .collect();
    // Delta_II = (2 / rho) d_z d_zbar.
    let lap = samples
        .iter()
        .map(|s| (lit::<T>(2.0) / s.cfd.rho * s.height_plus_g_zzbar(ke0.sqrt().recip())).as_f64())
        .fold(f64::INFINITY, f64::min);
    Ok(AuxCheck {
        residuals: LemmaResiduals::from_rows(chart.kind, opts.scheme.step.as_f64(), &rows, &samples, grid.nv),
        constant: ke0.as_f64(),
        min_laplacian: lap,
    })
}

/// Laplacian formula for `e^f nu / H` on a constant-`H` surface (`eqle2`).
pub fn check_aux_h<T: Real>(
    chart: &ConformalChart<T>,
    grid: &GridSpec,
    opts: &ConformalOptions<T>,
) -> Result<AuxCheck> {
    require(chart, ChartKind::IsothermalI)?;
    let samples = sample_grid(chart, grid, opts)?;
    let h0 = constant_value(samples.iter().map(|s| s.fd.mean), opts.constancy_tol).map_err(GeomError::NotConstantH)?;
    let rows: Vec<_> = samples
        .iter()
        .map(|s| {
            let (l, r) = s.aux_h(h0);
            vec![("eqle2", (l - r).abs().as_f64())]
        })
        .collect();
    // Delta_I = (4 / lambda) d_z d_zbar = (2 / F) d_z d_zbar.
    let lap = samples
        .iter()
        .map(|s| (lit::<T>(2.0) / s.cfd.f * s.height_plus_g_zzbar(h0.recip())).as_f64())
        .fold(f64::INFINITY, f64::min);
    Ok(AuxCheck {
        residuals: LemmaResiduals::from_rows(chart.kind, opts.scheme.step.as_f64(), &rows, &samples, grid.nv),
        constant: h0.as_f64(),
        min_laplacian: lap,
    })
}

const MINIMAL_TOL: f64 = 1e-8;

/// `h_{z zbar} = f' lambda (1 + nu^2) / 4` on a minimal surface.
pub fn check_minimal<T: Real>(
    chart: &ConformalChart<T>,
    grid: &GridSpec,
    opts: &ConformalOptions<T>,
) -> Result<LemmaResiduals> {
    require(chart, ChartKind::IsothermalI)?;
    let samples = sample_grid(chart, grid, opts)?;
    let worst = samples.iter().map(|s| s.fd.mean.abs().as_f64()).fold(0.0, f64::max);
    if worst > MINIMAL_TOL {
        return Err(GeomError::NotMinimal(worst));
    }
    let rows: Vec<_> = samples
        .iter()
        .map(|s| {
            let (l, r) = s.minimal();
            vec![("minimalLaplacian", (l - r).abs().as_f64())]
        })
        .collect();
    Ok(LemmaResiduals::from_rows(
        chart.kind,
        opts.scheme.step.as_f64(),
        &rows,
        &samples,
        grid.nv,
    ))
}

/// Laplace-Beltrami of `u` for the metric field `g` at `(x, y)`, in divergence form
/// `(1 / sqrt g) d_i (sqrt g g^{ij} d_j u)` with nested centered differences of step `h`.
pub fn laplace_beltrami<T: Real>(g: &impl Fn(T, T) -> Mat2<T>, u: &impl Fn(T, T) -> T, x: T, y: T, h: T) -> Result<T> {
    let two_h = lit::<T>(2.0) * h;
    let flux = |a: T, b: T| -> Result<[T; 2]> {
        let m = g(a, b);
        let det = det2(&m);
        let inv = inv2(&m).ok_or(GeomError::DegenerateJet(det.as_f64()))?;
        if !(det > T::zero()) {
            return Err(GeomError::DegenerateJet(det.as_f64()));
        }
        let grad = [(u(a + h, b) - u(a - h, b)) / two_h, (u(a, b + h) - u(a, b - h)) / two_h];
        let v = mat2_vec(&inv, grad);
        Ok([det.sqrt() * v[0], det.sqrt() * v[1]])
    };
    let div = (flux(x + h, y)?[0] - flux(x - h, y)?[0]) / two_h + (flux(x, y + h)?[1] - flux(x, y - h)?[1]) / two_h;
    Ok(div / det2(&g(x, y)).sqrt())
}

/// `(Delta_{c g} u, Delta_g u / c)` at `(x, y)`.
pub fn laplacian_scaling<T: Real>(
    g: &impl Fn(T, T) -> Mat2<T>,
    c: T,
    u: &impl Fn(T, T) -> T,
    x: T,
    y: T,
    h: T,
) -> Result<(T, T)> {
    if !(c > T::zero()) || !c.is_finite() {
        return Err(GeomError::BadScale(c.as_f64()));
    }
    let scaled = |a: T, b: T| {
        let m = g(a, b);
        [[c * m[0][0], c * m[0][1]], [c * m[1][0], c * m[1][1]]]
    };
    let lhs = laplace_beltrami(&scaled, u, x, y, h)?;
    let rhs = laplace_beltrami(g, u, x, y, h)? / c;
    Ok((lhs, rhs))
}
