//! Pointwise residuals of the Gauss, Codazzi and tangent-field structure equations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientSpace;
use crate::error::Result;
use crate::fd::{d1, FdScheme};
use crate::fundforms::{fundamental_data, surface_christoffels, FundamentalData};
use crate::immersion::{Immersion, JetMode, Orientation};
use crate::linalg::{quad2, Mat2};
use crate::report::ResidualSet;
use crate::scalar::{lit, Real};

const OUTER_PER_JET_STEP: f64 = 100.0;
const OUTER_STEP_EXACT: f64 = 1e-3;

/// Differencing used for derivatives of the surface fields (Christoffels, `S`, `T`, `nu`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatOptions<T> {
    pub scheme: FdScheme<T>,
    /// Normal rule; defaults to the immersion's own convention at the base point.
    pub orientation: Option<Orientation<T>>,
}

impl<T: Real> CompatOptions<T> {
    /// Outer step tied to the jet step, Richardson on.
    pub fn for_immersion(imm: &Immersion<T>) -> Self {
        let step = match imm.jet_mode {
            JetMode::Exact => lit(OUTER_STEP_EXACT),
            JetMode::FiniteDifference(h) => h * lit::<T>(OUTER_PER_JET_STEP),
        };
        Self {
            scheme: FdScheme::new(step, true),
            orientation: None,
        }
    }
}

// Packed layout: Gamma^k_{00,01,11} for k = 0, 1; S row-major; T; nu.
const NF: usize = 13;

fn pack<T: Real>(fd: &FundamentalData<T>, gam: &[Mat2<T>; 2]) -> [T; NF] {
    let mut out = [T::zero(); NF];
    for k in 0..2 {
        out[3 * k] = gam[k][0][0];
        out[3 * k + 1] = gam[k][0][1];
        out[3 * k + 2] = gam[k][1][1];
    }
    out[6] = fd.shape[0][0];
    out[7] = fd.shape[0][1];
    out[8] = fd.shape[1][0];
    out[9] = fd.shape[1][1];
    out[10] = fd.tangent[0];
    out[11] = fd.tangent[1];
    out[12] = fd.nu;
    out
}

struct Unpacked<T> {
    gamma: [Mat2<T>; 2],
    shape: Mat2<T>,
    tangent: [T; 2],
    nu: T,
}

fn unpack<T: Real>(p: &[T; NF]) -> Unpacked<T> {
    let mut gamma = [[[T::zero(); 2]; 2]; 2];
    for k in 0..2 {
        gamma[k] = [[p[3 * k], p[3 * k + 1]], [p[3 * k + 1], p[3 * k + 2]]];
    }
    Unpacked {
        gamma,
        shape: [[p[6], p[7]], [p[8], p[9]]],
        tangent: [p[10], p[11]],
        nu: p[12],
    }
}

/// Everything the residuals need at one parameter point.
pub struct PointTerms<T> {
    pub fd: FundamentalData<T>,
    pub gamma: [Mat2<T>; 2],
    /// `d[a]` holds the `a`-th parameter derivative of the packed fields.
    d: [Unpacked<T>; 2],
    /// `f'`, `f''` and `kappa e^{-2f}` at the point's height.
    pub warp: [T; 3],
}

impl<T: Real> PointTerms<T> {
    pub fn at(space: &AmbientSpace<T>, imm: &Immersion<T>, u: T, v: T, opts: &CompatOptions<T>) -> Result<Self> {
        let orientation = opts.orientation.unwrap_or_else(|| imm.default_orientation(u, v));
        let jet = imm.jet_at(u, v)?;
        let fd = fundamental_data(space, &jet, orientation)?;
        let gamma = surface_christoffels(space, &jet, &fd.first)?;
        // Pin the normal to the parametric one with the base point's sign, so stencil
        // neighbours never resolve Up/Down or a seed differently.
        let raw = fundamental_data(space, &jet, Orientation::Parametric { flip: false })?;
        let pinned = Orientation::Parametric {
            flip: dot_normals(&raw, &fd) < T::zero(),
        };
        let neighbour = |uu: T, vv: T| -> Result<[T; NF]> {
            let jet = imm.jet_at(uu, vv)?;
            let fdn = fundamental_data(space, &jet, pinned)?;
            let gam = surface_christoffels(space, &jet, &fdn.first)?;
            Ok(pack(&fdn, &gam))
        };
        let du = d1(opts.scheme, |h| neighbour(u + h, v))?;
        let dv = d1(opts.scheme, |h| neighbour(u, v + h))?;
        let t = fd.height;
        let warp = [space.warp.d1(t), space.warp.d2(t), space.kappa_term(t)];
        Ok(Self {
            fd,
            gamma,
            d: [unpack(&du), unpack(&dv)],
            warp,
        })
    }

    fn first(&self, a: usize, b: usize) -> T {
        self.fd.first[a][b]
    }

    fn second(&self, a: usize, b: usize) -> T {
        self.fd.second[a][b]
    }

    fn h(&self, a: usize) -> T {
        self.fd.grad_h[a]
    }

    /// `R_{uvuv}` of the first form, from differentiated Christoffels.
    pub fn intrinsic_r0101(&self) -> T {
        let g = &self.gamma;
        let mut r_up = [T::zero(); 2];
        for (rho, r) in r_up.iter_mut().enumerate() {
            let mut acc = self.d[0].gamma[rho][1][1] - self.d[1].gamma[rho][0][1];
            for l in 0..2 {
                acc += g[rho][0][l] * g[l][1][1] - g[rho][1][l] * g[l][0][1];
            }
            *r = acc;
        }
        self.first(0, 0) * r_up[0] + self.first(0, 1) * r_up[1]
    }

    fn tcal(&self, x: usize, y: usize, z: usize, w: usize) -> T {
        self.first(x, z) * self.h(y) * self.h(w) - self.first(x, w) * self.h(y) * self.h(z)
    }

    /// Model right-hand side `R(X, Y, Z, W)` on frame indices.
    pub fn gauss_model(&self, x: usize, y: usize, z: usize, w: usize) -> T {
        let [fp, fpp, kt] = self.warp;
        let c1 = fp * fp - kt;
        let c2 = fpp + kt;
        c1 * (self.first(x, w) * self.first(y, z) - self.first(x, z) * self.first(y, w))
            - c2 * (self.tcal(x, y, z, w) - self.tcal(y, x, z, w))
    }

    /// `g(R(X,Y)Z,W) - II(X,Z) II(Y,W) + II(X,W) II(Y,Z)` on frame indices.
    pub fn gauss_surface(&self, x: usize, y: usize, z: usize, w: usize) -> T {
        let eps = |a: usize, b: usize| -> T {
            if a == b {
                T::zero()
            } else if a < b {
                T::one()
            } else {
                -T::one()
            }
        };
        self.intrinsic_r0101() * eps(x, y) * eps(z, w) - self.second(x, z) * self.second(y, w)
            + self.second(x, w) * self.second(y, z)
    }

    pub fn gauss_residual_frame(&self, x: usize, y: usize, z: usize, w: usize) -> T {
        (self.gauss_model(x, y, z, w) - self.gauss_surface(x, y, z, w)).abs()
    }

    /// Gauss residual on an `I`-orthonormal frame, i.e. the coordinate-frame value over `det I`.
    pub fn gauss_residual(&self) -> T {
        self.gauss_residual_frame(0, 1, 0, 1) / self.fd.det_first()
    }

    /// Codazzi residual with the model term as printed and with its sign reversed.
    pub fn codazzi_residuals(&self) -> (T, T) {
        let s = &self.fd.shape;
        let g = &self.gamma;
        let mut lhs = [T::zero(); 2];
        for (k, out) in lhs.iter_mut().enumerate() {
            let mut acc = self.d[0].shape[k][1] - self.d[1].shape[k][0];
            for l in 0..2 {
                acc += g[k][0][l] * s[l][1] - g[k][1][l] * s[l][0];
            }
            *out = acc;
        }
        let [_, fpp, kt] = self.warp;
        let c = self.fd.nu * (fpp + kt);
        // -nu c [g(X,T) Y - g(Y,T) X] with X = d_u, Y = d_v.
        let model = [c * self.h(1), -c * self.h(0)];
        let norm = |a: [T; 2]| quad2(&self.fd.first, a, a).sqrt();
        (
            norm([model[0] - lhs[0], model[1] - lhs[1]]),
            norm([-model[0] - lhs[0], -model[1] - lhs[1]]),
        )
    }

    /// `(eq35, eq33, eq34)` residuals.
    pub fn structure_residuals(&self) -> (T, T, T) {
        let fd = &self.fd;
        let [fp, _, _] = self.warp;
        let tan = fd.tangent;
        let eq35 = (fd.tangent_norm_sq() + fd.nu * fd.nu - T::one()).abs();
        let mut eq33 = T::zero();
        let mut eq34 = T::zero();
        for j in 0..2 {
            let mut r = [T::zero(); 2];
            for (k, rk) in r.iter_mut().enumerate() {
                let mut cov = self.d[j].tangent[k];
                for l in 0..2 {
                    cov += self.gamma[k][j][l] * tan[l];
                }
                let delta = if j == k { T::one() } else { T::zero() };
                *rk = cov - fd.nu * fd.shape[k][j] - fp * (delta - fd.grad_h[j] * tan[k]);
            }
            eq33 = eq33.max(quad2(&fd.first, r, r).sqrt());
            let s_t = fd.second[j][0] * tan[0] + fd.second[j][1] * tan[1];
            let r34 = s_t + self.d[j].nu + fp * fd.nu * fd.grad_h[j];
            eq34 = eq34.max(r34.abs());
        }
        (eq35, eq33, eq34)
    }
}

fn dot_normals<T: Real>(a: &FundamentalData<T>, b: &FundamentalData<T>) -> T {
    // Same base point, so the Euclidean pairing has the sign of the metric pairing.
    a.normal[0] * b.normal[0] + a.normal[1] * b.normal[1] + a.normal[2] * b.normal[2]
}

pub fn gauss_residual<T: Real>(space: &AmbientSpace<T>, imm: &Immersion<T>, u: T, v: T) -> Result<T> {
    let t = PointTerms::at(space, imm, u, v, &CompatOptions::for_immersion(imm))?;
    Ok(t.gauss_residual())
}

pub fn codazzi_residual<T: Real>(space: &AmbientSpace<T>, imm: &Immersion<T>, u: T, v: T) -> Result<T> {
    let t = PointTerms::at(space, imm, u, v, &CompatOptions::for_immersion(imm))?;
    Ok(t.codazzi_residuals().0)
}

pub fn structure_residuals<T: Real>(space: &AmbientSpace<T>, imm: &Immersion<T>, u: T, v: T) -> Result<(T, T, T)> {
    let t = PointTerms::at(space, imm, u, v, &CompatOptions::for_immersion(imm))?;
    Ok(t.structure_residuals())
}

/// Uniform tensor grid over the immersion's parameter rectangle, shrunk by `inset` on each side
/// (as a fraction of the side length).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct GridSpec {
    pub nu: usize,
    pub nv: usize,
    #[serde(default = "default_inset")]
    pub inset: f64,
}

fn default_inset() -> f64 {
    0.1
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nu: 8,
            nv: 8,
            inset: default_inset(),
        }
    }
}

impl GridSpec {
    pub fn points<T: Real>(&self, domain: &[[T; 2]; 2]) -> Vec<(T, T)> {
        let axis = |lo: T, hi: T, n: usize| -> Vec<T> {
            let w = hi - lo;
            let a = lo + w * lit::<T>(self.inset);
            let b = hi - w * lit::<T>(self.inset);
            if n <= 1 {
                return vec![(a + b) / lit::<T>(2.0)];
            }
            (0..n)
                .map(|i| a + (b - a) * lit::<T>(i as f64 / (n - 1) as f64))
                .collect()
        };
        let us = axis(domain[0][0], domain[0][1], self.nu);
        let vs = axis(domain[1][0], domain[1][1], self.nv);
        us.iter().flat_map(|&u| vs.iter().map(move |&v| (u, v))).collect()
    }
}

/// Jet evaluation recorded in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "mode")]
pub enum JetModeTag {
    Exact,
    FiniteDifference { step: f64 },
}

impl<T: Real> From<JetMode<T>> for JetModeTag {
    fn from(m: JetMode<T>) -> Self {
        match m {
            JetMode::Exact => JetModeTag::Exact,
            JetMode::FiniteDifference(h) => JetModeTag::FiniteDifference { step: h.as_f64() },
        }
    }
}

pub const GAUSS: &str = "gauss";
pub const CODAZZI: &str = "codazzi";
pub const CODAZZI_FLIPPED: &str = "codazziFlipped";
pub const EQ35: &str = "eq35";
pub const EQ33: &str = "eq33";
pub const EQ34: &str = "eq34";

/// Residual summary of all compatibility equations over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompatReport {
    pub residuals: ResidualSet,
    pub grid: GridSpec,
    pub jet_mode: JetModeTag,
    /// Which sign of the Codazzi model term fits the data better.
    pub codazzi_sign: CodazziSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CodazziSign {
    Printed,
    Flipped,
    /// Both residuals agree to within noise, e.g. whenever the model term vanishes.
    Indistinct,
}

impl CompatReport {
    pub fn max(&self, eq: &str) -> f64 {
        self.residuals.get(eq).map_or(f64::INFINITY, |s| s.max)
    }

    /// Equations checked against tolerances (the flipped Codazzi form is informational).
    pub fn checked(&self) -> impl Iterator<Item = &crate::report::ResidualStat> {
        self.residuals.stats.iter().filter(|s| s.eq != CODAZZI_FLIPPED)
    }
}

/// Residuals of every compatibility equation at the given parameter points.
pub fn sample_residuals<T: Real>(
    space: &AmbientSpace<T>,
    imm: &Immersion<T>,
    pts: &[(T, T)],
    opts: &CompatOptions<T>,
) -> Result<ResidualSet> {
    let rows: Vec<Result<[f64; 6]>> = pts
        .par_iter()
        .map(|&(u, v)| {
            let t = PointTerms::at(space, imm, u, v, opts)?;
            let (c, cf) = t.codazzi_residuals();
            let (e35, e33, e34) = t.structure_residuals();
            Ok([t.gauss_residual(), c, cf, e35, e33, e34].map(|x| x.as_f64()))
        })
        .collect();
    let mut residuals = ResidualSet::new();
    for row in rows {
        let row = row?;
        for (name, val) in [GAUSS, CODAZZI, CODAZZI_FLIPPED, EQ35, EQ33, EQ34].iter().zip(row) {
            residuals.push(name, val);
        }
    }
    Ok(residuals)
}

impl CodazziSign {
    pub fn classify(residuals: &ResidualSet) -> Self {
        let printed = residuals.max(CODAZZI).unwrap_or(f64::INFINITY);
        let flipped = residuals.max(CODAZZI_FLIPPED).unwrap_or(f64::INFINITY);
        if printed < 0.1 * flipped {
            CodazziSign::Printed
        } else if flipped < 0.1 * printed {
            CodazziSign::Flipped
        } else {
            CodazziSign::Indistinct
        }
    }
}

pub fn evaluate_grid<T: Real>(
    space: &AmbientSpace<T>,
    imm: &Immersion<T>,
    grid: GridSpec,
    opts: &CompatOptions<T>,
) -> Result<CompatReport> {
    let residuals = sample_residuals(space, imm, &grid.points(&imm.domain), opts)?;
    Ok(CompatReport {
        codazzi_sign: CodazziSign::classify(&residuals),
        residuals,
        grid,
        jet_mode: imm.jet_mode.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::WarpFn;
    use crate::immersion::GraphProfile;

    fn warps() -> Vec<WarpFn<f64>> {
        vec![
            WarpFn::Const { c: 0.3 },
            WarpFn::Affine { a: 0.4, b: 0.1 },
            WarpFn::ExpScaled { a: 1.0, b: -1.0 },
        ]
    }

    fn cap() -> Immersion<f64> {
        Immersion::rot_graph(GraphProfile::Polynomial(vec![1.0, 0.0, -1.0]), 0.2, 0.8)
    }

    fn spaces() -> Vec<AmbientSpace<f64>> {
        [-1, 0, 1]
            .into_iter()
            .flat_map(|k| warps().into_iter().map(move |w| AmbientSpace::new(k, w).unwrap()))
            .collect()
    }

    fn assert_clean(space: &AmbientSpace<f64>, imm: &Immersion<f64>, tol: f64) {
        let r = evaluate_grid(space, imm, GridSpec::default(), &CompatOptions::for_immersion(imm)).unwrap();
        for s in r.checked() {
            assert!(s.max <= tol, "{} = {:e} on {:?} / {:?}", s.eq, s.max, space, imm.kind);
        }
    }

    #[test]
    fn catalog_residuals_vanish() {
        let fdj = JetMode::FiniteDifference(1e-4);
        for space in spaces() {
            for imm in [cap(), Immersion::cylinder(0.5)] {
                assert_clean(&space, &imm, 1e-6);
                assert_clean(&space, &imm.clone().with_jet_mode(fdj), 1e-4);
            }
        }
        for kappa in [-1, 0, 1] {
            let space = AmbientSpace::new(kappa, WarpFn::Const { c: 0.3 }).unwrap();
            assert_clean(&space, &Immersion::slice(0.2), 1e-10);
        }
        let flat = AmbientSpace::euclidean();
        assert_clean(&flat, &Immersion::euclid_sphere(1.0, 0.0), 1e-6);
        assert_clean(&flat, &Immersion::euclid_sphere(1.0, 0.0).with_jet_mode(fdj), 1e-4);
    }

    #[test]
    fn printed_codazzi_sign_is_the_one_that_vanishes() {
        let space = AmbientSpace::new(0, WarpFn::ExpScaled { a: 1.0, b: -1.0 }).unwrap();
        let imm = cap();
        let r = evaluate_grid(&space, &imm, GridSpec::default(), &CompatOptions::for_immersion(&imm)).unwrap();
        assert_eq!(r.codazzi_sign, CodazziSign::Printed);
        assert!(r.max(CODAZZI_FLIPPED) > 0.1);
    }

    #[test]
    fn slices_satisfy_structure_equations_for_any_warp() {
        let space = AmbientSpace::new(0, WarpFn::Affine { a: 0.7, b: 0.0 }).unwrap();
        let imm = Immersion::slice(0.3);
        let (e35, e33, e34): (f64, f64, f64) = structure_residuals(&space, &imm, 0.1, -0.2).unwrap();
        assert!(e35 < 1e-12 && e33 < 1e-10 && e34 < 1e-10);
    }

    #[test]
    fn dropping_the_ambient_connection_is_detected() {
        // Second form taken as g(phi_ij, N) alone: on a slice this zeroes S, and eq33 then
        // measures |f'| |X|.
        let space = AmbientSpace::new(0, WarpFn::Affine { a: 0.7, b: 0.0 }).unwrap();
        let imm = Immersion::slice(0.3);
        let opts = CompatOptions::for_immersion(&imm);
        let mut t: PointTerms<f64> = PointTerms::at(&space, &imm, 0.1, -0.2, &opts).unwrap();
        t.fd.shape = [[0.0; 2]; 2];
        for d in t.d.iter_mut() {
            d.shape = [[0.0; 2]; 2];
        }
        let (_, e33, _) = t.structure_residuals();
        let expected = 0.7f64 * t.fd.first[0][0].max(t.fd.first[1][1]).sqrt();
        assert!((e33 - expected).abs() < 1e-9, "{e33} vs {expected}");
    }

    #[test]
    fn gauss_residual_is_symmetric_under_pair_swap() {
        let space = AmbientSpace::new(1, WarpFn::ExpScaled { a: 1.0, b: -1.0 }).unwrap();
        let imm = cap().with_jet_mode(JetMode::FiniteDifference(1e-4));
        let t = PointTerms::at(&space, &imm, 0.5, 0.3, &CompatOptions::for_immersion(&imm)).unwrap();
        assert_eq!(t.gauss_residual_frame(0, 1, 0, 1), t.gauss_residual_frame(1, 0, 1, 0));
        assert_eq!(t.gauss_model(0, 1, 0, 1), -t.gauss_model(1, 0, 0, 1));
    }

    #[test]
    fn residuals_converge_under_jet_refinement() {
        let opts = CompatOptions {
            scheme: FdScheme::new(5e-3, true),
            orientation: None,
        };
        for kappa in [0, 1] {
            let space = AmbientSpace::new(kappa, WarpFn::ExpScaled { a: 1.0, b: -1.0 }).unwrap();
            let res = |h: f64| {
                let imm = cap().with_jet_mode(JetMode::FiniteDifference(h));
                let t = PointTerms::at(&space, &imm, 0.55, 0.4, &opts).unwrap();
                let (e35, e33, e34) = t.structure_residuals();
                [t.gauss_residual(), t.codazzi_residuals().0, e35, e33, e34]
            };
            let (coarse, fine) = (res(4e-3), res(2e-3));
            for (i, (c, f)) in coarse.iter().zip(fine).enumerate() {
                if *c < 1e-9 {
                    continue;
                }
                let p = crate::fd::observed_order(*c, f);
                assert!(p >= 1.8, "kappa {kappa} residual {i}: {c:e} -> {f:e}, order {p}");
            }
        }
    }

    #[test]
    fn report_round_trips_through_json() {
        let space = AmbientSpace::new(0, WarpFn::Const { c: 0.0 }).unwrap();
        let imm = cap();
        let grid = GridSpec {
            nu: 3,
            nv: 2,
            inset: 0.2,
        };
        let r = evaluate_grid(&space, &imm, grid, &CompatOptions::for_immersion(&imm)).unwrap();
        let js = serde_json::to_string(&r).unwrap();
        assert!(js.contains("\"eq\":\"eq33\""));
        let back: CompatReport = serde_json::from_str(&js).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.residuals.get(GAUSS).unwrap().points, 6);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn random_caps_are_compatible(
            kappa in -1i32..=1,
            c2 in -1.5f64..-0.2,
            c4 in -0.5f64..0.5,
            b in -1.0f64..1.0,
            u in 0.25f64..0.75,
            v in -3.0f64..3.0,
        ) {
            let space = AmbientSpace::new(kappa, WarpFn::ExpScaled { a: 0.8, b }).unwrap();
            let imm = Immersion::rot_graph(GraphProfile::Polynomial(vec![0.5, 0.0, c2, 0.0, c4]), 0.2, 0.8);
            let t = PointTerms::at(&space, &imm, u, v, &CompatOptions::for_immersion(&imm)).unwrap();
            let (e35, e33, e34) = t.structure_residuals();
            for r in [t.gauss_residual(), t.codazzi_residuals().0, e35, e33, e34] {
                proptest::prop_assert!((0.0..1e-6).contains(&r), "{}", r);
            }
        }
    }
}
