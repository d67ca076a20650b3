//! Parametrized surfaces and their second-order jets.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::ambient::AmbientPoint;
use crate::error::{GeomError, Result};
use crate::interp::{CubicSpline, QuinticHermite};
use crate::linalg::{cross3, Vec3};
use crate::scalar::{lit, Real};

/// Position, first and second partials of a parametrization at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImmersionJet<T> {
    pub p: AmbientPoint<T>,
    /// `[phi_u, phi_v]`
    pub d1: [Vec3<T>; 2],
    /// `[phi_uu, phi_uv, phi_vv]`
    pub d2: [Vec3<T>; 3],
}

impl<T: Real> ImmersionJet<T> {
    /// Euclidean Gram determinant of the coordinate tangent vectors.
    pub fn gram(&self) -> T {
        let c = cross3(self.d1[0], self.d1[1]);
        c[0] * c[0] + c[1] * c[1] + c[2] * c[2]
    }

    pub fn is_finite(&self) -> bool {
        self.p
            .coords()
            .iter()
            .chain(self.d1.iter().flatten())
            .chain(self.d2.iter().flatten())
            .all(|v| v.is_finite())
    }

    /// Height derivatives `(h_u, h_v)`; the height is the `t` coordinate.
    pub fn height_gradient(&self) -> [T; 2] {
        [self.d1[0][0], self.d1[1][0]]
    }
}

/// Radial profile `t = u(r)` of a rotational graph.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphProfile<T> {
    /// `u(r) = sum_k c_k r^k`
    Polynomial(Vec<T>),
    /// `u(r) = t0 + sqrt(R^2 - r^2)`
    Hemisphere {
        radius: T,
        t0: T,
    },
    Spline(CubicSpline<T>),
}

impl<T: Real> GraphProfile<T> {
    /// `(u, u', u'')` at `r`.
    pub fn eval(&self, r: T) -> (T, T, T) {
        match self {
            GraphProfile::Polynomial(c) => {
                let (mut v, mut d1, mut d2) = (T::zero(), T::zero(), T::zero());
                for (k, &ck) in c.iter().enumerate().rev() {
                    v = v * r + ck;
                    if k >= 1 {
                        d1 = d1 * r + lit::<T>(k as f64) * ck;
                    }
                    if k >= 2 {
                        d2 = d2 * r + lit::<T>((k * (k - 1)) as f64) * ck;
                    }
                }
                (v, d1, d2)
            }
            GraphProfile::Hemisphere { radius, t0 } => {
                let w = (*radius * *radius - r * r).sqrt();
                let d1 = -r / w;
                let d2 = -(*radius * *radius) / (w * w * w);
                (*t0 + w, d1, d2)
            }
            GraphProfile::Spline(s) => s.eval(r),
        }
    }
}

/// Derivatives of a meridian curve `(t(s), rho(s))` at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeridianJet<T> {
    pub t: [T; 3],
    pub rho: [T; 3],
}

impl<T: Real> MeridianJet<T> {
    /// Jet of the surface of revolution at angle `theta`, in `(meridian parameter, theta)`.
    pub fn surface_jet(&self, theta: T) -> ImmersionJet<T> {
        let z = T::zero();
        let (s, c) = theta.sin_cos();
        let [rho, drho, ddrho] = self.rho;
        ImmersionJet {
            p: AmbientPoint::new(self.t[0], rho * c, rho * s),
            d1: [[self.t[1], drho * c, drho * s], [z, -rho * s, rho * c]],
            d2: [
                [self.t[2], ddrho * c, ddrho * s],
                [z, -drho * s, drho * c],
                [z, -rho * c, -rho * s],
            ],
        }
    }
}

/// Meridian of a surface of revolution about the `t` axis.
#[derive(Debug, Clone, PartialEq)]
pub enum Meridian<T> {
    /// Graph meridian parametrized by the radius.
    Graph(GraphProfile<T>),
    /// Round sphere of radius `R` centred at `(t0, 0, 0)`, parametrized by polar angle.
    Sphere { radius: T, t0: T },
    /// Catenoid `rho = a cosh((t - t0) / a)`, parametrized by `t`.
    Catenoid { a: T, t0: T },
    /// Sampled curve, components `[r, t]`, typically from the cap solver.
    Sampled(Arc<QuinticHermite<T, 2>>),
}

impl<T: Real> Meridian<T> {
    pub fn eval(&self, s: T) -> MeridianJet<T> {
        match self {
            Meridian::Graph(p) => {
                let (u, du, ddu) = p.eval(s);
                MeridianJet {
                    t: [u, du, ddu],
                    rho: [s, T::one(), T::zero()],
                }
            }
            Meridian::Sphere { radius, t0 } => {
                let (sn, cs) = s.sin_cos();
                let r = *radius;
                MeridianJet {
                    t: [*t0 + r * cs, -r * sn, -r * cs],
                    rho: [r * sn, r * cs, -r * sn],
                }
            }
            Meridian::Catenoid { a, t0 } => {
                let x = (s - *t0) / *a;
                MeridianJet {
                    t: [s, T::one(), T::zero()],
                    rho: [*a * x.cosh(), x.sinh(), x.cosh() / *a],
                }
            }
            Meridian::Sampled(c) => {
                let [r, t] = c.eval(s);
                MeridianJet { t, rho: r }
            }
        }
    }
}

/// Closed-form curvature data for fixture surfaces in Euclidean `R^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureOracle<T> {
    pub mean: T,
    pub extrinsic: T,
    pub nu: Option<T>,
}

/// Catalog of parametrized test surfaces.
#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceKind<T> {
    /// `(t0, u, v)`
    Slice { t0: T },
    /// Longitude/latitude chart centred on the pole `(t0 + R, 0, 0)`; Euclidean geometry only.
    EuclidSphere { radius: T, t0: T },
    /// `(v, R cos u, R sin u)` about the `t` axis.
    Cylinder { radius: T },
    /// `(t(s), rho(s) cos theta, rho(s) sin theta)`
    Rotational(Meridian<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JetMode<T> {
    Exact,
    FiniteDifference(T),
}

/// Normal selection rule, interpreted by `fundforms`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Orientation<T> {
    /// `nu >= 0`
    Up,
    /// `nu <= 0`
    Down,
    /// Normal with positive inner product against the given ambient vector.
    Seed(Vec3<T>),
    /// Normal along `phi_u x phi_v`, optionally reversed.
    Parametric { flip: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Immersion<T> {
    pub kind: SurfaceKind<T>,
    /// `[[u0, u1], [v0, v1]]`
    pub domain: [[T; 2]; 2],
    pub jet_mode: JetMode<T>,
}

pub const DEFAULT_FD_STEP: f64 = 1e-4;
const GRAM_FLOOR: f64 = 1e-12;

impl<T: Real> Immersion<T> {
    pub fn new(kind: SurfaceKind<T>, domain: [[T; 2]; 2]) -> Self {
        Self {
            kind,
            domain,
            jet_mode: JetMode::Exact,
        }
    }

    pub fn slice(t0: T) -> Self {
        let a = lit::<T>(0.5);
        Self::new(SurfaceKind::Slice { t0 }, [[-a, a], [-a, a]])
    }

    pub fn euclid_sphere(radius: T, t0: T) -> Self {
        Self::new(
            SurfaceKind::EuclidSphere { radius, t0 },
            [[lit(-3.0), lit(3.0)], [lit(-1.4), lit(1.4)]],
        )
    }

    pub fn cylinder(radius: T) -> Self {
        Self::new(
            SurfaceKind::Cylinder { radius },
            [[lit(-3.0), lit(3.0)], [lit(-2.0), lit(2.0)]],
        )
    }

    /// Rotational graph `t = u(r)` over the annulus `r in [r0, r1]`.
    pub fn rot_graph(profile: GraphProfile<T>, r0: T, r1: T) -> Self {
        Self::rotational(Meridian::Graph(profile), r0, r1)
    }

    pub fn rotational(meridian: Meridian<T>, s0: T, s1: T) -> Self {
        let pi = T::PI();
        Self::new(SurfaceKind::Rotational(meridian), [[s0, s1], [-pi, pi]])
    }

    pub fn with_jet_mode(mut self, mode: JetMode<T>) -> Self {
        self.jet_mode = mode;
        self
    }

    /// Natural normal convention of each catalog entry.
    pub fn default_orientation(&self, u: T, v: T) -> Orientation<T> {
        match &self.kind {
            SurfaceKind::Slice { .. } => Orientation::Up,
            SurfaceKind::EuclidSphere { t0, .. } => {
                let p = self.map(u, v);
                Orientation::Seed([*t0 - p[0], -p[1], -p[2]])
            }
            SurfaceKind::Cylinder { .. } => {
                let (s, c) = u.sin_cos();
                Orientation::Seed([T::zero(), -c, -s])
            }
            SurfaceKind::Rotational(_) => Orientation::Parametric { flip: true },
        }
    }

    /// Closed-form Euclidean curvatures (inward normals), where the catalog knows them.
    pub fn euclidean_oracle(&self) -> Option<CurvatureOracle<T>> {
        match &self.kind {
            SurfaceKind::Slice { .. } => Some(CurvatureOracle {
                mean: T::zero(),
                extrinsic: T::zero(),
                nu: Some(T::one()),
            }),
            SurfaceKind::EuclidSphere { radius, .. } => Some(CurvatureOracle {
                mean: radius.recip(),
                extrinsic: (*radius * *radius).recip(),
                nu: None,
            }),
            SurfaceKind::Cylinder { radius } => Some(CurvatureOracle {
                mean: (lit::<T>(2.0) * *radius).recip(),
                extrinsic: T::zero(),
                nu: Some(T::zero()),
            }),
            SurfaceKind::Rotational(Meridian::Sphere { radius, .. }) => Some(CurvatureOracle {
                mean: radius.recip(),
                extrinsic: (*radius * *radius).recip(),
                nu: None,
            }),
            SurfaceKind::Rotational(Meridian::Catenoid { .. }) => None,
            SurfaceKind::Rotational(_) => None,
        }
    }

    /// The parametrization in `(t, x, y)` coordinates.
    pub fn map(&self, u: T, v: T) -> Vec3<T> {
        match &self.kind {
            SurfaceKind::Slice { t0 } => [*t0, u, v],
            SurfaceKind::EuclidSphere { radius, t0 } => {
                let (su, cu) = u.sin_cos();
                let (sv, cv) = v.sin_cos();
                [*t0 + *radius * cv * cu, *radius * cv * su, *radius * sv]
            }
            SurfaceKind::Cylinder { radius } => {
                let (s, c) = u.sin_cos();
                [v, *radius * c, *radius * s]
            }
            SurfaceKind::Rotational(m) => {
                let j = m.eval(u);
                let (s, c) = v.sin_cos();
                [j.t[0], j.rho[0] * c, j.rho[0] * s]
            }
        }
    }

    pub(crate) fn exact_jet(&self, u: T, v: T) -> ImmersionJet<T> {
        let z = T::zero();
        match &self.kind {
            SurfaceKind::Slice { t0 } => ImmersionJet {
                p: AmbientPoint::new(*t0, u, v),
                d1: [[z, T::one(), z], [z, z, T::one()]],
                d2: [[z; 3]; 3],
            },
            SurfaceKind::EuclidSphere { radius, t0 } => {
                let r = *radius;
                let (su, cu) = u.sin_cos();
                let (sv, cv) = v.sin_cos();
                ImmersionJet {
                    p: AmbientPoint::new(*t0 + r * cv * cu, r * cv * su, r * sv),
                    d1: [[-r * cv * su, r * cv * cu, z], [-r * sv * cu, -r * sv * su, r * cv]],
                    d2: [
                        [-r * cv * cu, -r * cv * su, z],
                        [r * sv * su, -r * sv * cu, z],
                        [-r * cv * cu, -r * cv * su, -r * sv],
                    ],
                }
            }
            SurfaceKind::Cylinder { radius } => {
                let r = *radius;
                let (s, c) = u.sin_cos();
                ImmersionJet {
                    p: AmbientPoint::new(v, r * c, r * s),
                    d1: [[z, -r * s, r * c], [T::one(), z, z]],
                    d2: [[z, -r * c, -r * s], [z; 3], [z; 3]],
                }
            }
            SurfaceKind::Rotational(m) => m.eval(u).surface_jet(v),
        }
    }

    fn fd_jet(&self, u: T, v: T, h: T) -> ImmersionJet<T> {
        let f = |a: T, b: T| self.map(a, b);
        let two = lit::<T>(2.0);
        let four = lit::<T>(4.0);
        let c = f(u, v);
        let (up, um, vp, vm) = (f(u + h, v), f(u - h, v), f(u, v + h), f(u, v - h));
        let (pp, pm, mp, mm) = (f(u + h, v + h), f(u + h, v - h), f(u - h, v + h), f(u - h, v - h));
        let mut d1 = [[T::zero(); 3]; 2];
        let mut d2 = [[T::zero(); 3]; 3];
        for k in 0..3 {
            d1[0][k] = (up[k] - um[k]) / (two * h);
            d1[1][k] = (vp[k] - vm[k]) / (two * h);
            d2[0][k] = (up[k] - two * c[k] + um[k]) / (h * h);
            d2[1][k] = (pp[k] - pm[k] - mp[k] + mm[k]) / (four * h * h);
            d2[2][k] = (vp[k] - two * c[k] + vm[k]) / (h * h);
        }
        ImmersionJet {
            p: AmbientPoint::from_coords(c),
            d1,
            d2,
        }
    }

    /// Jet at `(u, v)` honoring the configured jet mode.
    pub fn jet_at(&self, u: T, v: T) -> Result<ImmersionJet<T>> {
        let margin = match self.jet_mode {
            JetMode::Exact => T::zero(),
            JetMode::FiniteDifference(h) => lit::<T>(2.0) * h,
        };
        let [[u0, u1], [v0, v1]] = self.domain;
        let inside = u - margin > u0 && u + margin < u1 && v - margin > v0 && v + margin < v1;
        // The angular coordinate of rotational surfaces is periodic.
        let periodic_v = matches!(self.kind, SurfaceKind::Rotational(_));
        let inside = inside || (periodic_v && u - margin > u0 && u + margin < u1 && v.is_finite());
        if !inside {
            return Err(GeomError::OutOfDomain {
                u: u.as_f64(),
                v: v.as_f64(),
            });
        }
        let jet = match self.jet_mode {
            JetMode::Exact => self.exact_jet(u, v),
            JetMode::FiniteDifference(h) => self.fd_jet(u, v, h),
        };
        let gram = jet.gram();
        if !jet.is_finite() || !(gram > lit::<T>(GRAM_FLOOR)) {
            return Err(GeomError::DegenerateJet(gram.as_f64()));
        }
        Ok(jet)
    }
}

/// Rotational graph through sampled `(r, u)` pairs, interpolated by a C^2 cubic spline.
/// The first and last samples are excluded from the usable domain.
pub fn rot_graph_from_samples<T: Real>(r_grid: &[T], u_values: &[T]) -> Result<Immersion<T>> {
    let spline = CubicSpline::new(r_grid.to_vec(), u_values.to_vec())?;
    let n = r_grid.len();
    if r_grid[0] < T::zero() {
        return Err(GeomError::BadInput("radial grid must be non-negative".into()));
    }
    Ok(Immersion::rot_graph(
        GraphProfile::Spline(spline),
        r_grid[1],
        r_grid[n - 2],
    ))
}

/// Reads a profile CSV with a header; the `r` and `u` columns are located by name.
pub fn read_profile_csv<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| GeomError::BadInput(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (ri, ui) = match (col("r"), col("u")) {
        (Some(r), Some(u)) => (r, u),
        _ => return Err(GeomError::BadInput("profile CSV needs 'r' and 'u' columns".into())),
    };
    let mut rs = Vec::new();
    let mut us = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| GeomError::BadInput(e.to_string()))?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| GeomError::BadInput("short CSV row".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| GeomError::BadInput(e.to_string()))
        };
        rs.push(parse(ri)?);
        us.push(parse(ui)?);
    }
    Ok((rs, us))
}

pub fn write_profile_csv<W: Write>(writer: W, r: &[f64], u: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| GeomError::BadInput(e.to_string());
    w.write_record(["r", "u"]).map_err(io)?;
    for (a, b) in r.iter().zip(u) {
        w.write_record([format!("{a:e}"), format!("{b:e}")]).map_err(io)?;
    }
    w.flush().map_err(|e| GeomError::BadInput(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_jet_err(a: &ImmersionJet<f64>, b: &ImmersionJet<f64>) -> f64 {
        a.d1.iter()
            .flatten()
            .zip(b.d1.iter().flatten())
            .chain(a.d2.iter().flatten().zip(b.d2.iter().flatten()))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn slice_jet() {
        let j = Immersion::slice(0.0).jet_at(0.1, -0.2).unwrap();
        assert_eq!(j.d1, [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(j.d2.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn sphere_chart_center_is_unit_speed_and_fd_agrees() {
        let s = Immersion::euclid_sphere(1.0, 0.0);
        let j = s.jet_at(0.0, 0.0).unwrap();
        let n: f64 = j.d1[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-15);
        let fd = s
            .clone()
            .with_jet_mode(JetMode::FiniteDifference(1e-4))
            .jet_at(0.0, 0.0)
            .unwrap();
        assert!(max_jet_err(&j, &fd) < 1e-6);
    }

    #[test]
    fn fd_jets_converge_at_second_order() {
        let s = Immersion::rot_graph(GraphProfile::Polynomial(vec![1.0, 0.0, -1.0]), 0.1, 0.9);
        let exact = s.jet_at(0.5, 0.3).unwrap();
        let err = |h: f64| {
            max_jet_err(
                &exact,
                &s.clone()
                    .with_jet_mode(JetMode::FiniteDifference(h))
                    .jet_at(0.5, 0.3)
                    .unwrap(),
            )
        };
        assert!(err(1e-4) <= 1e-6);
        let ratio = err(2e-2) / err(1e-2);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        let sph = Immersion::euclid_sphere(1.0, 0.0);
        let ex = sph.jet_at(0.4, 0.2).unwrap();
        let e = |h: f64| {
            max_jet_err(
                &ex,
                &sph.clone()
                    .with_jet_mode(JetMode::FiniteDifference(h))
                    .jet_at(0.4, 0.2)
                    .unwrap(),
            )
        };
        let ratio = e(2e-2) / e(1e-2);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn out_of_domain_and_degenerate() {
        let s = Immersion::slice(0.0).with_jet_mode(JetMode::FiniteDifference(0.1));
        assert!(matches!(s.jet_at(0.45, 0.0), Err(GeomError::OutOfDomain { .. })));
        let mut c = Immersion::rot_graph(GraphProfile::Polynomial(vec![0.0]), -0.5, 0.5);
        c.jet_mode = JetMode::Exact;
        assert!(matches!(c.jet_at(0.0, 0.0), Err(GeomError::DegenerateJet(_))));
    }

    #[test]
    fn samples_constant_and_parabola() {
        let r: Vec<f64> = (0..20).map(|i| 0.05 * i as f64).collect();
        let flat = rot_graph_from_samples(&r, &[0.0; 20]).unwrap();
        let j = flat.jet_at(0.4, 0.1).unwrap();
        assert!(j.d2[0][0].abs() < 1e-10 && j.d1[0][0].abs() < 1e-10);

        let r: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let u: Vec<f64> = r.iter().map(|x| 1.0 - x * x).collect();
        let imm = rot_graph_from_samples(&r, &u).unwrap();
        if let SurfaceKind::Rotational(Meridian::Graph(p)) = &imm.kind {
            for &x in &r[1..199] {
                assert!((p.eval(x).2 + 2.0).abs() < 1e-6);
            }
        } else {
            panic!("unexpected kind");
        }
        assert!(matches!(
            rot_graph_from_samples(&[0.0, 0.1, 0.2], &[0.0; 3]),
            Err(GeomError::BadInput(_))
        ));
    }

    #[test]
    fn profile_csv_round_trip() {
        let r = vec![0.0, 0.5, 1.0];
        let u = vec![1.0, 0.75, 0.0];
        let mut buf = Vec::new();
        write_profile_csv(&mut buf, &r, &u).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("r,u\n"));
        let (r2, u2) = read_profile_csv(&buf[..]).unwrap();
        assert_eq!((r, u), (r2, u2));
    }
}
