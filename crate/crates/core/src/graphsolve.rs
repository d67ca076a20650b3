//! Rotational graphs `t = u(r)` of prescribed curvature in `R x_f R^2`, shot from the apex.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambient::{AmbientSpace, WarpFn};
use crate::error::{GeomError, Result};
use crate::fundforms::fundamental_data;
use crate::immersion::{Immersion, Meridian, MeridianJet, Orientation};
use crate::interp::QuinticHermite;
use crate::ode::{integrate, OdeOptions};
use crate::scalar::{lit, Real};

/// Prescribed curvature of a cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", deny_unknown_fields)]
pub enum CapMode {
    /// Constant mean curvature `h0 > 0`.
    Cmc {
        h: f64,
    },
    /// Constant extrinsic curvature `k > 0`.
    ExtrinsicK {
        k: f64,
    },
    Minimal,
}

impl CapMode {
    /// The pointwise quantity held fixed and its target.
    pub fn target(&self) -> (Curvature, f64) {
        match *self {
            CapMode::Cmc { h } => (Curvature::Mean, h),
            CapMode::ExtrinsicK { k } => (Curvature::Extrinsic, k),
            CapMode::Minimal => (Curvature::Mean, 0.0),
        }
    }

    /// Mean curvature at the umbilic apex.
    fn apex_mean(&self) -> f64 {
        match *self {
            CapMode::Cmc { h } => h,
            CapMode::ExtrinsicK { k } => k.sqrt(),
            CapMode::Minimal => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            CapMode::Cmc { h } => h > 0.0 && h.is_finite(),
            CapMode::ExtrinsicK { k } => k > 0.0 && k.is_finite(),
            CapMode::Minimal => true,
        };
        if ok {
            Ok(())
        } else {
            Err(GeomError::BadInput(format!(
                "curvature target must be positive: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Curvature {
    Mean,
    Extrinsic,
}

/// Shooting problem: apex at height `apex_height` on the axis, boundary sought on `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CapProblem<T> {
    pub mode: CapMode,
    pub space: AmbientSpace<T>,
    pub apex_height: T,
    /// Give up once the profile leaves `r <= r_max`.
    pub r_max: T,
    /// Give up after this much meridian arclength.
    pub arc_max: T,
    pub ode: OdeOptions<T>,
    /// Number of output nodes after the apex.
    pub nodes: usize,
    /// Allowance in `measured <= bound + slack`.
    pub height_slack: T,
}

impl<T: Real> CapProblem<T> {
    pub fn new(mode: CapMode, space: AmbientSpace<T>, apex_height: T) -> Result<Self> {
        mode.validate()?;
        if space.kappa != 0 {
            return Err(GeomError::BadKappa(space.kappa));
        }
        if !(apex_height >= T::zero()) || !apex_height.is_finite() {
            return Err(GeomError::BadInput(format!("apex height {}", apex_height.as_f64())));
        }
        Ok(Self {
            mode,
            space,
            apex_height,
            r_max: lit(20.0),
            arc_max: lit(100.0),
            ode: OdeOptions::default(),
            nodes: 400,
            height_slack: lit(HEIGHT_SLACK),
        })
    }
}

const AXIS_EPS: f64 = 1e-6;
const SLOPE_FLOOR: f64 = 1e-12;
const AFFINE_TOL: f64 = 1e-8;
const BOUNDARY_COS_SLACK: f64 = 1e-6;
const GRAPH_BREAK_COS: f64 = 1e-8;
const APEX_SLACK: f64 = 1e-8;

fn curvature_of_jet<T: Real>(
    space: &AmbientSpace<T>,
    jet: &MeridianJet<T>,
    orientation: Orientation<T>,
    which: Curvature,
) -> Result<T> {
    let fd = fundamental_data(space, &jet.surface_jet(T::zero()), orientation)?;
    Ok(match which {
        Curvature::Mean => fd.mean,
        Curvature::Extrinsic => fd.extrinsic,
    })
}

/// `H` or `K_e` of the graph `t = u(r)` at radius `r > 0`, normal pointing down.
pub fn curvature_of_profile_point<T: Real>(
    space: &AmbientSpace<T>,
    r: T,
    u: T,
    du: T,
    ddu: T,
    which: Curvature,
) -> Result<T> {
    if !(r > T::zero()) {
        return Err(GeomError::DegenerateJet(r.as_f64()));
    }
    let jet = MeridianJet {
        t: [u, du, ddu],
        rho: [r, T::one(), T::zero()],
    };
    curvature_of_jet(space, &jet, Orientation::Down, which)
}

/// Solves `c(x) = target` for a quantity known to be affine in `x`, from probes at 0 and 1,
/// and checks the answer with a third evaluation.
pub fn affine_solve<T: Real>(c: impl Fn(T) -> Result<T>, target: T) -> Result<T> {
    let c0 = c(T::zero())?;
    let c1 = c(T::one())?;
    let slope = c1 - c0;
    if !(slope.abs() > lit::<T>(SLOPE_FLOOR)) {
        return Err(GeomError::SlopeVanishes);
    }
    let x = (target - c0) / slope;
    let miss = (c(x)? - target).abs();
    if !(miss <= lit::<T>(AFFINE_TOL) * (T::one() + target.abs())) {
        return Err(GeomError::AffinityBroken(miss.as_f64()));
    }
    Ok(x)
}

/// The `u''` that gives the graph curvature `target` at `(r, u, u')`.
pub fn solve_for_u2<T: Real>(space: &AmbientSpace<T>, r: T, u: T, du: T, which: Curvature, target: T) -> Result<T> {
    affine_solve(|x| curvature_of_profile_point(space, r, u, du, x, which), target)
}

/// Meridian jet in coordinate arclength: `r' = cos psi`, `u' = -sin psi`, `psi' = dpsi`.
fn arc_jet<T: Real>(r: T, u: T, psi: T, dpsi: T) -> MeridianJet<T> {
    let (s, c) = psi.sin_cos();
    MeridianJet {
        t: [u, -s, -c * dpsi],
        rho: [r, c, -s * dpsi],
    }
}

// The meridian's own normal, reversed: the downward one wherever the profile is a graph.
fn arc_orientation<T: Real>() -> Orientation<T> {
    Orientation::Parametric { flip: true }
}

fn arc_curvature<T: Real>(space: &AmbientSpace<T>, y: &[T; 3], dpsi: T, which: Curvature) -> Result<T> {
    curvature_of_jet(space, &arc_jet(y[0], y[1], y[2], dpsi), arc_orientation(), which)
}

/// Turning rate `psi'` realizing the target curvature at state `(r, u, psi)`.
fn turning_rate<T: Real>(space: &AmbientSpace<T>, y: &[T; 3], which: Curvature, target: T) -> Result<T> {
    affine_solve(|x| arc_curvature(space, y, x, which), target)
}

/// Apex curvature `k0` (so that `psi ~ k0 s` near the axis) giving mean curvature `target`.
fn apex_curvature<T: Real>(space: &AmbientSpace<T>, h0: T, target: T) -> Result<T> {
    let eps = lit::<T>(AXIS_EPS);
    let half = lit::<T>(0.5);
    let mean_at = |k: T| -> Result<T> {
        let y = [eps, h0 - half * k * eps * eps, k * eps];
        Ok(arc_curvature(space, &y, k, Curvature::Mean)? - target)
    };
    let (mut a, mut b) = (T::zero(), target + T::one());
    let (mut fa, mut fb) = (mean_at(a)?, mean_at(b)?);
    let mut grow = 0;
    while fa * fb > T::zero() {
        grow += 1;
        if grow > 60 {
            return Err(GeomError::StepFailure("no apex curvature bracket".into()));
        }
        let w = b - a;
        if fa.abs() < fb.abs() {
            a -= w;
            fa = mean_at(a)?;
        } else {
            b += w;
            fb = mean_at(b)?;
        }
    }
    for _ in 0..200 {
        let secant = b - fb * (b - a) / (fb - fa);
        let mid = (a + b) * half;
        let x = if secant > a.min(b) && secant < a.max(b) {
            secant
        } else {
            mid
        };
        let fx = mean_at(x)?;
        if fx.abs() <= lit::<T>(1e-14) || (b - a).abs() <= lit::<T>(1e-15) {
            return Ok(x);
        }
        if (fx < T::zero()) == (fa < T::zero()) {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        // Bisect too, so a stalled secant end cannot stall the bracket.
        let m = (a + b) * half;
        let fm = mean_at(m)?;
        if (fm < T::zero()) == (fa < T::zero()) {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    Ok((a + b) * half)
}

/// A shot cap, from the apex (first node, `r = 0`) to the boundary on `t = 0` (last node).
#[derive(Debug, Clone, PartialEq)]
pub struct CapProfile<T> {
    pub mode: CapMode,
    /// Coordinate arclength along the meridian.
    pub sigma: Vec<T>,
    pub r: Vec<T>,
    pub u: Vec<T>,
    pub u_prime: Vec<T>,
    /// Tangent angle below the horizontal.
    pub psi: Vec<T>,
    pub dpsi: Vec<T>,
    /// Achieved `H` or `K_e` per node.
    pub curvature: Vec<T>,
    pub max_height: T,
    pub boundary_radius: T,
}

impl<T: Real> CapProfile<T> {
    /// Largest deviation of the achieved curvature from its target, apex excluded.
    pub fn curvature_error(&self) -> T {
        let target = lit::<T>(self.mode.target().1);
        self.curvature[1..self.curvature.len() - 1]
            .iter()
            .map(|c| (*c - target).abs())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Height of the last node, zero up to the event tolerance.
    pub fn boundary_height(&self) -> T {
        self.u[self.u.len() - 1]
    }

    /// Interpolated meridian (components `[r, t]`) through the nodes after the apex.
    pub fn meridian(&self) -> Result<Meridian<T>> {
        let data = (1..self.sigma.len())
            .map(|i| {
                let (s, c) = self.psi[i].sin_cos();
                let k = self.dpsi[i];
                [[self.r[i], c, -s * k], [self.u[i], -s, -c * k]]
            })
            .collect();
        let q = QuinticHermite::new(self.sigma[1..].to_vec(), data)?;
        Ok(Meridian::Sampled(Arc::new(q)))
    }

    /// The cap as a surface of revolution, parametrized by `(arclength, angle)`.
    pub fn immersion(&self) -> Result<Immersion<T>> {
        Ok(Immersion::rotational(
            self.meridian()?,
            self.sigma[1],
            self.sigma[self.sigma.len() - 1],
        ))
    }

    /// CSV with columns `r,u,uPrime,curvature,sigma,psi,dpsi`; the last three rebuild the meridian.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(PROFILE_COLUMNS).map_err(csv_err)?;
        for i in 0..self.r.len() {
            let row = [
                self.r[i],
                self.u[i],
                self.u_prime[i],
                self.curvature[i],
                self.sigma[i],
                self.psi[i],
                self.dpsi[i],
            ];
            out.write_record(row.map(|x| x.as_f64().to_string())).map_err(csv_err)?;
        }
        out.flush().map_err(|e| GeomError::BadInput(e.to_string()))
    }
}

const PROFILE_COLUMNS: [&str; 7] = ["r", "u", "uPrime", "curvature", "sigma", "psi", "dpsi"];

fn csv_err(e: csv::Error) -> GeomError {
    GeomError::BadInput(format!("profile csv: {e}"))
}

/// Rebuilds the surface of revolution of a profile written by [`CapProfile::write_csv`].
pub fn profile_immersion_from_csv<T: Real, R: Read>(rdr: R) -> Result<Immersion<T>> {
    let mut rdr = csv::Reader::from_reader(rdr);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| GeomError::BadInput(format!("profile csv: missing column {name}")))
    };
    let idx = [col("sigma")?, col("r")?, col("u")?, col("psi")?, col("dpsi")?];
    let mut knots = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let mut v = [0.0f64; 5];
        for (k, &i) in idx.iter().enumerate() {
            let field = rec.get(i).unwrap_or("");
            v[k] = field
                .trim()
                .parse()
                .map_err(|_| GeomError::BadInput(format!("profile csv: bad number {field:?}")))?;
        }
        let [s, r, u, psi, k] = v;
        // The apex row sits on the axis, where the rotational chart degenerates.
        if r <= 0.0 {
            continue;
        }
        let (sn, cs) = psi.sin_cos();
        knots.push(lit::<T>(s));
        data.push([[r, cs, -sn * k].map(lit::<T>), [u, -sn, -cs * k].map(lit::<T>)]);
    }
    if knots.len() < 4 {
        return Err(GeomError::BadInput("profile csv: fewer than 4 off-axis rows".into()));
    }
    let (s0, s1) = (knots[0], knots[knots.len() - 1]);
    let q = QuinticHermite::new(knots, data)?;
    Ok(Immersion::rotational(Meridian::Sampled(Arc::new(q)), s0, s1))
}

/// Integrates the cap from its apex; fails with `NoBoundaryReached` when the profile stops
/// being a graph, leaves `r <= r_max`, or runs out of arclength before meeting `t = 0`.
pub fn shoot_cap<T: Real>(problem: &CapProblem<T>) -> Result<CapProfile<T>> {
    problem.mode.validate()?;
    let space = &problem.space;
    let (which, target) = problem.mode.target();
    let target = lit::<T>(target);
    let h0 = problem.apex_height;
    let k0 = apex_curvature(space, h0, lit(problem.mode.apex_mean()))?;
    let eps = lit::<T>(AXIS_EPS);
    let y0 = [eps, h0 - lit::<T>(0.5) * k0 * eps * eps, k0 * eps];
    let rhs = |_s: T, y: &[T; 3]| -> Result<[T; 3]> {
        let (sn, cs) = y[2].sin_cos();
        Ok([cs, -sn, turning_rate(space, y, which, target)?])
    };
    let boundary = |_s: T, y: &[T; 3]| y[1];
    let graph = |_s: T, y: &[T; 3]| y[2].cos() + lit::<T>(GRAPH_BREAK_COS);
    let r_max = problem.r_max;
    let radius = move |_s: T, y: &[T; 3]| r_max - y[0];
    let ceiling = h0 + lit::<T>(APEX_SLACK);
    let rise = move |_s: T, y: &[T; 3]| ceiling - y[1];
    let stop = integrate(
        &rhs,
        eps,
        y0,
        problem.arc_max,
        &problem.ode,
        &[&boundary, &graph, &radius, &rise],
    )?;
    let reason = match stop.event {
        Some(0) if stop.y[2].cos() >= -lit::<T>(BOUNDARY_COS_SLACK) => None,
        Some(0) => Some("meets t = 0 after turning past vertical"),
        Some(1) => Some("profile turns past vertical before t = 0"),
        Some(2) => Some("profile leaves r <= r_max"),
        Some(3) => Some("profile rises above its apex"),
        _ => Some("arclength budget exhausted"),
    };
    if let Some(why) = reason {
        return Err(GeomError::NoBoundaryReached(format!(
            "{why} (apex {}, stopped at r = {}, u = {})",
            h0.as_f64(),
            stop.y[0].as_f64(),
            stop.y[1].as_f64()
        )));
    }

    let n = problem.nodes.max(8);
    let s_end = stop.t;
    let mut sigma = vec![T::zero()];
    let mut ys = vec![[T::zero(), h0, T::zero()]];
    let mut y = y0;
    let mut s = eps;
    for i in 0..n {
        let next = eps + (s_end - eps) * lit::<T>(i as f64 / (n - 1) as f64);
        if next > s {
            y = integrate(&rhs, s, y, next, &problem.ode, &[])?.y;
            s = next;
        }
        sigma.push(s);
        ys.push(y);
    }
    let mut dpsi = vec![k0];
    let mut curvature = vec![target];
    for yi in &ys[1..] {
        let k = turning_rate(space, yi, which, target)?;
        dpsi.push(k);
        curvature.push(arc_curvature(space, yi, k, which)?);
    }
    Ok(CapProfile {
        mode: problem.mode,
        r: ys.iter().map(|y| y[0]).collect(),
        u: ys.iter().map(|y| y[1]).collect(),
        u_prime: ys.iter().map(|y| -y[2].tan()).collect(),
        psi: ys.iter().map(|y| y[2]).collect(),
        max_height: h0,
        boundary_radius: ys[ys.len() - 1][0],
        sigma,
        dpsi,
        curvature,
    })
}

/// Sampled check of one warp hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Witness {
    pub holds: bool,
    /// Where the quantity is least favourable, and its value there.
    pub worst_t: f64,
    pub worst_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HypothesisReport {
    pub f_nonneg: Witness,
    pub f_prime_nonpos: Witness,
    pub f_double_prime_nonneg: Witness,
    pub interval: [f64; 2],
    pub samples: usize,
}

impl HypothesisReport {
    pub fn all_hold(&self) -> bool {
        self.f_nonneg.holds && self.f_prime_nonpos.holds && self.f_double_prime_nonneg.holds
    }
}

pub const HYPOTHESIS_SAMPLES: usize = 1000;

/// Samples `f >= 0`, `f' <= 0`, `f'' >= 0` on `[a, b]`.
pub fn check_hypotheses<T: Real>(warp: &WarpFn<T>, a: f64, b: f64, samples: usize) -> HypothesisReport {
    let n = samples.max(2);
    let ts: Vec<f64> = (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect();
    let witness = |g: &dyn Fn(f64) -> f64| {
        let (worst_t, worst_value) =
            ts.iter()
                .map(|&t| (t, g(t)))
                .fold((a, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        Witness {
            holds: worst_value >= 0.0,
            worst_t,
            worst_value,
        }
    };
    let w = |t: f64| lit::<T>(t);
    HypothesisReport {
        f_nonneg: witness(&|t| warp.eval(w(t)).as_f64()),
        f_prime_nonpos: witness(&|t| -warp.d1(w(t)).as_f64()),
        f_double_prime_nonneg: witness(&|t| warp.d2(w(t)).as_f64()),
        interval: [a, b],
        samples: n,
    }
}

pub const HEIGHT_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HeightVerdict {
    pub measured_height: f64,
    /// `e^{f(0)} / sqrt(K_e)` or `e^{f(0)} / H`; absent for minimal caps.
    pub bound: Option<f64>,
    pub hypothesis_report: HypothesisReport,
    pub pass: bool,
}

impl HeightVerdict {
    /// `bound - measured`, when there is a bound.
    pub fn margin(&self) -> Option<f64> {
        self.bound.map(|b| b - self.measured_height)
    }
}

pub fn height_bound<T: Real>(warp: &WarpFn<T>, mode: CapMode) -> Option<f64> {
    let e = warp.eval(T::zero()).as_f64().exp();
    match mode {
        CapMode::Cmc { h } => Some(e / h),
        CapMode::ExtrinsicK { k } => Some(e / k.sqrt()),
        CapMode::Minimal => None,
    }
}

pub fn height_verdict<T: Real>(profile: &CapProfile<T>, problem: &CapProblem<T>) -> HeightVerdict {
    let measured = profile.max_height.as_f64();
    let hyp = check_hypotheses(&problem.space.warp, 0.0, measured, HYPOTHESIS_SAMPLES);
    let bound = height_bound(&problem.space.warp, problem.mode);
    let pass = hyp.all_hold() && bound.is_some_and(|b| measured <= b + problem.height_slack.as_f64());
    HeightVerdict {
        measured_height: measured,
        bound,
        hypothesis_report: hyp,
        pass,
    }
}

/// Outcome of one apex height in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepRow {
    pub h0: f64,
    /// `H` or `K_e` target.
    pub curvature: f64,
    pub measured_height: Option<f64>,
    pub boundary_radius: Option<f64>,
    pub bound: Option<f64>,
    pub pass: Option<bool>,
    /// Largest deviation of the achieved curvature from the target.
    pub curvature_error: Option<f64>,
    /// `ok`, or why no cap was found.
    pub status: String,
}

/// Shoots every apex height independently, in parallel.
pub fn sweep<T: Real>(template: &CapProblem<T>, heights: &[f64]) -> Result<Vec<SweepRow>> {
    if heights.is_empty() {
        return Err(GeomError::BadInput("empty sweep".into()));
    }
    let target = template.mode.target().1;
    Ok(heights
        .par_iter()
        .map(|&h0| {
            let problem = CapProblem {
                apex_height: lit(h0),
                ..template.clone()
            };
            match shoot_cap(&problem) {
                Ok(p) => {
                    let v = height_verdict(&p, &problem);
                    SweepRow {
                        h0,
                        curvature: target,
                        measured_height: Some(v.measured_height),
                        boundary_radius: Some(p.boundary_radius.as_f64()),
                        bound: v.bound,
                        pass: Some(v.pass),
                        curvature_error: Some(p.curvature_error().as_f64()),
                        status: "ok".into(),
                    }
                }
                Err(e) => SweepRow {
                    h0,
                    curvature: target,
                    measured_height: None,
                    boundary_radius: None,
                    bound: height_bound(&problem.space.warp, problem.mode),
                    pass: None,
                    curvature_error: None,
                    status: e.to_string(),
                },
            }
        })
        .collect())
}

/// CSV with columns `h0,curvature,measuredHeight,bound,pass,curvatureError,status`; missing values are empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| GeomError::BadInput(e.to_string());
    out.write_record([
        "h0",
        "curvature",
        "measuredHeight",
        "bound",
        "pass",
        "curvatureError",
        "status",
    ])
    .map_err(io)?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        out.write_record([
            r.h0.to_string(),
            r.curvature.to_string(),
            opt(r.measured_height),
            opt(r.bound),
            r.pass.map(|p| p.to_string()).unwrap_or_default(),
            opt(r.curvature_error),
            r.status.clone(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| GeomError::BadInput(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RigidityRun {
    pub h0: f64,
    /// A compact cap with boundary on `t = 0` and `u >= 0` throughout.
    pub cap_found: bool,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RigidityReport {
    pub f_prime_nonneg: Witness,
    pub f_prime_at_zero: f64,
    /// Mean curvature of the slice `t = 0`.
    pub slice_mean_curvature: f64,
    pub slice_is_minimal: bool,
    pub runs: Vec<RigidityRun>,
    pub caps_found: usize,
    /// `slice` when `f'(0) = 0`, `none` otherwise.
    pub expected: String,
    pub dichotomy_holds: bool,
}

pub const SLICE_MINIMAL_TOL: f64 = 1e-10;

/// Shoots minimal caps from each apex height and checks that only the slice survives.
pub fn minimal_rigidity_check<T: Real>(space: &AmbientSpace<T>, heights: &[f64]) -> Result<RigidityReport> {
    let top = heights.iter().copied().fold(1.0, f64::max);
    let ts = (0..HYPOTHESIS_SAMPLES).map(|i| top * i as f64 / (HYPOTHESIS_SAMPLES - 1) as f64);
    let (wt, wv) = ts
        .map(|t| (t, space.warp.d1(lit::<T>(t)).as_f64()))
        .fold((0.0, f64::INFINITY), |a, x| if x.1 < a.1 { x } else { a });
    let f_prime_nonneg = Witness {
        holds: wv >= 0.0,
        worst_t: wt,
        worst_value: wv,
    };
    if !f_prime_nonneg.holds {
        return Err(GeomError::BadInput(format!("f' < 0 at t = {wt}")));
    }
    let f_prime_at_zero = space.warp.d1(T::zero()).as_f64();
    let slice_mean_curvature =
        curvature_of_profile_point(space, lit(0.5), T::zero(), T::zero(), T::zero(), Curvature::Mean)?.as_f64();
    let slice_is_minimal = slice_mean_curvature.abs() <= SLICE_MINIMAL_TOL;

    let template = CapProblem::new(CapMode::Minimal, *space, T::zero())?;
    let runs: Vec<RigidityRun> = heights
        .par_iter()
        .filter(|&&h| h > 0.0)
        .map(|&h0| {
            let problem = CapProblem {
                apex_height: lit(h0),
                ..template.clone()
            };
            match shoot_cap(&problem) {
                Ok(p) => {
                    let low = p.u.iter().fold(f64::INFINITY, |a, u| a.min(u.as_f64()));
                    let ok = low >= -1e-9;
                    RigidityRun {
                        h0,
                        cap_found: ok,
                        status: if ok { "cap".into() } else { format!("dips to u = {low}") },
                    }
                }
                Err(e) => RigidityRun {
                    h0,
                    cap_found: false,
                    status: e.to_string(),
                },
            }
        })
        .collect();
    let caps_found = runs.iter().filter(|r| r.cap_found).count();
    let slice_expected = f_prime_at_zero.abs() <= SLICE_MINIMAL_TOL;
    let dichotomy_holds = caps_found == 0 && slice_is_minimal == slice_expected;
    Ok(RigidityReport {
        f_prime_nonneg,
        f_prime_at_zero,
        slice_mean_curvature,
        slice_is_minimal,
        runs,
        caps_found,
        expected: if slice_expected { "slice" } else { "none" }.into(),
        dichotomy_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat() -> AmbientSpace<f64> {
        AmbientSpace::new(0, WarpFn::zero()).unwrap()
    }

    fn exp_warp() -> AmbientSpace<f64> {
        AmbientSpace::new(0, WarpFn::ExpScaled { a: 1.0, b: -1.0 }).unwrap()
    }

    #[test]
    fn pointwise_curvature_of_known_graphs() {
        let s = flat();
        let r = 0.5f64;
        let u = (1.0 - r * r).sqrt();
        let du = -r / u;
        let ddu = -1.0 / (u * u * u);
        let h = curvature_of_profile_point(&s, r, u, du, ddu, Curvature::Mean).unwrap();
        let k = curvature_of_profile_point(&s, r, u, du, ddu, Curvature::Extrinsic).unwrap();
        assert!((h - 1.0).abs() < 1e-10 && (k - 1.0).abs() < 1e-10);
        for which in [Curvature::Mean, Curvature::Extrinsic] {
            assert!(curvature_of_profile_point(&s, 0.3, 0.7, 0.0, 0.0, which).unwrap().abs() < 1e-14);
        }
        assert!(matches!(
            curvature_of_profile_point(&s, 0.0, 1.0, 0.0, 0.0, Curvature::Mean),
            Err(GeomError::DegenerateJet(_))
        ));
    }

    #[test]
    fn u2_inversion() {
        let s = flat();
        let r = 0.6f64;
        let u = (1.0 - r * r).sqrt();
        let got = solve_for_u2(&s, r, u, -r / u, Curvature::Mean, 1.0).unwrap();
        assert!((got + 1.0 / (u * u * u)).abs() < 1e-9);
        // catenoid r = cosh(t): u = acosh r, u' = 1/sqrt(r^2-1), u'' = -r/(r^2-1)^{3/2}
        let r = 1.7f64;
        let q = r * r - 1.0;
        let got = solve_for_u2(&s, r, r.acosh(), 1.0 / q.sqrt(), Curvature::Mean, 0.0).unwrap();
        assert!((got + r / q.powf(1.5)).abs() < 1e-9, "{got}");
        assert!(matches!(
            affine_solve(|_| Ok(2.0f64), 1.0),
            Err(GeomError::SlopeVanishes)
        ));
        assert!(matches!(
            affine_solve(|x: f64| Ok(x * x), 0.5),
            Err(GeomError::AffinityBroken(_))
        ));
    }

    fn hemisphere_check(h: f64) {
        let p = CapProblem::new(CapMode::Cmc { h }, flat(), 1.0 / h).unwrap();
        let c = shoot_cap(&p).unwrap();
        let rad = 1.0 / h;
        assert!((c.boundary_radius - rad).abs() < 1e-6);
        let err =
            c.r.iter()
                .zip(&c.u)
                .map(|(r, u)| (u - (rad * rad - r * r).max(0.0).sqrt()).abs())
                .fold(0.0, f64::max);
        assert!(err <= 1e-8, "{err}");
        assert!(c.curvature_error() <= 1e-6);
        assert!(c.boundary_height().abs() <= 1e-9);
        assert!(c.u_prime[1].abs() < 1e-5);
        assert!(c.u.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn hemispheres() {
        for h in [0.5, 1.0, 2.0] {
            hemisphere_check(h);
        }
        let p = CapProblem::new(CapMode::ExtrinsicK { k: 4.0 }, flat(), 0.5).unwrap();
        let c = shoot_cap(&p).unwrap();
        assert!((c.boundary_radius - 0.5).abs() < 1e-6);
        assert!(c.curvature_error() <= 1e-6);
        let v = height_verdict(&c, &p);
        assert!(v.pass && (v.bound.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn verdicts_in_flat_space() {
        let p = CapProblem::new(CapMode::Cmc { h: 1.0 }, flat(), 1.0).unwrap();
        let v = height_verdict(&shoot_cap(&p).unwrap(), &p);
        assert!(v.pass && v.bound == Some(1.0) && (v.measured_height - 1.0).abs() < 1e-12);
        let p = CapProblem::new(CapMode::ExtrinsicK { k: 1.0 }, flat(), 1.0).unwrap();
        let v = height_verdict(&shoot_cap(&p).unwrap(), &p);
        assert!(v.pass && v.margin().unwrap().abs() < 1e-12);
    }

    // Fixed-step classical RK4 of the same system, with a Newton finish onto u = 0.
    fn rk4_radius(space: &AmbientSpace<f64>, h0: f64, target: f64, step: f64) -> f64 {
        let k0 = apex_curvature(space, h0, target).unwrap();
        let eps = AXIS_EPS;
        let f = |y: &[f64; 3]| {
            [
                y[2].cos(),
                -y[2].sin(),
                turning_rate(space, y, Curvature::Mean, target).unwrap(),
            ]
        };
        let rk = |y: [f64; 3], h: f64| {
            let add = |a: &[f64; 3], b: &[f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
            let k1 = f(&y);
            let k2 = f(&add(&y, &k1, h / 2.0));
            let k3 = f(&add(&y, &k2, h / 2.0));
            let k4 = f(&add(&y, &k3, h));
            [0, 1, 2].map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        };
        let mut y = [eps, h0 - 0.5 * k0 * eps * eps, k0 * eps];
        loop {
            let next = rk(y, step);
            if next[1] < 0.0 {
                break;
            }
            y = next;
        }
        for _ in 0..20 {
            let ds = y[1] / y[2].sin();
            y = rk(y, ds);
        }
        y[0]
    }

    #[test]
    fn warped_cap_self_convergence() {
        let space = exp_warp();
        let mut p = CapProblem::new(CapMode::Cmc { h: 1.0 }, space, 0.5).unwrap();
        let coarse = shoot_cap(&p).unwrap();
        p.ode.rtol *= 0.5;
        p.ode.atol *= 0.5;
        let fine = shoot_cap(&p).unwrap();
        assert!((coarse.boundary_radius - fine.boundary_radius).abs() <= 1e-8);
        assert_eq!(coarse.max_height, fine.max_height);
        let oracle = rk4_radius(&space, 0.5, 1.0, 2e-4);
        assert!(
            (coarse.boundary_radius - oracle).abs() <= 1e-8,
            "{} vs {oracle}",
            coarse.boundary_radius
        );
        assert!(coarse.curvature_error() <= 1e-6);
        let v = height_verdict(&coarse, &p);
        assert!(v.hypothesis_report.all_hold() && v.pass && v.margin().unwrap() > 0.0);
    }

    #[test]
    fn hypothesis_witnesses() {
        let r = check_hypotheses(&WarpFn::ExpScaled { a: 1.0, b: -1.0 }, 0.0, 2.7, HYPOTHESIS_SAMPLES);
        assert!(r.all_hold());
        let r = check_hypotheses(&WarpFn::Affine { a: 1.0, b: -0.5 }, 0.0, 1.0, 100);
        assert!(!r.f_nonneg.holds && r.f_nonneg.worst_t == 0.0);
        assert!(!r.f_prime_nonpos.holds && r.f_double_prime_nonneg.holds);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"fPrimeNonpos\""));
    }

    #[test]
    fn sweep_reports_every_height() {
        let t = CapProblem::new(CapMode::Cmc { h: 1.0 }, exp_warp(), 0.0).unwrap();
        let rows = sweep(&t, &[0.3, 2.0]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].status, "ok");
        assert_eq!(rows[0].pass, Some(true));
        assert!(rows[1].measured_height.is_none() && rows[1].status.contains("vertical"));
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("h0,curvature,measuredHeight,bound,pass,curvatureError,status\n0.3,1,0.3,"));
        assert!(matches!(sweep(&t, &[]), Err(GeomError::BadInput(_))));
    }

    #[test]
    fn minimal_rigidity() {
        let s = AmbientSpace::new(0, WarpFn::Affine { a: 1.0, b: 0.0 }).unwrap();
        let r = minimal_rigidity_check(&s, &[0.1, 0.5, 1.0]).unwrap();
        assert_eq!(r.caps_found, 0);
        assert!(!r.slice_is_minimal && r.expected == "none" && r.dichotomy_holds);
        let s = AmbientSpace::new(0, WarpFn::Quadratic { a: 1.0, b: 0.0, c: 0.0 }).unwrap();
        let r = minimal_rigidity_check(&s, &[0.0, 0.1, 0.5, 1.0]).unwrap();
        assert_eq!(r.runs.len(), 3);
        assert!(r.slice_is_minimal && r.expected == "slice" && r.dichotomy_holds);
        let s = AmbientSpace::new(0, WarpFn::Affine { a: -1.0, b: 0.0 }).unwrap();
        assert!(minimal_rigidity_check(&s, &[0.5]).is_err());
    }

    #[test]
    fn profile_as_immersion() {
        let p = CapProblem::new(CapMode::Cmc { h: 1.0 }, flat(), 1.0).unwrap();
        let c = shoot_cap(&p).unwrap();
        let imm = c.immersion().unwrap();
        let [[u0, u1], _] = imm.domain;
        let jet = imm.jet_at(0.5 * (u0 + u1), 0.3).unwrap();
        let fd = fundamental_data(&p.space, &jet, Orientation::Down).unwrap();
        assert!((fd.mean - 1.0).abs() < 1e-6, "{}", fd.mean);
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), c.r.len() + 1);
        let back: Immersion<f64> = profile_immersion_from_csv(buf.as_slice()).unwrap();
        let a = back.jet_at(0.5 * (u0 + u1), 0.3).unwrap();
        assert!((a.p.t - jet.p.t).abs() < 1e-12 && (a.d2[0][0] - jet.d2[0][0]).abs() < 1e-9);
    }

    #[test]
    fn cap_conformal_identities() {
        use crate::compat::GridSpec;
        use crate::conformal::*;
        let grid = GridSpec {
            nu: 6,
            nv: 3,
            inset: 0.1,
        };
        let opts = ConformalOptions::default();
        let p = CapProblem::new(CapMode::Cmc { h: 1.0 }, exp_warp(), 0.5).unwrap();
        let imm = shoot_cap(&p).unwrap().immersion().unwrap();
        let chart = ConformalChart::build(&p.space, &imm, ChartKind::IsothermalI).unwrap();
        let l = check_lemma33(&chart, &grid, &opts).unwrap();
        assert!(["he4", "he5", "he6", "he7", "he8"].iter().all(|e| l.max(e) <= 1e-5));
        let aux = check_aux_h(&chart, &grid, &opts).unwrap();
        assert!(aux.residuals.max("eqle2") <= 1e-5 && aux.min_laplacian > 0.0);
        let p = CapProblem::new(CapMode::ExtrinsicK { k: 1.0 }, exp_warp(), 0.5).unwrap();
        let imm = shoot_cap(&p).unwrap().immersion().unwrap();
        let chart = ConformalChart::build(&p.space, &imm, ChartKind::ConformalII).unwrap();
        let l = check_lemma32(&chart, &grid, &opts).unwrap();
        assert!(l.max("e13.proof") <= 1e-5 && l.max("e12.2") <= 1e-5 && l.max("e15") <= 1e-5);
        let aux = check_aux_ke(&chart, &grid, &opts).unwrap();
        assert!(aux.residuals.max("eq16g") <= 1e-5 && aux.min_laplacian > 0.0);
    }

    #[test]
    fn rejects_bad_problems() {
        let hyp = AmbientSpace::new(-1, WarpFn::zero()).unwrap();
        assert!(matches!(
            CapProblem::new(CapMode::Minimal, hyp, 1.0),
            Err(GeomError::BadKappa(-1))
        ));
        assert!(CapProblem::new(CapMode::Cmc { h: -1.0 }, flat(), 1.0).is_err());
        assert!(CapProblem::new(CapMode::Cmc { h: 1.0 }, flat(), f64::NAN).is_err());
        let json = serde_json::to_string(&CapMode::ExtrinsicK { k: 2.0 }).unwrap();
        assert_eq!(json, r#"{"mode":"ExtrinsicK","k":2.0}"#);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn flat_cmc_caps_are_spherical(h in 0.3f64..3.0, frac in 0.2f64..0.95) {
            // spherical caps of radius 1/h cut at height frac/h below the top
            let p = CapProblem::new(CapMode::Cmc { h }, flat(), frac / h).unwrap();
            let c = shoot_cap(&p).unwrap();
            let rho = 1.0 / h;
            let want = (rho * rho - (rho - frac / h).powi(2)).sqrt();
            prop_assert!((c.boundary_radius - want).abs() < 1e-6);
            prop_assert!(c.curvature_error() <= 1e-6);
            prop_assert!(height_verdict(&c, &p).pass);
        }
    }
}
