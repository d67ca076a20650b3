//! Surfaces in warped products `R x_f M^2(k)`: fundamental forms, compatibility residuals,
//! conformal-chart identities, and a rotational cap solver for `k = 0`.
//!
//! Everything is generic over the scalar ([`scalar::Real`]); the aliases below fix `f64` or `f32`.

// `!(x > 0)` is how NaN gets rejected; tensor code reads better indexed.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ambient;
pub mod compat;
pub mod conformal;
pub mod error;
pub mod fd;
pub mod fundforms;
pub mod graphsolve;
pub mod immersion;
pub mod interp;
pub mod linalg;
pub mod ode;
pub mod report;
pub mod scalar;

pub use error::{GeomError, Result};

pub type Space = ambient::AmbientSpace<f64>;
pub type Warp = ambient::WarpFn<f64>;
pub type Surface = immersion::Immersion<f64>;
pub type Chart = conformal::ConformalChart<f64>;
pub type Cap = graphsolve::CapProblem<f64>;
pub type Profile = graphsolve::CapProfile<f64>;

pub type Space32 = ambient::AmbientSpace<f32>;
pub type Warp32 = ambient::WarpFn<f32>;
pub type Surface32 = immersion::Immersion<f32>;
pub type Chart32 = conformal::ConformalChart<f32>;
pub type Cap32 = graphsolve::CapProblem<f32>;
pub type Profile32 = graphsolve::CapProfile<f32>;
