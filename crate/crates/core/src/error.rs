use thiserror::Error;

/// Failure modes shared by all modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("point outside the model-space domain: 1 + kappa (x^2 + y^2) = {0} <= 0")]
    Domain(f64),
    #[error("kappa must be -1, 0 or 1, got {0}")]
    BadKappa(i32),
    #[error("parameter point ({u}, {v}) outside the usable domain")]
    OutOfDomain { u: f64, v: f64 },
    #[error("degenerate jet: Gram determinant {0}")]
    DegenerateJet(f64),
    #[error("orientation ambiguous: |nu| = {0} below threshold, pass an explicit normal seed")]
    OrientationAmbiguous(f64),
    #[error("|D| = {0} too small")]
    DivByZeroD(f64),
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("surface is not positively curved (min K_e = {0})")]
    NotPositivelyCurved(f64),
    #[error("extrinsic curvature is not constant (relative spread {0})")]
    NotConstantKe(f64),
    #[error("mean curvature is not constant or not positive (relative spread {0})")]
    NotConstantH(f64),
    #[error("surface is not minimal (max |H| = {0})")]
    NotMinimal(f64),
    #[error("scale factor must be positive, got {0}")]
    BadScale(f64),
    #[error("quadrature failed: {0}")]
    QuadratureFail(String),
    #[error("affinity in the second derivative broken: miss {0}")]
    AffinityBroken(f64),
    #[error("curvature slope with respect to the second derivative vanishes")]
    SlopeVanishes,
    #[error("integration step failure: {0}")]
    StepFailure(String),
    #[error("no boundary reached: {0}")]
    NoBoundaryReached(String),
}

pub type Result<T> = std::result::Result<T, GeomError>;
