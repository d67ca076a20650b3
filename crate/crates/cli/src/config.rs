//! JSON run configurations. Every record rejects unknown keys and must carry `"schema": "1"`.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use warpsurf::ambient::{AmbientSpace, WarpFn};
use warpsurf::compat::GridSpec;
use warpsurf::conformal::ChartKind;
use warpsurf::graphsolve::{profile_immersion_from_csv, CapMode};
use warpsurf::immersion::{GraphProfile, Immersion, JetMode, Meridian, DEFAULT_FD_STEP};

pub const SCHEMA: &str = "1";

#[derive(Debug, thiserror::Error)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Schema;

impl TryFrom<String> for Schema {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        if s == SCHEMA {
            Ok(Schema)
        } else {
            Err(format!("unsupported schema {s:?}, expected {SCHEMA:?}"))
        }
    }
}

impl From<Schema> for String {
    fn from(_: Schema) -> String {
        SCHEMA.into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ambient {
    pub kappa: i32,
    pub warp: WarpFn<f64>,
}

impl Ambient {
    pub fn build(&self) -> Result<AmbientSpace<f64>, ConfigError> {
        AmbientSpace::new(self.kappa, self.warp).map_err(|e| bad(e.to_string()))
    }
}

/// Catalog surfaces, or a profile written by `solve-cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum SurfaceSpec {
    Slice {
        t0: f64,
    },
    /// Round sphere through `t0` (its lowest point), latitude/longitude chart.
    Sphere {
        radius: f64,
        #[serde(default)]
        t0: f64,
    },
    Cylinder {
        radius: f64,
    },
    /// `t = sum c_k r^k` over `r0 <= r <= r1`.
    PolynomialGraph {
        coeffs: Vec<f64>,
        r0: f64,
        r1: f64,
    },
    Hemisphere {
        radius: f64,
        #[serde(default)]
        t0: f64,
        r0: f64,
        r1: f64,
    },
    Catenoid {
        a: f64,
        #[serde(default)]
        t0: f64,
        s0: f64,
        s1: f64,
    },
    /// Relative paths resolve against the config file's directory.
    ProfileCsv {
        path: PathBuf,
    },
}

impl SurfaceSpec {
    pub fn solver_produced(&self) -> bool {
        matches!(self, SurfaceSpec::ProfileCsv { .. })
    }

    pub fn build(&self, base: &Path) -> Result<Immersion<f64>, ConfigError> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(bad(format!("{name} must be positive, got {x}")))
            }
        };
        let ordered = |a: f64, b: f64| {
            if a < b && a.is_finite() && b.is_finite() {
                Ok(())
            } else {
                Err(bad(format!("empty parameter range [{a}, {b}]")))
            }
        };
        Ok(match self {
            SurfaceSpec::Slice { t0 } => Immersion::slice(*t0),
            SurfaceSpec::Sphere { radius, t0 } => {
                positive("radius", *radius)?;
                Immersion::euclid_sphere(*radius, *t0)
            }
            SurfaceSpec::Cylinder { radius } => {
                positive("radius", *radius)?;
                Immersion::cylinder(*radius)
            }
            SurfaceSpec::PolynomialGraph { coeffs, r0, r1 } => {
                ordered(*r0, *r1)?;
                positive("r0", *r0)?;
                if coeffs.is_empty() {
                    return Err(bad("polynomialGraph needs coefficients"));
                }
                Immersion::rot_graph(GraphProfile::Polynomial(coeffs.clone()), *r0, *r1)
            }
            SurfaceSpec::Hemisphere { radius, t0, r0, r1 } => {
                positive("radius", *radius)?;
                positive("r0", *r0)?;
                ordered(*r0, *r1)?;
                if *r1 >= *radius {
                    return Err(bad("hemisphere r1 must stay below the radius"));
                }
                Immersion::rot_graph(
                    GraphProfile::Hemisphere {
                        radius: *radius,
                        t0: *t0,
                    },
                    *r0,
                    *r1,
                )
            }
            SurfaceSpec::Catenoid { a, t0, s0, s1 } => {
                positive("a", *a)?;
                ordered(*s0, *s1)?;
                Immersion::rotational(Meridian::Catenoid { a: *a, t0: *t0 }, *s0, *s1)
            }
            SurfaceSpec::ProfileCsv { path } => {
                let full = base.join(path);
                let f = File::open(&full).map_err(|e| bad(format!("{}: {e}", full.display())))?;
                profile_immersion_from_csv(f).map_err(|e| bad(format!("{}: {e}", full.display())))?
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "camelCase", deny_unknown_fields)]
pub enum JetSpec {
    #[default]
    Exact,
    FiniteDifference {
        #[serde(default = "default_fd_step")]
        step: f64,
    },
}

fn default_fd_step() -> f64 {
    DEFAULT_FD_STEP
}

impl JetSpec {
    pub fn mode(&self) -> Result<JetMode<f64>, ConfigError> {
        match *self {
            JetSpec::Exact => Ok(JetMode::Exact),
            JetSpec::FiniteDifference { step } if step > 0.0 && step.is_finite() => Ok(JetMode::FiniteDifference(step)),
            JetSpec::FiniteDifference { step } => Err(bad(format!("jet step must be positive, got {step}"))),
        }
    }
}

/// Per-equation overrides; missing entries take the command default.
pub type Tolerances = BTreeMap<String, f64>;

pub fn resolve_tolerances(
    names: &[&str],
    default: f64,
    overrides: &Tolerances,
    scale: f64,
) -> Result<BTreeMap<String, f64>, ConfigError> {
    for k in overrides.keys() {
        if !names.contains(&k.as_str()) {
            return Err(bad(format!("unknown tolerance key {k:?}; expected one of {names:?}")));
        }
    }
    names
        .iter()
        .map(|&n| {
            let t = overrides.get(n).copied().unwrap_or(default) * scale;
            if t > 0.0 && t.is_finite() {
                Ok((n.to_string(), t))
            } else {
                Err(bad(format!("tolerance {n} must be positive, got {t}")))
            }
        })
        .collect()
}

fn default_grid() -> GridSpec {
    GridSpec::default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct CompatConfig {
    pub schema: Schema,
    pub ambient: Ambient,
    pub surface: SurfaceSpec,
    #[serde(default)]
    pub jet: JetSpec,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    /// Extra uniformly random parameter points, drawn from `--seed`.
    #[serde(default)]
    pub random_points: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ChartSpec {
    IsothermalI,
    ConformalII,
}

impl From<ChartSpec> for ChartKind {
    fn from(c: ChartSpec) -> Self {
        match c {
            ChartSpec::IsothermalI => ChartKind::IsothermalI,
            ChartSpec::ConformalII => ChartKind::ConformalII,
        }
    }
}

fn lemma_grid() -> GridSpec {
    GridSpec {
        nu: 8,
        nv: 4,
        inset: 0.1,
    }
}

fn default_chart_step() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct LemmaConfig {
    pub schema: Schema,
    pub ambient: Ambient,
    pub surface: SurfaceSpec,
    pub chart: ChartSpec,
    #[serde(default = "lemma_grid")]
    pub grid: GridSpec,
    /// Difference step in chart coordinates.
    #[serde(default = "default_chart_step")]
    pub step: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// `{"mode": "cmc", "H": 1}`, `{"mode": "ke", "Ke": 1}` or `{"mode": "minimal"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "camelCase", deny_unknown_fields)]
pub enum CapSpec {
    Cmc {
        #[serde(rename = "H")]
        h: f64,
    },
    Ke {
        #[serde(rename = "Ke")]
        ke: f64,
    },
    Minimal,
}

impl From<CapSpec> for CapMode {
    fn from(c: CapSpec) -> Self {
        match c {
            CapSpec::Cmc { h } => CapMode::Cmc { h },
            CapSpec::Ke { ke } => CapMode::ExtrinsicK { k: ke },
            CapSpec::Minimal => CapMode::Minimal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct CapConfig {
    pub schema: Schema,
    pub ambient: Ambient,
    pub cap: CapSpec,
    /// Apex height for `cmc`/`ke`.
    pub apex: Option<f64>,
    /// Heights tried by the minimal rigidity check.
    pub apex_heights: Option<Vec<f64>>,
    pub r_max: Option<f64>,
    pub nodes: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SweepMode {
    Cmc,
    Ke,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct SweepConfig {
    pub schema: Schema,
    pub ambient: Ambient,
    pub mode: SweepMode,
    /// `H` or `K_e` targets.
    pub values: Vec<f64>,
    /// Absolute apex heights, shared by every value.
    pub apex_heights: Option<Vec<f64>>,
    /// Apex heights as fractions of each value's height bound.
    pub apex_fractions: Option<Vec<f64>>,
    pub r_max: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl SweepMode {
    pub fn cap(self, value: f64) -> CapMode {
        match self {
            SweepMode::Cmc => CapMode::Cmc { h: value },
            SweepMode::Ke => CapMode::ExtrinsicK { k: value },
        }
    }
}

pub fn load<C: DeserializeOwned>(path: &Path) -> Result<C, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))
}
