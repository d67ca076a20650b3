use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use warpsurf::compat::{self, CompatOptions, CompatReport, GridSpec};
use warpsurf::conformal::{
    check_aux_h, check_aux_ke, check_lemma32, check_lemma33, check_minimal, AuxCheck, ChartKind, ConformalChart,
    ConformalOptions, LemmaResiduals,
};
use warpsurf::fd::FdScheme;
use warpsurf::graphsolve::{
    height_bound, height_verdict, minimal_rigidity_check, shoot_cap, sweep, write_sweep_csv, CapMode, CapProblem,
    HeightVerdict, RigidityReport, SweepRow,
};
use warpsurf::report::ResidualSet;
use warpsurf::GeomError;

use crate::config::*;

/// Flags shared by every command.
pub struct RunOpts {
    pub config_dir: PathBuf,
    pub out: PathBuf,
    pub tol_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn of(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), ConfigError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ConfigError(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Check {
    pub max: f64,
    pub tol: f64,
    pub pass: bool,
}

fn check_against(tols: &BTreeMap<String, f64>, value: impl Fn(&str) -> Option<f64>) -> BTreeMap<String, Check> {
    tols.iter()
        .filter_map(|(eq, &tol)| {
            value(eq).map(|max| {
                (
                    eq.clone(),
                    Check {
                        max,
                        tol,
                        pass: max <= tol,
                    },
                )
            })
        })
        .collect()
}

fn failures(checks: &BTreeMap<String, Check>) -> Vec<String> {
    checks.iter().filter(|(_, c)| !c.pass).map(|(k, _)| k.clone()).collect()
}

const COMPAT_EQS: [&str; 5] = [compat::GAUSS, compat::CODAZZI, compat::EQ35, compat::EQ33, compat::EQ34];

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CompatOutput<'a> {
    command: &'static str,
    config: &'a CompatConfig,
    tolerances: BTreeMap<String, f64>,
    seed: Option<u64>,
    report: Option<CompatReport>,
    random_sample: Option<ResidualSet>,
    checks: BTreeMap<String, Check>,
    failures: Vec<String>,
    error: Option<String>,
    pass: bool,
}

pub fn verify_compat(cfg: &CompatConfig, run: &RunOpts) -> Result<Verdict, ConfigError> {
    let space = cfg.ambient.build()?;
    let mode = cfg.jet.mode()?;
    let imm = cfg.surface.build(&run.config_dir)?.with_jet_mode(mode);
    let default = match cfg.jet {
        JetSpec::Exact => 1e-6,
        JetSpec::FiniteDifference { .. } => 1e-4,
    };
    let tolerances = resolve_tolerances(&COMPAT_EQS, default, &cfg.tolerances, run.tol_scale)?;
    let opts = CompatOptions::for_immersion(&imm);

    let computed = compat::evaluate_grid(&space, &imm, cfg.grid, &opts).and_then(|report| {
        if cfg.random_points == 0 {
            return Ok((report, None));
        }
        let pts = random_points(&imm.domain, cfg.grid.inset, cfg.random_points, run.seed);
        Ok((report, Some(compat::sample_residuals(&space, &imm, &pts, &opts)?)))
    });
    let (report, random_sample, error) = match computed {
        Ok((r, s)) => (Some(r), s, None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    let checks = check_against(&tolerances, |eq| {
        let grid = report.as_ref()?.residuals.max(eq)?;
        let rand = random_sample.as_ref().and_then(|s| s.max(eq)).unwrap_or(0.0);
        Some(grid.max(rand))
    });
    let failures = failures(&checks);
    let pass = error.is_none() && failures.is_empty();
    write_json(
        &run.out.join("compat_report.json"),
        &CompatOutput {
            command: "verify-compat",
            config: cfg,
            tolerances,
            seed: (cfg.random_points > 0).then_some(run.seed),
            report,
            random_sample,
            checks,
            failures,
            error,
            pass,
        },
    )?;
    Ok(Verdict::of(pass))
}

fn random_points(domain: &[[f64; 2]; 2], inset: f64, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = |[a, b]: [f64; 2]| {
        let w = b - a;
        (a + inset * w, b - inset * w)
    };
    let (u0, u1) = span(domain[0]);
    let (v0, v1) = span(domain[1]);
    (0..n)
        .map(|_| (rng.gen_range(u0..=u1), rng.gen_range(v0..=v1)))
        .collect()
}

const LEMMA32_CHECKED: [&str; 7] = ["e10", "e11", "e12", "e13", "e14", "e15", "eq16g"];
const LEMMA33_CHECKED: [&str; 7] = ["he4", "he5", "he6", "he7", "he8", "eqle2", "minimalLaplacian"];
const LEMMA_CLOSED_FORM_TOL: f64 = 1e-5;
const LEMMA_SOLVER_TOL: f64 = 1e-3;

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct LemmaOutput<'a> {
    command: &'static str,
    config: &'a LemmaConfig,
    tolerances: BTreeMap<String, f64>,
    lemmas: Option<LemmaResiduals>,
    aux: Option<AuxCheck>,
    minimal: Option<LemmaResiduals>,
    /// Why the auxiliary Laplacian check did not apply.
    aux_skipped: Option<String>,
    checks: BTreeMap<String, Check>,
    failures: Vec<String>,
    error: Option<String>,
    pass: bool,
}

struct LemmaRun {
    lemmas: LemmaResiduals,
    aux: Option<AuxCheck>,
    minimal: Option<LemmaResiduals>,
    aux_skipped: Option<String>,
}

fn run_lemmas(
    space: &warpsurf::Space,
    imm: &warpsurf::Surface,
    kind: ChartKind,
    grid: &GridSpec,
    opts: &ConformalOptions<f64>,
) -> warpsurf::Result<LemmaRun> {
    let chart = ConformalChart::build(space, imm, kind)?;
    let lemmas = match kind {
        ChartKind::ConformalII => check_lemma32(&chart, grid, opts)?,
        ChartKind::IsothermalI => check_lemma33(&chart, grid, opts)?,
    };
    let mut run = LemmaRun {
        lemmas,
        aux: None,
        minimal: None,
        aux_skipped: None,
    };
    match kind {
        ChartKind::ConformalII => match check_aux_ke(&chart, grid, opts) {
            Ok(a) => run.aux = Some(a),
            Err(GeomError::NotConstantKe(spread)) => {
                run.aux_skipped = Some(format!("K_e not constant (spread {spread:e})"))
            }
            Err(e) => return Err(e),
        },
        ChartKind::IsothermalI => match check_minimal(&chart, grid, opts) {
            Ok(m) => run.minimal = Some(m),
            Err(GeomError::NotMinimal(_)) => match check_aux_h(&chart, grid, opts) {
                Ok(a) => run.aux = Some(a),
                Err(GeomError::NotConstantH(spread)) => {
                    run.aux_skipped = Some(format!("H not constant (spread {spread:e})"))
                }
                Err(e) => return Err(e),
            },
            Err(e) => return Err(e),
        },
    }
    Ok(run)
}

pub fn verify_lemmas(cfg: &LemmaConfig, run: &RunOpts) -> Result<Verdict, ConfigError> {
    let space = cfg.ambient.build()?;
    let imm = cfg.surface.build(&run.config_dir)?;
    if !(cfg.step > 0.0 && cfg.step.is_finite()) {
        return Err(ConfigError(format!("step must be positive, got {}", cfg.step)));
    }
    let default = if cfg.surface.solver_produced() {
        LEMMA_SOLVER_TOL
    } else {
        LEMMA_CLOSED_FORM_TOL
    };
    let names: &[&str] = match cfg.chart {
        ChartSpec::ConformalII => &LEMMA32_CHECKED,
        ChartSpec::IsothermalI => &LEMMA33_CHECKED,
    };
    let tolerances = resolve_tolerances(names, default, &cfg.tolerances, run.tol_scale)?;
    let opts = ConformalOptions {
        scheme: FdScheme::new(cfg.step, true),
        ..ConformalOptions::default()
    };

    let (result, error) = match run_lemmas(&space, &imm, cfg.chart.into(), &cfg.grid, &opts) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let checks = check_against(&tolerances, |eq| {
        let r = result.as_ref()?;
        r.lemmas
            .equations
            .get(eq)
            .or_else(|| r.aux.as_ref()?.residuals.equations.get(eq))
            .or_else(|| r.minimal.as_ref()?.equations.get(eq))
            .map(|s| s.max)
    });
    let failures = failures(&checks);
    let pass = error.is_none() && failures.is_empty();
    let (lemmas, aux, minimal, aux_skipped) = match result {
        Some(r) => (Some(r.lemmas), r.aux, r.minimal, r.aux_skipped),
        None => (None, None, None, None),
    };
    write_json(
        &run.out.join("lemma_report.json"),
        &LemmaOutput {
            command: "verify-lemmas",
            config: cfg,
            tolerances,
            lemmas,
            aux,
            minimal,
            aux_skipped,
            checks,
            failures,
            error,
            pass,
        },
    )?;
    Ok(Verdict::of(pass))
}

const CAP_CURVATURE_TOL: f64 = 1e-6;
const DEFAULT_RIGIDITY_HEIGHTS: [f64; 4] = [0.0, 0.1, 0.5, 1.0];

fn cap_tolerances(overrides: &Tolerances, scale: f64) -> Result<BTreeMap<String, f64>, ConfigError> {
    let mut curvature = overrides.clone();
    let height = curvature.remove("height");
    let mut t = resolve_tolerances(&["curvature"], CAP_CURVATURE_TOL, &curvature, scale)?;
    let slack = height.unwrap_or(warpsurf::graphsolve::HEIGHT_SLACK) * scale;
    if !(slack >= 0.0 && slack.is_finite()) {
        return Err(ConfigError(format!("height tolerance must be >= 0, got {slack}")));
    }
    t.insert("height".into(), slack);
    Ok(t)
}

fn cap_problem(
    mode: CapMode,
    space: warpsurf::Space,
    apex: f64,
    r_max: Option<f64>,
    tolerances: &BTreeMap<String, f64>,
) -> Result<CapProblem<f64>, ConfigError> {
    let mut p = CapProblem::new(mode, space, apex).map_err(|e| ConfigError(e.to_string()))?;
    if let Some(r) = r_max {
        if !(r > 0.0 && r.is_finite()) {
            return Err(ConfigError(format!("rMax must be positive, got {r}")));
        }
        p.r_max = r;
    }
    p.height_slack = tolerances["height"];
    Ok(p)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CapOutput<'a> {
    command: &'static str,
    config: &'a CapConfig,
    tolerances: BTreeMap<String, f64>,
    verdict: Option<HeightVerdict>,
    boundary_radius: Option<f64>,
    curvature_error: Option<f64>,
    error: Option<String>,
    pass: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RigidityOutput<'a> {
    command: &'static str,
    config: &'a CapConfig,
    report: RigidityReport,
    outcome: &'static str,
    pass: bool,
}

pub fn solve_cap(cfg: &CapConfig, run: &RunOpts) -> Result<Verdict, ConfigError> {
    let space = cfg.ambient.build()?;
    let tolerances = cap_tolerances(&cfg.tolerances, run.tol_scale)?;
    let mode = CapMode::from(cfg.cap);
    if mode == CapMode::Minimal {
        if cfg.apex.is_some() {
            return Err(ConfigError("minimal mode takes apexHeights, not apex".into()));
        }
        let heights = cfg
            .apex_heights
            .clone()
            .unwrap_or_else(|| DEFAULT_RIGIDITY_HEIGHTS.to_vec());
        if heights.is_empty() || heights.iter().any(|h| !(*h >= 0.0 && h.is_finite())) {
            return Err(ConfigError(
                "apexHeights must be a non-empty list of heights >= 0".into(),
            ));
        }
        let report = minimal_rigidity_check(&space, &heights).map_err(|e| ConfigError(e.to_string()))?;
        let outcome = match (report.dichotomy_holds, report.expected.as_str()) {
            (true, "none") => "no such minimal surface",
            (true, _) => "only the slice",
            (false, _) => "dichotomy violated",
        };
        let pass = report.dichotomy_holds;
        write_json(
            &run.out.join("rigidity.json"),
            &RigidityOutput {
                command: "solve-cap",
                config: cfg,
                report,
                outcome,
                pass,
            },
        )?;
        return Ok(Verdict::of(pass));
    }
    if cfg.apex_heights.is_some() {
        return Err(ConfigError(
            "apexHeights is for minimal mode; use apex or the sweep command".into(),
        ));
    }
    let apex = cfg.apex.ok_or_else(|| ConfigError("apex is required".into()))?;
    let mut problem = cap_problem(mode, space, apex, cfg.r_max, &tolerances)?;
    if let Some(n) = cfg.nodes {
        if n < 8 {
            return Err(ConfigError("nodes must be at least 8".into()));
        }
        problem.nodes = n;
    }
    let mut out = CapOutput {
        command: "solve-cap",
        config: cfg,
        tolerances: tolerances.clone(),
        verdict: None,
        boundary_radius: None,
        curvature_error: None,
        error: None,
        pass: false,
    };
    match shoot_cap(&problem) {
        Ok(profile) => {
            let path = run.out.join("profile.csv");
            let f = File::create(&path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            profile
                .write_csv(BufWriter::new(f))
                .map_err(|e| ConfigError(e.to_string()))?;
            let v = height_verdict(&profile, &problem);
            let cerr = profile.curvature_error();
            out.pass = v.pass && cerr <= tolerances["curvature"];
            out.verdict = Some(v);
            out.boundary_radius = Some(profile.boundary_radius);
            out.curvature_error = Some(cerr);
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    let pass = out.pass;
    write_json(&run.out.join("verdict.json"), &out)?;
    Ok(Verdict::of(pass))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SweepSummary<'a> {
    command: &'static str,
    config: &'a SweepConfig,
    tolerances: BTreeMap<String, f64>,
    rows: usize,
    caps_found: usize,
    failures: Vec<SweepRow>,
    pass: bool,
}

pub fn run_sweep(cfg: &SweepConfig, run: &RunOpts) -> Result<Verdict, ConfigError> {
    let space = cfg.ambient.build()?;
    let tolerances = cap_tolerances(&cfg.tolerances, run.tol_scale)?;
    if cfg.values.is_empty() {
        return Err(ConfigError("empty sweep: no values".into()));
    }
    let heights_for = |mode: CapMode| -> Result<Vec<f64>, ConfigError> {
        let hs = match (&cfg.apex_heights, &cfg.apex_fractions) {
            (Some(h), None) => h.clone(),
            (None, Some(fr)) => {
                let bound = height_bound(&space.warp, mode).unwrap_or(f64::NAN);
                fr.iter().map(|x| x * bound).collect()
            }
            _ => return Err(ConfigError("give exactly one of apexHeights, apexFractions".into())),
        };
        if hs.is_empty() {
            return Err(ConfigError("empty sweep: no apex heights".into()));
        }
        if hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(ConfigError(format!("apex heights must be positive: {hs:?}")));
        }
        Ok(hs)
    };
    let mut rows = Vec::new();
    for &value in &cfg.values {
        let mode = cfg.mode.cap(value);
        let heights = heights_for(mode)?;
        let template = cap_problem(mode, space, heights[0], cfg.r_max, &tolerances)?;
        rows.extend(sweep(&template, &heights).map_err(|e| ConfigError(e.to_string()))?);
    }
    let path = run.out.join("sweep.csv");
    let f = File::create(&path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    write_sweep_csv(&rows, BufWriter::new(f)).map_err(|e| ConfigError(e.to_string()))?;

    let bad = |r: &SweepRow| r.pass == Some(false) || r.curvature_error.is_some_and(|c| c > tolerances["curvature"]);
    let failures: Vec<SweepRow> = rows.iter().filter(|r| bad(r)).cloned().collect();
    let pass = failures.is_empty();
    write_json(
        &run.out.join("sweep_summary.json"),
        &SweepSummary {
            command: "sweep",
            config: cfg,
            tolerances,
            rows: rows.len(),
            caps_found: rows.iter().filter(|r| r.pass.is_some()).count(),
            failures,
            pass,
        },
    )?;
    Ok(Verdict::of(pass))
}
