//! `warpsurf`: compatibility checks, conformal-chart identities and cap solving from JSON configs.
//!
//! Exit codes: 0 all checks pass, 1 a residual or verdict fails, 2 bad config or usage.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use commands::{RunOpts, Verdict};
use config::ConfigError;

#[derive(Debug, Parser)]
#[command(name = "warpsurf", version, about = "Surfaces in warped products R x_f M^2(k)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Multiplies every tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
    /// Seed for randomized sample points.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Gauss, Codazzi and structure-equation residuals of a surface.
    VerifyCompat,
    /// Conformal-chart identities (`ConformalII` or `IsothermalI` equation set).
    VerifyLemmas,
    /// Shoot one cap and check its height bound, or run the minimal rigidity check.
    SolveCap,
    /// Table of caps over targets and apex heights.
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::VerifyCompat => "verify-compat",
            Command::VerifyLemmas => "verify-lemmas",
            Command::SolveCap => "solve-cap",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a Path,
    tol_scale: f64,
    seed: u64,
    unix_time: u64,
}

fn run(cli: &Cli) -> Result<Verdict, ConfigError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| ConfigError("--config is required".into()))?;
    if !(cli.tol_scale > 0.0 && cli.tol_scale.is_finite()) {
        return Err(ConfigError(format!(
            "--tol-scale must be positive, got {}",
            cli.tol_scale
        )));
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| ConfigError(format!("{}: {e}", cli.out.display())))?;
    let opts = RunOpts {
        config_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        out: cli.out.clone(),
        tol_scale: cli.tol_scale,
        seed: cli.seed,
    };
    let verdict = match cli.command {
        Command::VerifyCompat => commands::verify_compat(&config::load(path)?, &opts)?,
        Command::VerifyLemmas => commands::verify_lemmas(&config::load(path)?, &opts)?,
        Command::SolveCap => commands::solve_cap(&config::load(path)?, &opts)?,
        Command::Sweep => commands::run_sweep(&config::load(path)?, &opts)?,
    };
    let unix_time = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    commands::write_json(
        &cli.out.join("metadata.json"),
        &Metadata {
            command: cli.command.name(),
            version: env!("CARGO_PKG_VERSION"),
            config: path,
            tol_scale: cli.tol_scale,
            seed: cli.seed,
            unix_time,
        },
    )?;
    Ok(verdict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => {
            eprintln!(
                "{}: checks failed; see the report in {}",
                cli.command.name(),
                cli.out.display()
            );
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
