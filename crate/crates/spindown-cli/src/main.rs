//! Command-line front end: scenario files in, result tables out.
//!
//! Subcommands: `transform` pushes an explicit state through every chart and
//! reports round-trip residuals; `find-cc` locates rest shapes and their
//! spectra; `spin` runs a rescaled-flow experiment and certifies the frame
//! rotation; `verify` runs the built-in verification battery.
//!
//! Exit codes: 0 success; 1 verification failures; 2 scenario or schema
//! error; 3 numerical-domain error (a chart guard or floor tripped);
//! 4 non-convergence (an iteration or integration gave up).

mod cmd_find_cc;
mod cmd_spin;
mod cmd_transform;
mod cmd_verify;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "spindown",
    version,
    about = "Collision coordinate charts and frame-rotation certificates for the spatial N-body problem"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Push a state through every chart and report round-trip residuals.
    Transform(CommonArgs),
    /// Locate rest shapes of the rescaled flow and report their spectra.
    #[command(name = "find-cc")]
    FindCc(CommonArgs),
    /// Integrate a rescaled-flow experiment and certify the frame rotation.
    Spin(CommonArgs),
    /// Run the verification battery and print its pass/fail table.
    Verify(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (TOML, schema "spindown/1").
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Built-in scenario: equilateral | collinear | homothetic |
    /// stable-seed | survey | tetrahedron.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Directory for result files (default: the scenario's out_dir, else ".").
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the command's main tolerance (round-trip residuals for
    /// transform, gradient threshold for find-cc, rotation budget in radians
    /// for spin).
    #[arg(long, value_name = "FLOAT")]
    tol: Option<f64>,
    /// Seed for randomized work (survey starts, verification draws).
    #[arg(long, value_name = "INT", default_value_t = 0x5EED_2026)]
    seed: u64,
}

/// Process-level failure with its exit code.
pub enum AppError {
    /// Malformed scenario, unknown preset, or an output file that could not
    /// be written.
    Schema(String),
    /// A chart guard or domain restriction tripped.
    Domain(String),
    /// An iteration or integration did not converge.
    Convergence(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Schema(_) => 2,
            AppError::Domain(_) => 3,
            AppError::Convergence(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Schema(m) | AppError::Domain(m) | AppError::Convergence(m) => m,
        }
    }
}

impl From<spindown::Error> for AppError {
    fn from(e: spindown::Error) -> Self {
        if e.is_convergence() {
            AppError::Convergence(e.to_string())
        } else {
            AppError::Domain(e.to_string())
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Schema(format!("output error: {e}"))
    }
}

fn load_scenario(args: &CommonArgs) -> Result<Scenario, AppError> {
    match (&args.scenario, &args.preset) {
        (Some(_), Some(_)) => Err(AppError::Schema(
            "pass either --scenario or --preset, not both".into(),
        )),
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                AppError::Schema(format!("cannot read scenario {}: {e}", path.display()))
            })?;
            scenario::parse(&text)
        }
        (None, Some(name)) => scenario::preset(name).ok_or_else(|| {
            AppError::Schema(format!(
                "unknown preset '{name}': expected equilateral, collinear, homothetic, \
                 stable-seed, survey, or tetrahedron"
            ))
        }),
        (None, None) => Err(AppError::Schema(
            "a scenario is required: pass --scenario <path> or --preset <name>".into(),
        )),
    }
}

fn out_dir(args: &CommonArgs, sc: &Scenario) -> PathBuf {
    args.out
        .clone()
        .or_else(|| sc.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn dispatch(cli: &Cli) -> Result<u8, AppError> {
    match &cli.command {
        Command::Transform(args) => {
            let sc = load_scenario(args)?;
            cmd_transform::run(&sc, &out_dir(args, &sc), args.tol.unwrap_or(1e-10))?;
            Ok(0)
        }
        Command::FindCc(args) => {
            let sc = load_scenario(args)?;
            cmd_find_cc::run(&sc, &out_dir(args, &sc), args.tol.unwrap_or(1e-10), args.seed)?;
            Ok(0)
        }
        Command::Spin(args) => {
            let sc = load_scenario(args)?;
            cmd_spin::run(&sc, &out_dir(args, &sc), args.tol.unwrap_or(1e-6))?;
            Ok(0)
        }
        Command::Verify(args) => {
            let out = args.out.clone();
            let failures = cmd_verify::run(out.as_deref(), args.seed)?;
            Ok(if failures == 0 { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
