//! Command-line interface: config-driven, deterministic, script-friendly.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 quadrature or
//! numerical non-convergence, 4 completion failure under `--require-unitary`.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::mixer::{self, MixerError};
use crate::overlap::{self, OverlapError};
use crate::quad::QuadratureSettings;
use crate::spectra::{ModeError, RedshiftFactor, SpectralMode};
use crate::validity::{self, ScanError};

use config::{Config, ConfigError, OutputFormat};
use output::*;

#[derive(Parser)]
#[command(
    name = "qredshift",
    version,
    about = "Spectral overlap, mode mixing, and validity analysis for photonic wave packets under frequency rescaling",
    term_width = 100
)]
struct Cli {
    /// Path to the TOML configuration defining modes and grids
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override the quadrature relative tolerance from the config
    #[arg(long, global = true, value_name = "TOL")]
    rel_tol: Option<f64>,
    /// Override the quadrature absolute tolerance from the config
    #[arg(long, global = true, value_name = "TOL")]
    abs_tol: Option<f64>,
    /// Write output to this file instead of stdout
    #[arg(long, global = true, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Output format; csv applies to scan and params only
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads for scan and params grids (deterministic output
    /// regardless of count)
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    workers: usize,
    /// Interpretation of user-supplied redshift factors: receiver-side chi as
    /// given, or the return direction chi -> 1/chi
    #[arg(long, global = true, value_enum, default_value_t = DirectionArg::AliceToBob)]
    direction: DirectionArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    /// chi as supplied (sender Alice, receiver Bob)
    AliceToBob,
    /// invert every supplied chi (view the same link from Bob)
    BobToAlice,
}

/// Exactly one of --chi / --chi-squared.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct ChiRequired {
    /// Redshift factor chi > 0
    #[arg(long, value_name = "CHI")]
    chi: Option<f64>,
    /// chi squared = 1 + z
    #[arg(long, value_name = "CHI2")]
    chi_squared: Option<f64>,
}

/// At most one of --chi / --chi-squared; the config may supply the value.
#[derive(Args)]
#[group(multiple = false)]
struct ChiOptional {
    /// Redshift factor chi > 0 (falls back to [params] chi in the config)
    #[arg(long, value_name = "CHI")]
    chi: Option<f64>,
    /// chi squared = 1 + z
    #[arg(long, value_name = "CHI2")]
    chi_squared: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Overlap of the first configured mode with its redshifted image
    Overlap(ChiRequired),
    /// Spectral functionals K, kappa, mu^2 of the first configured mode
    Functionals,
    /// Mixing matrix over all configured modes plus one environment mode
    Matrix(MatrixArgs),
    /// Validity measures over the chi grid of the config's [scan] section
    Scan(ScanArgs),
    /// Bisect for the validity boundary chi* in the config's [boundary] bracket
    Boundary(BoundaryArgs),
    /// Residual map over the two-mode parameter grid of the [params] section
    Params(ParamsArgs),
    /// Mean-frequency and energy bookkeeping across the transform
    Freq(ChiRequired),
    /// Linear-phase correction maximizing the overlap of the first mode
    OptimizePhase(ChiRequired),
}

#[derive(Args)]
struct MatrixArgs {
    #[command(flatten)]
    chi: ChiRequired,
    /// Rank-1 residual tolerance for the completion decision (default: the
    /// config threshold)
    #[arg(long, value_name = "TOL")]
    tolerance: Option<f64>,
    /// Exit with code 4 when one environment mode cannot restore unitarity
    #[arg(long)]
    require_unitary: bool,
}

#[derive(Args)]
struct ScanArgs {
    /// Rank-1 residual tolerance used for diagnostics (default: the config
    /// threshold)
    #[arg(long, value_name = "TOL")]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct BoundaryArgs {
    /// Residual threshold defining the boundary (default: the config
    /// threshold)
    #[arg(long, value_name = "R")]
    threshold: Option<f64>,
}

#[derive(Args)]
struct ParamsArgs {
    #[command(flatten)]
    chi: ChiOptional,
    /// Pass/fail threshold on the residual (default: the config threshold)
    #[arg(long, value_name = "R")]
    threshold: Option<f64>,
}

enum CliFailure {
    Io(String),
    Config(String),
    Numerical(String),
    Completion(String),
}

impl CliFailure {
    fn code(&self) -> i32 {
        match self {
            CliFailure::Io(_) => 1,
            CliFailure::Config(_) => 2,
            CliFailure::Numerical(_) => 3,
            CliFailure::Completion(_) => 4,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliFailure::Io(m)
            | CliFailure::Config(m)
            | CliFailure::Numerical(m)
            | CliFailure::Completion(m) => m,
        }
    }
}

impl From<ConfigError> for CliFailure {
    fn from(e: ConfigError) -> Self {
        CliFailure::Config(e.to_string())
    }
}

impl From<ModeError> for CliFailure {
    fn from(e: ModeError) -> Self {
        match e {
            ModeError::QuadratureFailure { .. } => CliFailure::Numerical(e.to_string()),
            _ => CliFailure::Config(e.to_string()),
        }
    }
}

impl From<OverlapError> for CliFailure {
    fn from(e: OverlapError) -> Self {
        match e {
            OverlapError::Mode(m) => m.into(),
            OverlapError::Parameter(_) => CliFailure::Config(e.to_string()),
            OverlapError::QuadratureFailure { .. }
            | OverlapError::NonFiniteIntegrand { .. }
            | OverlapError::OptimizationNotConverged { .. } => CliFailure::Numerical(e.to_string()),
        }
    }
}

impl From<MixerError> for CliFailure {
    fn from(e: MixerError) -> Self {
        match e {
            MixerError::Mode(m) => m.into(),
            MixerError::Overlap(o) => o.into(),
            MixerError::QuadratureFailure { .. } | MixerError::NonFiniteIntegrand { .. } => {
                CliFailure::Numerical(e.to_string())
            }
            MixerError::CompletionFailed { .. } => CliFailure::Completion(e.to_string()),
            MixerError::LinearDependence { .. }
            | MixerError::IllConditioned { .. }
            | MixerError::Parameter(_) => CliFailure::Config(e.to_string()),
        }
    }
}

impl From<ScanError> for CliFailure {
    fn from(e: ScanError) -> Self {
        match e {
            ScanError::Mode(m) => m.into(),
            ScanError::Mixer(m) => m.into(),
            ScanError::BracketInvalid { .. } | ScanError::Parameter(_) => {
                CliFailure::Config(e.to_string())
            }
        }
    }
}

pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

fn resolve_chi(
    chi: Option<f64>,
    chi_squared: Option<f64>,
    direction: DirectionArg,
) -> Result<RedshiftFactor, CliFailure> {
    let r = match (chi, chi_squared) {
        (Some(c), None) => RedshiftFactor::new(c),
        (None, Some(c2)) => RedshiftFactor::from_chi_squared(c2),
        _ => {
            return Err(CliFailure::Config(
                "exactly one of --chi and --chi-squared is required".into(),
            ))
        }
    }
    .map_err(|e| CliFailure::Config(e.to_string()))?;
    Ok(match direction {
        DirectionArg::AliceToBob => r,
        DirectionArg::BobToAlice => r.inverse(),
    })
}

fn first_mode(config: &Config) -> Result<&SpectralMode, CliFailure> {
    config
        .modes
        .first()
        .ok_or_else(|| CliFailure::Config("config defines no modes".into()))
}

fn run(cli: Cli) -> Result<i32, CliFailure> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliFailure::Config("--config <FILE> is required".into()))?;
    let config = config::parse_config(config_path)?;

    let mut settings: QuadratureSettings = config.settings;
    if let Some(v) = cli.rel_tol {
        if !(v > 0.0) || !v.is_finite() {
            return Err(CliFailure::Config(format!(
                "--rel-tol must be finite and positive, got {v}"
            )));
        }
        settings.rel_tol = v;
    }
    if let Some(v) = cli.abs_tol {
        if !(v > 0.0) || !v.is_finite() {
            return Err(CliFailure::Config(format!(
                "--abs-tol must be finite and positive, got {v}"
            )));
        }
        settings.abs_tol = v;
    }

    let workers = if std::env::var("QREDSHIFT_NO_PARALLEL").as_deref() == Ok("1") {
        1
    } else {
        cli.workers.max(1)
    };

    let format = cli
        .format
        .map(|f| match f {
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Csv => OutputFormat::Csv,
        })
        .or(config.output_format)
        .unwrap_or(OutputFormat::Json);
    if format == OutputFormat::Csv && !matches!(cli.command, Command::Scan(_) | Command::Params(_))
    {
        return Err(CliFailure::Config(
            "csv output is only available for the scan and params subcommands".into(),
        ));
    }

    let direction = cli.direction;
    let digest = config.digest.clone();
    let mut exit_code = 0;

    let bytes = match &cli.command {
        Command::Overlap(chi_args) => {
            let chi = resolve_chi(chi_args.chi, chi_args.chi_squared, direction)?;
            let r = overlap::overlap_exact(first_mode(&config)?, chi, &settings)?;
            output::to_json(&output::document(
                "overlap",
                &digest,
                OverlapPayload::new(&r),
            ))
        }
        Command::Functionals => {
            let f = overlap::functionals(first_mode(&config)?, &settings)?;
            output::to_json(&output::document(
                "functionals",
                &digest,
                FunctionalsPayload::new(&f),
            ))
        }
        Command::Matrix(args) => {
            let chi = resolve_chi(args.chi.chi, args.chi.chi_squared, direction)?;
            if config.modes.is_empty() {
                return Err(CliFailure::Config("config defines no modes".into()));
            }
            let tolerance = args.tolerance.unwrap_or(config.threshold);
            let basis = mixer::gram_schmidt(config.modes.clone(), &settings)?;
            let a = basis.overlap_block(chi, &settings)?;
            let (report, matrix) = mixer::analyze_block(&a, chi, tolerance)?;
            let completed = report.rank1_residual <= tolerance;
            if !completed && args.require_unitary {
                exit_code = 4;
            }
            output::to_json(&output::document(
                "matrix",
                &digest,
                MatrixPayload::new(chi, tolerance, &report, &matrix, completed),
            ))
        }
        Command::Scan(args) => {
            let mut grid = config
                .scan_grid
                .clone()
                .ok_or_else(|| CliFailure::Config("config has no [scan] section".into()))?;
            if direction == DirectionArg::BobToAlice {
                grid = grid.iter().rev().map(|c| 1.0 / c).collect();
            }
            if config.modes.is_empty() {
                return Err(CliFailure::Config("config defines no modes".into()));
            }
            let tolerance = args.tolerance.unwrap_or(config.threshold);
            let basis = mixer::gram_schmidt(config.modes.clone(), &settings)?;
            let records = validity::scan_chi(&basis, &grid, tolerance, workers, &settings)?;
            match format {
                OutputFormat::Csv => validity::scan_csv(&records),
                OutputFormat::Json => output::to_json(&output::document(
                    "scan",
                    &digest,
                    ScanPayload::new(tolerance, &records),
                )),
            }
        }
        Command::Boundary(args) => {
            let bracket = config
                .boundary_bracket
                .ok_or_else(|| CliFailure::Config("config has no [boundary] section".into()))?;
            if config.modes.is_empty() {
                return Err(CliFailure::Config("config defines no modes".into()));
            }
            let bracket = match direction {
                DirectionArg::AliceToBob => bracket,
                DirectionArg::BobToAlice => (1.0 / bracket.1, 1.0 / bracket.0),
            };
            let threshold = args.threshold.unwrap_or(config.threshold);
            let basis = mixer::gram_schmidt(config.modes.clone(), &settings)?;
            let b = validity::find_boundary(&basis, threshold, bracket, &settings)?;
            output::to_json(&output::document(
                "boundary",
                &digest,
                BoundaryPayload::new(&b),
            ))
        }
        Command::Params(args) => {
            let pc = config
                .params
                .as_ref()
                .ok_or_else(|| CliFailure::Config("config has no [params] section".into()))?;
            let chi = match (args.chi.chi, args.chi.chi_squared, pc.chi) {
                (None, None, Some(c)) => resolve_chi(Some(c), None, direction)?,
                (None, None, None) => {
                    return Err(CliFailure::Config(
                        "params needs --chi/--chi-squared or a chi in [params]".into(),
                    ))
                }
                (c, c2, _) => resolve_chi(c, c2, direction)?,
            };
            let threshold = args.threshold.unwrap_or(config.threshold);
            let records = validity::scan_parameters(
                pc.template,
                &pc.grid,
                chi,
                threshold,
                workers,
                &settings,
            )?;
            match format {
                OutputFormat::Csv => validity::params_csv(&records),
                OutputFormat::Json => output::to_json(&output::document(
                    "params",
                    &digest,
                    ParamsPayload::new(chi, threshold, &records),
                )),
            }
        }
        Command::Freq(chi_args) => {
            let chi = resolve_chi(chi_args.chi, chi_args.chi_squared, direction)?;
            let r = validity::frequency_energy_report(first_mode(&config)?, chi, &settings)?;
            output::to_json(&output::document(
                "freq",
                &digest,
                FreqPayload::new(chi, &r),
            ))
        }
        Command::OptimizePhase(chi_args) => {
            let chi = resolve_chi(chi_args.chi, chi_args.chi_squared, direction)?;
            let p = overlap::optimize_linear_phase(first_mode(&config)?, chi, &settings)?;
            output::to_json(&output::document(
                "optimize-phase",
                &digest,
                OptimizePayload::new(chi, &p),
            ))
        }
    };

    let target = cli.output.as_ref().or(config.output_path.as_ref());
    match target {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| CliFailure::Io(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{bytes}"),
    }
    Ok(exit_code)
}
