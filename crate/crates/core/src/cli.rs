//! Command-line front end: `simulate`, `sweep`, `fit`, `bin` and `oracle-check`.
//!
//! Set `MASER_WORKERS` to limit the number of worker threads used by `sweep`
//! and `fit`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::config::{ConfigError, CouplingSource, RunConfig};
use crate::coupling::{gaussian_histogram, histogram_from_fieldmap, load_fieldmap, CouplingError, CouplingHistogram};
use crate::experiments::{
    fit, simulate, thermal_floor, threshold_from_curve, threshold_sweep, write_sweep_csv, ExperimentError,
    ExperimentTrace, PumpConfig,
};
use crate::oracle::{self, OracleError};

pub const WORKERS_ENV: &str = "MASER_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "maser", version, about = "Cumulant simulation of an optically pumped solid-state maser")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the output power over the configured duration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Result CSV; overrides [output] results.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximum output against pump power for one or more coupling distributions.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the emitter number and dephasing rate to a measured trace.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Trace CSV (time_s, power); overrides [fit] trace.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Trace power column is in dBm.
        #[arg(long)]
        dbm: bool,
    },
    /// Bin a field-map CSV into a coupling histogram.
    Bin {
        #[arg(long)]
        fieldmap: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        #[arg(long = "n-total")]
        n_total: f64,
        /// Mode frequency (Hz).
        #[arg(long = "f-mode", default_value_t = 1.4495e9)]
        f_mode: f64,
        /// Histogram CSV; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the exact density-matrix solver and compare it with the cumulant model.
    OracleCheck {
        #[arg(long, value_enum, default_value_t = Preset::VacuumRabi)]
        preset: Preset,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// One lossless resonant emitter against sin^2(g t).
    VacuumRabi,
    /// Two weakly coupled emitters in a lossy cavity.
    Overdamped,
    /// Pumped emitters with zero coupling.
    Uncoupled,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Input(_) => 4,
            CliError::Numerical(_) => 5,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Io(e) => CliError::Io(e.to_string()),
            ExperimentError::Csv(e) => CliError::Input(e.to_string()),
            ExperimentError::InvalidTrace(_) | ExperimentError::InvalidWindow(..) | ExperimentError::NonPositive { .. } => {
                CliError::Input(e.to_string())
            }
            ExperimentError::Coupling(e) => e.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<CouplingError> for CliError {
    fn from(e: CouplingError) -> Self {
        match e {
            CouplingError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 64;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    configure_workers();
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn configure_workers() {
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|n| *n > 0) {
        // Fails only if the pool was already built, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Simulate { config, out: path } => cmd_simulate(&RunConfig::load(config)?, path, out),
        Command::Sweep { config, out: path } => cmd_sweep(&RunConfig::load(config)?, path, out),
        Command::Fit { config, trace, dbm } => cmd_fit(&RunConfig::load(config)?, trace, dbm, out),
        Command::Bin { fieldmap, bins, n_total, f_mode, out: path } => {
            let samples = load_fieldmap(&fieldmap)?;
            let hist = histogram_from_fieldmap(&samples, f_mode, bins, n_total)?;
            match path {
                Some(p) => {
                    hist.save(&p)?;
                    say(out, format_args!(
                        "{} bins, N = {:e}, mean g = {:.6} /s -> {}",
                        hist.bins(),
                        hist.total_population(),
                        hist.mean_coupling(),
                        p.display()
                    ))
                }
                None => hist.write_csv(&mut *out).map_err(CliError::from),
            }
        }
        Command::OracleCheck { preset } => cmd_oracle(preset, out),
    }
}

fn say(out: &mut dyn Write, args: std::fmt::Arguments) -> Result<(), CliError> {
    writeln!(out, "{args}").map_err(|e| CliError::Io(e.to_string()))
}

fn pump_of(cfg: &RunConfig) -> PumpConfig {
    cfg.pump.unwrap_or_else(|| PumpConfig::pentacene(0.0))
}

fn cmd_simulate(cfg: &RunConfig, path: Option<PathBuf>, out: &mut dyn Write) -> Result<(), CliError> {
    let params = cfg.model_params()?;
    let result = simulate(&params, &pump_of(cfg), &cfg.integrator_config(), cfg.integrator.duration)?;
    if let Some(p) = path.or_else(|| cfg.output.results.clone()) {
        result.save(&p).map_err(|e| io_err(&p, e))?;
    }
    say(out, format_args!(
        "steady-state power {:.6e} W, peak {:.6e} W, final photon number {:.6e}, {} steps",
        result.final_power(),
        result.max_power(),
        result.photon_number.last().copied().unwrap_or(0.0),
        result.stats.accepted
    ))
}

fn sweep_distributions(cfg: &RunConfig) -> Result<Vec<(String, CouplingHistogram)>, CliError> {
    let mut list = vec![("configured".to_string(), cfg.histogram()?)];
    if !cfg.sweep.gaussian_sigmas.is_empty() {
        let CouplingSource::Gaussian { mean, bins, n_total, span, .. } = cfg.coupling else {
            return Err(CliError::Input("gaussian_sigmas needs a Gaussian coupling source".into()));
        };
        list.clear();
        for &sigma in &cfg.sweep.gaussian_sigmas {
            list.push((format!("sigma={sigma}"), gaussian_histogram(mean, sigma, bins, n_total, span)?));
        }
    }
    Ok(list)
}

fn cmd_sweep(cfg: &RunConfig, path: Option<PathBuf>, out: &mut dyn Write) -> Result<(), CliError> {
    if cfg.sweep.pump_powers.is_empty() {
        return Err(CliError::Config(ConfigError::Missing { section: "sweep".into(), key: "pump_powers_w".into() }));
    }
    let params = cfg.model_params()?;
    let distributions = sweep_distributions(cfg)?;
    let hists: Vec<CouplingHistogram> = distributions.iter().map(|d| d.1.clone()).collect();
    let curves = threshold_sweep(&hists, &cfg.sweep.pump_powers, &params, &pump_of(cfg), &cfg.integrator_config(), cfg.sweep.window)?;
    if let Some(p) = path.or_else(|| cfg.output.sweep.clone()) {
        let file = std::fs::File::create(&p).map_err(|e| io_err(&p, e))?;
        write_sweep_csv(&curves, file)?;
    }
    let floor = thermal_floor(&params);
    say(out, format_args!("distribution  threshold_W  max_power_W"))?;
    for (curve, (name, _)) in curves.iter().zip(&distributions) {
        let threshold = threshold_from_curve(curve, floor).map_or("none".to_string(), |p| format!("{p:e}"));
        let top = curve.max_power.iter().copied().fold(0.0, f64::max);
        say(out, format_args!("{name}  {threshold}  {top:.6e}"))?;
    }
    Ok(())
}

fn cmd_fit(cfg: &RunConfig, trace: Option<PathBuf>, dbm: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let path = trace
        .or_else(|| cfg.fit.trace.clone())
        .ok_or_else(|| CliError::Config(ConfigError::Missing { section: "fit".into(), key: "trace".into() }))?;
    let data = ExperimentTrace::load(&path, dbm || cfg.fit.trace_dbm).map_err(|e| match e {
        ExperimentError::Io(e) => io_err(&path, e),
        other => other.into(),
    })?;
    let params = cfg.model_params()?;
    let xi = crate::experiments::pump_rate_or_zero(&pump_of(cfg))?;
    let result = fit(&data, &params.with_pump(xi), cfg.fit.window, &cfg.fit_options())?;
    say(out, format_args!(
        "N = {:.6e}, chi = {:.6e} /s, R2 = {:.6}{}",
        result.n_fit,
        result.chi_fit,
        result.r_squared,
        if result.converged { "" } else { " (not converged)" }
    ))
}

fn cmd_oracle(preset: Preset, out: &mut dyn Write) -> Result<(), CliError> {
    match preset {
        Preset::VacuumRabi => {
            let report = oracle::vacuum_rabi_check(1.0, 3.0, 301, &[0.1, 0.5, 1.0])?;
            say(out, format_args!("oracle vs sin^2(gt) over gt in [0, 3]: max deviation {:.3e}", report.max_exact_deviation))?;
            for (t, exact, approx) in &report.probes {
                say(out, format_args!("gt = {t}: oracle n = {exact:.12}, cumulant n = {approx:.12}, deviation {:.3e}", (exact - approx).abs()))?;
            }
        }
        Preset::Overdamped | Preset::Uncoupled => {
            let (config, initial, horizon) = if preset == Preset::Overdamped {
                oracle::overdamped_preset()
            } else {
                oracle::uncoupled_preset()
            };
            let report = oracle::compare_with_cumulant(&config, &initial, horizon, 101, 1e-3, &oracle::oracle_integrator())?;
            say(out, format_args!(
                "max deviation over {horizon}: n {:.3e}, populations {:.3e}, field-spin {:.3e}, spin-spin {:.3e}",
                report.photon_number, report.populations, report.field_spin, report.spin_spin
            ))?;
        }
    }
    Ok(())
}
