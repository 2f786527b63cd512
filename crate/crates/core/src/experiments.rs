//! Maser scenarios: pump and power conversions, full simulations, threshold
//! sweeps over coupling distributions, and two-parameter fits to a trace.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::constants::{BOLTZMANN, PLANCK, SPEED_OF_LIGHT};
use crate::coupling::{CouplingError, CouplingHistogram};
use crate::cumulant::{observables, CumulantError, CumulantModel, CumulantState, ModelParams};
use crate::ode::{integrate, integrate_observed, linspace, IntegratorConfig, OdeError, StepStats};
use crate::optimize::{minimize_with_restarts, NelderMeadOptions};

/// Default fit window (s).
pub const DEFAULT_FIT_WINDOW: (f64, f64) = (0.01e-3, 0.20e-3);
/// Default number of output samples when the integrator config requests none.
pub const DEFAULT_OUTPUT_POINTS: usize = 1001;
/// Threshold criterion: max output over the window must exceed this multiple of the thermal floor.
pub const THRESHOLD_FLOOR_MULTIPLE: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("invalid window ({0}, {1})")]
    InvalidWindow(f64, f64),
    #[error(transparent)]
    Cumulant(#[from] CumulantError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn thermal_photons(f: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    1.0 / (PLANCK * f / (BOLTZMANN * temperature)).exp_m1()
}

/// Optical pump: power (W), wavelength (m), absorption cross-section (m^2), beam area (m^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpConfig {
    pub power: f64,
    pub wavelength: f64,
    pub cross_section: f64,
    pub beam_area: f64,
}

impl PumpConfig {
    /// 592 nm pump with a 2e-21 m^2 cross-section on a 1.9e-6 m^2 spot.
    pub fn pentacene(power: f64) -> Self {
        Self { power, wavelength: 592e-9, cross_section: 2e-21, beam_area: 1.9e-6 }
    }

    pub fn with_power(self, power: f64) -> Self {
        Self { power, ..self }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        for (name, value) in [
            ("pump power", self.power),
            ("pump wavelength", self.wavelength),
            ("absorption cross-section", self.cross_section),
            ("beam area", self.beam_area),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ExperimentError::NonPositive { name, value });
            }
        }
        Ok(())
    }
}

/// Pump photons absorbed per molecule per second.
pub fn pump_rate(cfg: &PumpConfig) -> Result<f64, ExperimentError> {
    cfg.validate()?;
    Ok(cfg.wavelength * cfg.cross_section * cfg.power / (PLANCK * SPEED_OF_LIGHT * cfg.beam_area))
}

/// Like [`pump_rate`] but maps zero power to a zero rate.
pub fn pump_rate_or_zero(cfg: &PumpConfig) -> Result<f64, ExperimentError> {
    if cfg.power == 0.0 {
        PumpConfig { power: 1.0, ..*cfg }.validate()?;
        return Ok(0.0);
    }
    pump_rate(cfg)
}

/// Output power (W) for `n` cavity photons with output coupling `k`.
pub fn maser_power(n: f64, f: f64, kappa: f64, k: f64) -> f64 {
    PLANCK * f * n * kappa * k / (1.0 + k)
}

/// Output power of the unpumped cavity in thermal equilibrium.
pub fn thermal_floor(params: &ModelParams) -> f64 {
    let c = &params.cavity;
    maser_power(c.thermal_photons(), c.f_mode, c.kappa, c.output_coupling)
}

/// Time series from [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    pub photon_number: Vec<f64>,
    pub power: Vec<f64>,
    /// `inversion[t][j]`.
    pub inversion: Vec<Vec<f64>>,
    pub states: Vec<CumulantState>,
    pub stats: StepStats,
    /// Largest |sum_l p[j][l] - 1| over samples and bins.
    pub max_trace_error: f64,
}

impl SimulationResult {
    pub fn max_power(&self) -> f64 {
        self.power.iter().copied().fold(0.0, f64::max)
    }

    pub fn final_power(&self) -> f64 {
        self.power.last().copied().unwrap_or(0.0)
    }

    /// Writes `t_s, photon_number, power_W, inversion_0, ...`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(writer);
        let bins = self.inversion.first().map_or(0, Vec::len);
        let mut header = vec!["t_s".to_string(), "photon_number".into(), "power_W".into()];
        header.extend((0..bins).map(|j| format!("inversion_{j}")));
        w.write_record(&header)?;
        for i in 0..self.times.len() {
            let mut row = vec![fmt17(self.times[i]), fmt17(self.photon_number[i]), fmt17(self.power[i])];
            row.extend(self.inversion[i].iter().map(|v| fmt17(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ExperimentError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Local maxima of the output power, as (time, power).
    pub fn power_maxima(&self) -> Vec<(f64, f64)> {
        self.power
            .windows(3)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0] && w[1] >= w[2])
            .map(|(i, w)| (self.times[i + 1], w[1]))
            .collect()
    }
}

/// 17 significant digits.
pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Runs the model with the pump rate from `pump` for `duration` seconds.
pub fn simulate(
    params: &ModelParams,
    pump: &PumpConfig,
    integ: &IntegratorConfig,
    duration: f64,
) -> Result<SimulationResult, ExperimentError> {
    let xi = pump_rate_or_zero(pump)?;
    run(&params.with_pump(xi), integ, duration)
}

/// Runs the model with the pump rate already stored in `params.rates.pump`.
///
/// Starts from thermal photons with every emitter in S0. Samples at
/// `integ.output_times`, or at [`DEFAULT_OUTPUT_POINTS`] uniform times when
/// none are given.
pub fn run(params: &ModelParams, integ: &IntegratorConfig, duration: f64) -> Result<SimulationResult, ExperimentError> {
    let model = CumulantModel::new(params)?;
    let mut cfg = integ.clone();
    if cfg.output_times.is_empty() {
        cfg.output_times = linspace(0.0, duration, DEFAULT_OUTPUT_POINTS);
    }
    let y0 = model.initial_state().to_vec();
    let traj = integrate(|_t, y, dy| model.rhs(y, dy), &y0, (0.0, duration), &cfg)?;
    let c = &params.cavity;
    let mut result = SimulationResult {
        times: traj.times.clone(),
        photon_number: Vec::with_capacity(traj.times.len()),
        power: Vec::with_capacity(traj.times.len()),
        inversion: Vec::with_capacity(traj.times.len()),
        states: Vec::with_capacity(traj.times.len()),
        stats: traj.stats,
        max_trace_error: 0.0,
    };
    for y in &traj.states {
        let state = CumulantState::from_slice(model.layout(), y)?;
        let obs = observables(&state);
        result.photon_number.push(obs.photon_number);
        result.power.push(maser_power(obs.photon_number, c.f_mode, c.kappa, c.output_coupling));
        result.inversion.push(obs.inversion);
        for p in &obs.populations {
            result.max_trace_error = result.max_trace_error.max((p.iter().sum::<f64>() - 1.0).abs());
        }
        result.states.push(state);
    }
    Ok(result)
}

/// Maximum output power against pump power for one coupling distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub distribution_id: usize,
    pub pump_powers: Vec<f64>,
    pub max_power: Vec<f64>,
}

/// For each distribution and pump power, simulates `window` seconds and
/// records the largest output power. Runs in parallel.
pub fn threshold_sweep(
    distributions: &[CouplingHistogram],
    pump_powers: &[f64],
    base: &ModelParams,
    pump: &PumpConfig,
    integ: &IntegratorConfig,
    window: f64,
) -> Result<Vec<SweepCurve>, ExperimentError> {
    if !(window > 0.0) {
        return Err(ExperimentError::NonPositive { name: "window", value: window });
    }
    let jobs: Vec<(usize, f64)> =
        (0..distributions.len()).flat_map(|d| pump_powers.iter().map(move |&p| (d, p))).collect();
    let maxima: Vec<f64> = jobs
        .par_iter()
        .map(|&(d, p)| max_output(&base.with_hist(distributions[d].clone()), &pump.with_power(p), integ, window))
        .collect::<Result<_, _>>()?;
    Ok(maxima
        .chunks(pump_powers.len().max(1))
        .enumerate()
        .map(|(d, chunk)| SweepCurve { distribution_id: d, pump_powers: pump_powers.to_vec(), max_power: chunk.to_vec() })
        .collect())
}

/// Largest output power over `window` seconds of pumping.
///
/// The maximum is taken over every accepted integrator step, so narrow
/// spikes are not missed by coarse sampling. `integ.output_times` is ignored.
pub fn max_output(
    params: &ModelParams,
    pump: &PumpConfig,
    integ: &IntegratorConfig,
    window: f64,
) -> Result<f64, ExperimentError> {
    let params = params.with_pump(pump_rate_or_zero(pump)?);
    let model = CumulantModel::new(&params)?;
    let cfg = IntegratorConfig { output_times: Vec::new(), ..integ.clone() };
    let y0 = model.initial_state().to_vec();
    let mut n_max = y0[0];
    integrate_observed(|_t, y, dy| model.rhs(y, dy), &y0, (0.0, window), &cfg, |_t, y| n_max = n_max.max(y[0]))?;
    let c = &params.cavity;
    Ok(maser_power(n_max, c.f_mode, c.kappa, c.output_coupling))
}

/// Writes sweep curves as `pump_W, max_power_W, distribution_id`.
pub fn write_sweep_csv<W: Write>(curves: &[SweepCurve], writer: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["pump_W", "max_power_W", "distribution_id"])?;
    for c in curves {
        for (p, m) in c.pump_powers.iter().zip(&c.max_power) {
            w.write_record([fmt17(*p), fmt17(*m), c.distribution_id.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Smallest sampled pump power whose max output exceeds the threshold criterion.
pub fn threshold_from_curve(curve: &SweepCurve, floor: f64) -> Option<f64> {
    curve
        .pump_powers
        .iter()
        .zip(&curve.max_power)
        .find(|(_, m)| **m > THRESHOLD_FLOOR_MULTIPLE * floor)
        .map(|(p, _)| *p)
}

/// Threshold pump power located by bisection between `lo` (below threshold)
/// and `hi` (above), to relative precision `rel_tol`.
///
/// Returns `None` if the bracket does not straddle the threshold.
pub fn find_threshold(
    params: &ModelParams,
    pump: &PumpConfig,
    integ: &IntegratorConfig,
    window: f64,
    (mut lo, mut hi): (f64, f64),
    rel_tol: f64,
) -> Result<Option<f64>, ExperimentError> {
    let level = THRESHOLD_FLOOR_MULTIPLE * thermal_floor(params);
    let above = |p: f64| -> Result<bool, ExperimentError> {
        Ok(max_output(params, &pump.with_power(p), integ, window)? > level)
    };
    if above(lo)? || !above(hi)? {
        return Ok(None);
    }
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if above(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Coefficient of determination and whether it was well defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RSquared {
    pub value: f64,
    /// Set when the data had zero variance in the window; `value` is then 0.
    pub degenerate: bool,
}

/// `1 - SS_res / SS_tot` over the samples with `times` inside `window` (inclusive).
pub fn r_squared(model: &[f64], data: &[f64], times: &[f64], window: (f64, f64)) -> RSquared {
    assert!(model.len() == data.len() && data.len() == times.len(), "series lengths differ");
    let inside: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= window.0 && times[i] <= window.1).collect();
    if inside.is_empty() {
        return RSquared { value: 0.0, degenerate: true };
    }
    let mean = inside.iter().map(|&i| data[i]).sum::<f64>() / inside.len() as f64;
    let ss_tot: f64 = inside.iter().map(|&i| (data[i] - mean).powi(2)).sum();
    let ss_res: f64 = inside.iter().map(|&i| (data[i] - model[i]).powi(2)).sum();
    if ss_tot == 0.0 {
        return RSquared { value: 0.0, degenerate: true };
    }
    RSquared { value: 1.0 - ss_res / ss_tot, degenerate: false }
}

/// Measured output power against time.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTrace {
    pub times: Vec<f64>,
    pub power: Vec<f64>,
}

impl ExperimentTrace {
    pub fn new(times: Vec<f64>, power: Vec<f64>) -> Result<Self, ExperimentError> {
        if times.len() != power.len() {
            return Err(ExperimentError::InvalidTrace("times and power differ in length".into()));
        }
        if times.is_empty() {
            return Err(ExperimentError::InvalidTrace("empty trace".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ExperimentError::InvalidTrace("times must be strictly increasing".into()));
        }
        if times.iter().chain(&power).any(|v| !v.is_finite()) {
            return Err(ExperimentError::InvalidTrace("non-finite value".into()));
        }
        Ok(Self { times, power })
    }

    /// Reads `time_s, power` rows. With `dbm`, power is converted from dBm to W.
    pub fn read_csv<R: Read>(reader: R, dbm: bool) -> Result<Self, ExperimentError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut times = Vec::new();
        let mut power = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let field = |i: usize| -> Result<f64, ExperimentError> {
                record
                    .get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| ExperimentError::InvalidTrace(format!("row {}: bad column {}", line + 2, i + 1)))
            };
            times.push(field(0)?);
            let p = field(1)?;
            power.push(if dbm { dbm_to_watts(p) } else { p });
        }
        Self::new(times, power)
    }

    pub fn load(path: impl AsRef<Path>, dbm: bool) -> Result<Self, ExperimentError> {
        Self::read_csv(std::fs::File::open(path)?, dbm)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time_s", "power"])?;
        for (t, p) in self.times.iter().zip(&self.power) {
            w.write_record([fmt17(*t), fmt17(*p)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Samples inside `window`, inclusive.
    pub fn window(&self, window: (f64, f64)) -> ExperimentTrace {
        let (times, power) = self
            .times
            .iter()
            .zip(&self.power)
            .filter(|(t, _)| **t >= window.0 && **t <= window.1)
            .map(|(t, p)| (*t, *p))
            .unzip();
        ExperimentTrace { times, power }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Search box and settings for [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub n_bounds: (f64, f64),
    pub chi_bounds: (f64, f64),
    pub restarts: usize,
    pub seed: u64,
    pub simplex: NelderMeadOptions,
    pub integrator: IntegratorConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_bounds: (1e13, 1e17),
            chi_bounds: (1e4, 1e8),
            restarts: 3,
            seed: 0,
            simplex: NelderMeadOptions { max_evaluations: 300, f_tolerance: 1e-12, x_tolerance: 1e-5, initial_step: 0.1 },
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub n_fit: f64,
    pub chi_fit: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub converged: bool,
    pub evaluations: usize,
}

/// `base` with its histogram rescaled to `n_total` emitters and a uniform dephasing rate `chi`.
pub fn with_population_and_dephasing(
    base: &ModelParams,
    n_total: f64,
    chi: f64,
) -> Result<ModelParams, ExperimentError> {
    let mut params = base.with_hist(base.hist.rescaled(n_total)?);
    params.rates = params.rates.clone().with_uniform_dephasing(chi);
    Ok(params)
}

/// Model output power at `times` for the given population and dephasing.
pub fn model_power_at(
    base: &ModelParams,
    n_total: f64,
    chi: f64,
    times: &[f64],
    integ: &IntegratorConfig,
) -> Result<Vec<f64>, ExperimentError> {
    let params = with_population_and_dephasing(base, n_total, chi)?;
    let end = times.last().copied().unwrap_or(0.0);
    let cfg = IntegratorConfig { output_times: times.to_vec(), ..integ.clone() };
    Ok(run(&params, &cfg, end)?.power)
}

/// Fits the total emitter number N and uniform dephasing rate chi of `base`
/// to the trace by maximising R^2 over `window`.
///
/// The search runs on (log10 N, log10 chi) inside the bounds of `opts`.
/// The pump rate is taken from `base.rates.pump`.
pub fn fit(
    trace: &ExperimentTrace,
    base: &ModelParams,
    window: (f64, f64),
    opts: &FitOptions,
) -> Result<FitResult, ExperimentError> {
    if !(window.0 >= 0.0 && window.1 > window.0) {
        return Err(ExperimentError::InvalidWindow(window.0, window.1));
    }
    let data = trace.window(window);
    if data.times.len() < 3 {
        return Err(ExperimentError::InvalidTrace("fewer than 3 samples inside the fit window".into()));
    }
    let objective = |x: &[f64]| -> f64 {
        match model_power_at(base, 10f64.powf(x[0]), 10f64.powf(x[1]), &data.times, &opts.integrator) {
            Ok(model) => {
                let r2 = r_squared(&model, &data.power, &data.times, window);
                if r2.degenerate {
                    f64::INFINITY
                } else {
                    1.0 - r2.value
                }
            }
            Err(_) => f64::INFINITY,
        }
    };
    let lower = [opts.n_bounds.0.log10(), opts.chi_bounds.0.log10()];
    let upper = [opts.n_bounds.1.log10(), opts.chi_bounds.1.log10()];
    let best = minimize_with_restarts(objective, &lower, &upper, opts.restarts, opts.seed, &opts.simplex);
    Ok(FitResult {
        n_fit: 10f64.powf(best.x[0]),
        chi_fit: 10f64.powf(best.x[1]),
        r_squared: 1.0 - best.value,
        window,
        converged: best.converged && best.value.is_finite(),
        evaluations: best.evaluations,
    })
}
