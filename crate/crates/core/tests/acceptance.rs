//! Acceptance criteria 1 to 10. Each test writes one PASS/FAIL line straight
//! to stdout, so the verdicts are visible without `--nocapture`.

use std::io::Write;
use std::time::Instant;

use maser_core::config::RunConfig;
use maser_core::coupling::{gaussian_histogram, DEFAULT_GAUSSIAN_SPAN};
use maser_core::cumulant::third_order_expand;
use maser_core::experiments::{
    find_threshold, fit, max_output, model_power_at, pump_rate, r_squared, simulate, ExperimentTrace, FitOptions,
    PumpConfig, SimulationResult, DEFAULT_FIT_WINDOW,
};
use maser_core::ode::{integrate, integrate_fixed, linspace, IntegratorConfig};
use maser_core::oracle::{
    closure_check, evolve, oracle_integrator, overdamped_preset, uncoupled_preset, vacuum_rabi_check,
    CavityState, EmitterState, OracleConfig, OracleDerivative, PhaseSymmetricState, ProductState,
};
use maser_core::spin_model::build_channel_set;
use maser_core::{CavityParams, CouplingHistogram, CumulantModel, Level, ModelParams, SpinRates};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const CHI: f64 = 0.84e6;
const N_TOTAL: f64 = 2.7e15;

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {criterion:>2}: {verdict}  {detail}");
}

fn data(name: &str) -> String {
    format!("{}/examples/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn pentacene_rates() -> SpinRates {
    SpinRates::pentacene().with_uniform_dephasing(CHI)
}

fn switch_on_transient(integ: IntegratorConfig) -> SimulationResult {
    let config = RunConfig::load(data("pentacene10bin.cfg")).unwrap();
    let integ = IntegratorConfig { output_times: config.integrator_config().output_times, ..integ };
    simulate(&config.model_params().unwrap(), &config.pump.unwrap(), &integ, config.integrator.duration).unwrap()
}

fn random_complex(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
}

/// All set partitions of `items`, each as a list of blocks.
fn partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    let Some((&first, rest)) = items.split_first() else {
        return vec![Vec::new()];
    };
    let mut out = Vec::new();
    for p in partitions(rest) {
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i].insert(0, first);
            out.push(q);
        }
        let mut q = p;
        q.insert(0, vec![first]);
        out.push(q);
    }
    out
}

#[test]
fn criterion_01_cumulant_expansion_identity() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let all = partitions(&[0, 1, 2]);
    assert_eq!(all.len(), 5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let single: [Complex64; 3] = std::array::from_fn(|_| random_complex(&mut rng));
        let (o12, o13, o23) = (random_complex(&mut rng), random_complex(&mut rng), random_complex(&mut rng));
        let moment = |block: &[usize]| match block {
            [i] => single[*i],
            [0, 1] => o12,
            [0, 2] => o13,
            [1, 2] => o23,
            _ => unreachable!("full block handled separately"),
        };
        // Zero joint cumulant: sum over partitions of (-1)^(k-1) (k-1)! prod <block> = 0.
        let mut rest = Complex64::new(0.0, 0.0);
        for p in all.iter().filter(|p| p.len() > 1) {
            let k = p.len();
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            let factorial: f64 = (1..k).map(|i| i as f64).product();
            let product = p.iter().fold(Complex64::new(1.0, 0.0), |acc, b| acc * moment(b));
            rest += sign * factorial * product;
        }
        let expected = -rest;
        let got = third_order_expand(single, o12, o13, o23);
        worst = worst.max((got - expected).norm() / expected.norm().max(1.0));
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst < 1e-12 && elapsed < 1.0;
    report(1, pass, &format!("third-order expansion vs partition sum, 1000 inputs, max error {worst:.1e}, {elapsed:.2} s"));
    assert!(pass);
}

#[test]
fn criterion_02_vacuum_rabi_oracle() {
    let started = Instant::now();
    let r = vacuum_rabi_check(1.0, 3.0, 601, &[]).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let pass = r.max_exact_deviation < 1e-6 && elapsed < 10.0;
    report(2, pass, &format!("oracle vs sin^2(gt) on gt in [0, 3], max deviation {:.1e}, {elapsed:.2} s", r.max_exact_deviation));
    assert!(pass);
}

fn random_closure_config(rng: &mut ChaCha8Rng, sizes: &[usize], cutoff: usize) -> OracleConfig {
    let mut rates = SpinRates::zero();
    rates.pump = rng.random_range(0.0..0.5);
    rates.k_sp = rng.random_range(0.0..0.5);
    rates.isc = std::array::from_fn(|_| rng.random_range(0.0..0.5));
    rates.triplet_decay = std::array::from_fn(|_| rng.random_range(0.0..0.5));
    for l in Level::TRIPLET {
        for m in Level::TRIPLET {
            if l != m {
                rates.set_spin_lattice(l, m, rng.random_range(0.0..0.3));
                rates.set_dephasing(l, m, rng.random_range(0.0..0.3));
            }
        }
    }
    let cavity = CavityParams {
        f_mode: 1.0e9,
        kappa: rng.random_range(0.1..1.0),
        delta: rng.random_range(-0.5..0.5),
        temperature: rng.random_range(0.0..0.1),
        output_coupling: 1.0,
    };
    let mut couplings = Vec::new();
    for &size in sizes {
        let g = rng.random_range(0.2..1.5);
        couplings.extend(std::iter::repeat_n(g, size));
    }
    OracleConfig { fock_cutoff: cutoff, couplings, rates, cavity }
}

#[test]
fn criterion_03_closure_validation() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // J <= 2 and N_j <= 2, limited to three emitters by the oracle's size bound.
    let layouts: [&[usize]; 5] = [&[1], &[2], &[1, 1], &[2, 1], &[1, 2]];
    let integ = oracle_integrator();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for sizes in layouts.iter().cycle().take(15) {
        let cutoff = rng.random_range(10..=12);
        let config = random_closure_config(&mut rng, sizes, cutoff);
        let rho = PhaseSymmetricState::random(&config, 5, 0.1, &mut rng).density_matrix(&config).unwrap();
        let r = closure_check(&config, &rho, OracleDerivative::FiniteDifference(1e-3), &integ).unwrap();
        worst = worst.max(r.max_relative_error());
        cases += 1;
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst < 1e-6 && elapsed < 120.0;
    report(
        3,
        pass,
        &format!("{cases} random configs, finite-difference oracle vs cumulant rhs, max relative error {worst:.1e}, {elapsed:.1} s"),
    );
    assert!(pass);
}

#[test]
fn criterion_04_conservation() {
    // Population sums over every shipped scenario.
    let mut trace: f64 = 0.0;
    let transient = switch_on_transient(IntegratorConfig::default());
    trace = trace.max(transient.max_trace_error);
    let sweep = RunConfig::load(data("gaussian_sweep.cfg")).unwrap();
    let base = sweep.model_params().unwrap();
    let pump = sweep.pump.unwrap();
    let integ = IntegratorConfig::default().with_uniform_outputs(0.0, sweep.sweep.window, 501);
    for sigma in &sweep.sweep.gaussian_sigmas {
        let hist = gaussian_histogram(0.18, *sigma, 5, N_TOTAL, DEFAULT_GAUSSIAN_SPAN).unwrap();
        let r = simulate(&base.with_hist(hist), &pump, &integ, sweep.sweep.window).unwrap();
        trace = trace.max(r.max_trace_error);
    }
    let fieldmap = CouplingHistogram::load(data("fieldmap10bin.csv")).unwrap();
    let r = simulate(&base.with_hist(fieldmap), &pump, &integ, sweep.sweep.window).unwrap();
    trace = trace.max(r.max_trace_error);
    for (config, initial, horizon) in [overdamped_preset(), uncoupled_preset()] {
        let rho = initial.density_matrix(&config).unwrap();
        let t = evolve(&config, &rho, &linspace(0.0, horizon, 21), &oracle_integrator()).unwrap();
        trace = trace.max(t.max_trace_error);
    }

    // Excitation number n + sum_j N_j p_j[TX] without losses, cumulant model.
    let lossless = CavityParams { kappa: 0.0, temperature: 0.0, ..CavityParams::pentacene_maser() };
    let channels = build_channel_set(&SpinRates::zero(), &lossless).unwrap();
    let (couplings, sizes) = ([0.7, 1.1], [3.0, 5.0]);
    let model = CumulantModel::from_clusters(&couplings, &sizes, &channels, 0.0, 0.0);
    let mut start = model.initial_state();
    start.photon_number = 0.5;
    start.populations = vec![[0.1, 0.0, 0.2, 0.1, 0.6], [0.0, 0.0, 0.3, 0.0, 0.7]];
    let excitation = |y: &[f64]| {
        let s = maser_core::CumulantState::from_slice(model.layout(), y).unwrap();
        s.photon_number + (0..2).map(|j| sizes[j] * s.population(j, Level::TX)).sum::<f64>()
    };
    let period = 2.0 * std::f64::consts::PI / couplings[0];
    let horizon = 10.0 * period;
    let cfg = IntegratorConfig::default().with_initial_dt(1e-3).with_uniform_outputs(0.0, horizon, 201);
    let y0 = start.to_vec();
    let e0 = excitation(&y0);
    let traj = integrate(|_t, y, dy| model.rhs(y, dy), &y0, (0.0, horizon), &cfg).unwrap();
    let mut drift = traj.states.iter().map(|y| (excitation(y) - e0).abs() / e0).fold(0.0, f64::max);

    // Same quantity in the exact solver for two emitters.
    let config = OracleConfig { fock_cutoff: 6, couplings: vec![0.7, 1.1], rates: SpinRates::zero(), cavity: lossless };
    let initial = ProductState {
        cavity: CavityState::Fock(0),
        emitters: vec![EmitterState::Level(Level::TX), EmitterState::Level(Level::TX)],
    };
    let exact = evolve(&config, &initial.density_matrix(&config).unwrap(), &linspace(0.0, horizon, 201), &oracle_integrator())
        .unwrap();
    trace = trace.max(exact.max_trace_error);
    for m in &exact.moments {
        let e = m.photon_number + m.populations.iter().map(|p| p[Level::TX.slot()]).sum::<f64>();
        drift = drift.max((e - 2.0).abs() / 2.0);
    }

    let pass = trace < 1e-8 && drift < 1e-7;
    report(4, pass, &format!("population sum error {trace:.1e}, excitation drift over 10 Rabi periods {drift:.1e}"));
    assert!(pass);
}

#[test]
fn criterion_05_thermal_fixed_point() {
    let cavity = CavityParams::pentacene_maser();
    let channels = build_channel_set(&SpinRates::pentacene(), &cavity).unwrap();
    let model = CumulantModel::from_clusters(&[0.0], &[N_TOTAL], &channels, cavity.delta, cavity.thermal_photons());
    let horizon = 10.0 / cavity.kappa;
    let cfg = IntegratorConfig::default().with_uniform_outputs(0.0, horizon, 101);

    let from_initial = integrate(|_t, y, dy| model.rhs(y, dy), &model.initial_state().to_vec(), (0.0, horizon), &cfg).unwrap();
    let band = from_initial.states.iter().map(|y| (y[0] - 4283.3).abs()).fold(0.0, f64::max);

    // From an empty cavity the relaxation must follow n_th (1 - exp(-kappa t)).
    let mut empty = model.initial_state();
    empty.photon_number = 0.0;
    let relax = integrate(|_t, y, dy| model.rhs(y, dy), &empty.to_vec(), (0.0, horizon), &cfg).unwrap();
    let n_th = model.thermal_photons();
    let law = relax
        .times
        .iter()
        .zip(&relax.states)
        .map(|(t, y)| (y[0] - n_th * (1.0 - (-cavity.kappa * t).exp())).abs() / n_th)
        .fold(0.0, f64::max);

    let pass = band <= 0.1 && law < 1e-6;
    report(
        5,
        pass,
        &format!(
            "n_th {n_th:.4}, max |n - 4283.3| over 10/kappa {band:.3}, empty-cavity relaxation vs exponential law {law:.1e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_cluster_merging() {
    let started = Instant::now();
    let xi = pump_rate(&PumpConfig::pentacene(150.0)).unwrap();
    let merged = ModelParams::new(
        CouplingHistogram::single(0.18, N_TOTAL).unwrap(),
        pentacene_rates().with_pump(xi),
        CavityParams::pentacene_maser(),
    );
    let split = merged.with_hist(CouplingHistogram::replicated(0.18, N_TOTAL, 10).unwrap());
    let duration = 3e-3;
    let integ = IntegratorConfig::default().with_tolerances(1e-10, 1e-12).with_uniform_outputs(0.0, duration, 3001);
    let a = maser_core::experiments::run(&merged, &integ, duration).unwrap();
    let b = maser_core::experiments::run(&split, &integ, duration).unwrap();
    let worst = a.photon_number.iter().zip(&b.photon_number).map(|(x, y)| (x - y).abs() / x.abs()).fold(0.0, f64::max);
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst < 1e-8 && elapsed < 60.0;
    report(6, pass, &format!("10 identical bins vs 1 bin over 3 ms, max relative difference in n {worst:.1e}, {elapsed:.1} s"));
    assert!(pass);
}

#[test]
fn criterion_07_threshold_structure() {
    use rayon::prelude::*;
    let started = Instant::now();
    let sigmas = [0.0, 0.02, 0.04, 0.06];
    let base = ModelParams::new(
        CouplingHistogram::single(0.18, N_TOTAL).unwrap(),
        pentacene_rates(),
        CavityParams::pentacene_maser(),
    );
    let pump = PumpConfig::pentacene(1.0);
    let integ = IntegratorConfig::default();
    let window = 0.5e-3;
    let far_above = 1000.0;
    let rows: Vec<(f64, f64)> = sigmas
        .par_iter()
        .map(|&s| {
            let params = base.with_hist(gaussian_histogram(0.18, s, 5, N_TOTAL, DEFAULT_GAUSSIAN_SPAN).unwrap());
            let threshold = find_threshold(&params, &pump, &integ, window, (0.5, 5.0), 1e-4).unwrap().unwrap();
            let saturated = max_output(&params, &pump.with_power(far_above), &integ, window).unwrap();
            (threshold, saturated)
        })
        .collect();
    let increasing = rows.windows(2).all(|w| w[1].0 > w[0].0);
    let (lo, hi) = rows.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.1), hi.max(r.1)));
    let spread = (hi - lo) / hi;
    let elapsed = started.elapsed().as_secs_f64();
    let thresholds: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.0)).collect();
    let pass = increasing && spread <= 0.05 && elapsed < 600.0;
    report(
        7,
        pass,
        &format!(
            "thresholds for sigma 0/0.02/0.04/0.06: [{}] W (strictly increasing: {increasing}), max output spread at {far_above} W {:.1}%, {elapsed:.1} s",
            thresholds.join(", "),
            100.0 * spread
        ),
    );
    assert!(pass);
}

/// Local maxima of power standing more than 1% above the final value.
fn visible_maxima(r: &SimulationResult, before: f64) -> Vec<(f64, f64)> {
    let level = 1.01 * r.final_power();
    r.power_maxima().into_iter().filter(|(t, p)| *t < before && *p > level).collect()
}

/// Last sample time at which power is more than 1% away from its final value.
fn settle_time(r: &SimulationResult) -> f64 {
    let last = r.final_power();
    r.times.iter().zip(&r.power).filter(|(_, p)| (*p - last).abs() > 0.01 * last).map(|(t, _)| *t).fold(0.0, f64::max)
}

#[test]
fn criterion_08_transient_shape() {
    let r = switch_on_transient(IntegratorConfig::default());
    let maxima = visible_maxima(&r, 0.2e-3);
    let settle = settle_time(&r);
    // Constant steady state: the second half of the run stays within 0.1%.
    let half = r.times.len() / 2;
    let last = r.final_power();
    let wobble = r.power[half..].iter().map(|p| (p - last).abs() / last).fold(0.0, f64::max);
    let pass = maxima.len() >= 3 && settle < 0.5e-3 && wobble < 1e-3;
    let times: Vec<String> = maxima.iter().map(|(t, _)| format!("{:.1}", t * 1e6)).collect();
    report(
        8,
        pass,
        &format!(
            "{} visible maxima before 0.2 ms at [{}] us, settled within 1% by {:.0} us, steady state {:.4e} W",
            maxima.len(),
            times.join(", "),
            settle * 1e6,
            last
        ),
    );
    assert!(pass);
}

fn synthetic_trace(base: &ModelParams, n: f64, chi: f64, seed: u64) -> ExperimentTrace {
    let times = linspace(DEFAULT_FIT_WINDOW.0, DEFAULT_FIT_WINDOW.1, 191);
    let clean = model_power_at(base, n, chi, &times, &IntegratorConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(1.0, 0.01).unwrap();
    let noisy = clean.iter().map(|p| p * noise.sample(&mut rng)).collect();
    ExperimentTrace::new(times, noisy).unwrap()
}

fn fit_base() -> ModelParams {
    let hist = CouplingHistogram::load(data("pentacene10bin.csv")).unwrap();
    let xi = pump_rate(&PumpConfig::pentacene(150.0)).unwrap();
    ModelParams::new(hist, SpinRates::pentacene().with_pump(xi), CavityParams::pentacene_maser())
}

#[test]
fn criterion_09_fit_round_trip() {
    let started = Instant::now();
    let base = fit_base();
    let trace = synthetic_trace(&base, N_TOTAL, CHI, 11);
    let r = fit(&trace, &base, DEFAULT_FIT_WINDOW, &FitOptions::default()).unwrap();
    let dn = (r.n_fit / N_TOTAL - 1.0).abs();
    let dchi = (r.chi_fit / CHI - 1.0).abs();
    let elapsed = started.elapsed().as_secs_f64();
    let pass = dn < 0.1 && dchi < 0.1 && r.r_squared > 0.98 && elapsed < 900.0;
    report(
        9,
        pass,
        &format!(
            "N {:.4e} ({:.2}% off), chi {:.4e} /s ({:.2}% off), R2 {:.5}, {elapsed:.1} s",
            r.n_fit,
            100.0 * dn,
            r.chi_fit,
            100.0 * dchi,
            r.r_squared
        ),
    );
    assert!(pass);
}

fn oscillator(_t: f64, y: &[f64], dy: &mut [f64]) {
    dy[0] = y[1];
    dy[1] = -y[0];
}

#[test]
fn criterion_10_integrator_order_and_tolerance() {
    let t_end: f64 = 10.0;
    let error = |steps| {
        let y = integrate_fixed(oscillator, &[1.0, 0.0], (0.0, t_end), steps);
        (y[0] - t_end.cos()).hypot(y[1] + t_end.sin())
    };
    let errors: Vec<f64> = [50, 100, 200, 400].into_iter().map(error).collect();
    let order = errors.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min);

    let default = IntegratorConfig::default();
    let tight = default.clone().with_tolerances(default.rtol / 2.0, default.atol / 2.0);
    let p1 = switch_on_transient(default.clone()).final_power();
    let p2 = switch_on_transient(tight.clone()).final_power();
    let power_change = (p2 / p1 - 1.0).abs();

    // Halving tolerances must barely move R2 against a fixed noisy trace.
    let base = fit_base();
    let trace = synthetic_trace(&base, N_TOTAL, CHI, 11);
    let r2 = |integ: &IntegratorConfig| {
        let model = model_power_at(&base, N_TOTAL, CHI, &trace.times, integ).unwrap();
        r_squared(&model, &trace.power, &trace.times, DEFAULT_FIT_WINDOW).value
    };
    let r2_change = (r2(&default) - r2(&tight)).abs();

    let pass = order >= 4.5 && power_change < 1e-3 && r2_change < 1e-3;
    report(
        10,
        pass,
        &format!(
            "observed order {order:.2}, steady power change at half tolerance {:.1e}, R2 change {r2_change:.1e}",
            power_change
        ),
    );
    assert!(pass);
}
