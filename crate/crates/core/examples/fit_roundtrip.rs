//! Generates a noisy synthetic trace from known (N, chi), then fits it back.
//!
//! cargo run --release --example fit_roundtrip

use maser_core::experiments::{fit, model_power_at, pump_rate, ExperimentTrace, FitOptions, PumpConfig, DEFAULT_FIT_WINDOW};
use maser_core::ode::linspace;
use maser_core::{CavityParams, CouplingHistogram, ModelParams, SpinRates};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hist = CouplingHistogram::load(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/pentacene10bin.csv"))?;
    let xi = pump_rate(&PumpConfig::pentacene(150.0))?;
    let base = ModelParams::new(hist, SpinRates::pentacene().with_pump(xi), CavityParams::pentacene_maser());

    let (n_true, chi_true) = (2.7e15, 0.84e6);
    let times = linspace(DEFAULT_FIT_WINDOW.0, DEFAULT_FIT_WINDOW.1, 191);
    let clean = model_power_at(&base, n_true, chi_true, &times, &Default::default())?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(1.0, 0.01)?;
    let noisy: Vec<f64> = clean.iter().map(|p| p * noise.sample(&mut rng)).collect();
    let trace = ExperimentTrace::new(times, noisy)?;

    let started = std::time::Instant::now();
    let result = fit(&trace, &base, DEFAULT_FIT_WINDOW, &FitOptions::default())?;
    println!("true   N = {n_true:.4e}, chi = {chi_true:.4e} /s");
    println!(
        "fitted N = {:.4e}, chi = {:.4e} /s, R2 = {:.5}, {} evaluations, {:.1} s",
        result.n_fit,
        result.chi_fit,
        result.r_squared,
        result.evaluations,
        started.elapsed().as_secs_f64()
    );
    println!(
        "relative errors: N {:.2}%, chi {:.2}%",
        100.0 * (result.n_fit / n_true - 1.0).abs(),
        100.0 * (result.chi_fit / chi_true - 1.0).abs()
    );
    Ok(())
}
