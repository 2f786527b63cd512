//! Maximum output against pump power for Gaussian coupling distributions
//! of growing width, with thresholds located by bisection.
//!
//! cargo run --release --example threshold_curves

use maser_core::coupling::{gaussian_histogram, DEFAULT_GAUSSIAN_SPAN};
use maser_core::experiments::{find_threshold, threshold_sweep, PumpConfig};
use maser_core::ode::IntegratorConfig;
use maser_core::{CavityParams, ModelParams, SpinRates};
use rayon::prelude::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sigmas = [0.0, 0.02, 0.04, 0.06];
    let hists = sigmas
        .iter()
        .map(|&s| gaussian_histogram(0.18, s, 5, 2.7e15, DEFAULT_GAUSSIAN_SPAN))
        .collect::<Result<Vec<_>, _>>()?;
    let base = ModelParams::new(hists[0].clone(), SpinRates::pentacene().with_uniform_dephasing(0.84e6), CavityParams::pentacene_maser());
    let pump = PumpConfig::pentacene(1.0);
    let integ = IntegratorConfig::default();
    let window = 0.5e-3;

    let powers = [1.0, 2.0, 5.0, 10.0, 50.0, 150.0, 500.0];
    let curves = threshold_sweep(&hists, &powers, &base, &pump, &integ, window)?;
    print!("{:>8}", "P (W)");
    for s in sigmas {
        print!("  {:>12}", format!("sigma={s}"));
    }
    println!();
    for (i, p) in powers.iter().enumerate() {
        print!("{p:>8}");
        for c in &curves {
            print!("  {:>12.4e}", c.max_power[i]);
        }
        println!();
    }

    let thresholds: Vec<Option<f64>> = hists
        .par_iter()
        .map(|h| find_threshold(&base.with_hist(h.clone()), &pump, &integ, window, (0.5, 5.0), 1e-3))
        .collect::<Result<_, _>>()?;
    for (s, t) in sigmas.iter().zip(thresholds) {
        match t {
            Some(t) => println!("sigma {s:.2}: threshold {t:.4} W"),
            None => println!("sigma {s:.2}: threshold outside [0.5, 5] W"),
        }
    }
    Ok(())
}
