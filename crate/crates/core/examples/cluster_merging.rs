//! Splitting one coupling bin into identical copies leaves the dynamics
//! unchanged.
//!
//! cargo run --release --example cluster_merging

use maser_core::experiments::{pump_rate, run, PumpConfig};
use maser_core::ode::IntegratorConfig;
use maser_core::{CavityParams, CouplingHistogram, ModelParams, SpinRates};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let xi = pump_rate(&PumpConfig::pentacene(150.0))?;
    let rates = SpinRates::pentacene().with_uniform_dephasing(0.84e6).with_pump(xi);
    let merged = ModelParams::new(CouplingHistogram::single(0.18, 2.7e15)?, rates, CavityParams::pentacene_maser());
    let split = merged.with_hist(CouplingHistogram::replicated(0.18, 2.7e15, 10)?);

    let duration = 3e-3;
    for rtol in [1e-6, 1e-8, 1e-10] {
        let integ = IntegratorConfig::default().with_tolerances(rtol, 1e-2 * rtol).with_uniform_outputs(0.0, duration, 3001);
        let a = run(&merged, &integ, duration)?;
        let b = run(&split, &integ, duration)?;
        let worst = a
            .photon_number
            .iter()
            .zip(&b.photon_number)
            .map(|(x, y)| (x - y).abs() / x.abs())
            .fold(0.0, f64::max);
        println!("rtol {rtol:.0e}: largest relative difference in photon number over 3 ms {worst:.2e}");
    }
    Ok(())
}
