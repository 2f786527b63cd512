//! Switch-on transient of the room-temperature pentacene maser with a
//! 10-bin coupling histogram: damped collective Rabi oscillations that
//! settle to a steady output.
//!
//! cargo run --release --example switch_on_transient [output.csv]

use maser_core::experiments::{pump_rate, simulate, PumpConfig};
use maser_core::ode::IntegratorConfig;
use maser_core::{CavityParams, CouplingHistogram, ModelParams, SpinRates};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hist = CouplingHistogram::load(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/pentacene10bin.csv"))?;
    let params = ModelParams::new(hist, SpinRates::pentacene().with_uniform_dephasing(0.84e6), CavityParams::pentacene_maser());
    let pump = PumpConfig::pentacene(150.0);
    println!("pump rate {:.4e} /s at {} W", pump_rate(&pump)?, pump.power);

    let duration = 1e-3;
    let integ = IntegratorConfig::default().with_uniform_outputs(0.0, duration, 4001);
    let started = std::time::Instant::now();
    let result = simulate(&params, &pump, &integ, duration)?;
    println!(
        "{} accepted steps in {:.2} s, population drift {:.1e}",
        result.stats.accepted,
        started.elapsed().as_secs_f64(),
        result.max_trace_error
    );
    for (t, p) in result.power_maxima().iter().take(8) {
        println!("maximum at {:>6.1} us: {p:.4e} W", t * 1e6);
    }
    println!("steady state {:.4e} W", result.final_power());

    if let Some(path) = std::env::args().nth(1) {
        result.save(&path)?;
        println!("wrote {path}");
    }
    Ok(())
}
