//! Loads a run configuration, prints its canonical form and simulates it.
//!
//! cargo run --release --example run_config [path.cfg]

use maser_core::config::RunConfig;
use maser_core::experiments::simulate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/pentacene10bin.cfg").to_string());
    let config = RunConfig::load(&path)?;
    println!("{}", config.to_canonical_string());

    let pump = config.pump.ok_or("configuration has no [pump] section")?;
    let result = simulate(&config.model_params()?, &pump, &config.integrator_config(), config.integrator.duration)?;
    println!("peak {:.4e} W, final {:.4e} W", result.max_power(), result.final_power());
    Ok(())
}
