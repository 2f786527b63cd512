//! An empty room-temperature cavity with uncoupled spins fills up to its
//! thermal occupation on the 1/kappa time scale.
//!
//! cargo run --release --example thermal_fixed_point

use maser_core::experiments::thermal_floor;
use maser_core::ode::{integrate, IntegratorConfig};
use maser_core::spin_model::build_channel_set;
use maser_core::{CavityParams, CouplingHistogram, CumulantModel, ModelParams, SpinRates};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cavity = CavityParams::pentacene_maser();
    let rates = SpinRates::pentacene();
    let channels = build_channel_set(&rates, &cavity)?;
    let model = CumulantModel::from_clusters(&[0.0], &[2.7e15], &channels, cavity.delta, cavity.thermal_photons());

    let mut start = model.initial_state();
    start.photon_number = 0.0;
    let horizon = 10.0 / cavity.kappa;
    let integ = IntegratorConfig::default().with_uniform_outputs(0.0, horizon, 11);
    let traj = integrate(|_t, y, dy| model.rhs(y, dy), &start.to_vec(), (0.0, horizon), &integ)?;

    println!("thermal occupation {:.4} photons", model.thermal_photons());
    for (t, y) in traj.times.iter().zip(&traj.states) {
        println!("kappa t = {:>4.1}   n = {:.6}", t * cavity.kappa, y[0]);
    }
    let params = ModelParams::new(CouplingHistogram::single(0.18, 2.7e15)?, rates, cavity);
    println!("thermal output floor {:.4e} W", thermal_floor(&params));
    Ok(())
}
