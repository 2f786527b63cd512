//! Convergence order of the fifth-order stepper on a harmonic oscillator,
//! and step counts of the adaptive driver against tolerance.
//!
//! cargo run --release --example integrator_order

use maser_core::ode::{integrate, integrate_fixed, IntegratorConfig};

fn oscillator(_t: f64, y: &[f64], dy: &mut [f64]) {
    dy[0] = y[1];
    dy[1] = -y[0];
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t_end: f64 = 10.0;
    let exact = [t_end.cos(), -t_end.sin()];
    let error = |y: &[f64]| (y[0] - exact[0]).hypot(y[1] - exact[1]);

    let mut previous: Option<f64> = None;
    for steps in [25, 50, 100, 200, 400] {
        let e = error(&integrate_fixed(oscillator, &[1.0, 0.0], (0.0, t_end), steps));
        match previous {
            Some(p) => println!("{steps:>4} steps: error {e:.3e}, observed order {:.2}", (p / e).log2()),
            None => println!("{steps:>4} steps: error {e:.3e}"),
        }
        previous = Some(e);
    }

    for rtol in [1e-4, 1e-6, 1e-8, 1e-10] {
        let cfg = IntegratorConfig::default().with_tolerances(rtol, rtol * 1e-2).with_initial_dt(1e-3);
        let traj = integrate(oscillator, &[1.0, 0.0], (0.0, t_end), &cfg)?;
        println!(
            "rtol {rtol:.0e}: {} accepted, {} rejected, error {:.3e}",
            traj.stats.accepted,
            traj.stats.rejected,
            error(traj.last_state())
        );
    }
    Ok(())
}
