//! One resonant emitter in an empty lossless cavity.
//!
//! The exact solver follows sin^2(gt); the second-order cumulant model
//! drifts away from it as correlations build up.
//!
//! cargo run --release --example vacuum_rabi

use maser_core::oracle::vacuum_rabi_check;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let report = vacuum_rabi_check(1.0, 3.0, 301, &[0.1, 0.5, 1.0, 2.0, 3.0])?;
    println!("exact solver vs sin^2(gt) over gt in [0, 3]: max deviation {:.2e}", report.max_exact_deviation);
    println!("trace drift {:.2e}", report.max_trace_error);
    println!("{:>5}  {:>14}  {:>14}  {:>10}", "gt", "exact n", "cumulant n", "deviation");
    for (t, exact, approx) in &report.probes {
        println!("{t:>5.2}  {exact:>14.10}  {approx:>14.10}  {:>10.3e}", (approx - exact).abs());
    }
    Ok(())
}
