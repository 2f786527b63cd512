//! Coupling distributions: from a simulated field map, and Gaussian.
//!
//! cargo run --release --example coupling_histogram

use maser_core::coupling::{cooperativity, gaussian_histogram, histogram_from_fieldmap, load_fieldmap, DEFAULT_GAUSSIAN_SPAN};
use maser_core::CavityParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cavity = CavityParams::pentacene_maser();
    let chi = 0.84e6;
    let samples = load_fieldmap(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/fieldmap.csv"))?;
    let hist = histogram_from_fieldmap(&samples, cavity.f_mode, 10, 2.7e15)?;
    println!("field map: {} cells, {} in the gain medium", samples.len(), samples.iter().filter(|s| s.in_gain_medium).count());
    println!("{:>10}  {:>12}", "g (1/s)", "emitters");
    for (g, n) in hist.iter() {
        println!("{g:>10.4}  {n:>12.4e}");
    }
    println!(
        "mean g {:.4} /s, collective g {:.4e} /s, cooperativity {:.3}",
        hist.mean_coupling(),
        hist.collective_coupling_squared().sqrt(),
        cooperativity(&hist, cavity.kappa, chi)?
    );

    for sigma in [0.0, 0.02, 0.04, 0.06] {
        let h = gaussian_histogram(0.18, sigma, 5, 2.7e15, DEFAULT_GAUSSIAN_SPAN)?;
        let centers: Vec<String> = h.centers().iter().map(|g| format!("{g:.3}")).collect();
        println!("sigma {sigma:.2}: centers [{}], cooperativity {:.3}", centers.join(", "), cooperativity(&h, cavity.kappa, chi)?);
    }
    Ok(())
}
