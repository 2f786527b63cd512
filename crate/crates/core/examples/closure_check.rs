//! Compares the cumulant equations against finite-difference derivatives of
//! the exact master equation on random small systems.
//!
//! On the phase-symmetric states used here every third-order moment
//! factorises exactly, so any mismatch points at an error in the equations.
//!
//! cargo run --release --example closure_check

use maser_core::oracle::{closure_check, oracle_integrator, OracleConfig, OracleDerivative, PhaseSymmetricState};
use maser_core::{CavityParams, Level, SpinRates};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIPLETS: [Level; 3] = [Level::TZ, Level::TY, Level::TX];

fn random_config(rng: &mut ChaCha8Rng, cluster_sizes: &[usize], cutoff: usize) -> OracleConfig {
    let mut rates = SpinRates::zero();
    rates.pump = rng.random_range(0.0..0.5);
    rates.k_sp = rng.random_range(0.0..0.5);
    rates.isc = std::array::from_fn(|_| rng.random_range(0.0..0.5));
    rates.triplet_decay = std::array::from_fn(|_| rng.random_range(0.0..0.5));
    for l in TRIPLETS {
        for m in TRIPLETS {
            if l != m {
                rates.set_spin_lattice(l, m, rng.random_range(0.0..0.3));
                rates.set_dephasing(l, m, rng.random_range(0.0..0.3));
            }
        }
    }
    // A mode frequency of 1 GHz at 0.1 K gives roughly one thermal photon.
    let cavity = CavityParams {
        f_mode: 1.0e9,
        kappa: rng.random_range(0.1..1.0),
        delta: rng.random_range(-0.5..0.5),
        temperature: rng.random_range(0.0..0.1),
        output_coupling: 1.0,
    };
    let mut couplings = Vec::new();
    for &size in cluster_sizes {
        let g = rng.random_range(0.2..1.5);
        couplings.extend(std::iter::repeat_n(g, size));
    }
    OracleConfig { fock_cutoff: cutoff, couplings, rates, cavity }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let layouts: [&[usize]; 4] = [&[1], &[2], &[1, 1], &[2, 1]];
    let integ = oracle_integrator();
    for (i, sizes) in layouts.iter().cycle().take(8).enumerate() {
        let config = random_config(&mut rng, sizes, 10);
        let rho = PhaseSymmetricState::random(&config, 4, 0.1, &mut rng).density_matrix(&config)?;
        let started = std::time::Instant::now();
        let report = closure_check(&config, &rho, OracleDerivative::FiniteDifference(1e-3), &integ)?;
        let (label, cumulant, oracle) = report.worst_component().expect("non-empty report");
        println!(
            "case {i}: clusters {sizes:?}, {} components, max relative error {:.2e} (worst {label}: {cumulant:.6e} vs {oracle:.6e}), {:.2} s",
            report.labels.len(),
            report.max_relative_error(),
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
