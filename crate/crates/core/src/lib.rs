//! Beyond-mean-field simulation of optically pumped solid-state masers.
//!
//! The gain medium is a large ensemble of five-level pentacene emitters coupled
//! to a single microwave cavity mode. Emitters are grouped into clusters (bins)
//! that share one coupling strength, and the dynamics are evolved through the
//! second-order cumulant moment equations of the clustered Tavis-Cummings model
//! with Lindblad dissipation.
//!
//! Module map:
//!
//! - [`spin_model`]: emitter levels, transition rates and the Lindblad channel set
//! - [`coupling`]: mode volumes, coupling strengths and coupling histograms
//! - [`cumulant`]: the closed second-order moment system and its observables
//! - [`ode`]: adaptive embedded Runge-Kutta 5(4) integrator
//! - [`oracle`]: brute-force density-matrix solver for validating the closure
//! - [`experiments`]: pump/power conversions, simulations, threshold sweeps, fitting
//! - [`config`] and [`cli`]: the declarative run configuration and command-line front end

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod cli;
pub mod config;
pub mod constants;
pub mod coupling;
pub mod cumulant;
pub mod experiments;
pub mod ode;
pub mod optimize;
pub mod oracle;
pub mod spin_model;

pub use spin_model::{CavityParams, Level, LindbladChannel, SpinRates};

pub use coupling::CouplingHistogram;
pub use cumulant::{CumulantModel, CumulantState, ModelParams};
