//! Physical constants (SI, CODATA 2018). Every module reads them from here.

/// Planck constant h (J s).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Boltzmann constant k_B (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Vacuum magnetic permeability mu_0 (N/A^2).
pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;

/// Electron gyromagnetic ratio in angular units (rad s^-1 T^-1).
///
/// Couplings derived from it are angular rates, the same 1/s system used for
/// every Lindblad rate.
pub const ELECTRON_GYROMAGNETIC_RATIO: f64 = 1.760_859_630_23e11;
