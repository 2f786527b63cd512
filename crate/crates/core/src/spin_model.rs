//! The five-level pentacene emitter, its transition rates and the Lindblad
//! channel set acting on each emitter and on the cavity mode.
//!
//! Level indices follow the rate subscripts: 1 = S0, 2 = S1, 3 = T_Z,
//! 4 = T_Y, 5 = T_X. The maser transition couples T_X (upper) to T_Z (lower).

use std::fmt;

use thiserror::Error;

use crate::experiments::thermal_photons;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinModelError {
    #[error("rate `{name}` is negative ({value})")]
    NegativeRate { name: String, value: f64 },
    #[error("rate `{name}` is not finite")]
    NonFiniteRate { name: String },
    #[error("invalid level index {0}; expected 1..=5")]
    InvalidLevel(u8),
    #[error("intersystem-crossing rates are all zero; branching is undefined")]
    UndefinedBranching,
    #[error("invalid cavity parameter `{name}`: {value}")]
    InvalidCavity { name: &'static str, value: f64 },
}

/// One of the five emitter levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    S0 = 1,
    S1 = 2,
    TZ = 3,
    TY = 4,
    TX = 5,
}

impl Level {
    pub const ALL: [Level; 5] = [Level::S0, Level::S1, Level::TZ, Level::TY, Level::TX];
    pub const TRIPLET: [Level; 3] = [Level::TZ, Level::TY, Level::TX];
    /// Upper level of the maser transition.
    pub const UPPER: Level = Level::TX;
    /// Lower level of the maser transition.
    pub const LOWER: Level = Level::TZ;

    /// 1-based index used in rate subscripts.
    pub fn index(self) -> u8 {
        self as u8
    }

    /// 0-based position, for array storage.
    pub fn slot(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(index: u8) -> Result<Self, SpinModelError> {
        match index {
            1 => Ok(Level::S0),
            2 => Ok(Level::S1),
            3 => Ok(Level::TZ),
            4 => Ok(Level::TY),
            5 => Ok(Level::TX),
            other => Err(SpinModelError::InvalidLevel(other)),
        }
    }

    fn triplet_slot(self) -> Option<usize> {
        match self {
            Level::TZ => Some(0),
            Level::TY => Some(1),
            Level::TX => Some(2),
            _ => None,
        }
    }
}

impl TryFrom<u8> for Level {
    type Error = SpinModelError;

    fn try_from(index: u8) -> Result<Self, Self::Error> {
        Level::from_index(index)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Level::S0 => "S0",
            Level::S1 => "S1",
            Level::TZ => "T_Z",
            Level::TY => "T_Y",
            Level::TX => "T_X",
        };
        f.write_str(name)
    }
}

/// Rates (1/s) of every incoherent emitter process.
///
/// Triplet-indexed arrays use slot 0 = level 3, slot 1 = level 4, slot 2 = level 5.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinRates {
    /// Optical pump rate xi, S0 -> S1 (and stimulated S1 -> S0).
    pub pump: f64,
    /// S1 -> S0 decay rate k_sp.
    pub k_sp: f64,
    /// Intersystem crossing k_2l, S1 -> level l.
    pub isc: [f64; 3],
    /// Triplet decay k_l1, level l -> S0.
    pub triplet_decay: [f64; 3],
    /// Spin-lattice rates k_lm, carried by the jump operator |l><m|.
    pub spin_lattice: [[f64; 3]; 3],
    /// Pairwise dephasing rates chi_lm.
    pub dephasing: [[f64; 3]; 3],
}

impl SpinRates {
    /// All rates zero.
    pub fn zero() -> Self {
        Self {
            pump: 0.0,
            k_sp: 0.0,
            isc: [0.0; 3],
            triplet_decay: [0.0; 3],
            spin_lattice: [[0.0; 3]; 3],
            dephasing: [[0.0; 3]; 3],
        }
    }

    /// The pentacene:p-terphenyl rate set at room temperature, with no pump and
    /// no dephasing.
    pub fn pentacene() -> Self {
        let mut rates = Self::zero();
        rates.k_sp = 42.0e6;
        rates.isc = [5.5e6, 11.0e6, 52.4e6];
        rates.triplet_decay = [2.0e3, 14.0e3, 22.0e3];
        rates.set_spin_lattice(Level::TX, Level::TZ, 11.0e3);
        rates.set_spin_lattice(Level::TX, Level::TY, 4.0e3);
        rates.set_spin_lattice(Level::TY, Level::TZ, 28.0e3);
        rates
    }

    /// Sets k_lm = k_ml = `rate` for a pair of triplet levels.
    pub fn set_spin_lattice(&mut self, l: Level, m: Level, rate: f64) {
        let (a, b) = triplet_pair(l, m);
        self.spin_lattice[a][b] = rate;
        self.spin_lattice[b][a] = rate;
    }

    /// Sets chi_lm = chi_ml = `rate` for a pair of triplet levels.
    pub fn set_dephasing(&mut self, l: Level, m: Level, rate: f64) {
        let (a, b) = triplet_pair(l, m);
        self.dephasing[a][b] = rate;
        self.dephasing[b][a] = rate;
    }

    /// Uses one dephasing rate chi for every triplet pair.
    pub fn with_uniform_dephasing(mut self, chi: f64) -> Self {
        for (l, row) in self.dephasing.iter_mut().enumerate() {
            for (m, value) in row.iter_mut().enumerate() {
                *value = if l == m { 0.0 } else { chi };
            }
        }
        self
    }

    pub fn with_pump(mut self, pump: f64) -> Self {
        self.pump = pump;
        self
    }

    /// The common dephasing rate if all pairs share one, else `None`.
    pub fn uniform_dephasing(&self) -> Option<f64> {
        let chi = self.dephasing[0][1];
        let uniform = (0..3)
            .flat_map(|l| (0..3).map(move |m| (l, m)))
            .filter(|(l, m)| l != m)
            .all(|(l, m)| self.dephasing[l][m] == chi);
        uniform.then_some(chi)
    }

    fn named_rates(&self) -> Vec<(String, f64)> {
        let mut out = vec![("xi".to_string(), self.pump), ("k_sp".to_string(), self.k_sp)];
        for (slot, level) in Level::TRIPLET.iter().enumerate() {
            out.push((format!("k_2{}", level.index()), self.isc[slot]));
            out.push((format!("k_{}1", level.index()), self.triplet_decay[slot]));
        }
        for (a, la) in Level::TRIPLET.iter().enumerate() {
            for (b, lb) in Level::TRIPLET.iter().enumerate() {
                if a != b {
                    let tag = format!("{}{}", la.index(), lb.index());
                    out.push((format!("k_{tag}"), self.spin_lattice[a][b]));
                    out.push((format!("chi_{tag}"), self.dephasing[a][b]));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), SpinModelError> {
        for (name, value) in self.named_rates() {
            if !value.is_finite() {
                return Err(SpinModelError::NonFiniteRate { name });
            }
            if value < 0.0 {
                return Err(SpinModelError::NegativeRate { name, value });
            }
        }
        Ok(())
    }
}

fn triplet_pair(l: Level, m: Level) -> (usize, usize) {
    let a = l.triplet_slot().expect("spin-lattice and dephasing pairs are triplet levels");
    let b = m.triplet_slot().expect("spin-lattice and dephasing pairs are triplet levels");
    assert_ne!(a, b, "pair must join two distinct levels");
    (a, b)
}

/// The microwave cavity mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityParams {
    /// Mode frequency (Hz).
    pub f_mode: f64,
    /// Energy decay rate kappa (1/s).
    pub kappa: f64,
    /// Mode-minus-transition detuning (rad/s).
    pub delta: f64,
    /// Bath temperature (K).
    pub temperature: f64,
    /// Output coupling coefficient k (dimensionless).
    pub output_coupling: f64,
}

impl CavityParams {
    /// The TE01delta strontium-titanate cavity at room temperature, critically coupled.
    pub fn pentacene_maser() -> Self {
        Self {
            f_mode: 1.4495e9,
            kappa: 2.5e6,
            delta: 0.0,
            temperature: 298.0,
            output_coupling: 1.0,
        }
    }

    pub fn thermal_photons(&self) -> f64 {
        thermal_photons(self.f_mode, self.temperature)
    }

    pub fn validate(&self) -> Result<(), SpinModelError> {
        let checks: [(&'static str, f64, bool); 5] = [
            ("f_mode", self.f_mode, self.f_mode > 0.0),
            ("kappa", self.kappa, self.kappa >= 0.0),
            ("delta", self.delta, true),
            ("temperature", self.temperature, self.temperature >= 0.0),
            ("output_coupling", self.output_coupling, self.output_coupling >= 0.0),
        ];
        for (name, value, ok) in checks {
            if !value.is_finite() || !ok {
                return Err(SpinModelError::InvalidCavity { name, value });
            }
        }
        Ok(())
    }
}

/// What a Lindblad channel's jump operator is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpKind {
    /// sigma^{to,from} = |to><from| on one emitter.
    Transition { from: Level, to: Level },
    /// sigma^{ll} - sigma^{mm} on one emitter.
    Dephasing(Level, Level),
    /// Annihilation operator a.
    CavityLoss,
    /// Creation operator a^dagger.
    CavityGain,
}

/// A dissipator gamma * D[L]. Emitter channels act identically on every emitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladChannel {
    pub kind: JumpKind,
    pub rate: f64,
}

impl LindbladChannel {
    fn transition(from: Level, to: Level, rate: f64) -> Self {
        Self { kind: JumpKind::Transition { from, to }, rate }
    }

    pub fn is_emitter(&self) -> bool {
        matches!(self.kind, JumpKind::Transition { .. } | JumpKind::Dephasing(..))
    }
}

/// Builds the full channel list. Channels with zero rate are omitted.
///
/// Dephasing appears once per unordered triplet pair, with rate
/// (chi_lm + chi_ml) / 2 so that the half-weighted sum over ordered pairs is
/// reproduced exactly.
pub fn build_channel_set(
    rates: &SpinRates,
    cavity: &CavityParams,
) -> Result<Vec<LindbladChannel>, SpinModelError> {
    rates.validate()?;
    cavity.validate()?;
    let mut channels = vec![
        LindbladChannel::transition(Level::S0, Level::S1, rates.pump),
        LindbladChannel::transition(Level::S1, Level::S0, rates.pump + rates.k_sp),
    ];
    for (slot, &level) in Level::TRIPLET.iter().enumerate() {
        channels.push(LindbladChannel::transition(Level::S1, level, rates.isc[slot]));
    }
    for (slot, &level) in Level::TRIPLET.iter().enumerate() {
        channels.push(LindbladChannel::transition(level, Level::S0, rates.triplet_decay[slot]));
    }
    for (a, &to) in Level::TRIPLET.iter().enumerate() {
        for (b, &from) in Level::TRIPLET.iter().enumerate() {
            if a != b {
                channels.push(LindbladChannel::transition(from, to, rates.spin_lattice[a][b]));
            }
        }
    }
    for a in 0..3 {
        for b in (a + 1)..3 {
            let rate = 0.5 * (rates.dephasing[a][b] + rates.dephasing[b][a]);
            channels.push(LindbladChannel {
                kind: JumpKind::Dephasing(Level::TRIPLET[a], Level::TRIPLET[b]),
                rate,
            });
        }
    }
    let n_th = cavity.thermal_photons();
    channels.push(LindbladChannel { kind: JumpKind::CavityLoss, rate: cavity.kappa * (n_th + 1.0) });
    channels.push(LindbladChannel { kind: JumpKind::CavityGain, rate: cavity.kappa * n_th });
    channels.retain(|c| c.rate > 0.0);
    Ok(channels)
}

/// Fractions of intersystem crossing into (T_X, T_Y, T_Z).
pub fn isc_branching(rates: &SpinRates) -> Result<[f64; 3], SpinModelError> {
    let [k23, k24, k25] = rates.isc;
    let total = k23 + k24 + k25;
    if !(total > 0.0) {
        return Err(SpinModelError::UndefinedBranching);
    }
    Ok([k25 / total, k24 / total, k23 / total])
}
