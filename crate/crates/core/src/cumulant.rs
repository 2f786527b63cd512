//! Second-order cumulant equations of the clustered Tavis-Cummings maser.
//!
//! Retained moments, for every bin j and one representative emitter i in it:
//!
//! - `n = <a^dagger a>`
//! - `p[j][l] = <sigma_i^{ll}>` for the five levels
//! - `c[j] = <a^dagger sigma_i^{35}>`, the photon-spin correlation
//! - `s[j][k] = <sigma_i^{53} sigma_m^{35}>` for distinct emitters i in j, m in k
//!
//! Every other first- and second-order moment (`<a>`, `<a a>`,
//! `<a sigma^{53}>`, coherences other than 3-5, ...) starts at zero and stays
//! zero: the Hamiltonian only couples the 3-5 transition to the cavity and every
//! dissipator is phase covariant. Third-order moments are replaced through
//! [`third_order_expand`]. Sums over emitters in a bin collapse to N_j for
//! single-emitter terms and N_j - 1 (same bin) or N_k (other bin) for pairs.
//!
//! Populations across different emitters are never needed as independent
//! variables; they only enter third-order products, where they factorise.

use num_complex::Complex64;
use thiserror::Error;

use crate::coupling::{CouplingError, CouplingHistogram};
use crate::spin_model::{
    build_channel_set, CavityParams, JumpKind, Level, LindbladChannel, SpinModelError, SpinRates,
};

const I: Complex64 = Complex64::new(0.0, 1.0);
const UP: usize = 4; // slot of T_X
const DOWN: usize = 2; // slot of T_Z

#[derive(Debug, Error)]
pub enum CumulantError {
    #[error("state has {found} entries; layout for {bins} bins needs {expected}")]
    DimensionMismatch { bins: usize, expected: usize, found: usize },
    #[error(transparent)]
    Spin(#[from] SpinModelError),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

/// Everything that defines one clustered maser model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hist: CouplingHistogram,
    pub rates: SpinRates,
    pub cavity: CavityParams,
}

impl ModelParams {
    pub fn new(hist: CouplingHistogram, rates: SpinRates, cavity: CavityParams) -> Self {
        Self { hist, rates, cavity }
    }

    pub fn with_hist(&self, hist: CouplingHistogram) -> Self {
        Self { hist, ..self.clone() }
    }

    pub fn with_pump(&self, pump: f64) -> Self {
        let mut out = self.clone();
        out.rates.pump = pump;
        out
    }
}

/// Third-order moment `<O1 O2 O3>` with its joint cumulant set to zero:
/// `<O1O2><O3> + <O1O3><O2> + <O1><O2O3> - 2<O1><O2><O3>`.
pub fn third_order_expand(
    first: [Complex64; 3],
    o12: Complex64,
    o13: Complex64,
    o23: Complex64,
) -> Complex64 {
    let [o1, o2, o3] = first;
    o12 * o3 + o13 * o2 + o1 * o23 - 2.0 * o1 * o2 * o3
}

/// Offsets of each moment family in the flat real state vector.
///
/// `[n | p (5 per bin) | c (re, im per bin) | s diagonal (1 per bin) |
/// s upper triangle j<k (re, im)]`. `s[k][j]` for k > j is the conjugate of
/// the stored `s[j][k]`, so Hermiticity holds by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    bins: usize,
}

impl StateLayout {
    pub fn new(bins: usize) -> Self {
        Self { bins }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn len(&self) -> usize {
        1 + 8 * self.bins + self.bins * (self.bins - 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub const fn photon_number(&self) -> usize {
        0
    }

    pub fn population(&self, bin: usize, level: Level) -> usize {
        1 + 5 * bin + level.slot()
    }

    pub fn field_spin(&self, bin: usize) -> usize {
        1 + 5 * self.bins + 2 * bin
    }

    pub fn pair_diagonal(&self, bin: usize) -> usize {
        1 + 7 * self.bins + bin
    }

    /// Offset of the stored complex pair moment for `j < k`.
    pub fn pair_off_diagonal(&self, j: usize, k: usize) -> usize {
        debug_assert!(j < k && k < self.bins);
        let before = j * (2 * self.bins - j - 1) / 2;
        1 + 8 * self.bins + 2 * (before + (k - j - 1))
    }
}

/// Hermitian matrix of spin-spin correlations, stored as the upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMatrix {
    bins: usize,
    diagonal: Vec<f64>,
    upper: Vec<Complex64>,
}

impl PairMatrix {
    pub fn zeros(bins: usize) -> Self {
        Self { bins, diagonal: vec![0.0; bins], upper: vec![Complex64::new(0.0, 0.0); bins * (bins.max(1) - 1) / 2] }
    }

    fn index(&self, j: usize, k: usize) -> usize {
        j * (2 * self.bins - j - 1) / 2 + (k - j - 1)
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        match j.cmp(&k) {
            std::cmp::Ordering::Equal => Complex64::new(self.diagonal[j], 0.0),
            std::cmp::Ordering::Less => self.upper[self.index(j, k)],
            std::cmp::Ordering::Greater => self.upper[self.index(k, j)].conj(),
        }
    }

    /// Sets `s[j][k]` (and implicitly `s[k][j]`). Diagonal entries keep only
    /// the real part.
    pub fn set(&mut self, j: usize, k: usize, value: Complex64) {
        match j.cmp(&k) {
            std::cmp::Ordering::Equal => self.diagonal[j] = value.re,
            std::cmp::Ordering::Less => {
                let i = self.index(j, k);
                self.upper[i] = value;
            }
            std::cmp::Ordering::Greater => {
                let i = self.index(k, j);
                self.upper[i] = value.conj();
            }
        }
    }
}

/// The retained moments in structured form.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantState {
    pub photon_number: f64,
    /// `populations[j][level.slot()]`.
    pub populations: Vec<[f64; 5]>,
    /// `<a^dagger sigma_j^{35}>` per bin.
    pub field_spin: Vec<Complex64>,
    pub spin_spin: PairMatrix,
}

impl CumulantState {
    pub fn zeros(bins: usize) -> Self {
        Self {
            photon_number: 0.0,
            populations: vec![[0.0; 5]; bins],
            field_spin: vec![Complex64::new(0.0, 0.0); bins],
            spin_spin: PairMatrix::zeros(bins),
        }
    }

    pub fn bins(&self) -> usize {
        self.populations.len()
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.bins())
    }

    pub fn population(&self, bin: usize, level: Level) -> f64 {
        self.populations[bin][level.slot()]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let layout = self.layout();
        let mut y = vec![0.0; layout.len()];
        y[0] = self.photon_number;
        for j in 0..self.bins() {
            for level in Level::ALL {
                y[layout.population(j, level)] = self.population(j, level);
            }
            let c = layout.field_spin(j);
            y[c] = self.field_spin[j].re;
            y[c + 1] = self.field_spin[j].im;
            y[layout.pair_diagonal(j)] = self.spin_spin.diagonal[j];
            for k in (j + 1)..self.bins() {
                let o = layout.pair_off_diagonal(j, k);
                let s = self.spin_spin.get(j, k);
                y[o] = s.re;
                y[o + 1] = s.im;
            }
        }
        y
    }

    pub fn from_slice(layout: StateLayout, y: &[f64]) -> Result<Self, CumulantError> {
        if y.len() != layout.len() {
            return Err(CumulantError::DimensionMismatch {
                bins: layout.bins(),
                expected: layout.len(),
                found: y.len(),
            });
        }
        let bins = layout.bins();
        let mut state = Self::zeros(bins);
        state.photon_number = y[0];
        for j in 0..bins {
            for level in Level::ALL {
                state.populations[j][level.slot()] = y[layout.population(j, level)];
            }
            let c = layout.field_spin(j);
            state.field_spin[j] = Complex64::new(y[c], y[c + 1]);
            state.spin_spin.diagonal[j] = y[layout.pair_diagonal(j)];
            for k in (j + 1)..bins {
                let o = layout.pair_off_diagonal(j, k);
                state.spin_spin.set(j, k, Complex64::new(y[o], y[o + 1]));
            }
        }
        Ok(state)
    }
}

/// Projection of a state onto the quantities that are usually plotted.
#[derive(Debug, Clone, PartialEq)]
pub struct Observables {
    pub photon_number: f64,
    /// `p[j][T_X] - p[j][T_Z]`.
    pub inversion: Vec<f64>,
    pub total_triplet: Vec<f64>,
    pub populations: Vec<[f64; 5]>,
}

pub fn observables(state: &CumulantState) -> Observables {
    Observables {
        photon_number: state.photon_number,
        inversion: state.populations.iter().map(|p| p[UP] - p[DOWN]).collect(),
        total_triplet: state.populations.iter().map(|p| p[2] + p[3] + p[4]).collect(),
        populations: state.populations.clone(),
    }
}

/// The moment equations with all rates pre-reduced from the channel list.
#[derive(Debug, Clone)]
pub struct CumulantModel {
    layout: StateLayout,
    couplings: Vec<f64>,
    sizes: Vec<f64>,
    /// `transfer[l][m]`: rate of incoherent jumps from slot m to slot l.
    transfer: [[f64; 5]; 5],
    outflow: [f64; 5],
    /// Decay rate of the 3-5 coherence.
    coherence_decay: f64,
    cavity_loss: f64,
    cavity_gain: f64,
    delta: f64,
    thermal_photons: f64,
}

impl CumulantModel {
    pub fn new(params: &ModelParams) -> Result<Self, CumulantError> {
        let channels = build_channel_set(&params.rates, &params.cavity)?;
        Ok(Self::from_channels(&params.hist, &channels, params.cavity.delta, params.cavity.thermal_photons()))
    }

    /// Builds the model from an explicit channel list.
    pub fn from_channels(
        hist: &CouplingHistogram,
        channels: &[LindbladChannel],
        delta: f64,
        thermal_photons: f64,
    ) -> Self {
        Self::from_clusters(hist.centers(), hist.populations(), channels, delta, thermal_photons)
    }

    /// Like [`Self::from_channels`] but from raw cluster couplings and sizes,
    /// which may include zero couplings.
    pub fn from_clusters(
        couplings: &[f64],
        sizes: &[f64],
        channels: &[LindbladChannel],
        delta: f64,
        thermal_photons: f64,
    ) -> Self {
        assert_eq!(couplings.len(), sizes.len(), "one size per cluster");
        let mut transfer = [[0.0; 5]; 5];
        let mut outflow = [0.0; 5];
        let mut coherence_decay = 0.0;
        let mut cavity_loss = 0.0;
        let mut cavity_gain = 0.0;
        let in_pair = |slot: usize| if slot == UP || slot == DOWN { 1.0 } else { 0.0 };
        for channel in channels {
            let rate = channel.rate;
            match channel.kind {
                JumpKind::Transition { from, to } => {
                    let (m, l) = (from.slot(), to.slot());
                    transfer[l][m] += rate;
                    outflow[m] += rate;
                    coherence_decay += 0.5 * rate * in_pair(m);
                }
                JumpKind::Dephasing(l, m) => {
                    let weight = |slot: usize| {
                        if slot == l.slot() {
                            1.0
                        } else if slot == m.slot() {
                            -1.0
                        } else {
                            0.0
                        }
                    };
                    let d: f64 = weight(UP) - weight(DOWN);
                    coherence_decay += 0.5 * rate * d * d;
                }
                JumpKind::CavityLoss => cavity_loss += rate,
                JumpKind::CavityGain => cavity_gain += rate,
            }
        }
        Self {
            layout: StateLayout::new(couplings.len()),
            couplings: couplings.to_vec(),
            sizes: sizes.to_vec(),
            transfer,
            outflow,
            coherence_decay,
            cavity_loss,
            cavity_gain,
            delta,
            thermal_photons,
        }
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn bins(&self) -> usize {
        self.layout.bins()
    }

    pub fn thermal_photons(&self) -> f64 {
        self.thermal_photons
    }

    /// Decay rate of `<sigma^{35}>` implied by the channel set.
    pub fn coherence_decay(&self) -> f64 {
        self.coherence_decay
    }

    /// Thermal photons in the cavity, every emitter in S0, no correlations.
    pub fn initial_state(&self) -> CumulantState {
        let mut state = CumulantState::zeros(self.bins());
        state.photon_number = self.thermal_photons;
        for p in &mut state.populations {
            p[Level::S0.slot()] = 1.0;
        }
        state
    }

    pub fn derivative(&self, state: &CumulantState) -> Result<CumulantState, CumulantError> {
        let y = state.to_vec();
        if state.bins() != self.bins() {
            return Err(CumulantError::DimensionMismatch {
                bins: self.bins(),
                expected: self.layout.len(),
                found: y.len(),
            });
        }
        let mut dy = vec![0.0; y.len()];
        self.rhs(&y, &mut dy);
        CumulantState::from_slice(self.layout, &dy)
    }

    /// Time derivative of the flat state `y` into `dy`.
    ///
    /// Panics if either slice does not match [`Self::layout`].
    pub fn rhs(&self, y: &[f64], dy: &mut [f64]) {
        let layout = self.layout;
        let bins = layout.bins();
        assert_eq!(y.len(), layout.len(), "state length does not match layout");
        assert_eq!(dy.len(), layout.len(), "derivative length does not match layout");
        let zero = Complex64::new(0.0, 0.0);
        let n = y[0];
        let pop = |j: usize, slot: usize| y[1 + 5 * j + slot];
        let field_spin = |j: usize| {
            let o = layout.field_spin(j);
            Complex64::new(y[o], y[o + 1])
        };
        let pair = |j: usize, k: usize| -> Complex64 {
            match j.cmp(&k) {
                std::cmp::Ordering::Equal => Complex64::new(y[layout.pair_diagonal(j)], 0.0),
                std::cmp::Ordering::Less => {
                    let o = layout.pair_off_diagonal(j, k);
                    Complex64::new(y[o], y[o + 1])
                }
                std::cmp::Ordering::Greater => {
                    let o = layout.pair_off_diagonal(k, j);
                    Complex64::new(y[o], -y[o + 1])
                }
            }
        };

        // Photon number.
        let mut dn = -self.cavity_loss * n + self.cavity_gain * (n + 1.0);
        for j in 0..bins {
            let c = field_spin(j);
            dn += (self.sizes[j] * self.couplings[j] * I * (c.conj() - c)).re;
        }
        dy[0] = dn;

        let field_decay = 0.5 * (self.cavity_loss - self.cavity_gain);
        let decay = Complex64::new(-(field_decay + self.coherence_decay), self.delta);
        for j in 0..bins {
            let g = self.couplings[j];
            let c = field_spin(j);

            // Populations: incoherent transfer plus exchange with the cavity.
            for l in 0..5 {
                let mut rate = -self.outflow[l] * pop(j, l);
                for m in 0..5 {
                    rate += self.transfer[l][m] * pop(j, m);
                }
                dy[1 + 5 * j + l] = rate;
            }
            let exchange = (g * I * (c - c.conj())).re;
            dy[1 + 5 * j + UP] += exchange;
            dy[1 + 5 * j + DOWN] -= exchange;

            // <a^dagger sigma^{35}>: d/dt picks up g <a a^dagger sigma^{55} - a^dagger a sigma^{33}>
            // plus the other emitters' sigma^{53} sigma^{35}.
            let photons = Complex64::new(n, 0.0);
            let upper = Complex64::new(pop(j, UP), 0.0);
            let lower = Complex64::new(pop(j, DOWN), 0.0);
            // <a^dagger a sigma^{ll}> with <a>, <a^dagger>, <a^dagger sigma^{ll}>, <a sigma^{ll}> = 0.
            let n_upper = third_order_expand([zero, zero, upper], photons, zero, zero);
            let n_lower = third_order_expand([zero, zero, lower], photons, zero, zero);
            let mut collective = zero;
            for k in 0..bins {
                let partners = if k == j { self.sizes[k] - 1.0 } else { self.sizes[k] };
                collective += partners * self.couplings[k] * pair(k, j);
            }
            let dc = decay * c + I * g * (upper + n_upper - n_lower) + I * collective;
            let o = layout.field_spin(j);
            dy[o] = dc.re;
            dy[o + 1] = dc.im;
        }

        // <sigma_i^{53} sigma_m^{35}> for distinct emitters i in bin j, m in bin k.
        let pair_decay = -2.0 * self.coherence_decay;
        for j in 0..bins {
            for k in j..bins {
                let cj = field_spin(j);
                let ck = field_spin(k);
                let (gj, gk) = (self.couplings[j], self.couplings[k]);
                let p = |bin: usize, slot: usize| Complex64::new(pop(bin, slot), 0.0);
                // <a^dagger sigma_i^{ll} sigma_m^{35}> -> <a^dagger sigma_m^{35}><sigma_i^{ll}>
                let lower_term = third_order_expand([zero, p(j, DOWN), zero], zero, ck, zero);
                let upper_term = third_order_expand([zero, p(j, UP), zero], zero, ck, zero);
                // <sigma_i^{53} a sigma_m^{ll}> -> <a sigma_i^{53}><sigma_m^{ll}>
                let to_upper = third_order_expand([zero, zero, p(k, UP)], cj.conj(), zero, zero);
                let to_lower = third_order_expand([zero, zero, p(k, DOWN)], cj.conj(), zero, zero);
                let ds = pair_decay * pair(j, k)
                    + I * gj * (lower_term - upper_term)
                    + I * gk * (to_upper - to_lower);
                if j == k {
                    dy[layout.pair_diagonal(j)] = ds.re;
                } else {
                    let o = layout.pair_off_diagonal(j, k);
                    dy[o] = ds.re;
                    dy[o + 1] = ds.im;
                }
            }
        }
    }
}

/// Initial state of `params`: thermal cavity, ground-state emitters.
pub fn init_state(params: &ModelParams) -> Result<CumulantState, CumulantError> {
    Ok(CumulantModel::new(params)?.initial_state())
}

/// Time derivative of `state` under `params`.
pub fn rhs(state: &CumulantState, params: &ModelParams) -> Result<CumulantState, CumulantError> {
    CumulantModel::new(params)?.derivative(state)
}
