//! Brute-force Lindblad master-equation solver for a handful of emitters.
//!
//! The density matrix lives on the truncated Fock ladder tensored with one
//! five-level space per emitter. It is evolved with the same integrator and
//! the same channel list as the cumulant model, so the two can be compared
//! moment by moment.
//!
//! Basis index: `fock * 5^n + sum_e slot_e * 5^(n-1-e)`.

use bytemuck::{cast_slice, cast_slice_mut};
use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::coupling::CouplingHistogram;
use crate::cumulant::{CumulantModel, CumulantState};
use crate::ode::{integrate, IntegratorConfig, OdeError};
use crate::spin_model::{
    build_channel_set, CavityParams, JumpKind, Level, LindbladChannel, SpinModelError, SpinRates,
};

pub const MAX_EMITTERS: usize = 3;
pub const MAX_FOCK_CUTOFF: usize = 30;
pub const MAX_DIMENSION: usize = 4000;

const UP: usize = 4;
const DOWN: usize = 2;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{n_emitters} emitters with Fock cutoff {fock_cutoff} exceed the oracle limits")]
    TooLarge { n_emitters: usize, fock_cutoff: usize },
    #[error("oracle needs at least one emitter")]
    NoEmitters,
    #[error("invalid initial state: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Spin(#[from] SpinModelError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub fock_cutoff: usize,
    /// One coupling per emitter (1/s).
    pub couplings: Vec<f64>,
    pub rates: SpinRates,
    pub cavity: CavityParams,
}

impl OracleConfig {
    pub fn n_emitters(&self) -> usize {
        self.couplings.len()
    }

    pub fn emitter_dim(&self) -> usize {
        5usize.pow(self.n_emitters() as u32)
    }

    pub fn dim(&self) -> usize {
        (self.fock_cutoff + 1) * self.emitter_dim()
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let n = self.n_emitters();
        if n == 0 {
            return Err(OracleError::NoEmitters);
        }
        if n > MAX_EMITTERS || self.fock_cutoff > MAX_FOCK_CUTOFF || self.dim() > MAX_DIMENSION {
            return Err(OracleError::TooLarge { n_emitters: n, fock_cutoff: self.fock_cutoff });
        }
        Ok(())
    }

    /// Emitters grouped into clusters of equal coupling, in increasing order.
    pub fn grouping(&self) -> Grouping {
        let mut centers: Vec<f64> = self.couplings.clone();
        centers.sort_by(|a, b| a.total_cmp(b));
        centers.dedup();
        let bin_of = self
            .couplings
            .iter()
            .map(|g| centers.iter().position(|c| c == g).expect("coupling is present"))
            .collect();
        Grouping { centers, bin_of }
    }
}

/// Which cluster each emitter belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub centers: Vec<f64>,
    pub bin_of: Vec<usize>,
}

impl Grouping {
    pub fn bins(&self) -> usize {
        self.centers.len()
    }

    pub fn sizes(&self) -> Vec<f64> {
        let mut sizes = vec![0.0; self.bins()];
        for &b in &self.bin_of {
            sizes[b] += 1.0;
        }
        sizes
    }

    /// The equivalent histogram; fails if a coupling is not positive.
    pub fn histogram(&self) -> Option<CouplingHistogram> {
        CouplingHistogram::new(self.centers.clone(), self.sizes()).ok()
    }
}

/// Dense complex density matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn from_data(dim: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.dim + c]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Largest |rho_rc - conj(rho_cr)|.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            for c in r..self.dim {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }

    /// True when the smallest eigenvalue is at least `-tolerance`, checked by
    /// a Cholesky factorisation of rho + tolerance * 1.
    pub fn is_positive(&self, tolerance: f64) -> bool {
        let shifted = DMatrix::from_fn(self.dim, self.dim, |r, c| {
            let v = 0.5 * (self.get(r, c) + self.get(c, r).conj());
            if r == c {
                v + tolerance
            } else {
                v
            }
        });
        shifted.cholesky().is_some()
    }
}

/// Initial cavity state.
#[derive(Debug, Clone, PartialEq)]
pub enum CavityState {
    Fock(usize),
    /// Bose-Einstein distribution with this mean, truncated and renormalised.
    Thermal(f64),
    /// Pure state with these Fock amplitudes (normalised on construction).
    Pure(Vec<Complex64>),
}

/// Initial single-emitter state.
#[derive(Debug, Clone, PartialEq)]
pub enum EmitterState {
    Level(Level),
    /// Pure superposition with amplitudes indexed by level slot.
    Pure([Complex64; 5]),
}

/// Uncorrelated product of a cavity state and one state per emitter.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    pub cavity: CavityState,
    pub emitters: Vec<EmitterState>,
}

impl ProductState {
    pub fn density_matrix(&self, config: &OracleConfig) -> Result<DensityMatrix, OracleError> {
        config.validate()?;
        if self.emitters.len() != config.n_emitters() {
            return Err(OracleError::InvalidState(format!(
                "{} emitter states for {} emitters",
                self.emitters.len(),
                config.n_emitters()
            )));
        }
        let cutoff = config.fock_cutoff;
        let cavity: Vec<Vec<Complex64>> = match &self.cavity {
            CavityState::Fock(n) => {
                if *n > cutoff {
                    return Err(OracleError::InvalidState(format!("Fock state {n} above cutoff {cutoff}")));
                }
                let mut m = vec![vec![ZERO; cutoff + 1]; cutoff + 1];
                m[*n][*n] = Complex64::new(1.0, 0.0);
                m
            }
            CavityState::Thermal(mean) => {
                if !(*mean >= 0.0) {
                    return Err(OracleError::InvalidState(format!("thermal mean {mean}")));
                }
                let weights: Vec<f64> =
                    (0..=cutoff).map(|f| (mean / (mean + 1.0)).powi(f as i32) / (mean + 1.0)).collect();
                let total: f64 = weights.iter().sum();
                let mut m = vec![vec![ZERO; cutoff + 1]; cutoff + 1];
                for f in 0..=cutoff {
                    m[f][f] = Complex64::new(weights[f] / total, 0.0);
                }
                m
            }
            CavityState::Pure(amps) => {
                if amps.len() > cutoff + 1 {
                    return Err(OracleError::InvalidState("cavity amplitudes exceed cutoff".into()));
                }
                let v = normalised(amps)?;
                let mut m = vec![vec![ZERO; cutoff + 1]; cutoff + 1];
                for (r, a) in v.iter().enumerate() {
                    for (c, b) in v.iter().enumerate() {
                        m[r][c] = a * b.conj();
                    }
                }
                m
            }
        };
        let emitters: Vec<Vec<Complex64>> = self
            .emitters
            .iter()
            .map(|e| match e {
                EmitterState::Level(level) => {
                    let mut v = vec![ZERO; 5];
                    v[level.slot()] = Complex64::new(1.0, 0.0);
                    Ok(v)
                }
                EmitterState::Pure(amps) => normalised(amps),
            })
            .collect::<Result<_, _>>()?;
        // Emitter part is pure, so rho = cavity (x) |psi><psi|.
        let edim = config.emitter_dim();
        let mut psi = vec![Complex64::new(1.0, 0.0)];
        for e in &emitters {
            psi = psi.iter().flat_map(|a| e.iter().map(move |b| a * b)).collect();
        }
        let dim = config.dim();
        let mut data = vec![ZERO; dim * dim];
        for fr in 0..=cutoff {
            for fc in 0..=cutoff {
                let w = cavity[fr][fc];
                if w == ZERO {
                    continue;
                }
                for er in 0..edim {
                    for ec in 0..edim {
                        data[(fr * edim + er) * dim + fc * edim + ec] = w * psi[er] * psi[ec].conj();
                    }
                }
            }
        }
        Ok(DensityMatrix { dim, data })
    }
}

fn normalised(amps: &[Complex64]) -> Result<Vec<Complex64>, OracleError> {
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(OracleError::InvalidState("zero or non-finite amplitudes".into()));
    }
    Ok(amps.iter().map(|a| a / norm).collect())
}

/// A jump operator with at most one nonzero entry per row: `(row, col, value)`.
#[derive(Debug, Clone)]
struct Jump {
    rate: f64,
    entries: Vec<(usize, usize, f64)>,
}

/// The Lindblad generator rho -> d rho / dt on the truncated space.
///
/// Written as `-i (K rho - rho K^dagger) + sum_k rate_k L_k rho L_k^dagger` with
/// the effective non-Hermitian `K = H - (i/2) sum_k rate_k L_k^dagger L_k`.
#[derive(Debug, Clone)]
pub struct Generator {
    dim: usize,
    n_emitters: usize,
    cutoff: usize,
    k_diagonal: Vec<Complex64>,
    /// Off-diagonal Hamiltonian entries grouped by row: `(col, value)`.
    h_rows: Vec<Vec<(usize, f64)>>,
    jumps: Vec<Jump>,
}

struct Basis {
    n_emitters: usize,
    edim: usize,
}

impl Basis {
    fn fock(&self, index: usize) -> usize {
        index / self.edim
    }

    fn slot(&self, index: usize, emitter: usize) -> usize {
        let stride = 5usize.pow((self.n_emitters - 1 - emitter) as u32);
        (index / stride) % 5
    }

    fn with_slot(&self, index: usize, emitter: usize, slot: usize) -> usize {
        let stride = 5usize.pow((self.n_emitters - 1 - emitter) as u32);
        index - self.slot(index, emitter) * stride + slot * stride
    }
}

/// Builds the generator for `config` from the shared channel list.
pub fn build_generator(config: &OracleConfig) -> Result<Generator, OracleError> {
    config.validate()?;
    let channels = build_channel_set(&config.rates, &config.cavity)?;
    Ok(Generator::from_channels(config, &channels))
}

impl Generator {
    pub fn from_channels(config: &OracleConfig, channels: &[LindbladChannel]) -> Self {
        let n = config.n_emitters();
        let edim = config.emitter_dim();
        let dim = config.dim();
        let cutoff = config.fock_cutoff;
        let basis = Basis { n_emitters: n, edim };

        let mut h_rows = vec![Vec::new(); dim];
        let mut k_diagonal: Vec<Complex64> =
            (0..dim).map(|i| Complex64::new(config.cavity.delta * basis.fock(i) as f64, 0.0)).collect();
        for (e, &g) in config.couplings.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for col in 0..dim {
                let f = basis.fock(col);
                if basis.slot(col, e) == UP && f < cutoff {
                    // a^dagger sigma^{35}: |f, X> -> sqrt(f+1) |f+1, Z>, plus its adjoint.
                    let row = basis.with_slot(col, e, DOWN) + edim;
                    let v = g * ((f + 1) as f64).sqrt();
                    h_rows[row].push((col, v));
                    h_rows[col].push((row, v));
                }
            }
        }

        let mut jumps = Vec::new();
        for channel in channels {
            let mut entries = Vec::new();
            match channel.kind {
                JumpKind::Transition { from, to } => {
                    for e in 0..n {
                        let mut emitter_entries = Vec::new();
                        for row in 0..dim {
                            if basis.slot(row, e) == to.slot() {
                                emitter_entries.push((row, basis.with_slot(row, e, from.slot()), 1.0));
                            }
                        }
                        jumps.push(Jump { rate: channel.rate, entries: emitter_entries });
                    }
                }
                JumpKind::Dephasing(l, m) => {
                    for e in 0..n {
                        let mut emitter_entries = Vec::new();
                        for row in 0..dim {
                            let s = basis.slot(row, e);
                            if s == l.slot() {
                                emitter_entries.push((row, row, 1.0));
                            } else if s == m.slot() {
                                emitter_entries.push((row, row, -1.0));
                            }
                        }
                        jumps.push(Jump { rate: channel.rate, entries: emitter_entries });
                    }
                }
                JumpKind::CavityLoss => {
                    for row in 0..dim {
                        let f = basis.fock(row);
                        if f < cutoff {
                            entries.push((row, row + edim, ((f + 1) as f64).sqrt()));
                        }
                    }
                    jumps.push(Jump { rate: channel.rate, entries });
                }
                JumpKind::CavityGain => {
                    for row in 0..dim {
                        let f = basis.fock(row);
                        if f > 0 {
                            entries.push((row, row - edim, (f as f64).sqrt()));
                        }
                    }
                    jumps.push(Jump { rate: channel.rate, entries });
                }
            }
        }
        for jump in &jumps {
            // L^dagger L is diagonal for operators with one entry per row and column.
            for &(_, col, v) in &jump.entries {
                k_diagonal[col] -= 0.5 * I * jump.rate * v * v;
            }
        }
        Self { dim, n_emitters: n, cutoff, k_diagonal, h_rows, jumps }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes d rho / dt into `out`; `scratch` must hold dim^2 entries.
    ///
    /// The output is Hermitian to the last bit whenever `rho` is.
    pub fn apply(&self, rho: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        let dim = self.dim;
        // scratch = K rho
        for r in 0..dim {
            let k = self.k_diagonal[r];
            let (row_out, row_in) = (&mut scratch[r * dim..(r + 1) * dim], &rho[r * dim..(r + 1) * dim]);
            for (o, x) in row_out.iter_mut().zip(row_in) {
                *o = k * x;
            }
            for &(col, h) in &self.h_rows[r] {
                let src = &rho[col * dim..(col + 1) * dim];
                for (o, x) in row_out.iter_mut().zip(src) {
                    *o += h * x;
                }
            }
        }
        for r in 0..dim {
            for c in r..dim {
                let a = scratch[r * dim + c];
                let b = scratch[c * dim + r];
                let v = -I * (a - b.conj());
                out[r * dim + c] = v;
                out[c * dim + r] = v.conj();
            }
        }
        for jump in &self.jumps {
            for &(r, i, vr) in &jump.entries {
                let base = r * dim;
                for &(c, j, vc) in &jump.entries {
                    let w = jump.rate * (vr * vc);
                    out[base + c] += w * rho[i * dim + j];
                }
            }
        }
    }

    fn basis(&self) -> Basis {
        Basis { n_emitters: self.n_emitters, edim: self.dim / (self.cutoff + 1) }
    }

    /// Moments of `rho` in the families retained by the cumulant model.
    pub fn moments(&self, rho: &[Complex64]) -> OracleMoments {
        let dim = self.dim;
        let n = self.n_emitters;
        let basis = self.basis();
        let edim = basis.edim;
        let mut photon_number = 0.0;
        let mut trace = ZERO;
        let mut populations = vec![[0.0; 5]; n];
        for i in 0..dim {
            let d = rho[i * dim + i];
            trace += d;
            photon_number += basis.fock(i) as f64 * d.re;
            for (e, p) in populations.iter_mut().enumerate() {
                p[basis.slot(i, e)] += d.re;
            }
        }
        // <a^dagger sigma_e^{35}> = sum over (row=(f+1, Z_e), col=(f, X_e)) of sqrt(f+1) rho[col][row].
        let mut field_spin = vec![ZERO; n];
        for (e, c) in field_spin.iter_mut().enumerate() {
            for col in 0..dim {
                let f = basis.fock(col);
                if basis.slot(col, e) == UP && f < self.cutoff {
                    let row = basis.with_slot(col, e, DOWN) + edim;
                    *c += ((f + 1) as f64).sqrt() * rho[col * dim + row];
                }
            }
        }
        // <sigma_e^{53} sigma_m^{35}>: row has (e=X, m=Z), col has (e=Z, m=X).
        let mut pairs = vec![vec![ZERO; n]; n];
        for e in 0..n {
            for m in 0..n {
                if e == m {
                    continue;
                }
                let mut acc = ZERO;
                for col in 0..dim {
                    if basis.slot(col, e) == DOWN && basis.slot(col, m) == UP {
                        let row = basis.with_slot(basis.with_slot(col, e, UP), m, DOWN);
                        acc += rho[col * dim + row];
                    }
                }
                pairs[e][m] = acc;
            }
        }
        OracleMoments { trace: trace.re, photon_number, populations, field_spin, pairs }
    }
}

/// Moments of one density matrix, per emitter and per ordered emitter pair.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMoments {
    pub trace: f64,
    pub photon_number: f64,
    pub populations: Vec<[f64; 5]>,
    /// `<a^dagger sigma_e^{35}>`.
    pub field_spin: Vec<Complex64>,
    /// `pairs[e][m] = <sigma_e^{53} sigma_m^{35}>`, zero on the diagonal.
    pub pairs: Vec<Vec<Complex64>>,
}

impl OracleMoments {
    /// Averages over the emitters of each cluster to give the cumulant
    /// variables. Clusters with a single emitter get a zero same-bin pair.
    pub fn to_cumulant_state(&self, grouping: &Grouping) -> CumulantState {
        let bins = grouping.bins();
        let mut state = CumulantState::zeros(bins);
        state.photon_number = self.photon_number;
        let sizes = grouping.sizes();
        for (e, &b) in grouping.bin_of.iter().enumerate() {
            for l in 0..5 {
                state.populations[b][l] += self.populations[e][l] / sizes[b];
            }
            state.field_spin[b] += self.field_spin[e] / sizes[b];
        }
        for j in 0..bins {
            for k in j..bins {
                let mut acc = ZERO;
                let mut count = 0.0;
                for (e, &be) in grouping.bin_of.iter().enumerate() {
                    for (m, &bm) in grouping.bin_of.iter().enumerate() {
                        if e != m && be == j && bm == k {
                            acc += self.pairs[e][m];
                            count += 1.0;
                        }
                    }
                }
                if count > 0.0 {
                    state.spin_spin.set(j, k, acc / count);
                }
            }
        }
        state
    }
}

/// Moment time series from [`evolve`].
#[derive(Debug, Clone)]
pub struct OracleTrajectory {
    pub times: Vec<f64>,
    pub moments: Vec<OracleMoments>,
    pub final_state: DensityMatrix,
    /// Largest |tr rho - 1| over the samples.
    pub max_trace_error: f64,
    /// Positivity violations and similar diagnostics.
    pub warnings: Vec<String>,
}

/// Integrator settings for the oracle: 100x tighter than the production defaults.
pub fn oracle_integrator() -> IntegratorConfig {
    let base = IntegratorConfig::default();
    IntegratorConfig { rtol: base.rtol / 100.0, atol: base.atol / 100.0, ..base }
}

fn run(
    generator: &Generator,
    rho0: &DensityMatrix,
    t_span: (f64, f64),
    sign: f64,
    integ: &IntegratorConfig,
) -> Result<crate::ode::Trajectory, OracleError> {
    let mut scratch = vec![ZERO; generator.dim * generator.dim];
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let rho: &[Complex64] = cast_slice(y);
        let out: &mut [Complex64] = cast_slice_mut(dy);
        generator.apply(rho, out, &mut scratch);
        if sign != 1.0 {
            for v in out.iter_mut() {
                *v *= sign;
            }
        }
    };
    let y0: &[f64] = cast_slice(&rho0.data);
    Ok(integrate(rhs, y0, t_span, integ)?)
}

/// Evolves `rho0` from t = 0 and returns moments at `sample_times`.
pub fn evolve(
    config: &OracleConfig,
    rho0: &DensityMatrix,
    sample_times: &[f64],
    integ: &IntegratorConfig,
) -> Result<OracleTrajectory, OracleError> {
    let generator = build_generator(config)?;
    if rho0.dim != generator.dim {
        return Err(OracleError::InvalidState("density matrix dimension mismatch".into()));
    }
    let end = sample_times.iter().copied().fold(0.0, f64::max);
    let mut times = Vec::new();
    let mut moments = Vec::new();
    let mut warnings = Vec::new();
    let mut final_state = rho0.clone();
    if end > 0.0 {
        let cfg = IntegratorConfig { output_times: sample_times.to_vec(), ..integ.clone() };
        let traj = run(&generator, rho0, (0.0, end), 1.0, &cfg)?;
        for (t, y) in traj.times.iter().zip(&traj.states) {
            times.push(*t);
            moments.push(generator.moments(cast_slice(y)));
        }
        final_state = DensityMatrix { dim: generator.dim, data: cast_slice(traj.last_state()).to_vec() };
    } else {
        for &t in sample_times {
            times.push(t);
            moments.push(generator.moments(&rho0.data));
        }
    }
    let max_trace_error = moments.iter().map(|m| (m.trace - 1.0).abs()).fold(0.0, f64::max);
    if !final_state.is_positive(1e-8) {
        warnings.push(format!("density matrix lost positivity by t = {end}"));
    }
    Ok(OracleTrajectory { times, moments, final_state, max_trace_error, warnings })
}

/// Exact time derivatives of the moments at `rho`: the moments of L[rho].
pub fn moment_rates(config: &OracleConfig, rho: &DensityMatrix) -> Result<OracleMoments, OracleError> {
    let generator = build_generator(config)?;
    let mut out = vec![ZERO; generator.dim * generator.dim];
    let mut scratch = out.clone();
    generator.apply(&rho.data, &mut out, &mut scratch);
    Ok(generator.moments(&out))
}

/// Moment derivatives at `rho` from central differences of evolved
/// trajectories at +/- h and +/- h/2, combined by Richardson extrapolation
/// (error O(h^4)).
pub fn moment_rates_finite_difference(
    config: &OracleConfig,
    rho: &DensityMatrix,
    h: f64,
    integ: &IntegratorConfig,
) -> Result<OracleMoments, OracleError> {
    let generator = build_generator(config)?;
    let at = |step: f64, sign: f64| -> Result<OracleMoments, OracleError> {
        let cfg = IntegratorConfig { output_times: Vec::new(), initial_dt: step / 4.0, ..integ.clone() };
        let traj = run(&generator, rho, (0.0, step), sign, &cfg)?;
        Ok(generator.moments(cast_slice(traj.last_state())))
    };
    let central = |step: f64| -> Result<OracleMoments, OracleError> {
        let fwd = at(step, 1.0)?;
        let back = at(step, -1.0)?;
        Ok(combine(&fwd, &back, 1.0 / (2.0 * step), -1.0 / (2.0 * step)))
    };
    let coarse = central(h)?;
    let fine = central(0.5 * h)?;
    Ok(combine(&fine, &coarse, 4.0 / 3.0, -1.0 / 3.0))
}

fn combine(a: &OracleMoments, b: &OracleMoments, wa: f64, wb: f64) -> OracleMoments {
    OracleMoments {
        trace: wa * a.trace + wb * b.trace,
        photon_number: wa * a.photon_number + wb * b.photon_number,
        populations: a
            .populations
            .iter()
            .zip(&b.populations)
            .map(|(x, y)| std::array::from_fn(|l| wa * x[l] + wb * y[l]))
            .collect(),
        field_spin: a.field_spin.iter().zip(&b.field_spin).map(|(x, y)| wa * x + wb * y).collect(),
        pairs: a
            .pairs
            .iter()
            .zip(&b.pairs)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| wa * x + wb * y).collect())
            .collect(),
    }
}

/// A state invariant under the joint phase rotation of cavity and spins,
/// built from a diagonal product state plus small coherences of the two
/// kinds the cumulant model retains: `a^dagger sigma_e^{35}` and
/// `sigma_e^{53} sigma_m^{35}`.
///
/// Every third-order moment entering the retained equations factorises
/// exactly on such a state, so the truncated equations hold without error
/// at the instant of preparation.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSymmetricState {
    /// Cavity Fock-state probabilities (renormalised).
    pub cavity: Vec<f64>,
    /// Level probabilities per cluster, by slot (renormalised).
    pub levels: Vec<[f64; 5]>,
    /// Weight of the field-spin coherence per cluster.
    pub field_spin: Vec<Complex64>,
    /// Weight of the spin-spin coherence per ordered cluster pair.
    pub spin_spin: Vec<Vec<Complex64>>,
}

impl PhaseSymmetricState {
    pub fn density_matrix(&self, config: &OracleConfig) -> Result<DensityMatrix, OracleError> {
        config.validate()?;
        let grouping = config.grouping();
        let bins = grouping.bins();
        if self.levels.len() != bins || self.field_spin.len() != bins || self.spin_spin.len() != bins {
            return Err(OracleError::InvalidState(format!("expected data for {bins} clusters")));
        }
        if self.cavity.len() > config.fock_cutoff + 1 {
            return Err(OracleError::InvalidState("cavity distribution exceeds cutoff".into()));
        }
        let cavity_total: f64 = self.cavity.iter().sum();
        if !(cavity_total > 0.0) {
            return Err(OracleError::InvalidState("empty cavity distribution".into()));
        }
        let levels: Vec<[f64; 5]> = self
            .levels
            .iter()
            .map(|p| {
                let total: f64 = p.iter().sum();
                if total > 0.0 {
                    Ok(p.map(|x| x / total))
                } else {
                    Err(OracleError::InvalidState("empty level distribution".into()))
                }
            })
            .collect::<Result<_, _>>()?;
        let n = config.n_emitters();
        let edim = config.emitter_dim();
        let dim = config.dim();
        let basis = Basis { n_emitters: n, edim };
        let weight: Vec<f64> = (0..dim)
            .map(|i| {
                let f = basis.fock(i);
                let pc = self.cavity.get(f).copied().unwrap_or(0.0) / cavity_total;
                (0..n).fold(pc, |w, e| w * levels[grouping.bin_of[e]][basis.slot(i, e)])
            })
            .collect();
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(weight[i], 0.0);
        }
        let mut add = |row: usize, col: usize, v: Complex64| {
            data[row * dim + col] += v;
            data[col * dim + row] += v.conj();
        };
        for col in 0..dim {
            if weight[col] == 0.0 {
                continue;
            }
            let f = basis.fock(col);
            for e in 0..n {
                let eps = self.field_spin[grouping.bin_of[e]];
                if basis.slot(col, e) == UP && f < config.fock_cutoff && eps != ZERO {
                    let row = basis.with_slot(col, e, DOWN) + edim;
                    add(row, col, eps * ((f + 1) as f64).sqrt() * weight[col]);
                }
                for m in 0..n {
                    if m == e {
                        continue;
                    }
                    let eta = self.spin_spin[grouping.bin_of[e]][grouping.bin_of[m]];
                    if basis.slot(col, e) == DOWN && basis.slot(col, m) == UP && eta != ZERO {
                        let row = basis.with_slot(basis.with_slot(col, e, UP), m, DOWN);
                        add(row, col, eta * weight[col]);
                    }
                }
            }
        }
        Ok(DensityMatrix { dim, data })
    }

    /// Random state for `config` with Fock support `0..=max_fock` and
    /// coherence weights of modulus up to `coherence`.
    ///
    /// The result is Hermitian with unit trace but generally not positive:
    /// the field-spin coherence reaches one Fock level above the diagonal
    /// support. The closure identity is linear in the state, so this does
    /// not matter for [`closure_check`].
    pub fn random<R: rand::Rng>(config: &OracleConfig, max_fock: usize, coherence: f64, rng: &mut R) -> Self {
        let bins = config.grouping().bins();
        let max_fock = max_fock.min(config.fock_cutoff.saturating_sub(1));
        let mut unit = || {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * (coherence / 2f64.sqrt())
        };
        let field_spin = (0..bins).map(|_| unit()).collect();
        let spin_spin = (0..bins).map(|_| (0..bins).map(|_| unit()).collect()).collect();
        PhaseSymmetricState {
            cavity: (0..=max_fock).map(|_| rng.random_range(0.05..1.0)).collect(),
            levels: (0..bins).map(|_| std::array::from_fn(|_| rng.random_range(0.05..1.0))).collect(),
            field_spin,
            spin_spin,
        }
    }
}

/// Cumulant derivative against the oracle derivative, one entry per retained
/// real moment component.
#[derive(Debug, Clone)]
pub struct ClosureReport {
    /// Component labels such as `n`, `p[0][5]`, `c[1].im`, `s[0][1].re`.
    pub labels: Vec<String>,
    pub cumulant: Vec<f64>,
    pub oracle: Vec<f64>,
}

impl ClosureReport {
    /// Largest |cumulant - oracle| divided by the largest |oracle| component.
    pub fn max_relative_error(&self) -> f64 {
        let scale = self.oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let worst = self.cumulant.iter().zip(&self.oracle).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if scale > 0.0 {
            worst / scale
        } else {
            worst
        }
    }

    /// The component with the largest absolute disagreement.
    pub fn worst_component(&self) -> Option<(&str, f64, f64)> {
        (0..self.labels.len())
            .max_by(|&a, &b| {
                let da = (self.cumulant[a] - self.oracle[a]).abs();
                let db = (self.cumulant[b] - self.oracle[b]).abs();
                da.total_cmp(&db)
            })
            .map(|i| (self.labels[i].as_str(), self.cumulant[i], self.oracle[i]))
    }
}

/// How the oracle side of [`closure_check`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleDerivative {
    /// Moments of the generator applied to rho.
    Exact,
    /// Richardson-extrapolated central difference with this step.
    FiniteDifference(f64),
}

/// Compares the cumulant right-hand side at the moments of `rho` with the
/// oracle's moment derivatives, component by component.
pub fn closure_check(
    config: &OracleConfig,
    rho: &DensityMatrix,
    method: OracleDerivative,
    integ: &IntegratorConfig,
) -> Result<ClosureReport, OracleError> {
    let grouping = config.grouping();
    let generator = build_generator(config)?;
    let channels = build_channel_set(&config.rates, &config.cavity)?;
    let model = CumulantModel::from_clusters(
        &grouping.centers,
        &grouping.sizes(),
        &channels,
        config.cavity.delta,
        config.cavity.thermal_photons(),
    );
    let state = generator.moments(&rho.data).to_cumulant_state(&grouping);
    let cumulant = model.derivative(&state).map_err(|e| OracleError::InvalidState(e.to_string()))?;
    let exact = match method {
        OracleDerivative::Exact => moment_rates(config, rho)?,
        OracleDerivative::FiniteDifference(h) => moment_rates_finite_difference(config, rho, h, integ)?,
    };
    let oracle = exact.to_cumulant_state(&grouping);

    let sizes = grouping.sizes();
    let mut report = ClosureReport { labels: Vec::new(), cumulant: Vec::new(), oracle: Vec::new() };
    let mut push = |label: String, a: f64, b: f64| {
        report.labels.push(label);
        report.cumulant.push(a);
        report.oracle.push(b);
    };
    push("n".into(), cumulant.photon_number, oracle.photon_number);
    for j in 0..grouping.bins() {
        for level in Level::ALL {
            push(
                format!("p[{j}][{}]", level.index()),
                cumulant.populations[j][level.slot()],
                oracle.populations[j][level.slot()],
            );
        }
        push(format!("c[{j}].re"), cumulant.field_spin[j].re, oracle.field_spin[j].re);
        push(format!("c[{j}].im"), cumulant.field_spin[j].im, oracle.field_spin[j].im);
    }
    for j in 0..grouping.bins() {
        for k in j..grouping.bins() {
            if j == k && sizes[j] < 2.0 {
                continue;
            }
            let (a, b) = (cumulant.spin_spin.get(j, k), oracle.spin_spin.get(j, k));
            push(format!("s[{j}][{k}].re"), a.re, b.re);
            if j != k {
                push(format!("s[{j}][{k}].im"), a.im, b.im);
            }
        }
    }
    Ok(report)
}

/// Largest absolute deviation per moment family between the two solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub times: Vec<f64>,
    pub photon_number: f64,
    pub populations: f64,
    pub field_spin: f64,
    pub spin_spin: f64,
    /// First sample time at which any family deviates by more than the threshold.
    pub first_exceedance: Option<f64>,
    /// Photon number from each solver at each sample: (oracle, cumulant).
    pub photon_series: Vec<(f64, f64)>,
}

impl DeviationReport {
    pub fn max_deviation(&self) -> f64 {
        self.photon_number.max(self.populations).max(self.field_spin).max(self.spin_spin)
    }
}

/// Runs the oracle and the cumulant model from the same product state and
/// reports how far the moments drift apart over `horizon`.
pub fn compare_with_cumulant(
    config: &OracleConfig,
    initial: &ProductState,
    horizon: f64,
    samples: usize,
    threshold: f64,
    integ: &IntegratorConfig,
) -> Result<DeviationReport, OracleError> {
    let rho0 = initial.density_matrix(config)?;
    let times = crate::ode::linspace(0.0, horizon, samples.max(2));
    let oracle = evolve(config, &rho0, &times, integ)?;
    let grouping = config.grouping();
    let channels = build_channel_set(&config.rates, &config.cavity)?;
    let model = CumulantModel::from_clusters(
        &grouping.centers,
        &grouping.sizes(),
        &channels,
        config.cavity.delta,
        config.cavity.thermal_photons(),
    );
    let start = oracle.moments[0].to_cumulant_state(&grouping);
    let cfg = IntegratorConfig { output_times: times.clone(), ..integ.clone() };
    let traj = integrate(|_t, y, dy| model.rhs(y, dy), &start.to_vec(), (0.0, horizon), &cfg)?;

    let mut report = DeviationReport {
        times: times.clone(),
        photon_number: 0.0,
        populations: 0.0,
        field_spin: 0.0,
        spin_spin: 0.0,
        first_exceedance: None,
        photon_series: Vec::new(),
    };
    for ((t, m), y) in times.iter().zip(&oracle.moments).zip(&traj.states) {
        let exact = m.to_cumulant_state(&grouping);
        let approx = CumulantState::from_slice(model.layout(), y).expect("layout matches");
        let dn = (exact.photon_number - approx.photon_number).abs();
        let mut dp: f64 = 0.0;
        let mut dc: f64 = 0.0;
        let mut ds: f64 = 0.0;
        let sizes = grouping.sizes();
        for j in 0..grouping.bins() {
            for l in 0..5 {
                dp = dp.max((exact.populations[j][l] - approx.populations[j][l]).abs());
            }
            dc = dc.max((exact.field_spin[j] - approx.field_spin[j]).norm());
            for k in j..grouping.bins() {
                if j == k && sizes[j] < 2.0 {
                    continue;
                }
                ds = ds.max((exact.spin_spin.get(j, k) - approx.spin_spin.get(j, k)).norm());
            }
        }
        report.photon_number = report.photon_number.max(dn);
        report.populations = report.populations.max(dp);
        report.field_spin = report.field_spin.max(dc);
        report.spin_spin = report.spin_spin.max(ds);
        if report.first_exceedance.is_none() && dn.max(dp).max(dc).max(ds) > threshold {
            report.first_exceedance = Some(*t);
        }
        report.photon_series.push((exact.photon_number, approx.photon_number));
    }
    Ok(report)
}

/// One resonant emitter, no losses, zero temperature.
pub fn vacuum_rabi_config(g: f64, fock_cutoff: usize) -> OracleConfig {
    OracleConfig {
        fock_cutoff,
        couplings: vec![g],
        rates: SpinRates::zero(),
        cavity: CavityParams { kappa: 0.0, temperature: 0.0, delta: 0.0, ..CavityParams::pentacene_maser() },
    }
}

/// Result of [`vacuum_rabi_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct VacuumRabiReport {
    /// Largest |n_oracle(t) - sin^2(g t)| over the samples.
    pub max_exact_deviation: f64,
    pub max_trace_error: f64,
    /// `(t, oracle n, cumulant n)` at the probe times.
    pub probes: Vec<(f64, f64, f64)>,
}

/// Runs the oracle for one emitter starting in T_X with an empty cavity,
/// compares with sin^2(g t) on `samples` points over [0, t_end], and
/// records the cumulant model's photon number at the sorted `probe_times`.
pub fn vacuum_rabi_check(
    g: f64,
    t_end: f64,
    samples: usize,
    probe_times: &[f64],
) -> Result<VacuumRabiReport, OracleError> {
    let cfg = vacuum_rabi_config(g, 4);
    let integ = oracle_integrator();
    let rho0 = ProductState { cavity: CavityState::Fock(0), emitters: vec![EmitterState::Level(Level::TX)] }
        .density_matrix(&cfg)?;
    let times = crate::ode::linspace(0.0, t_end, samples.max(2));
    let traj = evolve(&cfg, &rho0, &times, &integ)?;
    let max_exact_deviation = traj
        .times
        .iter()
        .zip(&traj.moments)
        .map(|(t, m)| (m.photon_number - (g * t).sin().powi(2)).abs())
        .fold(0.0, f64::max);

    let mut probes = Vec::new();
    if let Some(&last) = probe_times.iter().max_by(|a, b| a.total_cmp(b)) {
        let exact = evolve(&cfg, &rho0, probe_times, &integ)?;
        let grouping = cfg.grouping();
        let channels = build_channel_set(&cfg.rates, &cfg.cavity)?;
        let model = CumulantModel::from_clusters(&grouping.centers, &grouping.sizes(), &channels, 0.0, 0.0);
        // `times` starts at 0, so the first oracle sample is the initial state.
        let start = traj.moments[0].to_cumulant_state(&grouping);
        let c = IntegratorConfig { output_times: probe_times.to_vec(), ..integ.clone() };
        let approx = integrate(|_t, y, dy| model.rhs(y, dy), &start.to_vec(), (0.0, last), &c)?;
        for ((t, m), y) in probe_times.iter().zip(&exact.moments).zip(&approx.states) {
            probes.push((*t, m.photon_number, y[0]));
        }
    }
    Ok(VacuumRabiReport { max_exact_deviation, max_trace_error: traj.max_trace_error, probes })
}

/// Two emitters in T_X sharing a weak coupling, in an empty cavity that decays
/// much faster than the exchange rate. Horizon 5/kappa.
pub fn overdamped_preset() -> (OracleConfig, ProductState, f64) {
    let kappa = 1.0;
    let config = OracleConfig {
        fock_cutoff: 4,
        couplings: vec![0.05, 0.05],
        rates: SpinRates::zero(),
        cavity: CavityParams { kappa, temperature: 0.0, delta: 0.0, ..CavityParams::pentacene_maser() },
    };
    let initial = ProductState { cavity: CavityState::Fock(0), emitters: vec![EmitterState::Level(Level::TX); 2] };
    (config, initial, 5.0 / kappa)
}

/// Two uncoupled, pumped emitters and a one-photon cavity with thermal exchange.
pub fn uncoupled_preset() -> (OracleConfig, ProductState, f64) {
    let mut rates = SpinRates::zero();
    rates.pump = 0.5;
    rates.k_sp = 1.0;
    rates.isc = [0.2, 0.3, 0.6];
    rates.triplet_decay = [0.1, 0.2, 0.3];
    rates.set_spin_lattice(Level::TX, Level::TZ, 0.05);
    let rates = rates.with_uniform_dephasing(0.4);
    let f = 1.4495e9;
    // n_th = 0.1, so the thermal tail beyond the cutoff is negligible.
    let temperature = crate::constants::PLANCK * f / (crate::constants::BOLTZMANN * 11f64.ln());
    let config = OracleConfig {
        fock_cutoff: 12,
        couplings: vec![0.0, 0.0],
        rates,
        cavity: CavityParams { kappa: 1.0, temperature, f_mode: f, delta: 0.0, output_coupling: 1.0 },
    };
    let initial = ProductState { cavity: CavityState::Fock(1), emitters: vec![EmitterState::Level(Level::S0); 2] };
    (config, initial, 5.0)
}
