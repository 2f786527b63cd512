//! Spin-photon coupling strengths: from field maps to histograms of clusters.
//!
//! A field map is a list of volume-weighted magnetic energy density samples.
//! Each gain-medium sample gets an effective mode volume (total stored energy
//! over local energy density) and from it a coupling strength. Couplings are
//! then binned into equal-width bins; every emitter in a bin is assigned the
//! bin center.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::constants::{ELECTRON_GYROMAGNETIC_RATIO, PLANCK, VACUUM_PERMEABILITY};

/// Gaussian histograms cover mean +/- this many standard deviations by default.
pub const DEFAULT_GAUSSIAN_SPAN: f64 = 2.0;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("field map is empty")]
    EmptyFieldMap,
    #[error("field map stores no energy")]
    NoStoredEnergy,
    #[error("probe energy density is zero; mode volume is infinite")]
    InfiniteModeVolume,
    #[error("invalid field sample `{label}`: {reason}")]
    InvalidSample { label: String, reason: &'static str },
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("all weights are zero")]
    ZeroWeight,
    #[error("invalid coupling value {0}")]
    InvalidCoupling(f64),
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("Gaussian span must be positive when sigma > 0 (got {0})")]
    InvalidSpan(f64),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One cell of an exported field solution.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub label: String,
    /// Magnetic energy density (J/m^3).
    pub energy_density: f64,
    /// Volume weight of the cell (m^3).
    pub cell_volume: f64,
    pub in_gain_medium: bool,
}

impl FieldSample {
    pub fn new(label: impl Into<String>, energy_density: f64, cell_volume: f64, in_gain_medium: bool) -> Self {
        Self { label: label.into(), energy_density, cell_volume, in_gain_medium }
    }

    fn validate(&self) -> Result<(), CouplingError> {
        let invalid = |reason| CouplingError::InvalidSample { label: self.label.clone(), reason };
        if !(self.energy_density >= 0.0) || !self.energy_density.is_finite() {
            return Err(invalid("energy density must be finite and nonnegative"));
        }
        if !(self.cell_volume > 0.0) || !self.cell_volume.is_finite() {
            return Err(invalid("cell volume must be finite and positive"));
        }
        Ok(())
    }
}

/// Emitter clusters: bin centers g_j (1/s) and real-valued populations N_j.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingHistogram {
    centers: Vec<f64>,
    populations: Vec<f64>,
}

impl CouplingHistogram {
    /// Requires at least one bin, strictly increasing positive centers and
    /// nonnegative populations.
    pub fn new(centers: Vec<f64>, populations: Vec<f64>) -> Result<Self, CouplingError> {
        let hist = Self { centers, populations };
        hist.check_common()?;
        if hist.centers.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CouplingError::InvalidHistogram("bin centers must be strictly increasing".into()));
        }
        Ok(hist)
    }

    /// A single cluster: the mean-field configuration.
    pub fn single(g: f64, population: f64) -> Result<Self, CouplingError> {
        Self::new(vec![g], vec![population])
    }

    /// `copies` identical clusters sharing one coupling and splitting
    /// `population` evenly.
    ///
    /// This deliberately breaks the strictly-increasing-centers rule; it exists
    /// to check that splitting a cluster leaves the dynamics unchanged.
    pub fn replicated(g: f64, population: f64, copies: usize) -> Result<Self, CouplingError> {
        if copies == 0 {
            return Err(CouplingError::ZeroBins);
        }
        let hist = Self {
            centers: vec![g; copies],
            populations: vec![population / copies as f64; copies],
        };
        hist.check_common()?;
        Ok(hist)
    }

    fn check_common(&self) -> Result<(), CouplingError> {
        if self.centers.is_empty() {
            return Err(CouplingError::ZeroBins);
        }
        if self.centers.len() != self.populations.len() {
            return Err(CouplingError::InvalidHistogram("centers and populations differ in length".into()));
        }
        if let Some(&g) = self.centers.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
            return Err(CouplingError::InvalidCoupling(g));
        }
        if self.populations.iter().any(|n| !(*n >= 0.0) || !n.is_finite()) {
            return Err(CouplingError::InvalidHistogram("populations must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn populations(&self) -> &[f64] {
        &self.populations
    }

    pub fn total_population(&self) -> f64 {
        self.populations.iter().sum()
    }

    /// Population-weighted mean coupling.
    pub fn mean_coupling(&self) -> f64 {
        let total = self.total_population();
        if total == 0.0 {
            return 0.0;
        }
        self.iter().map(|(g, n)| g * n).sum::<f64>() / total
    }

    /// Sum of N_j g_j^2: the squared collective coupling.
    pub fn collective_coupling_squared(&self) -> f64 {
        self.iter().map(|(g, n)| n * g * g).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.centers.iter().copied().zip(self.populations.iter().copied())
    }

    /// Same shape, populations rescaled to sum to `total`.
    pub fn rescaled(&self, total: f64) -> Result<Self, CouplingError> {
        let current = self.total_population();
        if !(current > 0.0) {
            return Err(CouplingError::ZeroWeight);
        }
        let factor = total / current;
        let hist = Self {
            centers: self.centers.clone(),
            populations: self.populations.iter().map(|n| n * factor).collect(),
        };
        hist.check_common()?;
        Ok(hist)
    }

    /// Writes `bin_center,population` rows with a header line.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CouplingError> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["bin_center", "population"])?;
        for (g, n) in self.iter() {
            out.write_record([format!("{g:.16e}"), format!("{n:.16e}")])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, CouplingError> {
        let mut input = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let mut centers = Vec::new();
        let mut populations = Vec::new();
        for record in input.records() {
            let record = record?;
            let field = |i: usize| -> Result<f64, CouplingError> {
                record
                    .get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| CouplingError::InvalidHistogram(format!("bad row {:?}", record)))
            };
            centers.push(field(0)?);
            populations.push(field(1)?);
        }
        Self::new(centers, populations)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CouplingError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CouplingError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Effective magnetic mode volume at `probe`: total stored energy divided by
/// the local energy density.
pub fn mode_volume(samples: &[FieldSample], probe: &FieldSample) -> Result<f64, CouplingError> {
    if samples.is_empty() {
        return Err(CouplingError::EmptyFieldMap);
    }
    let mut stored = 0.0;
    for sample in samples {
        sample.validate()?;
        stored += sample.energy_density * sample.cell_volume;
    }
    if !(stored > 0.0) {
        return Err(CouplingError::NoStoredEnergy);
    }
    probe.validate()?;
    if probe.energy_density == 0.0 {
        return Err(CouplingError::InfiniteModeVolume);
    }
    Ok(stored / probe.energy_density)
}

/// Single-emitter coupling g = gamma_e * sqrt(mu_0 h f / (2 V)) in rad/s.
pub fn coupling_from_volume(mode_volume: f64, f_mode: f64) -> Result<f64, CouplingError> {
    if !(mode_volume > 0.0) {
        return Err(CouplingError::NonPositive { name: "mode volume", value: mode_volume });
    }
    if !(f_mode > 0.0) {
        return Err(CouplingError::NonPositive { name: "mode frequency", value: f_mode });
    }
    Ok(ELECTRON_GYROMAGNETIC_RATIO * (VACUUM_PERMEABILITY * PLANCK * f_mode / (2.0 * mode_volume)).sqrt())
}

/// `(g, weight)` for every gain-medium sample, weighted by cell volume.
/// Every sample contributes to the stored energy.
pub fn fieldmap_couplings(samples: &[FieldSample], f_mode: f64) -> Result<Vec<(f64, f64)>, CouplingError> {
    samples
        .iter()
        .filter(|s| s.in_gain_medium)
        .map(|s| Ok((coupling_from_volume(mode_volume(samples, s)?, f_mode)?, s.cell_volume)))
        .collect()
}

/// Equal-width histogram of weighted couplings over their observed range,
/// normalised so the populations sum to `n_total`.
///
/// A zero-width range (a single distinct coupling) yields one bin.
pub fn build_histogram(values: &[(f64, f64)], bins: usize, n_total: f64) -> Result<CouplingHistogram, CouplingError> {
    if bins == 0 {
        return Err(CouplingError::ZeroBins);
    }
    if !(n_total >= 0.0) || !n_total.is_finite() {
        return Err(CouplingError::InvalidHistogram(format!("invalid total population {n_total}")));
    }
    for &(g, w) in values {
        if !(g >= 0.0) || !g.is_finite() {
            return Err(CouplingError::InvalidCoupling(g));
        }
        if !(w >= 0.0) || !w.is_finite() {
            return Err(CouplingError::InvalidHistogram(format!("invalid weight {w}")));
        }
    }
    let weighted: Vec<(f64, f64)> = values.iter().copied().filter(|&(_, w)| w > 0.0).collect();
    let total_weight: f64 = weighted.iter().map(|&(_, w)| w).sum();
    if weighted.is_empty() || !(total_weight > 0.0) {
        return Err(CouplingError::ZeroWeight);
    }
    let lo = weighted.iter().map(|&(g, _)| g).fold(f64::INFINITY, f64::min);
    let hi = weighted.iter().map(|&(g, _)| g).fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return CouplingHistogram::single(lo, n_total);
    }
    let width = (hi - lo) / bins as f64;
    let mut mass = vec![0.0; bins];
    for (g, w) in weighted {
        let index = (((g - lo) / width).floor() as usize).min(bins - 1);
        mass[index] += w;
    }
    let centers = (0..bins).map(|j| lo + width * (j as f64 + 0.5)).collect();
    let populations = mass.iter().map(|m| n_total * m / total_weight).collect();
    CouplingHistogram::new(centers, populations)
}

/// Bins a field map straight into a histogram.
pub fn histogram_from_fieldmap(
    samples: &[FieldSample],
    f_mode: f64,
    bins: usize,
    n_total: f64,
) -> Result<CouplingHistogram, CouplingError> {
    build_histogram(&fieldmap_couplings(samples, f_mode)?, bins, n_total)
}

fn normal_cdf(x: f64, mean: f64, sigma: f64) -> f64 {
    0.5 * libm::erfc(-(x - mean) / (sigma * std::f64::consts::SQRT_2))
}

/// Histogram of a Gaussian coupling distribution with mean `mean` and standard
/// deviation `sigma`, on `bins` equal-width bins over mean +/- span*sigma
/// (clipped at zero coupling). Populations are proportional to the Gaussian
/// mass in each bin and sum to `n_total`.
pub fn gaussian_histogram(
    mean: f64,
    sigma: f64,
    bins: usize,
    n_total: f64,
    span: f64,
) -> Result<CouplingHistogram, CouplingError> {
    if !(mean > 0.0) {
        return Err(CouplingError::NonPositive { name: "mean coupling", value: mean });
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(CouplingError::InvalidHistogram(format!("invalid sigma {sigma}")));
    }
    if bins == 0 {
        return Err(CouplingError::ZeroBins);
    }
    if sigma == 0.0 {
        return CouplingHistogram::single(mean, n_total);
    }
    if !(span > 0.0) {
        return Err(CouplingError::InvalidSpan(span));
    }
    let lo = (mean - span * sigma).max(0.0);
    let hi = mean + span * sigma;
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|j| lo + width * j as f64).collect();
    let mass: Vec<f64> = edges
        .windows(2)
        .map(|e| normal_cdf(e[1], mean, sigma) - normal_cdf(e[0], mean, sigma))
        .collect();
    let total: f64 = mass.iter().sum();
    let centers = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
    let populations = mass.iter().map(|m| n_total * m / total).collect();
    CouplingHistogram::new(centers, populations)
}

/// Collective cooperativity 4 * sum(N_j g_j^2) / (kappa * chi).
pub fn cooperativity(hist: &CouplingHistogram, kappa: f64, chi: f64) -> Result<f64, CouplingError> {
    if !(kappa > 0.0) {
        return Err(CouplingError::NonPositive { name: "kappa", value: kappa });
    }
    if !(chi > 0.0) {
        return Err(CouplingError::NonPositive { name: "chi", value: chi });
    }
    Ok(4.0 * hist.collective_coupling_squared() / (kappa * chi))
}

/// Reads a field map with columns `id, energy_density, cell_volume,
/// in_gain_medium` (header row required; `in_gain_medium` is 0/1 or
/// true/false).
pub fn read_fieldmap_csv<R: Read>(reader: R) -> Result<Vec<FieldSample>, CouplingError> {
    let mut input = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let mut samples = Vec::new();
    for record in input.records() {
        let record = record?;
        let label = record.get(0).unwrap_or_default().to_string();
        let bad = |reason| CouplingError::InvalidSample { label: label.clone(), reason };
        if record.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        let energy_density = record[1].parse::<f64>().map_err(|_| bad("unparsable energy density"))?;
        let cell_volume = record[2].parse::<f64>().map_err(|_| bad("unparsable cell volume"))?;
        let in_gain_medium = match record[3].to_ascii_lowercase().as_str() {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad("in_gain_medium must be 0/1 or true/false")),
        };
        let sample = FieldSample { label, energy_density, cell_volume, in_gain_medium };
        sample.validate()?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn load_fieldmap(path: impl AsRef<Path>) -> Result<Vec<FieldSample>, CouplingError> {
    read_fieldmap_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uniform_map(u: f64, cells: usize, volume: f64) -> Vec<FieldSample> {
        (0..cells).map(|i| FieldSample::new(format!("c{i}"), u, volume / cells as f64, true)).collect()
    }

    #[test]
    fn uniform_field_gives_cavity_volume() {
        let map = uniform_map(2.5, 8, 3.0);
        let v = mode_volume(&map, &map[0]).unwrap();
        assert_relative_eq!(v, 3.0, max_relative = 1e-15);
        let hot = FieldSample::new("probe", 5.0, 1.0, true);
        assert_relative_eq!(mode_volume(&map, &hot).unwrap(), 1.5, max_relative = 1e-15);
    }

    #[test]
    fn two_cell_map() {
        let map = vec![FieldSample::new("a", 1.0, 1.0, true), FieldSample::new("b", 3.0, 1.0, true)];
        assert_relative_eq!(mode_volume(&map, &map[1]).unwrap(), 4.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn mode_volume_errors() {
        let map = uniform_map(1.0, 2, 1.0);
        let dark = FieldSample::new("dark", 0.0, 1.0, true);
        assert!(matches!(mode_volume(&map, &dark), Err(CouplingError::InfiniteModeVolume)));
        assert!(matches!(mode_volume(&[], &map[0]), Err(CouplingError::EmptyFieldMap)));
        let empty = vec![dark.clone()];
        assert!(matches!(mode_volume(&empty, &map[0]), Err(CouplingError::NoStoredEnergy)));
    }

    #[test]
    fn coupling_scales_as_inverse_sqrt_volume() {
        let g1 = coupling_from_volume(1.5e-7, 1.4495e9).unwrap();
        let g4 = coupling_from_volume(6.0e-7, 1.4495e9).unwrap();
        assert_relative_eq!(g4, g1 / 2.0, max_relative = 1e-14);
        assert!(coupling_from_volume(1e300, 1.4495e9).unwrap() < 1e-140);
        assert!(coupling_from_volume(0.0, 1.0).is_err());
        assert!(coupling_from_volume(1.0, -1.0).is_err());
    }

    #[test]
    fn coupling_regression_value() {
        // Frozen from a standalone evaluation of gamma_e*sqrt(mu0*h*f/(2V)) in Python.
        let g = coupling_from_volume(1.5e-7, 1.4495e9).unwrap();
        assert_relative_eq!(g, COUPLING_AT_0_15_CM3, max_relative = 1e-12);
    }

    const COUPLING_AT_0_15_CM3: f64 = 0.353_188_184_386_499_6;

    #[test]
    fn histogram_hand_binning() {
        let hist = build_histogram(&[(1.0, 1.0), (2.0, 1.0)], 2, 10.0).unwrap();
        assert_eq!(hist.centers(), &[1.25, 1.75]);
        assert_eq!(hist.populations(), &[5.0, 5.0]);
    }

    #[test]
    fn delta_distribution_uses_one_bin() {
        for bins in [1, 2, 7, 10] {
            let hist = build_histogram(&[(0.3, 2.0), (0.3, 5.0)], bins, 42.0).unwrap();
            assert_eq!(hist.bins(), 1);
            assert_eq!(hist.centers(), &[0.3]);
            assert_eq!(hist.populations(), &[42.0]);
        }
    }

    #[test]
    fn histogram_errors() {
        assert!(matches!(build_histogram(&[(1.0, 1.0)], 0, 1.0), Err(CouplingError::ZeroBins)));
        assert!(matches!(build_histogram(&[(1.0, 0.0)], 3, 1.0), Err(CouplingError::ZeroWeight)));
        assert!(matches!(build_histogram(&[], 3, 1.0), Err(CouplingError::ZeroWeight)));
        assert!(build_histogram(&[(-1.0, 1.0)], 3, 1.0).is_err());
    }

    #[test]
    fn gaussian_zero_width_is_single_bin() {
        let hist = gaussian_histogram(0.18, 0.0, 5, 2.7e15, DEFAULT_GAUSSIAN_SPAN).unwrap();
        assert_eq!(hist.centers(), &[0.18]);
        assert_eq!(hist.populations(), &[2.7e15]);
    }

    #[test]
    fn gaussian_is_symmetric() {
        let hist = gaussian_histogram(0.18, 0.06, 5, 1.0, DEFAULT_GAUSSIAN_SPAN).unwrap();
        assert_eq!(hist.bins(), 5);
        let p = hist.populations();
        assert_relative_eq!(p[0], p[4], max_relative = 1e-12);
        assert_relative_eq!(p[1], p[3], max_relative = 1e-12);
        assert!(p[2] > p[1] && p[1] > p[0]);
        assert_relative_eq!(hist.centers()[2], 0.18, max_relative = 1e-14);
        assert_relative_eq!(hist.mean_coupling(), 0.18, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_clips_at_zero() {
        let hist = gaussian_histogram(0.1, 0.1, 4, 1.0, 3.0).unwrap();
        assert!(hist.centers()[0] > 0.0);
        assert_relative_eq!(hist.centers()[0], 0.4 / 8.0, max_relative = 1e-12);
        assert!(matches!(gaussian_histogram(0.1, 0.1, 4, 1.0, 0.0), Err(CouplingError::InvalidSpan(_))));
    }

    #[test]
    fn cooperativity_values() {
        let hist = CouplingHistogram::single(0.18, 2.7e15).unwrap();
        let c = cooperativity(&hist, 2.5e6, 1.68e6).unwrap();
        assert_relative_eq!(c, 4.0 * 2.7e15 * 0.0324 / (2.5e6 * 1.68e6), max_relative = 1e-14);
        assert!((c - 83.31).abs() < 0.01, "{c}");
        let doubled = hist.rescaled(5.4e15).unwrap();
        assert_relative_eq!(cooperativity(&doubled, 2.5e6, 1.68e6).unwrap(), 2.0 * c, max_relative = 1e-14);
        let empty = CouplingHistogram::single(0.18, 0.0).unwrap();
        assert_eq!(cooperativity(&empty, 2.5e6, 1.68e6).unwrap(), 0.0);
        assert!(cooperativity(&hist, 0.0, 1.0).is_err());
        assert!(cooperativity(&hist, 1.0, -1.0).is_err());
    }

    #[test]
    fn histogram_validation() {
        assert!(CouplingHistogram::new(vec![0.2, 0.1], vec![1.0, 1.0]).is_err());
        assert!(CouplingHistogram::new(vec![0.0], vec![1.0]).is_err());
        assert!(CouplingHistogram::new(vec![0.1], vec![-1.0]).is_err());
        assert!(CouplingHistogram::new(vec![], vec![]).is_err());
        let rep = CouplingHistogram::replicated(0.2, 10.0, 4).unwrap();
        assert_eq!(rep.populations(), &[2.5; 4]);
    }

    #[test]
    fn fieldmap_csv_parsing() {
        let text = "id,energy_density,cell_volume,in_gain_medium\n\
                    a,1.0,1.0,1\n\
                    b,3.0,1.0,true\n\
                    ring,10.0,2.0,0\n";
        let map = read_fieldmap_csv(text.as_bytes()).unwrap();
        assert_eq!(map.len(), 3);
        assert!(!map[2].in_gain_medium);
        let couplings = fieldmap_couplings(&map, 1.4495e9).unwrap();
        assert_eq!(couplings.len(), 2);
        let expected = coupling_from_volume(24.0 / 3.0, 1.4495e9).unwrap();
        assert_relative_eq!(couplings[1].0, expected, max_relative = 1e-14);

        let bad = "id,energy_density,cell_volume,in_gain_medium\na,1.0,-1.0,1\n";
        assert!(read_fieldmap_csv(bad.as_bytes()).is_err());
        let bad = "id,energy_density,cell_volume,in_gain_medium\na,1.0,1.0,maybe\n";
        assert!(read_fieldmap_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn histogram_csv_round_trip() {
        let hist = gaussian_histogram(0.18, 0.04, 5, 2.7e15, 2.0).unwrap();
        let mut buf = Vec::new();
        hist.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("bin_center,population\n"));
        assert_eq!(CouplingHistogram::read_csv(buf.as_slice()).unwrap(), hist);
    }
}
