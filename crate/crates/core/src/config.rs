//! Run configuration: an INI-style file with one `[section]` per concern and
//! explicit units on every dimensional key.
//!
//! ```text
//! [cavity]
//! f_mode_ghz = 1.4495
//! kappa_mhz = 2.5
//! temperature_k = 298
//! output_coupling = 1
//!
//! [coupling]
//! gaussian_mean_per_s = 0.18
//! gaussian_sigma_per_s = 0.04
//! bins = 5
//! n_total = 2.7e15
//! ```
//!
//! Rate keys accept `_per_s`, `_khz` and `_mhz` (the latter two meaning 1e3 and
//! 1e6 per second). Paths are resolved against the config file's directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ini::Ini;
use thiserror::Error;

use crate::coupling::{
    gaussian_histogram, histogram_from_fieldmap, load_fieldmap, CouplingError, CouplingHistogram,
    DEFAULT_GAUSSIAN_SPAN,
};
use crate::cumulant::ModelParams;
use crate::experiments::{FitOptions, PumpConfig, DEFAULT_FIT_WINDOW, DEFAULT_OUTPUT_POINTS};
use crate::ode::{linspace, IntegratorConfig};
use crate::spin_model::{CavityParams, Level, SpinRates};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("key `{key}` in [{section}] needs a unit suffix ({expected})")]
    MissingUnit { section: String, key: String, expected: String },
    #[error("key `{key}` appears more than once")]
    DuplicateKey { key: String },
    #[error("bad value for `{key}`: {value:?}")]
    BadValue { key: String, value: String },
    #[error("missing required key `{key}` in [{section}]")]
    Missing { section: String, key: String },
    #[error("exactly one coupling source is required (histogram, gaussian_* or fieldmap); found {0}")]
    CouplingSource(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Coupling(#[from] CouplingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Rate,
    Frequency,
    Time,
    Power,
    Length,
    Area,
    Temperature,
    Number,
    Text,
}

impl Kind {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Kind::Rate => &[("per_s", 1.0), ("khz", 1e3), ("mhz", 1e6)],
            Kind::Frequency => &[("hz", 1.0), ("khz", 1e3), ("mhz", 1e6), ("ghz", 1e9)],
            Kind::Time => &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6)],
            Kind::Power => &[("w", 1.0), ("mw", 1e-3)],
            Kind::Length => &[("m", 1.0), ("um", 1e-6), ("nm", 1e-9)],
            Kind::Area => &[("m2", 1.0), ("cm2", 1e-4), ("mm2", 1e-6)],
            Kind::Temperature => &[("k", 1.0)],
            Kind::Number | Kind::Text => &[],
        }
    }

    /// Suffix used when writing a canonical config.
    fn canonical(self) -> &'static str {
        self.units().first().map_or("", |u| u.0)
    }
}

/// `(section, base key, kind)` for every recognised key.
const SCHEMA: &[(&str, &str, Kind)] = &[
    ("cavity", "f_mode", Kind::Frequency),
    ("cavity", "kappa", Kind::Rate),
    ("cavity", "delta", Kind::Rate),
    ("cavity", "temperature", Kind::Temperature),
    ("cavity", "output_coupling", Kind::Number),
    ("rates", "k_sp", Kind::Rate),
    ("rates", "k_23", Kind::Rate),
    ("rates", "k_24", Kind::Rate),
    ("rates", "k_25", Kind::Rate),
    ("rates", "k_31", Kind::Rate),
    ("rates", "k_41", Kind::Rate),
    ("rates", "k_51", Kind::Rate),
    ("rates", "k_34", Kind::Rate),
    ("rates", "k_35", Kind::Rate),
    ("rates", "k_43", Kind::Rate),
    ("rates", "k_45", Kind::Rate),
    ("rates", "k_53", Kind::Rate),
    ("rates", "k_54", Kind::Rate),
    ("rates", "chi", Kind::Rate),
    ("rates", "chi_34", Kind::Rate),
    ("rates", "chi_35", Kind::Rate),
    ("rates", "chi_43", Kind::Rate),
    ("rates", "chi_45", Kind::Rate),
    ("rates", "chi_53", Kind::Rate),
    ("rates", "chi_54", Kind::Rate),
    ("pump", "power", Kind::Power),
    ("pump", "wavelength", Kind::Length),
    ("pump", "cross_section", Kind::Area),
    ("pump", "beam_area", Kind::Area),
    ("coupling", "histogram", Kind::Text),
    ("coupling", "fieldmap", Kind::Text),
    ("coupling", "gaussian_mean", Kind::Rate),
    ("coupling", "gaussian_sigma", Kind::Rate),
    ("coupling", "span", Kind::Number),
    ("coupling", "bins", Kind::Number),
    ("coupling", "n_total", Kind::Number),
    ("integrator", "rtol", Kind::Number),
    ("integrator", "atol", Kind::Number),
    ("integrator", "duration", Kind::Time),
    ("integrator", "output_points", Kind::Number),
    ("integrator", "initial_dt", Kind::Time),
    ("sweep", "pump_powers", Kind::Power),
    ("sweep", "gaussian_sigmas", Kind::Rate),
    ("sweep", "window", Kind::Time),
    ("fit", "trace", Kind::Text),
    ("fit", "trace_dbm", Kind::Text),
    ("fit", "window_start", Kind::Time),
    ("fit", "window_end", Kind::Time),
    ("fit", "n_min", Kind::Number),
    ("fit", "n_max", Kind::Number),
    ("fit", "chi_min", Kind::Rate),
    ("fit", "chi_max", Kind::Rate),
    ("fit", "restarts", Kind::Number),
    ("fit", "max_evaluations", Kind::Number),
    ("run", "seed", Kind::Number),
    ("output", "results", Kind::Text),
    ("output", "sweep", Kind::Text),
    ("output", "histogram", Kind::Text),
];

/// Where the coupling histogram comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingSource {
    /// Histogram CSV, optionally rescaled to `n_total` emitters.
    Histogram { path: PathBuf, n_total: Option<f64> },
    Gaussian { mean: f64, sigma: f64, bins: usize, n_total: f64, span: f64 },
    /// Field-map CSV binned into `bins` equal-width bins.
    Fieldmap { path: PathBuf, bins: usize, n_total: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorSettings {
    pub rtol: f64,
    pub atol: f64,
    pub initial_dt: f64,
    /// Simulated time (s).
    pub duration: f64,
    pub output_points: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self { rtol: d.rtol, atol: d.atol, initial_dt: d.initial_dt, duration: 1e-3, output_points: DEFAULT_OUTPUT_POINTS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub pump_powers: Vec<f64>,
    /// Extra Gaussian widths to sweep, using the Gaussian coupling source's other settings.
    pub gaussian_sigmas: Vec<f64>,
    pub window: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { pump_powers: Vec::new(), gaussian_sigmas: Vec::new(), window: 0.5e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub trace: Option<PathBuf>,
    pub trace_dbm: bool,
    pub window: (f64, f64),
    pub n_bounds: (f64, f64),
    pub chi_bounds: (f64, f64),
    pub restarts: usize,
    pub max_evaluations: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        let d = FitOptions::default();
        Self {
            trace: None,
            trace_dbm: false,
            window: DEFAULT_FIT_WINDOW,
            n_bounds: d.n_bounds,
            chi_bounds: d.chi_bounds,
            restarts: d.restarts,
            max_evaluations: d.simplex.max_evaluations,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputSettings {
    pub results: Option<PathBuf>,
    pub sweep: Option<PathBuf>,
    pub histogram: Option<PathBuf>,
}

/// A parsed run configuration. Quantities are stored in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Directory against which relative paths resolve.
    pub base_dir: PathBuf,
    pub cavity: CavityParams,
    /// Emitter rates; `pump` is filled in from [`Self::pump`] when a run starts.
    pub rates: SpinRates,
    pub pump: Option<PumpConfig>,
    pub coupling: CouplingSource,
    pub integrator: IntegratorSettings,
    pub sweep: SweepSettings,
    pub fit: FitSettings,
    pub output: OutputSettings,
    pub seed: u64,
}

/// Raw key lookup with unit conversion.
struct Entries {
    values: BTreeMap<(String, String), (f64, String)>,
}

impl Entries {
    fn parse(ini: &Ini) -> Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(ConfigError::UnknownKey { section: String::new(), key: key.to_string() });
                }
                continue;
            };
            if !SCHEMA.iter().any(|(s, _, _)| *s == section) {
                return Err(ConfigError::UnknownSection(section.to_string()));
            }
            for (key, raw) in props.iter() {
                let (base, scale) = resolve_key(section, key)?;
                let kind = kind_of(section, &base);
                let number = match kind {
                    Kind::Text => f64::NAN,
                    _ if raw.contains(',') => f64::NAN,
                    _ => raw.trim().parse::<f64>().map_err(|_| bad(key, raw))? * scale,
                };
                let text = if kind == Kind::Text { raw.trim().to_string() } else { scale_list(key, raw, scale)? };
                if values.insert((section.to_string(), base.clone()), (number, text)).is_some() {
                    return Err(ConfigError::DuplicateKey { key: format!("{section}.{base}") });
                }
            }
        }
        Ok(Self { values })
    }

    fn has(&self, section: &str, key: &str) -> bool {
        self.values.contains_key(&(section.to_string(), key.to_string()))
    }

    fn number(&self, section: &str, key: &str) -> Option<f64> {
        self.values.get(&(section.to_string(), key.to_string())).map(|v| v.0)
    }

    fn required(&self, section: &str, key: &str) -> Result<f64, ConfigError> {
        self.number(section, key)
            .ok_or_else(|| ConfigError::Missing { section: section.into(), key: key.into() })
    }

    fn count(&self, section: &str, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.number(section, key) {
            None => Ok(None),
            Some(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(Some(v as usize)),
            Some(v) => Err(bad(key, &v.to_string())),
        }
    }

    fn text(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(&(section.to_string(), key.to_string())).map(|v| v.1.as_str())
    }

    fn list(&self, section: &str, key: &str) -> Result<Vec<f64>, ConfigError> {
        match self.text(section, key) {
            None => Ok(Vec::new()),
            Some(t) => t.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| bad(key, t))).collect(),
        }
    }
}

fn bad(key: &str, value: &str) -> ConfigError {
    ConfigError::BadValue { key: key.to_string(), value: value.to_string() }
}

/// Applies `scale` to each element of a comma-separated list, returning it in SI.
fn scale_list(key: &str, raw: &str, scale: f64) -> Result<String, ConfigError> {
    let parts: Vec<String> = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>().map(|v| (v * scale).to_string()).map_err(|_| bad(key, raw)))
        .collect::<Result<_, _>>()?;
    Ok(parts.join(","))
}

fn kind_of(section: &str, base: &str) -> Kind {
    SCHEMA.iter().find(|(s, k, _)| *s == section && *k == base).map(|e| e.2).expect("resolved keys are in the schema")
}

/// Splits `key` into a schema base key and the SI scale of its unit suffix.
fn resolve_key(section: &str, key: &str) -> Result<(String, f64), ConfigError> {
    let key_lc = key.trim().to_ascii_lowercase();
    let mut missing_unit = None;
    for (s, base, kind) in SCHEMA.iter().filter(|(s, _, _)| *s == section) {
        let _ = s;
        let units = kind.units();
        if units.is_empty() {
            if key_lc == *base {
                return Ok((base.to_string(), 1.0));
            }
            continue;
        }
        if key_lc == *base {
            missing_unit = Some(units.iter().map(|u| format!("_{}", u.0)).collect::<Vec<_>>().join(", "));
            continue;
        }
        if let Some(rest) = key_lc.strip_prefix(base).and_then(|r| r.strip_prefix('_')) {
            if let Some((_, scale)) = units.iter().find(|u| u.0 == rest) {
                return Ok((base.to_string(), *scale));
            }
        }
    }
    match missing_unit {
        Some(expected) => Err(ConfigError::MissingUnit { section: section.into(), key: key.into(), expected }),
        None => Err(ConfigError::UnknownKey { section: section.into(), key: key.into() }),
    }
}

impl RunConfig {
    /// Reads and parses a config file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let e = Entries::parse(&ini)?;
        let base_dir = base_dir.into();

        let default_cavity = CavityParams::pentacene_maser();
        let cavity = CavityParams {
            f_mode: e.number("cavity", "f_mode").unwrap_or(default_cavity.f_mode),
            kappa: e.number("cavity", "kappa").unwrap_or(default_cavity.kappa),
            delta: e.number("cavity", "delta").unwrap_or(0.0),
            temperature: e.number("cavity", "temperature").unwrap_or(default_cavity.temperature),
            output_coupling: e.number("cavity", "output_coupling").unwrap_or(default_cavity.output_coupling),
        };

        let mut rates = SpinRates::pentacene();
        if let Some(v) = e.number("rates", "k_sp") {
            rates.k_sp = v;
        }
        for (slot, level) in Level::TRIPLET.iter().enumerate() {
            let l = level.index();
            if let Some(v) = e.number("rates", &format!("k_2{l}")) {
                rates.isc[slot] = v;
            }
            if let Some(v) = e.number("rates", &format!("k_{l}1")) {
                rates.triplet_decay[slot] = v;
            }
        }
        if let Some(chi) = e.number("rates", "chi") {
            rates = rates.with_uniform_dephasing(chi);
        }
        for (a, la) in Level::TRIPLET.iter().enumerate() {
            for (b, lb) in Level::TRIPLET.iter().enumerate() {
                if a == b {
                    continue;
                }
                let tag = format!("{}{}", la.index(), lb.index());
                if let Some(v) = e.number("rates", &format!("k_{tag}")) {
                    rates.spin_lattice[a][b] = v;
                }
                if let Some(v) = e.number("rates", &format!("chi_{tag}")) {
                    rates.dephasing[a][b] = v;
                }
            }
        }

        let pump = if ["power", "wavelength", "cross_section", "beam_area"].iter().any(|k| e.has("pump", k)) {
            let d = PumpConfig::pentacene(0.0);
            Some(PumpConfig {
                power: e.required("pump", "power")?,
                wavelength: e.number("pump", "wavelength").unwrap_or(d.wavelength),
                cross_section: e.number("pump", "cross_section").unwrap_or(d.cross_section),
                beam_area: e.number("pump", "beam_area").unwrap_or(d.beam_area),
            })
        } else {
            None
        };

        let path = |s: &str| -> PathBuf {
            let p = PathBuf::from(s);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        let sources = ["histogram", "fieldmap", "gaussian_mean"].iter().filter(|k| e.has("coupling", k)).count();
        if sources != 1 {
            return Err(ConfigError::CouplingSource(sources));
        }
        let coupling = if let Some(p) = e.text("coupling", "histogram") {
            CouplingSource::Histogram { path: path(p), n_total: e.number("coupling", "n_total") }
        } else if let Some(p) = e.text("coupling", "fieldmap") {
            CouplingSource::Fieldmap {
                path: path(p),
                bins: e.count("coupling", "bins")?.unwrap_or(10),
                n_total: e.required("coupling", "n_total")?,
            }
        } else {
            CouplingSource::Gaussian {
                mean: e.required("coupling", "gaussian_mean")?,
                sigma: e.number("coupling", "gaussian_sigma").unwrap_or(0.0),
                bins: e.count("coupling", "bins")?.unwrap_or(5),
                n_total: e.required("coupling", "n_total")?,
                span: e.number("coupling", "span").unwrap_or(DEFAULT_GAUSSIAN_SPAN),
            }
        };

        let d = IntegratorSettings::default();
        let integrator = IntegratorSettings {
            rtol: e.number("integrator", "rtol").unwrap_or(d.rtol),
            atol: e.number("integrator", "atol").unwrap_or(d.atol),
            initial_dt: e.number("integrator", "initial_dt").unwrap_or(d.initial_dt),
            duration: e.number("integrator", "duration").unwrap_or(d.duration),
            output_points: e.count("integrator", "output_points")?.unwrap_or(d.output_points),
        };

        let d = SweepSettings::default();
        let sweep = SweepSettings {
            pump_powers: e.list("sweep", "pump_powers")?,
            gaussian_sigmas: e.list("sweep", "gaussian_sigmas")?,
            window: e.number("sweep", "window").unwrap_or(d.window),
        };

        let d = FitSettings::default();
        let trace_dbm = match e.text("fit", "trace_dbm") {
            None => false,
            Some("true" | "1" | "yes") => true,
            Some("false" | "0" | "no") => false,
            Some(other) => return Err(bad("trace_dbm", other)),
        };
        let fit = FitSettings {
            trace: e.text("fit", "trace").map(path),
            trace_dbm,
            window: (
                e.number("fit", "window_start").unwrap_or(d.window.0),
                e.number("fit", "window_end").unwrap_or(d.window.1),
            ),
            n_bounds: (e.number("fit", "n_min").unwrap_or(d.n_bounds.0), e.number("fit", "n_max").unwrap_or(d.n_bounds.1)),
            chi_bounds: (
                e.number("fit", "chi_min").unwrap_or(d.chi_bounds.0),
                e.number("fit", "chi_max").unwrap_or(d.chi_bounds.1),
            ),
            restarts: e.count("fit", "restarts")?.unwrap_or(d.restarts),
            max_evaluations: e.count("fit", "max_evaluations")?.unwrap_or(d.max_evaluations),
        };

        let output = OutputSettings {
            results: e.text("output", "results").map(path),
            sweep: e.text("output", "sweep").map(path),
            histogram: e.text("output", "histogram").map(path),
        };
        let seed = e.count("run", "seed")?.unwrap_or(0) as u64;

        let config = Self { base_dir, cavity, rates, pump, coupling, integrator, sweep, fit, output, seed };
        config.cavity.validate().map_err(|err| bad("cavity", &err.to_string()))?;
        config.rates.validate().map_err(|err| bad("rates", &err.to_string()))?;
        Ok(config)
    }

    /// Canonical text form: SI unit suffixes and every setting spelled out.
    /// Paths are written relative to `base_dir` when possible.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        let num = |v: f64| format!("{v:e}");
        let rel = |p: &Path| p.strip_prefix(&self.base_dir).unwrap_or(p).display().to_string();
        let mut section = |name: &str, items: Vec<(String, String)>| {
            if items.is_empty() {
                return;
            }
            let _ = writeln!(out, "[{name}]");
            for (k, v) in items {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        };
        let key = |base: &str, kind: Kind| {
            let suffix = kind.canonical();
            if suffix.is_empty() {
                base.to_string()
            } else {
                format!("{base}_{suffix}")
            }
        };

        let c = &self.cavity;
        section(
            "cavity",
            vec![
                (key("f_mode", Kind::Frequency), num(c.f_mode)),
                (key("kappa", Kind::Rate), num(c.kappa)),
                (key("delta", Kind::Rate), num(c.delta)),
                (key("temperature", Kind::Temperature), num(c.temperature)),
                ("output_coupling".into(), num(c.output_coupling)),
            ],
        );

        let r = &self.rates;
        let mut items = vec![(key("k_sp", Kind::Rate), num(r.k_sp))];
        for (slot, level) in Level::TRIPLET.iter().enumerate() {
            items.push((key(&format!("k_2{}", level.index()), Kind::Rate), num(r.isc[slot])));
        }
        for (slot, level) in Level::TRIPLET.iter().enumerate() {
            items.push((key(&format!("k_{}1", level.index()), Kind::Rate), num(r.triplet_decay[slot])));
        }
        for (a, la) in Level::TRIPLET.iter().enumerate() {
            for (b, lb) in Level::TRIPLET.iter().enumerate() {
                if a != b {
                    items.push((key(&format!("k_{}{}", la.index(), lb.index()), Kind::Rate), num(r.spin_lattice[a][b])));
                }
            }
        }
        match r.uniform_dephasing() {
            Some(chi) => items.push((key("chi", Kind::Rate), num(chi))),
            None => {
                for (a, la) in Level::TRIPLET.iter().enumerate() {
                    for (b, lb) in Level::TRIPLET.iter().enumerate() {
                        if a != b {
                            items.push((
                                key(&format!("chi_{}{}", la.index(), lb.index()), Kind::Rate),
                                num(r.dephasing[a][b]),
                            ));
                        }
                    }
                }
            }
        }
        section("rates", items);

        if let Some(p) = &self.pump {
            section(
                "pump",
                vec![
                    (key("power", Kind::Power), num(p.power)),
                    (key("wavelength", Kind::Length), num(p.wavelength)),
                    (key("cross_section", Kind::Area), num(p.cross_section)),
                    (key("beam_area", Kind::Area), num(p.beam_area)),
                ],
            );
        }

        let items = match &self.coupling {
            CouplingSource::Histogram { path, n_total } => {
                let mut v = vec![("histogram".to_string(), rel(path))];
                if let Some(n) = n_total {
                    v.push(("n_total".into(), num(*n)));
                }
                v
            }
            CouplingSource::Gaussian { mean, sigma, bins, n_total, span } => vec![
                (key("gaussian_mean", Kind::Rate), num(*mean)),
                (key("gaussian_sigma", Kind::Rate), num(*sigma)),
                ("bins".into(), bins.to_string()),
                ("n_total".into(), num(*n_total)),
                ("span".into(), num(*span)),
            ],
            CouplingSource::Fieldmap { path, bins, n_total } => vec![
                ("fieldmap".to_string(), rel(path)),
                ("bins".into(), bins.to_string()),
                ("n_total".into(), num(*n_total)),
            ],
        };
        section("coupling", items);

        let i = &self.integrator;
        section(
            "integrator",
            vec![
                ("rtol".into(), num(i.rtol)),
                ("atol".into(), num(i.atol)),
                (key("initial_dt", Kind::Time), num(i.initial_dt)),
                (key("duration", Kind::Time), num(i.duration)),
                ("output_points".into(), i.output_points.to_string()),
            ],
        );

        let s = &self.sweep;
        let list = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", ");
        let mut items = vec![(key("window", Kind::Time), num(s.window))];
        if !s.pump_powers.is_empty() {
            items.push((key("pump_powers", Kind::Power), list(&s.pump_powers)));
        }
        if !s.gaussian_sigmas.is_empty() {
            items.push((key("gaussian_sigmas", Kind::Rate), list(&s.gaussian_sigmas)));
        }
        section("sweep", items);

        let f = &self.fit;
        let mut items = Vec::new();
        if let Some(t) = &f.trace {
            items.push(("trace".to_string(), rel(t)));
        }
        items.extend([
            ("trace_dbm".to_string(), f.trace_dbm.to_string()),
            (key("window_start", Kind::Time), num(f.window.0)),
            (key("window_end", Kind::Time), num(f.window.1)),
            ("n_min".into(), num(f.n_bounds.0)),
            ("n_max".into(), num(f.n_bounds.1)),
            (key("chi_min", Kind::Rate), num(f.chi_bounds.0)),
            (key("chi_max", Kind::Rate), num(f.chi_bounds.1)),
            ("restarts".into(), f.restarts.to_string()),
            ("max_evaluations".into(), f.max_evaluations.to_string()),
        ]);
        section("fit", items);

        section("run", vec![("seed".into(), self.seed.to_string())]);

        let o = &self.output;
        let mut items = Vec::new();
        for (name, p) in [("results", &o.results), ("sweep", &o.sweep), ("histogram", &o.histogram)] {
            if let Some(p) = p {
                items.push((name.to_string(), rel(p)));
            }
        }
        section("output", items);
        out
    }

    /// Builds the coupling histogram, reading any referenced file.
    pub fn histogram(&self) -> Result<CouplingHistogram, ConfigError> {
        Ok(match &self.coupling {
            CouplingSource::Histogram { path, n_total } => {
                let hist = CouplingHistogram::load(path)?;
                match n_total {
                    Some(n) => hist.rescaled(*n)?,
                    None => hist,
                }
            }
            CouplingSource::Gaussian { mean, sigma, bins, n_total, span } => {
                gaussian_histogram(*mean, *sigma, *bins, *n_total, *span)?
            }
            CouplingSource::Fieldmap { path, bins, n_total } => {
                let samples = load_fieldmap(path)?;
                histogram_from_fieldmap(&samples, self.cavity.f_mode, *bins, *n_total)?
            }
        })
    }

    /// Model parameters with the pump rate left at zero.
    pub fn model_params(&self) -> Result<ModelParams, ConfigError> {
        Ok(ModelParams::new(self.histogram()?, self.rates.clone(), self.cavity.clone()))
    }

    /// Integrator settings with uniform outputs over the configured duration.
    pub fn integrator_config(&self) -> IntegratorConfig {
        let i = &self.integrator;
        IntegratorConfig {
            rtol: i.rtol,
            atol: i.atol,
            initial_dt: i.initial_dt,
            output_times: linspace(0.0, i.duration, i.output_points),
            ..IntegratorConfig::default()
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        let d = FitOptions::default();
        FitOptions {
            n_bounds: self.fit.n_bounds,
            chi_bounds: self.fit.chi_bounds,
            restarts: self.fit.restarts,
            seed: self.seed,
            simplex: crate::optimize::NelderMeadOptions { max_evaluations: self.fit.max_evaluations, ..d.simplex },
            integrator: IntegratorConfig { output_times: Vec::new(), ..self.integrator_config() },
        }
    }
}
