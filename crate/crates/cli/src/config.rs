//! Flat `key = value` configuration, presets and layered resolution.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use simloc_core::geometry::CameraRig;
use simloc_core::noise::{n0_for_signal_to_sensor_db, sigma_i2_for_sinr_db};
use simloc_core::scene::{ScenePrior, TileGrid, ValueAlphabet};
use simloc_core::sim::{ar1_alpha_grid, ip_noise_grid, mi_noise_grid, Algorithm, SimConfig};
use thiserror::Error;

pub const SEED_ENV: &str = "SIMLOC_SEED";
pub const DEFAULT_SEED: u64 = 42;
/// Signal-to-sensor ratio of the AR(1) experiments.
pub const AR1_SIGNAL_TO_SENSOR_DB: f64 = 45.0;

pub const KEYS: &[&str] = &[
    "h_cm",
    "theta_deg",
    "f_cm",
    "s_cm",
    "n_w",
    "n_d",
    "mu",
    "sigma_a",
    "sinr_db",
    "n0",
    "alpha",
    "trials",
    "seed",
    "algorithms",
    "quantize_ip",
    "l_count",
    "mi_bin_width",
];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("cannot read config file {}: {reason}", path.display())]
    Unreadable { path: PathBuf, reason: String },
    #[error("{origin}: line {line}: expected `key = value`, got `{text}`")]
    Syntax { origin: String, line: usize, text: String },
    #[error("{origin}: unknown key `{key}`")]
    UnknownKey { origin: String, key: String },
    #[error("{origin}: cannot parse `{value}` for `{key}`: {reason}")]
    BadValue {
        origin: String,
        key: String,
        value: String,
        reason: String,
    },
    #[error("{origin}: `{key}` out of range: {reason}")]
    OutOfRange { origin: String, key: String, reason: String },
    #[error("preset `{preset}` cannot be used with `{command}`")]
    PresetMismatch { preset: Preset, command: &'static str },
}

/// Named experiment settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Inner-product matchers against noise level.
    Fig6,
    /// Inner-product matchers against correlation.
    Fig7,
    /// Mutual-information matchers against noise level.
    Fig8,
    /// Mutual-information matchers against correlation.
    Fig9,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig6 => "fig6",
            Preset::Fig7 => "fig7",
            Preset::Fig8 => "fig8",
            Preset::Fig9 => "fig9",
        }
    }

    pub fn sweep(&self) -> SweepKind {
        match self {
            Preset::Fig6 | Preset::Fig8 => SweepKind::Noise,
            Preset::Fig7 | Preset::Fig9 => SweepKind::Alpha,
        }
    }

    pub fn algorithms(&self) -> Vec<Algorithm> {
        match self {
            Preset::Fig6 | Preset::Fig7 => Algorithm::IP.to_vec(),
            Preset::Fig8 | Preset::Fig9 => Algorithm::MI.to_vec(),
        }
    }

    fn noise_grid(&self) -> Vec<f64> {
        match self {
            Preset::Fig8 => mi_noise_grid(),
            _ => ip_noise_grid(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Noise,
    Alpha,
}

impl SweepKind {
    pub fn command(&self) -> &'static str {
        match self {
            SweepKind::Noise => "sweep-noise",
            SweepKind::Alpha => "sweep-alpha",
        }
    }

    pub fn default_preset(&self) -> Preset {
        match self {
            SweepKind::Noise => Preset::Fig6,
            SweepKind::Alpha => Preset::Fig7,
        }
    }
}

/// One `key = value` assignment and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub origin: String,
    pub key: String,
    pub value: String,
}

impl Entry {
    pub fn new(origin: impl Into<String>, key: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            origin: origin.into(),
            key: key.into(),
            value: value.into(),
        }
    }
}

/// Parses config text. Blank lines and `#` comments are skipped; keys are checked against [`KEYS`].
pub fn parse_config_str(text: &str, origin: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                origin: origin.to_string(),
                line: idx + 1,
                text: raw.trim().to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                origin: origin.to_string(),
                line: idx + 1,
                text: raw.trim().to_string(),
            });
        }
        let origin = format!("{origin}:{}", idx + 1);
        check_key(key, &origin)?;
        out.push(Entry::new(origin, key, value));
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<Vec<Entry>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ConfigError::MissingFile(path.to_path_buf()),
        _ => ConfigError::Unreadable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
    })?;
    parse_config_str(&text, &path.display().to_string())
}

pub fn check_key(key: &str, origin: &str) -> Result<(), ConfigError> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        Err(ConfigError::UnknownKey {
            origin: origin.to_string(),
            key: key.to_string(),
        })
    }
}

/// Every setting, unset until some layer provides it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub h_cm: Option<f64>,
    pub theta_deg: Option<f64>,
    pub f_cm: Option<f64>,
    pub s_cm: Option<f64>,
    pub n_w: Option<usize>,
    pub n_d: Option<usize>,
    pub mu: Option<f64>,
    pub sigma_a: Option<f64>,
    pub sinr_db: Option<f64>,
    pub n0: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub quantize_ip: Option<bool>,
    pub l_count: Option<usize>,
    pub mi_bin_width: Option<f64>,
}

struct Ctx<'a>(&'a Entry);

impl Ctx<'_> {
    fn bad(&self, reason: impl ToString) -> ConfigError {
        ConfigError::BadValue {
            origin: self.0.origin.clone(),
            key: self.0.key.clone(),
            value: self.0.value.clone(),
            reason: reason.to_string(),
        }
    }

    fn range(&self, reason: impl Into<String>) -> ConfigError {
        ConfigError::OutOfRange {
            origin: self.0.origin.clone(),
            key: self.0.key.clone(),
            reason: reason.into(),
        }
    }

    fn parse<T: FromStr>(&self, s: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        s.trim().parse::<T>().map_err(|e| self.bad(e))
    }

    fn real(&self) -> Result<f64, ConfigError> {
        let v: f64 = self.parse(&self.0.value)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.bad("not a finite number"))
        }
    }

    fn positive(&self) -> Result<f64, ConfigError> {
        let v = self.real()?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.range(format!("must be > 0, got {v}")))
        }
    }

    fn count(&self, min: usize) -> Result<usize, ConfigError> {
        let v: usize = self.parse(&self.0.value)?;
        if v >= min {
            Ok(v)
        } else {
            Err(self.range(format!("must be >= {min}, got {v}")))
        }
    }

    fn list<T: FromStr>(&self) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let items: Vec<&str> = self.0.value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if items.is_empty() {
            return Err(self.bad("empty list"));
        }
        items.into_iter().map(|s| self.parse(s)).collect()
    }
}

impl Settings {
    /// Applies one assignment, overriding any earlier value.
    pub fn apply(&mut self, entry: &Entry) -> Result<(), ConfigError> {
        check_key(&entry.key, &entry.origin)?;
        let c = Ctx(entry);
        match entry.key.as_str() {
            "h_cm" => self.h_cm = Some(c.positive()?),
            "f_cm" => self.f_cm = Some(c.positive()?),
            "s_cm" => self.s_cm = Some(c.positive()?),
            "theta_deg" => {
                let v = c.real()?;
                if !(v > 0.0 && v < 90.0) {
                    return Err(c.range(format!("must lie strictly between 0 and 90 degrees, got {v}")));
                }
                self.theta_deg = Some(v);
            }
            "n_w" => self.n_w = Some(c.count(1)?),
            "n_d" => self.n_d = Some(c.count(1)?),
            "mu" => self.mu = Some(c.real()?),
            "sigma_a" => {
                let v = c.real()?;
                if v < 0.0 {
                    return Err(c.range(format!("must be >= 0, got {v}")));
                }
                self.sigma_a = Some(v);
            }
            "sinr_db" => self.sinr_db = Some(c.real()?),
            "n0" => {
                let v: Vec<f64> = c.list()?;
                if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                    return Err(c.range(format!("values must be >= 0, got {x}")));
                }
                self.n0 = Some(v);
            }
            "alpha" => {
                let v: Vec<f64> = c.list()?;
                if let Some(x) = v.iter().find(|x| !(0.0..1.0).contains(*x)) {
                    return Err(c.range(format!("values must lie in [0, 1), got {x}")));
                }
                self.alpha = Some(v);
            }
            "trials" => self.trials = Some(c.count(1)?),
            "seed" => self.seed = Some(c.parse(&entry.value)?),
            "algorithms" => self.algorithms = Some(c.list()?),
            "quantize_ip" => self.quantize_ip = Some(c.parse(&entry.value)?),
            "l_count" => self.l_count = Some(c.count(2)?),
            "mi_bin_width" => {
                let v = c.real()?;
                if v < 1.0 {
                    return Err(c.range(format!("must be >= 1, got {v}")));
                }
                self.mi_bin_width = Some(v);
            }
            _ => unreachable!("key list checked above"),
        }
        Ok(())
    }

    pub fn apply_all<'a>(&mut self, entries: impl IntoIterator<Item = &'a Entry>) -> Result<(), ConfigError> {
        entries.into_iter().try_for_each(|e| self.apply(e))
    }

    /// Layers, lowest precedence first: seed environment variable, file, flags.
    pub fn layered(env_seed: Option<&str>, file: &[Entry], flags: &[Entry]) -> Result<Self, ConfigError> {
        let mut s = Settings::default();
        if let Some(seed) = env_seed {
            s.apply(&Entry::new(SEED_ENV, "seed", seed))?;
        }
        s.apply_all(file)?;
        s.apply_all(flags)?;
        Ok(s)
    }

    pub fn rig(&self) -> Result<CameraRig, ConfigError> {
        CameraRig::from_degrees(
            self.h_cm.unwrap_or(60.0),
            self.theta_deg.unwrap_or(36.0),
            self.f_cm.unwrap_or(0.0367),
        )
        .map_err(core_range)
    }

    pub fn grid(&self) -> Result<TileGrid, ConfigError> {
        TileGrid::new(self.n_w.unwrap_or(6), self.n_d.unwrap_or(11), self.s_cm.unwrap_or(20.0)).map_err(core_range)
    }

    pub fn sigma_a(&self) -> f64 {
        self.sigma_a.unwrap_or(5.0)
    }

    /// 10 dB when every selected matcher is from the MI family, 3 dB otherwise.
    pub fn sinr_db_for(&self, algorithms: &[Algorithm]) -> f64 {
        self.sinr_db
            .unwrap_or(if !algorithms.is_empty() && algorithms.iter().all(Algorithm::is_mi) { 10.0 } else { 3.0 })
    }

    pub fn sigma_i2_for(&self, algorithms: &[Algorithm]) -> f64 {
        let s = self.sigma_a();
        sigma_i2_for_sinr_db(s * s, self.sinr_db_for(algorithms))
    }

    /// Full simulation config for a sweep, filling gaps from the preset and the reference parameters.
    pub fn sim_config(&self, kind: SweepKind, preset: Preset) -> Result<SimConfig, ConfigError> {
        if preset.sweep() != kind {
            return Err(ConfigError::PresetMismatch {
                preset,
                command: kind.command(),
            });
        }
        let algorithms = self.algorithms.clone().unwrap_or_else(|| preset.algorithms());
        let sigma_a = self.sigma_a();
        let n0 = match (&self.n0, kind) {
            (Some(v), _) => v.clone(),
            (None, SweepKind::Noise) => preset.noise_grid(),
            (None, SweepKind::Alpha) => vec![n0_for_signal_to_sensor_db(sigma_a * sigma_a, AR1_SIGNAL_TO_SENSOR_DB)],
        };
        let alpha = match (&self.alpha, kind) {
            (Some(v), _) => v.clone(),
            (None, SweepKind::Noise) => vec![0.0],
            (None, SweepKind::Alpha) => ar1_alpha_grid(),
        };
        let single = |v: &[f64], key: &str| {
            if v.len() == 1 {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange {
                    origin: kind.command().to_string(),
                    key: key.to_string(),
                    reason: format!("expected a single value, got {}", v.len()),
                })
            }
        };
        match kind {
            SweepKind::Noise => single(&alpha, "alpha")?,
            SweepKind::Alpha => single(&n0, "n0")?,
        }
        let cfg = SimConfig {
            rig: self.rig()?,
            grid: self.grid()?,
            prior: ScenePrior::new(self.mu.unwrap_or(128.0), sigma_a, 0.0).map_err(core_range)?,
            alphabet: ValueAlphabet::eight_bit(),
            l_count: self.l_count.unwrap_or(2),
            sigma_i2: self.sigma_i2_for(&algorithms),
            n0,
            alpha,
            trials: self.trials.unwrap_or(10_000),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            algorithms,
            quantize_ip: self.quantize_ip.unwrap_or(false),
            mi_bin_width: self.mi_bin_width.unwrap_or(1.0),
        };
        cfg.validate().map_err(core_range)?;
        Ok(cfg)
    }
}

fn core_range(e: simloc_core::Error) -> ConfigError {
    match e {
        simloc_core::Error::InvalidParameter { name, reason } => ConfigError::OutOfRange {
            origin: "config".to_string(),
            key: name.to_string(),
            reason,
        },
        other => ConfigError::OutOfRange {
            origin: "config".to_string(),
            key: "config".to_string(),
            reason: other.to_string(),
        },
    }
}
