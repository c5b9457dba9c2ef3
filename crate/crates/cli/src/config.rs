//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Keys that describe physics
//! (optics, protocol, measured rates, the source) have no default and must be
//! given when the command needs them; everything else falls back to the
//! defaults listed in [`KEYS`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use photon_monitor::channel::ChannelParams;
use photon_monitor::decoy::{MeasuredRates, Mode};
use photon_monitor::monitor::{ElectronicNoiseModel, SourceSetupConfig};
use photon_monitor::stats::{Moments, PhotonNumberDistribution};

use crate::CliError;

/// Every recognised key with its default (`None` = required when used).
pub const KEYS: &[(&str, Option<&str>, &str)] = &[
    // optical chain
    ("t_bs", None, "beam-splitter transmission to the monitor"),
    ("t_d", None, "monitor detector efficiency"),
    (
        "eta_s",
        None,
        "signal attenuation from the beam splitter to the channel",
    ),
    (
        "eta_d",
        None,
        "decoy attenuation from the beam splitter to the channel",
    ),
    (
        "eta_prime_s",
        None,
        "alternative to eta_s: eta_s (1 - t_bs)",
    ),
    (
        "eta_prime_d",
        None,
        "alternative to eta_d: eta_d (1 - t_bs)",
    ),
    ("pulses_per_train", None, "pulses per burst"),
    ("train_period_s", None, "burst period in seconds"),
    // protocol
    (
        "mu",
        None,
        "signal intensity; derived from the fitted source if absent",
    ),
    (
        "nu",
        None,
        "decoy intensity; derived from the fitted source if absent",
    ),
    ("n_mu", None, "signal pulse count"),
    ("n_nu", None, "decoy pulse count"),
    ("n_0", None, "vacuum pulse count"),
    ("f_ec", None, "error-correction inefficiency"),
    // measured rates; simulated through the channel model if q_s is absent
    ("q_s", None, "signal gain"),
    ("q_d", None, "decoy gain"),
    ("q_0", None, "vacuum gain"),
    ("e_s", None, "signal QBER"),
    ("e_0", None, "vacuum QBER"),
    ("e_d", None, "decoy QBER (optional)"),
    // channel
    ("eta_b", None, "Bob's detection efficiency"),
    ("fiber_loss_db_per_km", Some("0.2"), "fibre attenuation"),
    ("fiber_length_km", Some("0"), "fibre length"),
    (
        "dark_count_prob",
        Some("0"),
        "dark-count probability per gate",
    ),
    ("misalignment", Some("0"), "intrinsic error probability"),
    // source under test (simulate)
    ("source", None, "gaussian | poisson | fock | vacuum"),
    ("source_mean", None, "mean photon number (or Fock number)"),
    ("source_variance", None, "photon-number variance (gaussian)"),
    // monitor electronics
    (
        "gain_v_per_pe",
        None,
        "integrator volts per photoelectron; enables voltage records",
    ),
    (
        "noise_offset_mean",
        Some("0"),
        "electronic offset mean in volts",
    ),
    (
        "noise_offset_std",
        Some("0"),
        "electronic offset rms in volts",
    ),
    // measured photoelectron moments (analyze --moments)
    ("m_mean", None, "photoelectron mean"),
    ("m_variance", None, "photoelectron variance"),
    // run control
    ("mode", Some("untrusted"), "trusted | untrusted"),
    (
        "k_sigma",
        Some("5"),
        "half-width of the photon-number interval in sigmas",
    ),
    ("seed", Some("0"), "simulation seed"),
    ("pulse_count", Some("100000"), "pulses to simulate"),
    (
        "xi",
        None,
        "monitor efficiency for invert; defaults to t_bs t_d",
    ),
    ("records", None, "monitor-record input file"),
    ("histogram", None, "histogram input file"),
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    base_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`", idx + 1))
            })?;
            let k = k.trim();
            if !KEYS.iter().any(|(name, _, _)| *name == k) {
                return Err(CliError::Config(format!(
                    "line {}: unknown key `{k}`",
                    idx + 1
                )));
            }
            if values.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key `{k}`",
                    idx + 1
                )));
            }
        }
        Ok(Self {
            values,
            base_dir: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).or_else(|| {
            KEYS.iter()
                .find(|(k, _, _)| *k == key)
                .and_then(|(_, default, _)| *default)
        })
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("key `{key}` = `{v}`: {e}")))
            })
            .transpose()
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    /// Input paths are resolved relative to the config file.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|v| {
            let p = PathBuf::from(v);
            match &self.base_dir {
                Some(dir) if p.is_relative() && self.values.contains_key(key) => dir.join(p),
                _ => p,
            }
        })
    }

    pub fn mode(&self) -> Result<Mode, CliError> {
        let v: String = self.require("mode")?;
        v.parse()
            .map_err(|e: photon_monitor::Error| CliError::Config(e.to_string()))
    }

    pub fn source_setup(&self) -> Result<SourceSetupConfig, CliError> {
        let t_bs: f64 = self.require("t_bs")?;
        let eta = |direct: &str, prime: &str| -> Result<f64, CliError> {
            match (self.get::<f64>(direct)?, self.get::<f64>(prime)?) {
                (Some(_), Some(_)) => Err(CliError::Config(format!(
                    "give either `{direct}` or `{prime}`, not both"
                ))),
                (Some(v), None) => Ok(v),
                (None, Some(p)) => Ok(p / (1.0 - t_bs)),
                (None, None) => Err(CliError::Config(format!(
                    "missing required key `{direct}` (or `{prime}`)"
                ))),
            }
        };
        SourceSetupConfig::new(
            t_bs,
            self.require("t_d")?,
            eta("eta_s", "eta_prime_s")?,
            eta("eta_d", "eta_prime_d")?,
            self.require("pulses_per_train")?,
            self.require("train_period_s")?,
        )
        .map_err(CliError::invalid_config)
    }

    /// Measured rates if `q_s` is configured.
    pub fn measured_rates(&self) -> Result<Option<MeasuredRates>, CliError> {
        if !self.has("q_s") {
            return Ok(None);
        }
        let rates = MeasuredRates {
            q_s: self.require("q_s")?,
            q_d: self.require("q_d")?,
            q_0: self.require("q_0")?,
            e_s: self.require("e_s")?,
            e_0: self.require("e_0")?,
            e_d: self.get("e_d")?,
        };
        rates.validate().map_err(CliError::invalid_config)?;
        Ok(Some(rates))
    }

    pub fn channel(&self) -> Result<ChannelParams, CliError> {
        ChannelParams::new(
            self.require("eta_b")?,
            self.require("fiber_loss_db_per_km")?,
            self.require("fiber_length_km")?,
            self.require("dark_count_prob")?,
            self.require("misalignment")?,
        )
        .map_err(CliError::invalid_config)
    }

    pub fn source(&self) -> Result<PhotonNumberDistribution, CliError> {
        let kind: String = self.require("source")?;
        if kind == "vacuum" {
            return Ok(PhotonNumberDistribution::delta(0));
        }
        let mean: f64 = self.require("source_mean")?;
        let dist = match kind.as_str() {
            "gaussian" => {
                PhotonNumberDistribution::gaussian(mean, self.require("source_variance")?)
            }
            "poisson" => PhotonNumberDistribution::poisson(mean, 1e-15),
            "fock" => {
                if mean < 0.0 || mean.fract() != 0.0 {
                    return Err(CliError::Config(format!(
                        "fock source needs a non-negative integer `source_mean`, got {mean}"
                    )));
                }
                Ok(PhotonNumberDistribution::delta(mean as u64))
            }
            other => {
                return Err(CliError::Config(format!(
                    "`source` must be gaussian, poisson, fock or vacuum, got `{other}`"
                )))
            }
        };
        dist.map_err(CliError::invalid_config)
    }

    /// Electronic noise and gain, if voltage readout is configured.
    pub fn electronics(&self) -> Result<Option<(ElectronicNoiseModel, f64)>, CliError> {
        let Some(gain) = self.get::<f64>("gain_v_per_pe")? else {
            return Ok(None);
        };
        if !(gain > 0.0) {
            return Err(CliError::Config(format!(
                "`gain_v_per_pe` must be positive, got {gain}"
            )));
        }
        let noise = ElectronicNoiseModel::new(
            self.require("noise_offset_mean")?,
            self.require("noise_offset_std")?,
        )
        .map_err(CliError::invalid_config)?;
        Ok(Some((noise, gain)))
    }

    pub fn photoelectron_moments(&self) -> Result<Moments, CliError> {
        Moments::new(self.require("m_mean")?, self.require("m_variance")?)
            .map_err(CliError::invalid_config)
    }
}
