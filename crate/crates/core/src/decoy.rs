//! Weak+vacuum decoy-state bounds and the secure key rate
//!
//! ```text
//! R = q [ −Q_s f(E_s) H2(E_s) + (1 − ε) Q1 (1 − H2(e1)) ]
//! ```
//!
//! with Q1 a lower bound on the single-photon signal gain and e1 an upper
//! bound on the single-photon error rate.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::monitor::{ConfidenceInterval, SourceSetupConfig, StateKind};
use crate::stats::binary_entropy;

/// Error rate of the vacuum contribution used inside the bounds.
pub const VACUUM_ERROR_RATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    /// Mean photon number of signal pulses.
    pub mu: f64,
    /// Mean photon number of weak decoy pulses.
    pub nu: f64,
    pub n_mu: u64,
    pub n_nu: u64,
    pub n_0: u64,
    /// Pulses per second.
    pub burst_rate: f64,
    /// Error-correction inefficiency f(E_s).
    pub f_ec: f64,
    /// Failure probability of the photon-number interval.
    pub epsilon: f64,
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < self.mu && self.mu.is_finite()) {
            return Err(Error::param(
                "mu/nu",
                format!("need 0 < nu < mu, got mu = {}, nu = {}", self.mu, self.nu),
            ));
        }
        if !(self.burst_rate.is_finite() && self.burst_rate > 0.0) {
            return Err(Error::param("burst_rate", "must be positive"));
        }
        if !(self.f_ec.is_finite() && self.f_ec >= 1.0) {
            return Err(Error::param(
                "f_ec",
                format!("must be >= 1, got {}", self.f_ec),
            ));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::param(
                "epsilon",
                format!("must lie in [0, 1), got {}", self.epsilon),
            ));
        }
        Ok(())
    }
}

/// Observed gains and error rates per state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredRates {
    pub q_s: f64,
    pub q_d: f64,
    pub q_0: f64,
    pub e_s: f64,
    pub e_0: f64,
    /// Decoy error rate, when measured.
    pub e_d: Option<f64>,
}

impl MeasuredRates {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("q_s", self.q_s),
            ("q_d", self.q_d),
            ("q_0", self.q_0),
            ("e_s", self.e_s),
            ("e_0", self.e_0),
            ("e_d", self.e_d.unwrap_or(0.0)),
        ];
        for (name, v) in fields {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonBounds {
    pub q1_lower: f64,
    pub e1_upper: f64,
    /// Set when q1 was capped at Q_s or e1 pushed back into [0, 1].
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Trusted,
    Untrusted,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Trusted => "trusted",
            Mode::Untrusted => "untrusted",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trusted" => Ok(Mode::Trusted),
            "untrusted" => Ok(Mode::Untrusted),
            other => Err(Error::param(
                "mode",
                format!("expected trusted|untrusted, got `{other}`"),
            )),
        }
    }
}

/// q = F/2 · N_μ/(N_μ + N_ν + N_0): half the signal pulses survive basis
/// sifting.
pub fn compute_q_factor(params: &ProtocolParams) -> Result<f64> {
    let total = params.n_mu + params.n_nu + params.n_0;
    if total == 0 {
        return Err(Error::param(
            "pulse counts",
            "N_mu + N_nu + N_0 must be positive",
        ));
    }
    Ok(0.5 * params.burst_rate * params.n_mu as f64 / total as f64)
}

/// Single-photon bounds for a source of known Poisson intensities μ > ν.
///
/// ```text
/// Y0 = Q_0
/// Y1 ≥ μ/(μν − ν²) · (Q_d e^ν − Q_s e^μ ν²/μ² − (μ² − ν²)/μ² · Y0)
/// Q1 = Y1 μ e^−μ
/// e1 ≤ (E_s Q_s e^μ − e0 Y0)/(Y1 μ)         (or the decoy analogue if E_d is known)
/// ```
pub fn trusted_bounds(rates: &MeasuredRates, mu: f64, nu: f64) -> Result<SinglePhotonBounds> {
    rates.validate()?;
    if !(nu > 0.0 && nu < mu && mu.is_finite()) {
        return Err(Error::param(
            "mu/nu",
            format!("need 0 < nu < mu, got mu = {mu}, nu = {nu}"),
        ));
    }
    let y0 = rates.q_0;
    let mu2 = mu * mu;
    let bracket =
        rates.q_d * nu.exp() - rates.q_s * mu.exp() * nu * nu / mu2 - (mu2 - nu * nu) / mu2 * y0;
    let y1 = mu / (mu * nu - nu * nu) * bracket;
    if !(y1 > 0.0) {
        return Err(Error::BoundVacuous { y1_lower: y1 });
    }

    let mut clamped = false;
    let mut q1 = y1 * mu * (-mu).exp();
    if q1 > rates.q_s {
        q1 = rates.q_s;
        clamped = true;
    }
    let e1_raw = match rates.e_d {
        Some(e_d) => (e_d * rates.q_d * nu.exp() - VACUUM_ERROR_RATE * y0) / (y1 * nu),
        None => (rates.e_s * rates.q_s * mu.exp() - VACUUM_ERROR_RATE * y0) / (y1 * mu),
    };
    let e1 = e1_raw.clamp(0.0, 1.0);
    if e1 != e1_raw {
        clamped = true;
    }
    Ok(SinglePhotonBounds {
        q1_lower: q1,
        e1_upper: e1,
        clamped,
    })
}

/// Bounds for an untrusted source whose photon number per pulse is only
/// known to lie in `interval`.
///
/// Given N photons at the beam splitter output, the attenuated state at the
/// channel entrance is close to Poisson with mean N·η′ (N·η′² ≪ 1), so the
/// signal and decoy intensities lie in `[n_min η′, n_max η′]`. The trusted
/// bounds are evaluated at the four corners of that rectangle, keeping the
/// smallest Q1 and the largest e1.
pub fn untrusted_bounds(
    rates: &MeasuredRates,
    interval: &ConfidenceInterval,
    config: &SourceSetupConfig,
) -> Result<SinglePhotonBounds> {
    rates.validate()?;
    let eta_s = config.eta_prime(StateKind::Signal);
    let eta_d = config.eta_prime(StateKind::Decoy);
    let mus = [interval.n_min * eta_s, interval.n_max * eta_s];
    let nus = [interval.n_min * eta_d, interval.n_max * eta_d];

    if mus[0] <= 0.0 {
        // the signal may be vacuum: nothing can be certified
        return Ok(SinglePhotonBounds {
            q1_lower: 0.0,
            e1_upper: VACUUM_ERROR_RATE,
            clamped: false,
        });
    }

    let mut worst: Option<SinglePhotonBounds> = None;
    for &mu in &mus {
        for &nu in &nus {
            let b = trusted_bounds(rates, mu, nu)?;
            worst = Some(match worst {
                None => b,
                Some(w) => SinglePhotonBounds {
                    q1_lower: w.q1_lower.min(b.q1_lower),
                    e1_upper: w.e1_upper.max(b.e1_upper),
                    clamped: w.clamped || b.clamped,
                },
            });
        }
    }
    Ok(worst.expect("four corners evaluated"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateReport {
    /// Secure key rate, clamped at zero.
    pub r_bits_per_s: f64,
    /// Unclamped value.
    pub r_raw: f64,
    pub q_factor: f64,
    pub bounds: SinglePhotonBounds,
    pub mode: Mode,
    pub interval: Option<ConfidenceInterval>,
}

/// Evaluates the key-rate formula. In trusted mode the (1 − ε) factor is 1;
/// in untrusted mode ε comes from `params.epsilon`.
pub fn key_rate(
    params: &ProtocolParams,
    rates: &MeasuredRates,
    bounds: &SinglePhotonBounds,
    mode: Mode,
) -> Result<KeyRateReport> {
    let q = compute_q_factor(params)?;
    let confidence = match mode {
        Mode::Trusted => 1.0,
        Mode::Untrusted => 1.0 - params.epsilon,
    };
    let leak = rates.q_s * params.f_ec * binary_entropy(rates.e_s)?;
    let secret = confidence * bounds.q1_lower * (1.0 - binary_entropy(bounds.e1_upper)?);
    let r_raw = q * (secret - leak);
    Ok(KeyRateReport {
        r_bits_per_s: r_raw.max(0.0),
        r_raw,
        q_factor: q,
        bounds: *bounds,
        mode,
        interval: None,
    })
}

impl KeyRateReport {
    pub fn with_interval(mut self, interval: ConfidenceInterval) -> Self {
        self.interval = Some(interval);
        self
    }

    /// Serializes as `name = value` lines. Interval fields read `none` when
    /// no interval applies.
    pub fn to_key_value(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("R_bits_per_s", self.r_bits_per_s.to_string());
        line("R_raw", self.r_raw.to_string());
        line("q_factor", self.q_factor.to_string());
        line("Q1_lower", self.bounds.q1_lower.to_string());
        line("e1_upper", self.bounds.e1_upper.to_string());
        line("mode", self.mode.to_string());
        line("N_min", opt(self.interval.map(|i| i.n_min)));
        line("N_max", opt(self.interval.map(|i| i.n_max)));
        line("epsilon", opt(self.interval.map(|i| i.epsilon)));
        out
    }

    /// Parses [`KeyRateReport::to_key_value`] output. The clamping flag and
    /// interval k_sigma are not serialized and come back as `false`/`0`.
    pub fn from_key_value(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(Error::Parse {
                line: idx + 1,
                message: "expected `name = value`".into(),
            })?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields.get(k).cloned().ok_or(Error::Parse {
                line: 0,
                message: format!("missing field `{k}`"),
            })
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse::<f64>().map_err(|e| Error::Parse {
                line: 0,
                message: format!("{k}: {e}"),
            })
        };
        let opt = |k: &str| -> Result<Option<f64>> {
            match get(k)?.as_str() {
                "none" => Ok(None),
                _ => num(k).map(Some),
            }
        };
        let interval = match (opt("N_min")?, opt("N_max")?, opt("epsilon")?) {
            (Some(lo), Some(hi), Some(eps)) => Some(ConfidenceInterval {
                n_min: lo,
                n_max: hi,
                epsilon: eps,
                k_sigma: 0.0,
            }),
            (None, None, None) => None,
            _ => {
                return Err(Error::Parse {
                    line: 0,
                    message: "interval fields must be all present or all `none`".into(),
                })
            }
        };
        Ok(KeyRateReport {
            r_bits_per_s: num("R_bits_per_s")?,
            r_raw: num("R_raw")?,
            q_factor: num("q_factor")?,
            bounds: SinglePhotonBounds {
                q1_lower: num("Q1_lower")?,
                e1_upper: num("e1_upper")?,
                clamped: false,
            },
            mode: get("mode")?.parse()?,
            interval,
        })
    }
}
