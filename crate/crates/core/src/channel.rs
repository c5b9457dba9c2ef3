//! Threshold-detector channel model.
//!
//! A pulse with i photons clicks with probability `1 − (1−η)^i (1−d)`,
//! η being the total transmittance (fibre and Bob's detection) and d the
//! per-gate dark-count probability. Erroneous clicks come from dark counts
//! (error probability 1/2) and from misalignment of detected photons.

use crate::decoy::MeasuredRates;
use crate::error::{Error, Result};
use crate::stats::{PhotonNumberDistribution, Representation};
use crate::summation::NeumaierSum;

const DARK_ERROR_RATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Bob's detection efficiency η_B.
    pub eta_b: f64,
    pub fiber_loss_db_per_km: f64,
    pub fiber_length_km: f64,
    /// Per gate, both detectors combined.
    pub dark_count_prob: f64,
    /// Intrinsic error probability of a detected photon.
    pub misalignment: f64,
}

impl ChannelParams {
    pub fn new(
        eta_b: f64,
        fiber_loss_db_per_km: f64,
        fiber_length_km: f64,
        dark_count_prob: f64,
        misalignment: f64,
    ) -> Result<Self> {
        let p = Self {
            eta_b,
            fiber_loss_db_per_km,
            fiber_length_km,
            dark_count_prob,
            misalignment,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_b > 0.0 && self.eta_b <= 1.0) {
            return Err(Error::param(
                "eta_b",
                format!("must lie in (0, 1], got {}", self.eta_b),
            ));
        }
        if !(self.fiber_loss_db_per_km >= 0.0 && self.fiber_loss_db_per_km.is_finite()) {
            return Err(Error::param("fiber_loss_db_per_km", "must be >= 0"));
        }
        if !(self.fiber_length_km >= 0.0 && self.fiber_length_km.is_finite()) {
            return Err(Error::param("fiber_length_km", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.dark_count_prob) {
            return Err(Error::param("dark_count_prob", "must lie in [0, 1)"));
        }
        if !(0.0..=0.5).contains(&self.misalignment) {
            return Err(Error::param("misalignment", "must lie in [0, 0.5]"));
        }
        if !(self.transmittance() > 0.0) {
            return Err(Error::param(
                "channel",
                "total transmittance underflows to zero",
            ));
        }
        Ok(())
    }

    /// η = η_B · 10^(−loss·length/10).
    pub fn transmittance(&self) -> f64 {
        self.eta_b * 10f64.powf(-self.fiber_loss_db_per_km * self.fiber_length_km / 10.0)
    }
}

/// Photon statistics of one pulse class entering the channel.
#[derive(Debug, Clone, PartialEq)]
pub enum EmittedState {
    /// Phase-randomized coherent state.
    Poisson {
        mean: f64,
    },
    Distribution(PhotonNumberDistribution),
}

/// Gain and QBER of one pulse class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Response {
    pub gain: f64,
    pub error_rate: f64,
}

/// `E[(1−η)^i]` under the state's photon-number statistics.
fn survival_generating_function(state: &EmittedState, eta: f64) -> Result<f64> {
    let s = 1.0 - eta;
    Ok(match state {
        EmittedState::Poisson { mean } => {
            if !(mean.is_finite() && *mean >= 0.0) {
                return Err(Error::param("mean", format!("must be >= 0, got {mean}")));
            }
            (-eta * mean).exp()
        }
        EmittedState::Distribution(dist) => match dist.representation() {
            Representation::Exact {
                support_offset,
                probabilities,
            } => {
                let mut acc = NeumaierSum::new();
                for (j, p) in probabilities.iter().enumerate() {
                    acc.add(p * s.powf((support_offset + j as u64) as f64));
                }
                acc.value()
            }
            Representation::ParametricGaussian { mean, variance } => {
                if s == 0.0 {
                    0.0
                } else {
                    // Gaussian moment generating function at t = ln(1−η)
                    let t = s.ln();
                    (t * mean + 0.5 * t * t * variance).exp().min(1.0)
                }
            }
        },
    })
}

pub fn state_response(state: &EmittedState, channel: &ChannelParams) -> Result<Response> {
    channel.validate()?;
    let eta = channel.transmittance();
    let d = channel.dark_count_prob;
    let g = survival_generating_function(state, eta)?;
    let gain = 1.0 - g * (1.0 - d);
    let errors = DARK_ERROR_RATE * d + channel.misalignment * (1.0 - g);
    let error_rate = if gain > 0.0 {
        (errors / gain).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(Response { gain, error_rate })
}

/// Gains and error rates for signal, decoy and vacuum pulses.
pub fn simulate_rates(
    signal: &EmittedState,
    decoy: &EmittedState,
    vacuum: &EmittedState,
    channel: &ChannelParams,
) -> Result<MeasuredRates> {
    let s = state_response(signal, channel)?;
    let d = state_response(decoy, channel)?;
    let v = state_response(vacuum, channel)?;
    Ok(MeasuredRates {
        q_s: s.gain,
        q_d: d.gain,
        q_0: v.gain,
        e_s: s.error_rate,
        e_0: v.error_rate,
        e_d: Some(d.error_rate),
    })
}
