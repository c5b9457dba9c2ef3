//! Parameters and published results of the Plug&Play field experiment:
//! 25 km of single-mode fibre, weak+vacuum decoys, a 95/5 beam splitter
//! feeding a PIN photodiode monitor.

use crate::bernoulli::TransformEfficiency;
use crate::channel::ChannelParams;
use crate::decoy::{MeasuredRates, ProtocolParams};
use crate::monitor::SourceSetupConfig;
use crate::stats::Moments;

pub const MU: f64 = 0.48;
pub const NU: f64 = 0.06;
pub const XI: f64 = 0.76;
pub const N_MU: u64 = 61_747_531;
pub const N_NU: u64 = 23_056_601;
pub const N_0: u64 = 5_712_393;
pub const ETA_PRIME_S: f64 = 2.5e-8;
pub const ETA_PRIME_D: f64 = 3.1e-9;
pub const ETA_B: f64 = 0.04;

pub const T_BS: f64 = 0.95;
pub const T_D: f64 = 0.8;
pub const PULSES_PER_TRAIN: u32 = 50;
pub const TRAIN_PERIOD_S: f64 = 350e-6;
pub const FIBER_LENGTH_KM: f64 = 25.0;
pub const F_EC: f64 = 1.06;

pub const Q_S: f64 = 5.84e-3;
pub const Q_D: f64 = 7.48e-4;
pub const Q_0: f64 = 9.38e-5;
pub const E_S: f64 = 0.021;
pub const E_0: f64 = 0.461;
pub const PHOTOELECTRON_MEAN: f64 = 1.455e7;
pub const PHOTOELECTRON_VARIANCE: f64 = 6.14e10;

/// Reported photon-number statistics and downstream results.
pub mod reported {
    pub const SOURCE_MEAN: f64 = 1.914e7;
    pub const SOURCE_VARIANCE: f64 = 1.063e11;
    pub const N_MIN: f64 = 1.751e7;
    pub const N_MAX: f64 = 2.077e7;
    pub const EPSILON: f64 = 5.7e-7;
    pub const Q1_LOWER: f64 = 2.58e-3;
    pub const E1_UPPER: f64 = 0.0377;
    pub const KEY_RATE_UNTRUSTED: f64 = 52.0;
    pub const KEY_RATE_TRUSTED: f64 = 78.0;
}

pub fn efficiency() -> TransformEfficiency {
    TransformEfficiency::new(XI).expect("valid efficiency")
}

/// Optical chain with η chosen so that η(1 − t_bs) reproduces η′_s, η′_d.
pub fn source_setup() -> SourceSetupConfig {
    SourceSetupConfig::new(
        T_BS,
        T_D,
        ETA_PRIME_S / (1.0 - T_BS),
        ETA_PRIME_D / (1.0 - T_BS),
        PULSES_PER_TRAIN,
        TRAIN_PERIOD_S,
    )
    .expect("valid setup")
}

pub fn protocol_params() -> ProtocolParams {
    ProtocolParams {
        mu: MU,
        nu: NU,
        n_mu: N_MU,
        n_nu: N_NU,
        n_0: N_0,
        burst_rate: f64::from(PULSES_PER_TRAIN) / TRAIN_PERIOD_S,
        f_ec: F_EC,
        epsilon: reported::EPSILON,
    }
}

pub fn measured_rates() -> MeasuredRates {
    MeasuredRates {
        q_s: Q_S,
        q_d: Q_D,
        q_0: Q_0,
        e_s: E_S,
        e_0: E_0,
        e_d: None,
    }
}

pub fn photoelectron_moments() -> Moments {
    Moments::new(PHOTOELECTRON_MEAN, PHOTOELECTRON_VARIANCE).expect("valid moments")
}

/// Channel with the experiment's Bob efficiency and fibre length; loss,
/// dark counts and misalignment are not reported and take typical values.
pub fn channel() -> ChannelParams {
    ChannelParams::new(ETA_B, 0.2, FIBER_LENGTH_KM, 8e-5, 0.01).expect("valid channel")
}
