//! Photon-statistics monitoring for quantum key distribution with an
//! untrusted source.
//!
//! Alice taps the incoming (possibly adversarial) pulses with a beam splitter
//! and an inefficient linear photodetector. The photoelectron histogram is
//! the binomially thinned image of the source photon-number distribution, so
//! the source statistics can be recovered either pointwise (inverse Bernoulli
//! transform) or at the level of the first two moments. The recovered
//! statistics bound the photon number per pulse, which in turn bounds the
//! single-photon gain and error rate that enter the decoy-state key rate.
//!
//! Module map:
//!
//! * [`stats`]: distributions, moments, binomial/Poisson kernels, entropy.
//! * [`bernoulli`]: forward/inverse thinning and moment transport.
//! * [`monitor`]: Monte Carlo of the monitoring arm and the estimation chain.
//! * [`decoy`]: weak+vacuum decoy bounds and the secure key rate.
//! * [`channel`]: threshold-detector channel model producing gains and QBERs.
//! * [`experiment`]: the published Plug&Play experiment's parameter set.

pub mod bernoulli;
pub mod channel;
pub mod decoy;
pub mod error;
pub mod experiment;
pub mod monitor;
pub mod stats;
pub mod summation;

pub use bernoulli::{
    forward_bernoulli, forward_moments, inverse_bernoulli_exact, inverse_moments, recoverability,
    InversionDiagnostics, TransformEfficiency,
};
pub use channel::{simulate_rates, state_response, ChannelParams, EmittedState, Response};
pub use decoy::{
    compute_q_factor, key_rate, trusted_bounds, untrusted_bounds, KeyRateReport, MeasuredRates,
    Mode, ProtocolParams, SinglePhotonBounds,
};
pub use error::{Error, Result};
pub use monitor::{
    derive_interval, distribution_at_p5, estimate_distribution, fit_source_gaussian,
    simulate_monitor, simulate_monitor_with_noise, subtract_noise, ConfidenceInterval,
    ElectronicNoiseModel, Estimate, Histogram, MonitorRecord, Reading, SourceSetupConfig,
    StateKind,
};
pub use stats::{
    binary_entropy, pmf_binomial, pmf_poisson, Moments, PhotoelectronDistribution,
    PhotonNumberDistribution,
};
