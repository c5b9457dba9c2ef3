//! Alice's monitoring arm: a beam splitter sends a fraction t_bs of every
//! pulse to a linear photodetector of efficiency t_D, the rest continues to
//! the attenuator and the channel.
//!
//! This module simulates the photoelectron records, turns records back into
//! a histogram and sample moments, fits the Gaussian photon-number model,
//! and derives the photon-number interval used by the untrusted-source bounds.

use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::bernoulli::{inverse_moments, thin, TransformEfficiency};
use crate::error::{Error, Result};
use crate::stats::{Moments, PhotoelectronDistribution, PhotonNumberDistribution, Representation};
use crate::summation::NeumaierSum;

/// Pulses per deterministic RNG substream.
pub const CHUNK_SIZE: u64 = 1 << 14;

/// Above this value of N·ξ(1-ξ) the photoelectron count is drawn from the
/// Gaussian approximation to the binomial.
pub const BINOMIAL_GAUSSIAN_THRESHOLD: f64 = 1e4;

/// Largest record span (max − min + 1) histogrammed per integer count.
pub const EXACT_HISTOGRAM_SPAN: u64 = 4096;

/// Target bin count across ±4σ for wide histograms.
pub const HISTOGRAM_BINS_PER_8_SIGMA: f64 = 100.0;

/// Optical chain on Alice's side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSetupConfig {
    /// Beam-splitter transmission towards the monitor.
    pub t_bs: f64,
    /// Monitor detector efficiency.
    pub t_d: f64,
    /// Attenuation for signal pulses from the beam splitter to the channel.
    pub eta_s: f64,
    /// Attenuation for decoy pulses from the beam splitter to the channel.
    pub eta_d: f64,
    pub pulses_per_train: u32,
    pub train_period_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateKind {
    Signal,
    Decoy,
}

impl SourceSetupConfig {
    pub fn new(
        t_bs: f64,
        t_d: f64,
        eta_s: f64,
        eta_d: f64,
        pulses_per_train: u32,
        train_period_s: f64,
    ) -> Result<Self> {
        let cfg = Self {
            t_bs,
            t_d,
            eta_s,
            eta_d,
            pulses_per_train,
            train_period_s,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_bs > 0.0 && self.t_bs < 1.0) {
            return Err(Error::param(
                "t_bs",
                format!("must lie in (0, 1), got {}", self.t_bs),
            ));
        }
        if !(self.t_d > 0.0 && self.t_d <= 1.0) {
            return Err(Error::param(
                "t_d",
                format!("must lie in (0, 1], got {}", self.t_d),
            ));
        }
        for (name, eta) in [("eta_s", self.eta_s), ("eta_d", self.eta_d)] {
            let eff = eta * (1.0 - self.t_bs);
            if !(eff > 0.0 && eff < 1.0) {
                return Err(Error::param(
                    name,
                    format!("attenuation after the beam splitter must lie in (0, 1), got {eff}"),
                ));
            }
        }
        if self.pulses_per_train == 0 || !(self.train_period_s > 0.0) {
            return Err(Error::param(
                "burst timing",
                "pulses_per_train and train_period_s must be positive",
            ));
        }
        Ok(())
    }

    /// ξ = t_bs·t_D.
    pub fn xi(&self) -> TransformEfficiency {
        TransformEfficiency::from_setup(self.t_bs, self.t_d)
            .expect("validated setup gives a valid efficiency")
    }

    /// η′ = η(1 − t_bs), source to channel entrance.
    pub fn eta_prime(&self, which: StateKind) -> f64 {
        let eta = match which {
            StateKind::Signal => self.eta_s,
            StateKind::Decoy => self.eta_d,
        };
        eta * (1.0 - self.t_bs)
    }

    /// Effective pulse rate F in pulses per second.
    pub fn burst_rate(&self) -> f64 {
        f64::from(self.pulses_per_train) / self.train_period_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reading {
    Counts(u64),
    /// Integrator output in volts, before noise subtraction.
    Volts(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorRecord {
    pub pulse_index: u64,
    pub reading: Reading,
}

/// Additive Gaussian offset on the integrator voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectronicNoiseModel {
    /// Volts.
    pub offset_mean: f64,
    /// Volts.
    pub offset_std: f64,
}

impl ElectronicNoiseModel {
    pub fn new(offset_mean: f64, offset_std: f64) -> Result<Self> {
        if !offset_mean.is_finite() {
            return Err(Error::param("offset_mean", "must be finite"));
        }
        if !(offset_std.is_finite() && offset_std >= 0.0) {
            return Err(Error::param(
                "offset_std",
                format!("must be >= 0, got {offset_std}"),
            ));
        }
        Ok(Self {
            offset_mean,
            offset_std,
        })
    }
}

enum PhotonSampler {
    Table { offset: u64, cumulative: Vec<f64> },
    Gaussian(Normal<f64>),
}

impl PhotonSampler {
    fn new(source: &PhotonNumberDistribution) -> Self {
        match source.representation() {
            Representation::Exact {
                support_offset,
                probabilities,
            } => {
                let mut acc = NeumaierSum::new();
                let cumulative = probabilities
                    .iter()
                    .map(|p| {
                        acc.add(*p);
                        acc.value()
                    })
                    .collect();
                PhotonSampler::Table {
                    offset: *support_offset,
                    cumulative,
                }
            }
            Representation::ParametricGaussian { mean, variance } => PhotonSampler::Gaussian(
                Normal::new(*mean, variance.sqrt()).expect("validated Gaussian parameters"),
            ),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        match self {
            PhotonSampler::Table { offset, cumulative } => {
                let total = *cumulative.last().expect("non-empty table");
                let u = rng.random::<f64>() * total;
                let i = cumulative.partition_point(|c| *c <= u);
                offset + i.min(cumulative.len() - 1) as u64
            }
            PhotonSampler::Gaussian(normal) => normal.sample(rng).round().max(0.0) as u64,
        }
    }
}

fn sample_photoelectrons<R: Rng>(n: u64, xi: f64, rng: &mut R) -> u64 {
    if n == 0 || xi == 1.0 {
        return n;
    }
    let spread = n as f64 * xi * (1.0 - xi);
    if spread > BINOMIAL_GAUSSIAN_THRESHOLD {
        let draw = Normal::new(n as f64 * xi, spread.sqrt())
            .expect("positive spread")
            .sample(rng)
            .round();
        draw.clamp(0.0, n as f64) as u64
    } else {
        Binomial::new(n, xi).expect("xi in (0, 1)").sample(rng)
    }
}

fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Simulates `pulse_count` monitor readings.
///
/// Pulses are split into chunks of [`CHUNK_SIZE`], each driven by its own
/// ChaCha stream derived from `seed`, so the output depends only on the seed
/// and pulse count, not on the number of worker threads.
pub fn simulate_monitor(
    true_source: &PhotonNumberDistribution,
    config: &SourceSetupConfig,
    pulse_count: u64,
    seed: u64,
) -> Result<Vec<MonitorRecord>> {
    simulate(true_source, config, pulse_count, seed, None)
}

/// As [`simulate_monitor`], with each reading reported as an integrator
/// voltage `gain·m + offset`, offset drawn from `noise`.
pub fn simulate_monitor_with_noise(
    true_source: &PhotonNumberDistribution,
    config: &SourceSetupConfig,
    pulse_count: u64,
    seed: u64,
    noise: &ElectronicNoiseModel,
    gain: f64,
) -> Result<Vec<MonitorRecord>> {
    if !(gain.is_finite() && gain > 0.0) {
        return Err(Error::param(
            "gain",
            format!("must be positive, got {gain}"),
        ));
    }
    simulate(true_source, config, pulse_count, seed, Some((noise, gain)))
}

fn simulate(
    true_source: &PhotonNumberDistribution,
    config: &SourceSetupConfig,
    pulse_count: u64,
    seed: u64,
    noise: Option<(&ElectronicNoiseModel, f64)>,
) -> Result<Vec<MonitorRecord>> {
    if pulse_count == 0 {
        return Err(Error::param(
            "pulse_count",
            "at least one pulse is required",
        ));
    }
    config.validate()?;
    let xi = config.xi().value();
    let sampler = PhotonSampler::new(true_source);
    let offset_dist = noise.map(|(model, gain)| {
        // a zero-width offset is applied without consuming random numbers
        let normal = (model.offset_std > 0.0).then(|| {
            Normal::new(model.offset_mean, model.offset_std).expect("validated noise model")
        });
        (model.offset_mean, normal, gain)
    });
    let chunks = pulse_count.div_ceil(CHUNK_SIZE);

    let records = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = chunk_rng(seed, chunk);
            let start = chunk * CHUNK_SIZE;
            let end = (start + CHUNK_SIZE).min(pulse_count);
            (start..end)
                .map(|pulse_index| {
                    let n = sampler.sample(&mut rng);
                    let m = sample_photoelectrons(n, xi, &mut rng);
                    let reading = match &offset_dist {
                        None => Reading::Counts(m),
                        Some((mean, normal, gain)) => {
                            let offset = normal.map_or(*mean, |n| n.sample(&mut rng));
                            Reading::Volts(gain * m as f64 + offset)
                        }
                    };
                    MonitorRecord {
                        pulse_index,
                        reading,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(records)
}

/// Converts voltage readings to photoelectron counts:
/// `m = round(max(0, (v − offset_mean)/gain))`. Count readings pass through.
pub fn subtract_noise(
    records: &[MonitorRecord],
    noise: &ElectronicNoiseModel,
    gain: f64,
) -> Result<Vec<MonitorRecord>> {
    if !(gain.is_finite() && gain > 0.0) {
        return Err(Error::param(
            "gain",
            format!("must be positive, got {gain}"),
        ));
    }
    Ok(records
        .iter()
        .map(|r| {
            let reading = match r.reading {
                Reading::Volts(v) => {
                    Reading::Counts(((v - noise.offset_mean) / gain).max(0.0).round() as u64)
                }
                counts => counts,
            };
            MonitorRecord {
                pulse_index: r.pulse_index,
                reading,
            }
        })
        .collect())
}

/// Normalized histogram over integer counts. Bin `i` covers
/// `start + i·bin_width ..= start + (i+1)·bin_width − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub start: u64,
    pub bin_width: u64,
    pub probabilities: Vec<f64>,
}

impl Histogram {
    pub fn new(start: u64, bin_width: u64, weights: Vec<f64>) -> Result<Self> {
        if bin_width == 0 {
            return Err(Error::param("bin_width", "must be at least 1"));
        }
        // reuse the table validation for normalization
        let dist = PhotoelectronDistribution::from_weights(start, weights)?;
        let probabilities = dist.table().expect("tabulated").1.to_vec();
        Ok(Self {
            start,
            bin_width,
            probabilities,
        })
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.start as f64 + (i as u64 * self.bin_width) as f64 + (self.bin_width - 1) as f64 / 2.0
    }

    /// The histogram as a photoelectron distribution, available only for
    /// unit-width bins.
    pub fn to_distribution(&self) -> Option<PhotoelectronDistribution> {
        (self.bin_width == 1)
            .then(|| PhotoelectronDistribution::exact(self.start, self.probabilities.clone()).ok())
            .flatten()
    }

    /// Moments from bin centers, with Sheppard's correction `w²/12` removed
    /// from the variance for wide bins.
    pub fn moments(&self) -> Moments {
        let mut mean = NeumaierSum::new();
        for (i, p) in self.probabilities.iter().enumerate() {
            mean.add(p * self.bin_center(i));
        }
        let mean = mean.value();
        let mut var = NeumaierSum::new();
        for (i, p) in self.probabilities.iter().enumerate() {
            let d = self.bin_center(i) - mean;
            var.add(p * d * d);
        }
        let w = self.bin_width as f64;
        let sheppard = if self.bin_width > 1 {
            w * w / 12.0
        } else {
            0.0
        };
        Moments {
            mean,
            variance: (var.value() - sheppard).max(0.0),
        }
    }

    /// Writes `bin_center probability` lines.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# bin_center probability")?;
        for (i, p) in self.probabilities.iter().enumerate() {
            writeln!(w, "{} {}", self.bin_center(i), p)?;
        }
        Ok(())
    }

    /// Parses the format written by [`Histogram::write_to`]. Centers must be
    /// equally spaced by an integer bin width; a single line is read as a
    /// unit-width bin.
    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<(usize, f64, f64)> = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: "expected `bin_center probability`".into(),
                })?
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })
            };
            let center = parse(fields.next())?;
            let prob = parse(fields.next())?;
            if fields.next().is_some() {
                return Err(Error::Parse {
                    line: lineno,
                    message: "expected exactly two columns".into(),
                });
            }
            rows.push((lineno, center, prob));
        }
        let first = rows.first().ok_or(Error::Parse {
            line: 0,
            message: "histogram is empty".into(),
        })?;
        let width = match rows.get(1) {
            Some(second) => second.1 - first.1,
            None => 1.0,
        };
        if !(width >= 1.0 && (width - width.round()).abs() < 1e-9) {
            return Err(Error::Parse {
                line: first.0,
                message: format!("bin spacing {width} is not a positive integer"),
            });
        }
        for (k, (lineno, center, _)) in rows.iter().enumerate() {
            let expected = first.1 + k as f64 * width;
            if (center - expected).abs() > 1e-6 * expected.abs().max(1.0) {
                return Err(Error::Parse {
                    line: *lineno,
                    message: format!("bin center {center} breaks uniform spacing"),
                });
            }
        }
        let width = width.round() as u64;
        let start = first.1 - (width - 1) as f64 / 2.0;
        if start < 0.0 || (start - start.round()).abs() > 1e-9 {
            return Err(Error::Parse {
                line: first.0,
                message: format!("first bin starts at non-integer count {start}"),
            });
        }
        Histogram::new(
            start.round() as u64,
            width,
            rows.into_iter().map(|(_, _, p)| p).collect(),
        )
    }
}

/// Measured photoelectron statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub histogram: Histogram,
    /// Sample mean and unbiased sample variance of the raw counts.
    pub moments: Moments,
    pub sample_size: usize,
}

/// Histogram and sample moments of count records.
///
/// Records spanning at most [`EXACT_HISTOGRAM_SPAN`] counts get one bin per
/// integer; wider data is binned so that ~100 bins cover ±4σ.
pub fn estimate_distribution(records: &[MonitorRecord]) -> Result<Estimate> {
    if records.len() < 2 {
        return Err(Error::InsufficientData {
            records: records.len(),
        });
    }
    let counts = records
        .iter()
        .map(|r| match r.reading {
            Reading::Counts(m) => Ok(m),
            Reading::Volts(_) => Err(Error::param(
                "records",
                "voltage readings must go through subtract_noise first",
            )),
        })
        .collect::<Result<Vec<u64>>>()?;

    let n = counts.len() as f64;
    let mut sum = NeumaierSum::new();
    sum.extend(counts.iter().map(|&m| m as f64));
    let mean = sum.value() / n;
    let mut ss = NeumaierSum::new();
    ss.extend(counts.iter().map(|&m| {
        let d = m as f64 - mean;
        d * d
    }));
    let moments = Moments::new(mean, ss.value() / (n - 1.0))?;

    let min = *counts.iter().min().expect("non-empty");
    let max = *counts.iter().max().expect("non-empty");
    let bin_width = if max - min < EXACT_HISTOGRAM_SPAN {
        1
    } else {
        ((8.0 * moments.std_dev() / HISTOGRAM_BINS_PER_8_SIGMA).ceil() as u64).max(1)
    };
    let bins = ((max - min) / bin_width + 1) as usize;
    let mut weights = vec![0.0; bins];
    for &m in &counts {
        weights[((m - min) / bin_width) as usize] += 1.0;
    }
    Ok(Estimate {
        histogram: Histogram::new(min, bin_width, weights)?,
        moments,
        sample_size: counts.len(),
    })
}

/// Gaussian photon-number model whose Bernoulli image has the measured
/// photoelectron moments.
pub fn fit_source_gaussian(
    m_moments: Moments,
    eff: TransformEfficiency,
) -> Result<PhotonNumberDistribution> {
    let n = inverse_moments(m_moments, eff)?;
    PhotonNumberDistribution::gaussian(n.mean, n.variance)
}

/// Photon-number interval [n_min, n_max] holding with confidence 1 − ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub n_min: f64,
    pub n_max: f64,
    pub epsilon: f64,
    pub k_sigma: f64,
}

impl ConfidenceInterval {
    pub fn new(n_min: f64, n_max: f64, epsilon: f64, k_sigma: f64) -> Result<Self> {
        if !(n_min.is_finite() && n_max.is_finite() && n_min >= 0.0 && n_min <= n_max) {
            return Err(Error::param(
                "interval",
                format!("need 0 <= n_min <= n_max, got [{n_min}, {n_max}]"),
            ));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::param(
                "epsilon",
                format!("must lie in [0, 1), got {epsilon}"),
            ));
        }
        Ok(Self {
            n_min,
            n_max,
            epsilon,
            k_sigma,
        })
    }

    /// Zero-width interval at `n` with ε = 0, i.e. a source whose photon
    /// number is known exactly.
    pub fn point(n: f64) -> Result<Self> {
        Self::new(n, n, 0.0, 0.0)
    }

    pub fn width(&self) -> f64 {
        self.n_max - self.n_min
    }
}

/// Two-sided k·σ interval of a Gaussian photon-number model,
/// ε = 2(1 − Φ(k)) = erfc(k/√2), lower end clamped at zero.
pub fn derive_interval(
    source: &PhotonNumberDistribution,
    k_sigma: f64,
) -> Result<ConfidenceInterval> {
    let Representation::ParametricGaussian { mean, variance } = source.representation() else {
        return Err(Error::param(
            "source",
            "interval derivation needs the Gaussian form",
        ));
    };
    if !(k_sigma.is_finite() && k_sigma > 0.0) {
        return Err(Error::param(
            "k_sigma",
            format!("must be positive, got {k_sigma}"),
        ));
    }
    let half = k_sigma * variance.sqrt();
    let epsilon = erfc(k_sigma / std::f64::consts::SQRT_2);
    Ok(ConfidenceInterval {
        n_min: (mean - half).max(0.0),
        n_max: mean + half,
        epsilon,
        k_sigma,
    })
}

/// Photon-number distribution entering the channel (P5) for the given
/// state: the source thinned by η′.
pub fn distribution_at_p5(
    source: &PhotonNumberDistribution,
    config: &SourceSetupConfig,
    which: StateKind,
) -> Result<PhotonNumberDistribution> {
    let eta = TransformEfficiency::new(config.eta_prime(which))?;
    Ok(thin(source, eta))
}

/// Writes records with a `#format=counts|volts` header and one
/// `pulse_index,value` line per pulse. Mixed readings are rejected.
pub fn write_records<W: Write>(mut w: W, records: &[MonitorRecord]) -> io::Result<()> {
    let volts = matches!(records.first().map(|r| r.reading), Some(Reading::Volts(_)));
    writeln!(w, "#format={}", if volts { "volts" } else { "counts" })?;
    for r in records {
        match (r.reading, volts) {
            (Reading::Counts(m), false) => writeln!(w, "{},{}", r.pulse_index, m)?,
            (Reading::Volts(v), true) => writeln!(w, "{},{}", r.pulse_index, v)?,
            _ => {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidInput,
                    "records mix counts and voltages",
                ))
            }
        }
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<MonitorRecord>> {
    let mut volts: Option<bool> = None;
    let mut records = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let lineno = idx + 1;
        let err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let line = line.map_err(|e| err(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some(is_volts) = volts else {
            volts = Some(match line {
                "#format=counts" => false,
                "#format=volts" => true,
                _ => {
                    return Err(err(format!(
                        "expected `#format=counts|volts` header, got `{line}`"
                    )))
                }
            });
            continue;
        };
        if line.starts_with('#') {
            continue;
        }
        let (index, value) = line
            .split_once(',')
            .ok_or_else(|| err("expected `pulse_index,value`".into()))?;
        let pulse_index = index
            .trim()
            .parse::<u64>()
            .map_err(|e| err(format!("pulse index: {e}")))?;
        let reading = if is_volts {
            Reading::Volts(
                value
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| err(format!("voltage: {e}")))?,
            )
        } else {
            Reading::Counts(
                value
                    .trim()
                    .parse::<u64>()
                    .map_err(|e| err(format!("count: {e}")))?,
            )
        };
        records.push(MonitorRecord {
            pulse_index,
            reading,
        });
    }
    if volts.is_none() {
        return Err(Error::Parse {
            line: 0,
            message: "missing `#format=` header".into(),
        });
    }
    Ok(records)
}
