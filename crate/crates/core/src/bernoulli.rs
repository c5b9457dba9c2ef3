//! Forward and inverse Bernoulli transforms (binomial thinning).
//!
//! A photon survives the monitoring arm with probability ξ = t_bs·t_D, so the
//! photoelectron distribution is
//!
//! ```text
//! D(m) = Σ_{N≥m} P(N) C(N,m) ξ^m (1-ξ)^(N-m)
//! ```
//!
//! and formally
//!
//! ```text
//! P(N) = Σ_{m≥N} D(m) C(m,N) ξ^(-N) (1-ξ^(-1))^(m-N).
//! ```
//!
//! The inverse series alternates and its coefficients grow as
//! `((2-ξ)/ξ)^m`, so pointwise inversion only makes sense for ξ > 1/2 and
//! modest support. Experiment-scale data (m ~ 10^7) goes through the moment-level
//! relations instead.

use crate::error::{Error, Result};
use crate::stats::{
    binomial_coefficient_exact, gaussian_mass_below_zero, ln_binomial_coefficient, pmf_binomial,
    CountDistribution, CountUnit, Moments, PhotoelectronDistribution, PhotonNumberDistribution,
    Representation, EXACT_BINOMIAL_MAX, GAUSSIAN_NEGATIVE_MASS_LIMIT,
};
use crate::summation::NeumaierSum;

/// Recovered probabilities at or above `-CLIP_TOLERANCE` are treated as
/// rounding noise and clipped to zero; anything lower is an instability.
pub const CLIP_TOLERANCE: f64 = 1e-8;

/// Tail mass at which mixed-binomial tables are truncated.
pub const FORWARD_RESIDUAL: f64 = 1e-12;

/// Composite monitoring efficiency ξ = t_bs·t_D, in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TransformEfficiency(f64);

impl TransformEfficiency {
    pub fn new(xi: f64) -> Result<Self> {
        if xi.is_finite() && xi > 0.0 && xi <= 1.0 {
            Ok(Self(xi))
        } else {
            Err(Error::param("xi", format!("must lie in (0, 1], got {xi}")))
        }
    }

    /// ξ from the beam-splitter transmission into the monitor arm and the
    /// detector quantum efficiency.
    pub fn from_setup(t_bs: f64, t_d: f64) -> Result<Self> {
        Self::new(t_bs * t_d)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Whether pointwise inversion converges, i.e. ξ > 1/2.
    pub fn is_recoverable(self) -> bool {
        self.0 > 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionDiagnostics {
    /// Most negative recovered probability before clipping (0 if none).
    pub max_negative_excursion: f64,
    /// ξ > 0.5.
    pub recoverable: bool,
    /// Largest absolute summand met in the alternating series.
    pub largest_term_magnitude: f64,
}

/// Moments of the thinned distribution:
/// `<m> = ξ<N>`, `<Δm²> = ξ(1-ξ)<N> + ξ²<ΔN²>`.
pub fn forward_moments(n: Moments, eff: TransformEfficiency) -> Moments {
    let xi = eff.value();
    Moments {
        mean: xi * n.mean,
        variance: xi * (1.0 - xi) * n.mean + xi * xi * n.variance,
    }
}

/// Solves the moment relations for the photon-number mean and variance.
pub fn inverse_moments(m: Moments, eff: TransformEfficiency) -> Result<Moments> {
    let xi = eff.value();
    let mean = m.mean / xi;
    let binomial_floor = xi * (1.0 - xi) * mean;
    let mut variance = (m.variance - binomial_floor) / (xi * xi);
    if variance < 0.0 {
        // exact Poisson data lands on the floor up to rounding
        let slack = 1e-12 * m.variance.max(binomial_floor) / (xi * xi);
        if -variance <= slack {
            variance = 0.0;
        } else {
            return Err(Error::NegativeVarianceRecovered { variance });
        }
    }
    Moments::new(mean, variance)
}

/// Applies the Bernoulli transform with survival probability ξ.
pub fn forward_bernoulli(
    p: &PhotonNumberDistribution,
    eff: TransformEfficiency,
) -> PhotoelectronDistribution {
    thin(p, eff).relabel()
}

/// Binomial thinning that keeps the count unit, e.g. attenuation of a
/// photon-number distribution.
///
/// Tabulated inputs give tabulated outputs over the same (finite) support.
/// Gaussian inputs are transported through the moment relations; when the
/// result is too close to zero to remain a valid Gaussian (heavy attenuation
/// to the few-photon regime) the exact mixed-binomial table is returned
/// instead, truncated at [`FORWARD_RESIDUAL`].
pub fn thin<U: CountUnit>(
    dist: &CountDistribution<U>,
    eff: TransformEfficiency,
) -> CountDistribution<U> {
    let xi = eff.value();
    if xi == 1.0 {
        return dist.clone();
    }
    match dist.representation() {
        Representation::Exact {
            support_offset,
            probabilities,
        } => thin_table(*support_offset, probabilities, xi),
        Representation::ParametricGaussian { mean, variance } => {
            let out = forward_moments(
                Moments {
                    mean: *mean,
                    variance: *variance,
                },
                eff,
            );
            if gaussian_mass_below_zero(out.mean, out.variance) < GAUSSIAN_NEGATIVE_MASS_LIMIT {
                CountDistribution::from_repr(Representation::ParametricGaussian {
                    mean: out.mean,
                    variance: out.variance,
                })
            } else {
                mixed_binomial_table(*mean, *variance, xi)
            }
        }
    }
}

fn binomial_kernel(n: u64, p: f64, k: u64) -> f64 {
    if n <= EXACT_BINOMIAL_MAX {
        binomial_coefficient_exact(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    } else {
        // p is validated by the caller
        pmf_binomial(n, p, k).unwrap_or(0.0)
    }
}

fn thin_table<U: CountUnit>(offset: u64, probs: &[f64], xi: f64) -> CountDistribution<U> {
    let max_n = offset + probs.len() as u64 - 1;
    let mut out = Vec::with_capacity(max_n as usize + 1);
    for m in 0..=max_n {
        let mut acc = NeumaierSum::new();
        for n in m.max(offset)..=max_n {
            let p = probs[(n - offset) as usize];
            if p != 0.0 {
                acc.add(p * binomial_kernel(n, xi, m));
            }
        }
        out.push(acc.value().max(0.0));
    }
    while out.len() > 1 && out.last() == Some(&0.0) {
        out.pop();
    }
    CountDistribution::from_weights(0, out).expect("thinning preserves normalization")
}

/// `Σ_N w(N) Binom(N, p)` with N ~ Gaussian(mean, variance), by quadrature
/// over ±10σ.
fn mixed_binomial_table<U: CountUnit>(mean: f64, variance: f64, p: f64) -> CountDistribution<U> {
    const NODES: usize = 2001;
    const HALF_WIDTH: f64 = 10.0;
    let sigma = variance.sqrt();
    let mut nodes: Vec<(u64, f64)> = Vec::with_capacity(NODES);
    for j in 0..NODES {
        let z = -HALF_WIDTH + 2.0 * HALF_WIDTH * j as f64 / (NODES - 1) as f64;
        let n = (mean + z * sigma).round();
        if n < 0.0 {
            continue;
        }
        let w = (-0.5 * z * z).exp();
        match nodes.last_mut() {
            Some((last, lw)) if *last == n as u64 => *lw += w,
            _ => nodes.push((n as u64, w)),
        }
    }
    let total: f64 = nodes.iter().map(|(_, w)| w).sum();
    let max_n = nodes.last().map(|(n, _)| *n).unwrap_or(0);
    let target_mean = p * mean;

    let mut table = Vec::new();
    let mut mass = NeumaierSum::new();
    for k in 0..=max_n {
        let mut acc = NeumaierSum::new();
        for &(n, w) in nodes.iter().filter(|(n, _)| *n >= k) {
            acc.add(w / total * binomial_kernel(n, p, k));
        }
        let pk = acc.value();
        table.push(pk);
        mass.add(pk);
        if 1.0 - mass.value() < FORWARD_RESIDUAL && k as f64 >= target_mean {
            break;
        }
    }
    CountDistribution::from_weights(0, table).expect("mixed binomial table is normalizable")
}

/// Signed coefficient `C(m,N) ξ^(-N) (1-1/ξ)^(m-N)` of the inverse series.
fn inverse_coefficient(m: u64, n: u64, xi: f64) -> f64 {
    let ratio = 1.0 - 1.0 / xi;
    let k = m - n;
    if m <= EXACT_BINOMIAL_MAX {
        let direct = binomial_coefficient_exact(m, n) * xi.powi(-(n as i32)) * ratio.powi(k as i32);
        if direct.is_finite() {
            return direct;
        }
    }
    let sign = if ratio < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
    let ln_mag = ln_binomial_coefficient(m, n) - n as f64 * xi.ln() + k as f64 * ratio.abs().ln();
    sign * ln_mag.exp()
}

/// Pointwise inverse Bernoulli transform of a tabulated photoelectron
/// distribution.
///
/// Recovered entries in `[-CLIP_TOLERANCE, 0)` are clipped to zero and the
/// table renormalized. Anything more negative (or non-finite) yields
/// [`Error::InversionUnstable`]; callers should fall back to
/// [`inverse_moments`].
pub fn inverse_bernoulli_exact(
    d: &PhotoelectronDistribution,
    eff: TransformEfficiency,
) -> Result<(PhotonNumberDistribution, InversionDiagnostics)> {
    let (offset, probs) = d.table().ok_or_else(|| {
        Error::param(
            "distribution",
            "pointwise inversion needs a tabulated distribution",
        )
    })?;
    let xi = eff.value();
    if xi == 1.0 {
        let diag = InversionDiagnostics {
            max_negative_excursion: 0.0,
            recoverable: true,
            largest_term_magnitude: probs.iter().copied().fold(0.0, f64::max),
        };
        return Ok((d.clone().relabel(), diag));
    }

    let max_m = offset + probs.len() as u64 - 1;
    let mut recovered = Vec::with_capacity(max_m as usize + 1);
    let mut largest = 0.0f64;
    for n in 0..=max_m {
        let mut acc = NeumaierSum::new();
        for m in n.max(offset)..=max_m {
            let dm = probs[(m - offset) as usize];
            if dm == 0.0 {
                continue;
            }
            let term = dm * inverse_coefficient(m, n, xi);
            largest = largest.max(term.abs());
            acc.add(term);
        }
        recovered.push(acc.value());
    }

    let most_negative = recovered.iter().copied().fold(0.0, f64::min);
    let diag = InversionDiagnostics {
        max_negative_excursion: most_negative,
        recoverable: eff.is_recoverable(),
        largest_term_magnitude: largest,
    };
    if most_negative < -CLIP_TOLERANCE || recovered.iter().any(|p| !p.is_finite()) {
        return Err(Error::InversionUnstable(Box::new(diag)));
    }
    for p in recovered.iter_mut() {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    while recovered.len() > 1 && recovered.last() == Some(&0.0) {
        recovered.pop();
    }
    let dist = PhotonNumberDistribution::from_weights(0, recovered)
        .map_err(|_| Error::InversionUnstable(Box::new(diag.clone())))?;
    Ok((dist, diag))
}

/// A-priori recoverability check for data whose largest count is
/// `max_count`; the term-growth figure is `|1 - 1/ξ|^max_count`.
pub fn recoverability(eff: TransformEfficiency, max_count: u64) -> InversionDiagnostics {
    let ratio = (1.0 - 1.0 / eff.value()).abs();
    InversionDiagnostics {
        max_negative_excursion: 0.0,
        recoverable: eff.is_recoverable(),
        largest_term_magnitude: ratio.powf(max_count as f64),
    }
}
