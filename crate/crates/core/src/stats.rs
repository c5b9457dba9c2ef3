//! Photon-number and photoelectron distributions, moments, and the
//! elementary pmf/entropy kernels shared by the rest of the crate.

use std::fmt;
use std::marker::PhantomData;

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::summation::NeumaierSum;

/// Allowed deviation of an exact table's total mass from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Maximum Gaussian mass allowed below N = 0.
pub const GAUSSIAN_NEGATIVE_MASS_LIMIT: f64 = 1e-6;

/// Largest `n` for which binomial coefficients are formed exactly
/// (C(60, 30) < 2^64) instead of through log-gamma.
pub const EXACT_BINOMIAL_MAX: u64 = 60;

/// Count unit marker for a distribution.
pub trait CountUnit: fmt::Debug + Clone + Copy + PartialEq + Send + Sync + 'static {
    const NAME: &'static str;
}

/// Photons per pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Photons;

/// Photoelectrons per pulse at the monitoring detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Photoelectrons;

impl CountUnit for Photons {
    const NAME: &'static str = "photons";
}

impl CountUnit for Photoelectrons {
    const NAME: &'static str = "photoelectrons";
}

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    /// `probabilities[i]` is the probability of count `support_offset + i`.
    Exact {
        support_offset: u64,
        probabilities: Vec<f64>,
    },
    /// Gaussian approximation described by its first two moments.
    ParametricGaussian { mean: f64, variance: f64 },
}

/// Distribution of a non-negative count (photons or photoelectrons).
///
/// Immutable once built; every constructor enforces normalization, so a
/// value of this type is always a valid distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution<U: CountUnit> {
    repr: Representation,
    unit: PhantomData<U>,
}

/// Photon-number distribution P(N) of a phase-randomized single-mode source.
pub type PhotonNumberDistribution = CountDistribution<Photons>;

/// Photoelectron distribution D(m) recorded by the monitoring detector.
pub type PhotoelectronDistribution = CountDistribution<Photoelectrons>;

impl<U: CountUnit> CountDistribution<U> {
    /// Tabulated distribution. Probabilities must be finite, non-negative and
    /// sum to one within [`NORMALIZATION_TOLERANCE`].
    pub fn exact(support_offset: u64, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidDistribution("empty probability table".into()));
        }
        if let Some((i, p)) = probabilities
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "probability at count {} is {p}",
                support_offset + i as u64
            )));
        }
        let total = crate::summation::compensated_sum(probabilities.iter().copied());
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self::from_repr(Representation::Exact {
            support_offset,
            probabilities,
        }))
    }

    /// Tabulated distribution from non-negative weights, normalized to one.
    pub fn from_weights(support_offset: u64, weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total = crate::summation::compensated_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Self::exact(
            support_offset,
            weights.into_iter().map(|w| w / total).collect(),
        )
    }

    /// Point mass at `n`.
    pub fn delta(n: u64) -> Self {
        Self::from_repr(Representation::Exact {
            support_offset: n,
            probabilities: vec![1.0],
        })
    }

    /// Poisson(λ) tabulated on `0..=max_count` and renormalized.
    pub fn poisson_truncated(lambda: f64, max_count: u64) -> Result<Self> {
        let weights = (0..=max_count)
            .map(|k| pmf_poisson(lambda, k))
            .collect::<Result<Vec<_>>>()?;
        Self::from_weights(0, weights)
    }

    /// Poisson(λ) tabulated until the remaining tail mass drops below
    /// `residual`.
    pub fn poisson(lambda: f64, residual: f64) -> Result<Self> {
        let mut weights = Vec::new();
        let mut mass = NeumaierSum::new();
        let mut k = 0u64;
        loop {
            let p = pmf_poisson(lambda, k)?;
            weights.push(p);
            mass.add(p);
            if 1.0 - mass.value() < residual && k as f64 >= lambda {
                break;
            }
            k += 1;
        }
        Self::from_weights(0, weights)
    }

    /// Gaussian with the given mean and variance. Rejected if more than
    /// [`GAUSSIAN_NEGATIVE_MASS_LIMIT`] of the mass falls below zero.
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "Gaussian mean must be positive, got {mean}"
            )));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "Gaussian variance must be positive, got {variance}"
            )));
        }
        let below_zero = gaussian_mass_below_zero(mean, variance);
        if below_zero >= GAUSSIAN_NEGATIVE_MASS_LIMIT {
            return Err(Error::InvalidDistribution(format!(
                "Gaussian places {below_zero:.3e} of its mass below zero"
            )));
        }
        Ok(Self::from_repr(Representation::ParametricGaussian {
            mean,
            variance,
        }))
    }

    pub(crate) fn from_repr(repr: Representation) -> Self {
        Self {
            repr,
            unit: PhantomData,
        }
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.repr, Representation::Exact { .. })
    }

    /// `(support_offset, probabilities)` for tabulated distributions.
    pub fn table(&self) -> Option<(u64, &[f64])> {
        match &self.repr {
            Representation::Exact {
                support_offset,
                probabilities,
            } => Some((*support_offset, probabilities)),
            Representation::ParametricGaussian { .. } => None,
        }
    }

    /// Probability of count `n`; `None` for the Gaussian form.
    pub fn probability(&self, n: u64) -> Option<f64> {
        self.table().map(|(offset, probs)| {
            n.checked_sub(offset)
                .and_then(|i| probs.get(i as usize).copied())
                .unwrap_or(0.0)
        })
    }

    /// Largest count with non-zero table entry (tabulated form only).
    pub fn max_count(&self) -> Option<u64> {
        self.table()
            .map(|(offset, probs)| offset + probs.len() as u64 - 1)
    }

    pub fn moments(&self) -> Moments {
        moments_of(self)
    }

    pub fn mean(&self) -> f64 {
        self.moments().mean
    }

    /// Reinterprets the count unit. Used where a thinning map sends one
    /// physical quantity to another.
    pub fn relabel<V: CountUnit>(self) -> CountDistribution<V> {
        CountDistribution {
            repr: self.repr,
            unit: PhantomData,
        }
    }
}

impl<U: CountUnit> fmt::Display for CountDistribution<U> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            Representation::Exact {
                support_offset,
                probabilities,
            } => write!(
                f,
                "exact {} table on {}..={}",
                U::NAME,
                support_offset,
                support_offset + probabilities.len() as u64 - 1
            ),
            Representation::ParametricGaussian { mean, variance } => {
                write!(f, "Gaussian {} (mean {mean}, variance {variance})", U::NAME)
            }
        }
    }
}

/// First moment and central second moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl Moments {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::param("mean", format!("must be finite, got {mean}")));
        }
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::param(
                "variance",
                format!("must be finite and non-negative, got {variance}"),
            ));
        }
        Ok(Self { mean, variance })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

pub fn moments_of<U: CountUnit>(dist: &CountDistribution<U>) -> Moments {
    match &dist.repr {
        Representation::ParametricGaussian { mean, variance } => Moments {
            mean: *mean,
            variance: *variance,
        },
        Representation::Exact {
            support_offset,
            probabilities,
        } => {
            // Offsets are factored out so the table index stays small.
            let mut rel_mean = NeumaierSum::new();
            for (i, p) in probabilities.iter().enumerate() {
                rel_mean.add(p * i as f64);
            }
            let rel_mean = rel_mean.value();
            let mut var = NeumaierSum::new();
            for (i, p) in probabilities.iter().enumerate() {
                let d = i as f64 - rel_mean;
                var.add(p * d * d);
            }
            Moments {
                mean: *support_offset as f64 + rel_mean,
                variance: var.value().max(0.0),
            }
        }
    }
}

pub(crate) fn gaussian_mass_below_zero(mean: f64, variance: f64) -> f64 {
    // Phi(-mean / sigma), continuity correction not applied
    0.5 * erfc(mean / (variance.sqrt() * std::f64::consts::SQRT_2))
}

/// Binary entropy H2(x) in bits, with H2(0) = H2(1) = 0.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::param(
            "x",
            format!("binary entropy needs 0 <= x <= 1, got {x}"),
        ));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (-x).ln_1p() / std::f64::consts::LN_2)
}

/// Exact C(n, k) for n <= [`EXACT_BINOMIAL_MAX`], rounded once to f64.
pub(crate) fn binomial_coefficient_exact(n: u64, k: u64) -> f64 {
    debug_assert!(n <= EXACT_BINOMIAL_MAX && k <= n);
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) is divisible by (i + 1) at every step
        c = c * u128::from(n - i) / u128::from(i + 1);
    }
    c as f64
}

/// ln C(n, k).
pub(crate) fn ln_binomial_coefficient(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    if k <= 64 {
        let mut acc = NeumaierSum::new();
        for i in 0..k {
            acc.add(((n - i) as f64 / (i + 1) as f64).ln());
        }
        acc.value()
    } else {
        ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
    }
}

/// Binomial pmf `C(n,k) p^k (1-p)^(n-k)`, in log space once `n` exceeds
/// [`EXACT_BINOMIAL_MAX`].
pub fn pmf_binomial(n: u64, p: f64, k: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", format!("must lie in [0, 1], got {p}")));
    }
    if k > n {
        return Err(Error::param("k", format!("k = {k} exceeds n = {n}")));
    }
    if p == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if p == 1.0 {
        return Ok(if k == n { 1.0 } else { 0.0 });
    }
    if n <= EXACT_BINOMIAL_MAX {
        return Ok(binomial_coefficient_exact(n, k)
            * p.powi(k as i32)
            * (1.0 - p).powi((n - k) as i32));
    }
    let ln_pmf = ln_binomial_coefficient(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p();
    Ok(ln_pmf.exp())
}

/// Poisson pmf `e^-λ λ^k / k!`.
pub fn pmf_poisson(lambda: f64, k: u64) -> Result<f64> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::param(
            "lambda",
            format!("must be finite and non-negative, got {lambda}"),
        ));
    }
    if lambda == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    if k <= 30 {
        let mut term = (-lambda).exp();
        for i in 1..=k {
            term *= lambda / i as f64;
        }
        return Ok(term);
    }
    Ok((k as f64 * lambda.ln() - lambda - ln_gamma(k as f64 + 1.0)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vacuum_moments() {
        let m = PhotonNumberDistribution::exact(0, vec![1.0])
            .unwrap()
            .moments();
        assert_eq!(m.mean, 0.0);
        assert_eq!(m.variance, 0.0);
    }

    #[test]
    fn gaussian_moments_are_stored_fields() {
        let g = PhotonNumberDistribution::gaussian(1.914e7, 1.063e11).unwrap();
        let m = g.moments();
        assert_eq!(m.mean, 1.914e7);
        assert_eq!(m.variance, 1.063e11);
    }

    #[test]
    fn truncated_poisson_moments() {
        let p = PhotonNumberDistribution::poisson_truncated(2.0, 30).unwrap();
        let m = p.moments();
        assert!((m.mean - 2.0).abs() < 1e-6);
        assert!((m.variance - 2.0).abs() < 1e-6);
    }

    #[test]
    fn offset_table_moments() {
        let d = PhotoelectronDistribution::exact(1_000_000, vec![0.5, 0.0, 0.5]).unwrap();
        let m = d.moments();
        assert_eq!(m.mean, 1_000_001.0);
        assert_eq!(m.variance, 1.0);
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(PhotonNumberDistribution::exact(0, vec![]).is_err());
        assert!(PhotonNumberDistribution::exact(0, vec![0.5, 0.4]).is_err());
        assert!(PhotonNumberDistribution::exact(0, vec![1.1, -0.1]).is_err());
        assert!(PhotonNumberDistribution::exact(0, vec![f64::NAN]).is_err());
        assert!(PhotonNumberDistribution::exact(0, vec![0.5, 0.5 + 5e-10]).is_ok());
    }

    #[test]
    fn rejects_gaussian_with_mass_below_zero() {
        assert!(PhotonNumberDistribution::gaussian(10.0, 1.0).is_ok());
        // 3 sigma above zero leaves ~1.3e-3 below
        assert!(PhotonNumberDistribution::gaussian(3.0, 1.0).is_err());
        assert!(PhotonNumberDistribution::gaussian(-1.0, 1.0).is_err());
        assert!(PhotonNumberDistribution::gaussian(10.0, 0.0).is_err());
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        // -0.021 log2 0.021 - 0.979 log2 0.979
        assert_relative_eq!(
            binary_entropy(0.021).unwrap(),
            0.147_019_035,
            max_relative = 1e-8
        );
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.5).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn entropy_is_symmetric() {
        for i in 0..100 {
            let x = i as f64 / 99.0;
            let a = binary_entropy(x).unwrap();
            let b = binary_entropy(1.0 - x).unwrap();
            assert!((a - b).abs() < 1e-12, "x = {x}: {a} vs {b}");
        }
    }

    #[test]
    fn pmf_examples() {
        assert_relative_eq!(pmf_binomial(1, 0.76, 1).unwrap(), 0.76);
        assert_relative_eq!(pmf_poisson(0.48, 0).unwrap(), (-0.48f64).exp());
        assert_relative_eq!(pmf_poisson(0.48, 0).unwrap(), 0.6188, max_relative = 1e-4);
        let b = pmf_binomial(10_000_000, 4.8e-8, 1).unwrap();
        let p = pmf_poisson(0.48, 1).unwrap();
        assert!(((b - p) / p).abs() < 1e-7, "{b} vs {p}");
    }

    #[test]
    fn pmf_domain_errors() {
        assert!(pmf_binomial(5, 1.2, 1).is_err());
        assert!(pmf_binomial(5, 0.5, 6).is_err());
        assert!(pmf_poisson(-1.0, 0).is_err());
        assert_eq!(pmf_binomial(5, 0.0, 0).unwrap(), 1.0);
        assert_eq!(pmf_binomial(5, 1.0, 5).unwrap(), 1.0);
        assert_eq!(pmf_binomial(5, 1.0, 4).unwrap(), 0.0);
    }

    #[test]
    fn binomial_pmf_sums_to_one() {
        for n in 0..=60u64 {
            for &p in &[0.01, 0.3, 0.5, 0.76, 0.99] {
                let s = crate::summation::compensated_sum(
                    (0..=n).map(|k| pmf_binomial(n, p, k).unwrap()),
                );
                assert!((s - 1.0).abs() < 1e-10, "n={n} p={p} sum={s}");
            }
        }
    }

    #[test]
    fn log_space_binomial_matches_exact_path() {
        // n = 61 goes through log space; compare with the exact recurrence
        let n = 61u64;
        let p = 0.3f64;
        let mut c = 1.0f64;
        for k in 0..=n {
            if k > 0 {
                c = c * (n - k + 1) as f64 / k as f64;
            }
            let direct = c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
            let logged = pmf_binomial(n, p, k).unwrap();
            assert_relative_eq!(direct, logged, max_relative = 1e-11);
        }
    }

    #[test]
    fn large_poisson_pmf_is_finite() {
        let s: f64 = (0..400).map(|k| pmf_poisson(150.0, k).unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }
}
