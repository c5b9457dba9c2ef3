use crate::bernoulli::InversionDiagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error(
        "inverse Bernoulli transform unstable: most negative recovered probability {:.3e}",
        .0.max_negative_excursion
    )]
    InversionUnstable(Box<InversionDiagnostics>),

    #[error("recovered photon-number variance is negative ({variance:.6e}); measured variance is below the binomial floor")]
    NegativeVarianceRecovered { variance: f64 },

    #[error("single-photon yield bound is vacuous (Y1 >= {y1_lower:.6e})")]
    BoundVacuous { y1_lower: f64 },

    #[error("insufficient data: {records} record(s), at least 2 required")]
    InsufficientData { records: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    /// Stable variant name, used on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::InvalidDistribution(_) => "InvalidDistribution",
            Error::InversionUnstable(_) => "InversionUnstable",
            Error::NegativeVarianceRecovered { .. } => "NegativeVarianceRecovered",
            Error::BoundVacuous { .. } => "BoundVacuous",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::Parse { .. } => "Parse",
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
