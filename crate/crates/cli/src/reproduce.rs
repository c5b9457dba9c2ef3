//! Recomputes the published figures from the embedded experimental
//! parameters and compares them with the reported values.

use std::fmt::Write as _;

use photon_monitor::bernoulli::{inverse_moments, TransformEfficiency};
use photon_monitor::decoy::{
    key_rate, trusted_bounds, untrusted_bounds, Mode, ProtocolParams, SinglePhotonBounds,
};
use photon_monitor::experiment::{self, reported};
use photon_monitor::monitor::{derive_interval, fit_source_gaussian, StateKind};
use photon_monitor::Result;

/// Interval half-width, in standard deviations, behind the reported range.
pub const K_SIGMA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Relative(f64),
    Range(f64, f64),
    Above(f64),
}

impl Tolerance {
    fn accepts(self, reference: f64, value: f64) -> bool {
        match self {
            Tolerance::Relative(tol) => ((value - reference) / reference).abs() <= tol,
            Tolerance::Range(lo, hi) => (lo..=hi).contains(&value),
            Tolerance::Above(x) => value > x,
        }
    }

    fn describe(self) -> String {
        match self {
            Tolerance::Relative(tol) => format!("±{}%", tol * 100.0),
            Tolerance::Range(lo, hi) => format!("[{lo:e}, {hi:e}]"),
            Tolerance::Above(x) => format!("> {x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproductionRow {
    pub quantity: &'static str,
    pub reported: f64,
    /// `Err` holds the error text when the computation failed.
    pub computed: std::result::Result<f64, String>,
    pub tolerance: Tolerance,
    pub pass: bool,
}

impl ReproductionRow {
    fn new(
        quantity: &'static str,
        reported: f64,
        computed: Result<f64>,
        tolerance: Tolerance,
    ) -> Self {
        let computed = computed.map_err(|e| format!("{}: {e}", e.name()));
        let pass = matches!(computed, Ok(v) if v.is_finite() && tolerance.accepts(reported, v));
        Self {
            quantity,
            reported,
            computed,
            tolerance,
            pass,
        }
    }

    pub fn relative_deviation(&self) -> Option<f64> {
        self.computed
            .as_ref()
            .ok()
            .map(|v| (v - self.reported) / self.reported)
    }
}

/// Runs the full comparison. `xi_override` replaces the monitor efficiency
/// t_bs·t_D.
pub fn reproduce_paper(xi_override: Option<f64>) -> Vec<ReproductionRow> {
    let setup = experiment::source_setup();
    let xi = xi_override.unwrap_or(experiment::T_BS * experiment::T_D);
    let eff = TransformEfficiency::new(xi);
    let params = experiment::protocol_params();
    let rates = experiment::measured_rates();

    let n = eff
        .clone()
        .and_then(|eff| inverse_moments(experiment::photoelectron_moments(), eff));
    let interval = eff
        .and_then(|eff| fit_source_gaussian(experiment::photoelectron_moments(), eff))
        .and_then(|fit| derive_interval(&fit, K_SIGMA));

    let quoted_bounds = SinglePhotonBounds {
        q1_lower: reported::Q1_LOWER,
        e1_upper: reported::E1_UPPER,
        clamped: false,
    };
    let quoted_rate = key_rate(&params, &rates, &quoted_bounds, Mode::Untrusted);

    let trusted = trusted_bounds(&rates, experiment::MU, experiment::NU)
        .and_then(|b| key_rate(&params, &rates, &b, Mode::Trusted));

    let untrusted = interval.clone().and_then(|i| {
        let b = untrusted_bounds(&rates, &i, &setup)?;
        let p = ProtocolParams {
            epsilon: i.epsilon,
            ..params
        };
        key_rate(&p, &rates, &b, Mode::Untrusted)
    });

    let mean = n.clone().map(|m| m.mean);
    vec![
        ReproductionRow::new(
            "xi (recoverable)",
            experiment::XI,
            Ok(xi),
            Tolerance::Above(0.5),
        ),
        ReproductionRow::new(
            "<N>",
            reported::SOURCE_MEAN,
            mean.clone(),
            Tolerance::Relative(1e-3),
        ),
        ReproductionRow::new(
            "<dN^2>",
            reported::SOURCE_VARIANCE,
            n.map(|m| m.variance),
            Tolerance::Relative(1e-3),
        ),
        ReproductionRow::new(
            "N_min",
            reported::N_MIN,
            interval.clone().map(|i| i.n_min),
            Tolerance::Relative(5e-3),
        ),
        ReproductionRow::new(
            "N_max",
            reported::N_MAX,
            interval.clone().map(|i| i.n_max),
            Tolerance::Relative(5e-3),
        ),
        ReproductionRow::new(
            "epsilon",
            reported::EPSILON,
            interval.map(|i| i.epsilon),
            Tolerance::Range(5.0e-7, 6.5e-7),
        ),
        // η′ is quoted to two significant figures, so the products carry ~2%
        ReproductionRow::new(
            "mu = <N> eta'_s",
            experiment::MU,
            mean.clone().map(|m| m * setup.eta_prime(StateKind::Signal)),
            Tolerance::Relative(0.02),
        ),
        ReproductionRow::new(
            "nu = <N> eta'_d",
            experiment::NU,
            mean.map(|m| m * setup.eta_prime(StateKind::Decoy)),
            Tolerance::Relative(0.02),
        ),
        ReproductionRow::new(
            "R at quoted Q1, e1 [bit/s]",
            reported::KEY_RATE_UNTRUSTED,
            quoted_rate.map(|r| r.r_bits_per_s),
            Tolerance::Relative(0.02),
        ),
        ReproductionRow::new(
            "R trusted [bit/s]",
            reported::KEY_RATE_TRUSTED,
            trusted.map(|r| r.r_bits_per_s),
            Tolerance::Relative(0.05),
        ),
        ReproductionRow::new(
            "Q1 lower (untrusted)",
            reported::Q1_LOWER,
            untrusted.clone().map(|r| r.bounds.q1_lower),
            Tolerance::Relative(0.10),
        ),
        ReproductionRow::new(
            "e1 upper (untrusted)",
            reported::E1_UPPER,
            untrusted.clone().map(|r| r.bounds.e1_upper),
            Tolerance::Relative(0.10),
        ),
        ReproductionRow::new(
            "R untrusted [bit/s]",
            reported::KEY_RATE_UNTRUSTED,
            untrusted.map(|r| r.r_bits_per_s),
            Tolerance::Range(45.0, 60.0),
        ),
    ]
}

/// Plain-text table, one row per quantity, followed by a summary line.
pub fn render(rows: &[ReproductionRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:>14} {:>24} {:>12} {:>22}  result",
        "quantity", "reported", "computed", "rel.dev", "tolerance"
    );
    for r in rows {
        let computed = match &r.computed {
            Ok(v) => format!("{v:e}"),
            Err(_) => "error".to_string(),
        };
        let dev = r
            .relative_deviation()
            .map_or_else(|| "-".to_string(), |d| format!("{:+.3}%", d * 100.0));
        let _ = writeln!(
            out,
            "{:<28} {:>14} {:>24} {:>12} {:>22}  {}",
            r.quantity,
            format!("{:e}", r.reported),
            computed,
            dev,
            r.tolerance.describe(),
            if r.pass { "PASS" } else { "FAIL" }
        );
        if let Err(msg) = &r.computed {
            let _ = writeln!(out, "    {msg}");
        }
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    let _ = writeln!(out, "{} of {} rows pass", rows.len() - failed, rows.len());
    out
}
