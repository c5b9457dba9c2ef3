use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use photon_monitor::bernoulli::{inverse_bernoulli_exact, inverse_moments, TransformEfficiency};
use photon_monitor::channel::{simulate_rates, EmittedState};
use photon_monitor::decoy::{key_rate, trusted_bounds, untrusted_bounds, Mode, ProtocolParams};
use photon_monitor::monitor::{
    derive_interval, distribution_at_p5, estimate_distribution, fit_source_gaussian, read_records,
    simulate_monitor, simulate_monitor_with_noise, subtract_noise, write_records,
    ConfidenceInterval, Histogram, MonitorRecord, StateKind,
};
use photon_monitor::stats::Moments;
use photon_monitor::Error;

use crate::{CliError, RunConfig};

pub const RECORDS_FILE: &str = "monitor_records.txt";
pub const HISTOGRAM_FILE: &str = "histogram.txt";
pub const REPORT_FILE: &str = "key_rate_report.txt";
pub const RECOVERED_FILE: &str = "recovered_distribution.txt";
pub const RECOVERED_MOMENTS_FILE: &str = "recovered_moments.txt";

pub(crate) fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::Io(e.to_string()))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

/// Reads a record file and converts voltages to photoelectron counts.
fn load_counts(cfg: &RunConfig, path: &Path) -> Result<Vec<MonitorRecord>, CliError> {
    let records = read_records(open(path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    match cfg.electronics()? {
        Some((noise, gain)) => Ok(subtract_noise(&records, &noise, gain)?),
        None => Ok(records),
    }
}

pub fn simulate(cfg: &RunConfig, out_dir: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let setup = cfg.source_setup()?;
    let source = cfg.source()?;
    let pulses: u64 = cfg.require("pulse_count")?;
    if pulses == 0 {
        return Err(CliError::Config("`pulse_count` must be at least 1".into()));
    }
    let seed: u64 = cfg.require("seed")?;

    let electronics = cfg.electronics()?;
    let records = match &electronics {
        Some((noise, gain)) => {
            simulate_monitor_with_noise(&source, &setup, pulses, seed, noise, *gain)?
        }
        None => simulate_monitor(&source, &setup, pulses, seed)?,
    };
    let counts = match &electronics {
        Some((noise, gain)) => subtract_noise(&records, noise, *gain)?,
        None => records.clone(),
    };
    let estimate = estimate_distribution(&counts)?;

    let mut buf = Vec::new();
    write_records(&mut buf, &records).map_err(|e| CliError::Io(e.to_string()))?;
    let records_path = write_file(out_dir, RECORDS_FILE, &buf)?;
    buf.clear();
    estimate
        .histogram
        .write_to(&mut buf)
        .map_err(|e| CliError::Io(e.to_string()))?;
    let hist_path = write_file(out_dir, HISTOGRAM_FILE, &buf)?;

    emit(
        stdout,
        &format!(
            "pulses = {pulses}\nseed = {seed}\nm_mean = {}\nm_variance = {}\nbin_width = {}\nrecords = {}\nhistogram = {}\n",
            estimate.moments.mean,
            estimate.moments.variance,
            estimate.histogram.bin_width,
            records_path.display(),
            hist_path.display(),
        ),
    )
}

#[derive(Debug, Clone)]
pub enum AnalyzeInput {
    /// `m_mean` and `m_variance` from the config.
    Moments,
    Records(PathBuf),
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub input: AnalyzeInput,
    /// Overrides the config `mode`.
    pub mode: Option<Mode>,
    pub degenerate_interval: bool,
}

pub fn analyze(
    cfg: &RunConfig,
    opts: &AnalyzeOptions,
    out_dir: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let setup = cfg.source_setup()?;
    let mode = match opts.mode {
        Some(m) => m,
        None => cfg.mode()?,
    };
    let k_sigma: f64 = cfg.require("k_sigma")?;
    let m_moments = match &opts.input {
        AnalyzeInput::Moments => cfg.photoelectron_moments()?,
        AnalyzeInput::Records(path) => estimate_distribution(&load_counts(cfg, path)?)?.moments,
    };

    let fit = fit_source_gaussian(m_moments, setup.xi())?;
    let n_mean = fit.mean();
    let mu = cfg
        .get::<f64>("mu")?
        .unwrap_or(n_mean * setup.eta_prime(StateKind::Signal));
    let nu = cfg
        .get::<f64>("nu")?
        .unwrap_or(n_mean * setup.eta_prime(StateKind::Decoy));

    let rates = match cfg.measured_rates()? {
        Some(r) => r,
        None => {
            let channel = cfg.channel()?;
            let signal =
                EmittedState::Distribution(distribution_at_p5(&fit, &setup, StateKind::Signal)?);
            let decoy =
                EmittedState::Distribution(distribution_at_p5(&fit, &setup, StateKind::Decoy)?);
            simulate_rates(
                &signal,
                &decoy,
                &EmittedState::Poisson { mean: 0.0 },
                &channel,
            )?
        }
    };

    let interval = match mode {
        Mode::Trusted => None,
        Mode::Untrusted if opts.degenerate_interval => Some(ConfidenceInterval::point(n_mean)?),
        Mode::Untrusted => Some(derive_interval(&fit, k_sigma)?),
    };

    let params = ProtocolParams {
        mu,
        nu,
        n_mu: cfg.require("n_mu")?,
        n_nu: cfg.require("n_nu")?,
        n_0: cfg.require("n_0")?,
        burst_rate: setup.burst_rate(),
        f_ec: cfg.require("f_ec")?,
        epsilon: interval.map_or(0.0, |i| i.epsilon),
    };
    params.validate().map_err(CliError::invalid_config)?;

    let bounds = match &interval {
        Some(i) => untrusted_bounds(&rates, i, &setup)?,
        None => trusted_bounds(&rates, mu, nu)?,
    };
    let mut report = key_rate(&params, &rates, &bounds, mode)?;
    if let Some(i) = interval {
        report = report.with_interval(i);
    }
    let path = write_file(out_dir, REPORT_FILE, report.to_key_value().as_bytes())?;

    let n = fit.moments();
    emit(
        stdout,
        &format!(
            "R = {} bit/s\nmode = {mode}\nN_mean = {}\nN_variance = {}\nQ1_lower = {}\ne1_upper = {}\nreport = {}\n",
            report.r_bits_per_s,
            n.mean,
            n.variance,
            report.bounds.q1_lower,
            report.bounds.e1_upper,
            path.display(),
        ),
    )
}

/// Pointwise inversion for unit-width histograms, moment inversion otherwise.
pub fn invert(
    cfg: &RunConfig,
    histogram: &Path,
    xi: Option<f64>,
    out_dir: &Path,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let xi = match xi.or(cfg.get::<f64>("xi")?) {
        Some(x) => x,
        None => cfg.require::<f64>("t_bs")? * cfg.require::<f64>("t_d")?,
    };
    let eff = TransformEfficiency::new(xi).map_err(CliError::invalid_config)?;
    let hist = Histogram::read_from(open(histogram)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", histogram.display())))?;

    let Some(measured) = hist.to_distribution() else {
        let n = inverse_moments(hist.moments(), eff)?;
        let text = moments_text(n);
        let path = write_file(out_dir, RECOVERED_MOMENTS_FILE, text.as_bytes())?;
        return emit(
            stdout,
            &format!(
                "method = moments\nxi = {xi}\n{text}output = {}\n",
                path.display()
            ),
        );
    };

    match inverse_bernoulli_exact(&measured, eff) {
        Ok((dist, diag)) => {
            let (offset, probs) = dist.table().expect("pointwise inversion yields a table");
            let recovered =
                Histogram::new(offset, 1, probs.to_vec()).map_err(CliError::Numerical)?;
            let mut buf = Vec::new();
            recovered
                .write_to(&mut buf)
                .map_err(|e| CliError::Io(e.to_string()))?;
            let path = write_file(out_dir, RECOVERED_FILE, &buf)?;
            emit(
                stdout,
                &format!(
                    "method = exact\nxi = {xi}\nrecoverable = {}\nmax_negative_excursion = {}\nlargest_term_magnitude = {}\n{}output = {}\n",
                    diag.recoverable,
                    diag.max_negative_excursion,
                    diag.largest_term_magnitude,
                    moments_text(dist.moments()),
                    path.display(),
                ),
            )
        }
        Err(Error::InversionUnstable(diag)) => {
            emit(
                stdout,
                &format!(
                    "method = exact\nxi = {xi}\nrecoverable = {}\nmax_negative_excursion = {}\nlargest_term_magnitude = {}\n",
                    diag.recoverable, diag.max_negative_excursion, diag.largest_term_magnitude,
                ),
            )?;
            Err(CliError::Numerical(Error::InversionUnstable(diag)))
        }
        Err(e) => Err(e.into()),
    }
}

fn moments_text(n: Moments) -> String {
    format!("mean = {}\nvariance = {}\n", n.mean, n.variance)
}
