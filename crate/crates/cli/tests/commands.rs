use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use photon_monitor::bernoulli::{forward_bernoulli, TransformEfficiency};
use photon_monitor::decoy::KeyRateReport;
use photon_monitor::monitor::Histogram;
use photon_monitor::stats::PhotonNumberDistribution;
use tempfile::TempDir;

const EXPERIMENT_CONF: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/experiment.conf");

fn photon_monitor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_photon-monitor"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_field(out: &Output, key: &str) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout);
    text.lines()
        .find_map(|l| {
            l.strip_prefix(key)?
                .trim_start()
                .strip_prefix('=')?
                .split_whitespace()
                .next()
        })
        .unwrap_or_else(|| panic!("`{key}` missing from output:\n{text}"))
        .parse()
        .unwrap()
}

fn write_config(dir: &Path, extra: &str, drop: &[&str]) -> PathBuf {
    let base = fs::read_to_string(EXPERIMENT_CONF).unwrap();
    let mut text: String = base
        .lines()
        .filter(|l| {
            !drop
                .iter()
                .any(|k| l.split('=').next().map(str::trim) == Some(*k))
        })
        .map(|l| format!("{l}\n"))
        .collect();
    text.push_str(extra);
    let path = dir.join("run.conf");
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn zero_pulses_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let conf = write_config(dir.path(), "pulse_count = 0\n", &[]);
    let out = photon_monitor(&["--config", s(&conf), "--out", s(dir.path()), "simulate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_and_unknown_keys_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let conf = write_config(dir.path(), "", &["t_bs"]);
    let out = photon_monitor(&["--config", s(&conf), "analyze", "--moments"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_bs"));

    let conf = write_config(dir.path(), "colour = blue\n", &[]);
    let out = photon_monitor(&["--config", s(&conf), "analyze", "--moments"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn vacuum_source_gives_delta_at_zero() {
    let dir = TempDir::new().unwrap();
    let conf = write_config(
        dir.path(),
        "source = vacuum\npulse_count = 1000\n",
        &["source"],
    );
    let out = photon_monitor(&["--config", s(&conf), "--out", s(dir.path()), "simulate"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let hist = fs::read_to_string(dir.path().join("histogram.txt")).unwrap();
    assert_eq!(hist, "# bin_center probability\n0 1\n");
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let conf = write_config(dir.path(), "pulse_count = 40000\n", &[]);
    let run = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = photon_monitor(&[
            "--config",
            s(&conf),
            "--seed",
            seed,
            "--out",
            s(&out_dir),
            "simulate",
        ]);
        assert_eq!(out.status.code(), Some(0));
        (
            fs::read(out_dir.join("monitor_records.txt")).unwrap(),
            fs::read(out_dir.join("histogram.txt")).unwrap(),
        )
    };
    let a = run("a", "11");
    let b = run("b", "11");
    let c = run("c", "12");
    assert!(a == b, "same seed produced different output");
    assert!(a.0 != c.0);
}

#[test]
fn simulate_then_analyze_recovers_source() {
    let dir = TempDir::new().unwrap();
    let conf = write_config(dir.path(), "pulse_count = 100000\nseed = 5\n", &[]);
    let out = photon_monitor(&["--config", s(&conf), "--out", s(dir.path()), "simulate"]);
    assert_eq!(out.status.code(), Some(0));
    let records = dir.path().join("monitor_records.txt");
    let out = photon_monitor(&[
        "--config",
        s(&conf),
        "--out",
        s(dir.path()),
        "analyze",
        "--records",
        s(&records),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let (xi, n, mean, var): (f64, f64, f64, f64) = (0.76, 1e5, 1.914e7, 1.063e11);
    let m_var = xi * (1.0 - xi) * mean + xi * xi * var;
    let se_mean = (m_var / n).sqrt() / xi;
    let se_var = m_var * (2.0 / n).sqrt() / (xi * xi);
    let got_mean = stdout_field(&out, "N_mean");
    let got_var = stdout_field(&out, "N_variance");
    assert!((got_mean - mean).abs() < 3.0 * se_mean, "mean {got_mean}");
    assert!((got_var - var).abs() < 3.0 * se_var, "variance {got_var}");
    let r = stdout_field(&out, "R");
    assert!((45.0..=60.0).contains(&r), "R = {r}");
}

#[test]
fn voltage_records_round_trip() {
    let dir = TempDir::new().unwrap();
    let extra = "pulse_count = 50000\ngain_v_per_pe = 1e-7\nnoise_offset_mean = 0.002\nnoise_offset_std = 5e-5\n";
    let conf = write_config(dir.path(), extra, &[]);
    let out = photon_monitor(&["--config", s(&conf), "--out", s(dir.path()), "simulate"]);
    assert_eq!(out.status.code(), Some(0));
    let records = fs::read_to_string(dir.path().join("monitor_records.txt")).unwrap();
    assert!(records.starts_with("#format=volts\n"));
    let out = photon_monitor(&[
        "--config",
        s(&conf),
        "--out",
        s(dir.path()),
        "analyze",
        "--records",
        s(&dir.path().join("monitor_records.txt")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(rel(stdout_field(&out, "N_mean"), 1.914e7) < 1e-3);
}

#[test]
fn moments_path_reproduces_key_rates() {
    let dir = TempDir::new().unwrap();
    let out = photon_monitor(&[
        "--config",
        EXPERIMENT_CONF,
        "--out",
        s(dir.path()),
        "analyze",
        "--moments",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_field(&out, "R");
    assert!((45.0..=60.0).contains(&r), "untrusted R = {r}");
    let report = KeyRateReport::from_key_value(
        &fs::read_to_string(dir.path().join("key_rate_report.txt")).unwrap(),
    )
    .unwrap();
    assert_eq!(report.r_bits_per_s, r);
    let interval = report
        .interval
        .expect("untrusted report carries the interval");
    assert!(rel(interval.n_min, 1.751e7) < 5e-3 && rel(interval.n_max, 2.077e7) < 5e-3);

    let out = photon_monitor(&[
        "--config",
        EXPERIMENT_CONF,
        "--out",
        s(dir.path()),
        "analyze",
        "--moments",
        "--mode",
        "trusted",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_field(&out, "R");
    assert!(rel(r, 78.0) < 0.05, "trusted R = {r}");
}

#[test]
fn variance_below_binomial_floor_exits_3() {
    let dir = TempDir::new().unwrap();
    let conf = write_config(dir.path(), "m_variance = 1e6\n", &["m_variance"]);
    let out = photon_monitor(&[
        "--config",
        s(&conf),
        "--out",
        s(dir.path()),
        "analyze",
        "--moments",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NegativeVarianceRecovered"));
}

#[test]
fn degenerate_interval_matches_trusted() {
    let dir = TempDir::new().unwrap();
    // intensities follow from the fitted source so both modes see the same point
    let conf = write_config(dir.path(), "", &["mu", "nu"]);
    let run = |mode: &str, extra: &[&str]| {
        let mut args = vec![
            "--config",
            s(&conf),
            "--out",
            s(dir.path()),
            "analyze",
            "--moments",
            "--mode",
            mode,
        ];
        args.extend_from_slice(extra);
        let out = photon_monitor(&args);
        assert_eq!(out.status.code(), Some(0));
        ["R", "Q1_lower", "e1_upper"].map(|k| stdout_field(&out, k))
    };
    let untrusted = run("untrusted", &["--degenerate-interval"]);
    let trusted = run("trusted", &[]);
    for (u, t) in untrusted.iter().zip(&trusted) {
        assert!(rel(*u, *t) < 1e-9, "{untrusted:?} vs {trusted:?}");
    }
}

fn write_histogram(
    dir: &Path,
    name: &str,
    dist: &PhotonNumberDistribution,
    xi: f64,
    quantum: Option<f64>,
) -> PathBuf {
    let measured = forward_bernoulli(dist, TransformEfficiency::new(xi).unwrap());
    let (offset, probs) = measured.table().unwrap();
    let probs = probs
        .iter()
        .map(|p| quantum.map_or(*p, |q| (p / q).round() * q))
        .collect();
    let hist = Histogram::new(offset, 1, probs).unwrap();
    let path = dir.join(name);
    let mut buf = Vec::new();
    hist.write_to(&mut buf).unwrap();
    fs::write(&path, buf).unwrap();
    path
}

fn read_recovered(dir: &Path) -> Histogram {
    let file = fs::File::open(dir.join("recovered_distribution.txt")).unwrap();
    Histogram::read_from(std::io::BufReader::new(file)).unwrap()
}

#[test]
fn invert_recovers_poisson() {
    let dir = TempDir::new().unwrap();
    let poisson = PhotonNumberDistribution::poisson(2.0, 1e-15).unwrap();
    let hist = write_histogram(dir.path(), "poisson.txt", &poisson, 0.76, None);
    let out = photon_monitor(&[
        "--out",
        s(dir.path()),
        "invert",
        "--histogram",
        s(&hist),
        "--xi",
        "0.76",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let recovered = read_recovered(dir.path());
    assert_eq!(recovered.start, 0);
    for (n, p) in recovered.probabilities.iter().enumerate() {
        let expected = poisson.probability(n as u64).unwrap_or(0.0);
        assert!(
            (p - expected).abs() < 1e-6,
            "P({n}) = {p}, expected {expected}"
        );
    }
}

#[test]
fn invert_vacuum_is_identity() {
    let dir = TempDir::new().unwrap();
    let hist = write_histogram(
        dir.path(),
        "vac.txt",
        &PhotonNumberDistribution::delta(0),
        0.76,
        None,
    );
    let out = photon_monitor(&[
        "--out",
        s(dir.path()),
        "invert",
        "--histogram",
        s(&hist),
        "--xi",
        "0.76",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let recovered = read_recovered(dir.path());
    assert_eq!(
        (recovered.start, recovered.probabilities.as_slice()),
        (0, &[1.0][..])
    );
}

#[test]
fn invert_low_efficiency_noisy_input_exits_3() {
    let dir = TempDir::new().unwrap();
    let uniform = PhotonNumberDistribution::from_weights(0, vec![1.0; 11]).unwrap();
    let hist = write_histogram(dir.path(), "noisy.txt", &uniform, 0.4, Some(1e-6));
    let out = photon_monitor(&[
        "--out",
        s(dir.path()),
        "invert",
        "--histogram",
        s(&hist),
        "--xi",
        "0.4",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("InversionUnstable"));
    assert!(stdout_field(&out, "max_negative_excursion") < -1e-8);
}

#[test]
fn invert_wide_bins_falls_back_to_moments() {
    let dir = TempDir::new().unwrap();
    let conf = write_config(dir.path(), "pulse_count = 20000\n", &[]);
    let out = photon_monitor(&["--config", s(&conf), "--out", s(dir.path()), "simulate"]);
    assert_eq!(out.status.code(), Some(0));
    let out = photon_monitor(&[
        "--config",
        s(&conf),
        "--out",
        s(dir.path()),
        "invert",
        "--histogram",
        s(&dir.path().join("histogram.txt")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("method = moments"));
    assert!(rel(stdout_field(&out, "mean"), 1.914e7) < 2e-3);
}

#[test]
fn reproduction_with_low_efficiency_fails() {
    let out = photon_monitor(&["reproduce-paper", "--xi", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    let table = String::from_utf8_lossy(&out.stdout);
    let row = table
        .lines()
        .find(|l| l.starts_with("xi (recoverable)"))
        .unwrap();
    assert!(row.ends_with("FAIL"), "{row}");
}

#[test]
fn reproduction_report_written_on_request() {
    let dir = TempDir::new().unwrap();
    let out = photon_monitor(&["reproduce-paper", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let file = fs::read(dir.path().join("reproduction_report.txt")).unwrap();
    assert_eq!(file, out.stdout);
}
