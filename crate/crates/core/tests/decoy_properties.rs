use photon_monitor::decoy::{
    key_rate, trusted_bounds, untrusted_bounds, MeasuredRates, Mode, ProtocolParams,
};
use photon_monitor::experiment;
use photon_monitor::monitor::{derive_interval, ConfidenceInterval, StateKind};
use photon_monitor::stats::PhotonNumberDistribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Point {
    rates: MeasuredRates,
    source: PhotonNumberDistribution,
}

/// Measured rates perturbed by up to ±10% and a source mean within ±20% of
/// the experiment's, with 0.5–3% relative photon-number spread.
fn random_point(rng: &mut ChaCha8Rng) -> Point {
    let base = experiment::measured_rates();
    let mut jitter = |x: f64| x * rng.random_range(0.9..1.1);
    let rates = MeasuredRates {
        q_s: jitter(base.q_s),
        q_d: jitter(base.q_d),
        q_0: jitter(base.q_0),
        e_s: jitter(base.e_s),
        e_0: base.e_0,
        e_d: None,
    };
    let mean = experiment::reported::SOURCE_MEAN * rng.random_range(0.8..1.2);
    let rel_sd = rng.random_range(0.005..0.03);
    let source = PhotonNumberDistribution::gaussian(mean, (rel_sd * mean).powi(2)).unwrap();
    Point { rates, source }
}

fn params_with(eps: f64) -> ProtocolParams {
    ProtocolParams {
        epsilon: eps,
        ..experiment::protocol_params()
    }
}

#[test]
fn degenerate_interval_equals_trusted() {
    let cfg = experiment::source_setup();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let p = random_point(&mut rng);
        let n = p.source.mean();
        let u = untrusted_bounds(&p.rates, &ConfidenceInterval::point(n).unwrap(), &cfg).unwrap();
        let t = trusted_bounds(
            &p.rates,
            n * cfg.eta_prime(StateKind::Signal),
            n * cfg.eta_prime(StateKind::Decoy),
        )
        .unwrap();
        assert!(((u.q1_lower - t.q1_lower) / t.q1_lower).abs() <= 1e-9);
        assert!(((u.e1_upper - t.e1_upper) / t.e1_upper).abs() <= 1e-9);
    }
}

#[test]
fn untrusted_never_beats_trusted_and_wider_is_worse() {
    let cfg = experiment::source_setup();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let p = random_point(&mut rng);
        let n = p.source.mean();
        let trusted = trusted_bounds(
            &p.rates,
            n * cfg.eta_prime(StateKind::Signal),
            n * cfg.eta_prime(StateKind::Decoy),
        )
        .unwrap();
        let r_trusted = key_rate(&params_with(0.0), &p.rates, &trusted, Mode::Trusted)
            .unwrap()
            .r_raw;

        // ε shrinks as k grows, so widening is compared at a fixed ε
        let fixed_eps = params_with(5.7e-7);
        let mut prev = f64::INFINITY;
        for k in [0.5, 1.0, 2.0, 3.0, 5.0] {
            let ci = derive_interval(&p.source, k).unwrap();
            let b = untrusted_bounds(&p.rates, &ci, &cfg).unwrap();
            assert!(b.q1_lower <= trusted.q1_lower * (1.0 + 1e-12));
            assert!(b.e1_upper >= trusted.e1_upper * (1.0 - 1e-12));
            let r = key_rate(&params_with(ci.epsilon), &p.rates, &b, Mode::Untrusted)
                .unwrap()
                .r_raw;
            assert!(r <= r_trusted, "k={k}: untrusted {r} > trusted {r_trusted}");
            let r_fixed = key_rate(&fixed_eps, &p.rates, &b, Mode::Untrusted)
                .unwrap()
                .r_raw;
            assert!(
                r_fixed <= prev,
                "k={k}: widening raised R from {prev} to {r_fixed}"
            );
            prev = r_fixed;
        }
    }
}

#[test]
fn q1_never_exceeds_signal_gain() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let mu = rng.random_range(0.1..1.0);
        let nu = mu * rng.random_range(0.05..0.9);
        let rates = MeasuredRates {
            q_s: rng.random_range(1e-4..1e-1),
            q_d: rng.random_range(1e-5..1e-1),
            q_0: rng.random_range(0.0..1e-3),
            e_s: rng.random_range(0.0..0.2),
            e_0: 0.5,
            e_d: None,
        };
        if let Ok(b) = trusted_bounds(&rates, mu, nu) {
            assert!(b.q1_lower >= 0.0 && b.q1_lower <= rates.q_s);
            assert!((0.0..=1.0).contains(&b.e1_upper));
        }
    }
}
