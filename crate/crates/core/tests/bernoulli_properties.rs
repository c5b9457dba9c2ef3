use photon_monitor::bernoulli::{
    forward_bernoulli, forward_moments, inverse_bernoulli_exact, inverse_moments, thin,
    TransformEfficiency,
};
use photon_monitor::stats::{Moments, PhotonNumberDistribution};
use proptest::prelude::*;

fn eff(x: f64) -> TransformEfficiency {
    TransformEfficiency::new(x).unwrap()
}

/// Random simplex on 0..=support.
fn table_strategy(max_support: usize) -> impl Strategy<Value = PhotonNumberDistribution> {
    prop::collection::vec(0.0f64..1.0, 1..=max_support + 1)
        .prop_filter_map("all-zero weights", |w| {
            PhotonNumberDistribution::from_weights(0, w).ok()
        })
}

/// Brute-force thinning: enumerate every photon's survival pattern
/// implicitly through the Pascal-triangle recursion D_n(m) = ξ D_{n-1}(m-1) + (1-ξ) D_{n-1}(m).
fn thin_by_recursion(p: &PhotonNumberDistribution, xi: f64) -> Vec<f64> {
    let max = p.max_count().unwrap() as usize;
    let mut out = vec![0.0; max + 1];
    let mut row = vec![1.0];
    for n in 0..=max {
        if n > 0 {
            let mut next = vec![0.0; n + 1];
            for (m, v) in row.iter().enumerate() {
                next[m] += (1.0 - xi) * v;
                next[m + 1] += xi * v;
            }
            row = next;
        }
        let pn = p.probability(n as u64).unwrap();
        for (m, v) in row.iter().enumerate() {
            out[m] += pn * v;
        }
    }
    out
}

#[test]
fn forward_matches_recursion_oracle() {
    let p =
        PhotonNumberDistribution::from_weights(0, (0..40).map(|i| ((i * 7) % 11) as f64).collect())
            .unwrap();
    for xi in [0.1, 0.4, 0.76, 0.95] {
        let oracle = thin_by_recursion(&p, xi);
        let d = forward_bernoulli(&p, eff(xi));
        for (m, want) in oracle.iter().enumerate() {
            let got = d.probability(m as u64).unwrap();
            assert!((got - want).abs() < 1e-13, "xi={xi} m={m}: {got} vs {want}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn thinning_composes(p in table_strategy(50), a in 0.05f64..=1.0, b in 0.05f64..=1.0) {
        let twice = thin(&thin(&p, eff(a)), eff(b));
        let once = thin(&p, eff(a * b));
        for m in 0..=50u64 {
            let x = twice.probability(m).unwrap();
            let y = once.probability(m).unwrap();
            prop_assert!((x - y).abs() < 1e-9, "m={}: {} vs {}", m, x, y);
        }
    }

    #[test]
    fn moments_transport(p in table_strategy(50), xi in 0.01f64..=1.0) {
        let d = forward_bernoulli(&p, eff(xi)).moments();
        let expected = forward_moments(p.moments(), eff(xi));
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
        prop_assert!(rel(d.mean, expected.mean) < 1e-9);
        prop_assert!(rel(d.variance, expected.variance) < 1e-9);
    }

    #[test]
    fn pointwise_round_trip(p in table_strategy(30), xi_idx in 0usize..4) {
        let xi = [0.6, 0.76, 0.9, 1.0][xi_idx];
        let d = forward_bernoulli(&p, eff(xi));
        let (back, diag) = inverse_bernoulli_exact(&d, eff(xi)).unwrap();
        prop_assert!(diag.recoverable);
        for n in 0..=30u64 {
            let a = p.probability(n).unwrap();
            let b = back.probability(n).unwrap();
            prop_assert!((a - b).abs() < 1e-6, "N={}: {} vs {}", n, a, b);
        }
    }

    #[test]
    fn unit_efficiency_is_identity(p in table_strategy(20)) {
        let d = forward_bernoulli(&p, eff(1.0));
        prop_assert_eq!(d.table(), p.table());
    }

    #[test]
    fn moment_round_trip(mean in 1e-3f64..1e8, rel_var in 0.0f64..10.0, xi in 0.01f64..=1.0) {
        let n = Moments::new(mean, rel_var * mean * mean).unwrap();
        let back = inverse_moments(forward_moments(n, eff(xi)), eff(xi)).unwrap();
        prop_assert!(((back.mean - n.mean) / n.mean).abs() < 1e-9);
        let scale = n.variance.max(n.mean);
        prop_assert!(((back.variance - n.variance) / scale).abs() < 1e-9);
    }
}

#[test]
fn moment_round_trip_thousand_triples() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let mean = 10f64.powf(rng.random_range(-1.0..8.0));
        let var = mean * mean * rng.random_range(0.0..2.0);
        let xi = rng.random_range(0.01..=1.0);
        let n = Moments::new(mean, var).unwrap();
        let back = inverse_moments(forward_moments(n, eff(xi)), eff(xi)).unwrap();
        assert!(((back.mean - mean) / mean).abs() < 1e-9);
        assert!(((back.variance - var) / var.max(mean)).abs() < 1e-9);
    }
}
