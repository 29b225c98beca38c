use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use selcorr_core::correlation::{
    conditional_correlation_estimate, cqc_interval, fisher_transform, inverse_fisher, selective_estimate,
    CorrelationObservation,
};
use selcorr_core::rng::seeded;
use selcorr_core::truncnorm::SolverConfig;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn z_grid_argmax(y: f64, sigma: f64, c: f64) -> f64 {
    let n = Normal::standard();
    let ll = |t: f64| n.ln_pdf((y - t) / sigma) - (n.cdf((-c - t) / sigma) + n.cdf((t - c) / sigma)).ln();
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=60_000 {
        let t = -3.0 + i as f64 * 1e-4;
        let v = ll(t);
        if v > best.0 {
            best = (v, t);
        }
    }
    best.1
}

#[test]
fn fisher_reference_value() {
    assert!((fisher_transform(0.5).unwrap() - 0.549_306).abs() < 1e-6);
    assert!((inverse_fisher(0.549_306) - 0.5).abs() < 1e-6);
}

#[test]
fn published_shrinkage_transported_to_correlations() {
    // n = 20: sigma = 1/sqrt(17). Observation at 3.5 sd, threshold at 1 sd.
    let sigma = 1.0 / 17f64.sqrt();
    let obs = CorrelationObservation::new((3.5 * sigma).tanh(), 20).unwrap();
    let est = conditional_correlation_estimate(&obs, sigma.tanh(), &SolverConfig::default()).unwrap();
    assert!((est.theta_hat / sigma - 3.48).abs() < 0.01);
    assert!((est.rho_hat - inverse_fisher(3.48 * sigma)).abs() < 0.01 * sigma);
    // mpmath: tanh(3.4815438.../sqrt(17))
    assert!((est.rho_hat - 0.688_131_728_365_196).abs() < 1e-9);
}

#[test]
fn n50_case_matches_grid_oracle() {
    let obs = CorrelationObservation::new(0.62, 50).unwrap();
    let est = conditional_correlation_estimate(&obs, 0.6, &SolverConfig::default()).unwrap();
    let oracle = z_grid_argmax(0.62f64.atanh(), 1.0 / 47f64.sqrt(), 0.6f64.atanh());
    assert!((est.theta_hat - oracle).abs() < 1e-3);
    assert!((est.rho_hat - oracle.tanh()).abs() < 1e-3);
    // mpmath root of the score.
    assert!((est.rho_hat - 0.107_378_451_450_062).abs() < 1e-9);
}

#[test]
fn interval_endpoints_move_up_with_r() {
    let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in 0..60 {
        let r = 0.6 + i as f64 * 0.0065;
        let obs = CorrelationObservation::new(r, 30).unwrap();
        let (lo, hi) = cqc_interval(&obs, 0.6, 0.05).unwrap();
        assert!(lo <= hi);
        assert!(lo >= prev.0 && hi >= prev.1, "r = {r}");
        prev = (lo, hi);
    }
}

#[test]
fn conditional_coverage_small_run() {
    // rho = 0.3, n = 20, threshold chosen by mpmath so P(select) = 0.2. The conditional
    // interval should cover rho about 95% of the time among selected draws.
    let theta = 0.3f64.atanh();
    let sigma = 1.0 / 17f64.sqrt();
    let threshold_r: f64 = 0.473_009;
    let c = threshold_r.atanh();
    let mut rng = seeded(11);
    let (mut selected, mut covered) = (0, 0);
    while selected < 600 {
        let y = theta + sigma * rng.sample::<f64, _>(StandardNormal);
        if y.abs() < c {
            continue;
        }
        selected += 1;
        let obs = CorrelationObservation::new(y.tanh(), 20).unwrap();
        let (lo, hi) = cqc_interval(&obs, threshold_r, 0.05).unwrap();
        if lo <= 0.3 && 0.3 <= hi {
            covered += 1;
        }
    }
    let rate = covered as f64 / selected as f64;
    // Binomial sd at 600 draws is ~0.9%.
    assert!((rate - 0.95).abs() < 0.03, "{rate}");
}

#[test]
fn interval_at_the_selection_boundary() {
    // The lower endpoint lies far below the default bracket here.
    for &(r, n, thr) in &[(0.951, 256, 0.95), (0.6001, 50, 0.6), (0.31, 1000, 0.3)] {
        let obs = CorrelationObservation::new(r, n).unwrap();
        let est = selective_estimate(&obs, thr, 0.05, &SolverConfig::default()).unwrap();
        let (lo, hi) = est.interval.unwrap();
        assert!(lo < est.rho_hat && est.rho_hat < hi, "{r} {n}: {est:?}");
        assert!(lo > -1.0 && hi < 1.0);
    }
}

proptest! {
    #[test]
    fn fisher_round_trip(r in -0.999f64..0.999) {
        prop_assert!((inverse_fisher(fisher_transform(r).unwrap()) - r).abs() < 1e-12);
    }

    #[test]
    fn estimate_never_exceeds_observation(n in 4u32..500, thr in 0.05f64..0.95, frac in 0.0f64..1.0, neg in any::<bool>()) {
        let r = (thr + frac * (0.999 - thr)) * if neg { -1.0 } else { 1.0 };
        let obs = CorrelationObservation::new(r, n).unwrap();
        let est = selective_estimate(&obs, thr, 0.05, &SolverConfig::default()).unwrap();
        prop_assert!(est.rho_hat.abs() <= r.abs());
        let (lo, hi) = est.interval.unwrap();
        prop_assert!(lo <= hi && lo > -1.0 && hi < 1.0);
    }
}
