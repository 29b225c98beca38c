use rand::Rng;
use rand_distr::StandardNormal;
use selcorr::experiments::{
    run_bh_convergence_study, run_fixed_threshold_study, run_fmri_study, run_mixture_study, split_half_estimate,
    BhStudyConfig, Estimator, FixedThresholdConfig, FmriStudyConfig, MetricsRow, MixtureStudyConfig, PGenerator, Scope,
};
use selcorr_core::correlation::{fisher_sd, fisher_transform, inverse_fisher};
use selcorr_core::rng::{derive_seed, seeded};
use selcorr_core::truncnorm::{conditional_mle, SolverConfig};

fn find(rows: &[MetricsRow], rho: f64, n: u32, est: Estimator, scope: Scope) -> MetricsRow {
    *rows
        .iter()
        .find(|r| r.rho.is_some_and(|x| (x - rho).abs() < 1e-9) && r.n == n && r.estimator == est && r.scope == scope)
        .expect("row present")
}

#[test]
fn split_selects_strong_correlations() {
    let theta = fisher_transform(0.95).unwrap();
    let hits = (0..1000)
        .filter(|&s| split_half_estimate(theta, 100, 0.6, s).unwrap().selected)
        .count();
    assert!(hits as f64 / 1000.0 > 0.99, "{hits}");
}

#[test]
fn split_estimate_is_unbiased_given_selection() {
    let theta = fisher_transform(0.4).unwrap();
    let z: Vec<f64> = (0..10_000)
        .filter_map(|s| {
            split_half_estimate(theta, 64, 0.4, derive_seed(1, 0, s))
                .unwrap()
                .estimate
        })
        .map(|r| r.atanh())
        .collect();
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let se = fisher_sd(32).unwrap() / (z.len() as f64).sqrt();
    assert!((mean - theta).abs() < 3.0 * se, "{mean} vs {theta}, se {se}");
}

#[test]
fn split_selection_power_is_below_full_sample() {
    // Full-sample selection uses the same seeds' first normal draw at the
    // full-sample scale.
    let theta = fisher_transform(0.7).unwrap();
    for n in [8u32, 32] {
        let c = fisher_transform(0.6).unwrap();
        let sigma = fisher_sd(n).unwrap();
        let reps = 4000;
        let (mut full, mut split) = (0, 0);
        for s in 0..reps {
            let seed = derive_seed(2, n as u64, s);
            let z = theta + sigma * seeded(seed).sample::<f64, _>(StandardNormal);
            full += usize::from(z.abs() >= c);
            split += usize::from(
                split_half_estimate(theta, n, 0.6, derive_seed(seed, 1, 0))
                    .unwrap()
                    .selected,
            );
        }
        assert!(split < full, "n = {n}: split {split} vs full {full}");
    }
}

fn fixed_study() -> Vec<MetricsRow> {
    run_fixed_threshold_study(&FixedThresholdConfig {
        master_seed: 11,
        ..FixedThresholdConfig::default()
    })
    .unwrap()
}

#[test]
fn fixed_threshold_examples_and_invariants() {
    let rows = fixed_study();
    let cfg = FixedThresholdConfig::default();

    // Without selection the direct estimator is median-unbiased.
    let mut worst = 0.0f64;
    for &rho in &cfg.rhos {
        for &n in &cfg.sample_sizes {
            let m = find(&rows, rho, n, Estimator::Direct, Scope::Entire).metrics;
            worst = worst.max(m.median_bias.abs());
        }
    }
    assert!(worst < 0.01, "{worst}");

    // Selection bias near the threshold, removed by conditioning.
    let d = find(&rows, 0.25, 25, Estimator::Direct, Scope::Selected).metrics;
    let c = find(&rows, 0.25, 25, Estimator::Conditional, Scope::Selected).metrics;
    assert!(
        d.median_bias > 0.0 && c.median_bias.abs() < d.median_bias,
        "{d:?} {c:?}"
    );

    // Far above the threshold the two estimators coincide.
    let d = find(&rows, 0.95, 100, Estimator::Direct, Scope::Selected).metrics;
    let c = find(&rows, 0.95, 100, Estimator::Conditional, Scope::Selected).metrics;
    assert!((d.bias - c.bias).abs() < 0.02);

    // Conditional median bias is smaller than the direct one below the
    // threshold at >= 95% of grid points with a nonempty selected subset.
    let mut total = 0;
    let mut wins = 0;
    for &rho in cfg.rhos.iter().filter(|&&r| r < cfg.threshold_r) {
        for &n in &cfg.sample_sizes {
            let d = find(&rows, rho, n, Estimator::Direct, Scope::Selected).metrics;
            let c = find(&rows, rho, n, Estimator::Conditional, Scope::Selected).metrics;
            if d.undefined {
                continue;
            }
            total += 1;
            wins += usize::from(c.median_bias.abs() < d.median_bias);
        }
    }
    assert!(total >= 15, "{total}");
    assert!(wins as f64 >= 0.95 * total as f64, "{wins} of {total}");
}

#[test]
fn fixed_threshold_matches_a_plain_monte_carlo() {
    let (rho, n, thr) = (0.35, 25u32, 0.6f64);
    let cfg = FixedThresholdConfig {
        rhos: vec![rho],
        sample_sizes: vec![n],
        estimators: vec![Estimator::Direct, Estimator::Conditional],
        replications: 20_000,
        master_seed: 3,
        ..FixedThresholdConfig::default()
    };
    let rows = run_fixed_threshold_study(&cfg).unwrap();
    let d = find(&rows, rho, n, Estimator::Direct, Scope::Selected).metrics;
    let c = find(&rows, rho, n, Estimator::Conditional, Scope::Selected).metrics;

    // Straight-line simulation with its own stream.
    let theta = rho.atanh();
    let sigma = 1.0 / ((n - 3) as f64).sqrt();
    let cut = thr.atanh();
    let mut rng = seeded(987_654);
    let (mut direct, mut cond) = (Vec::new(), Vec::new());
    for _ in 0..20_000 {
        let z = theta + sigma * rng.sample::<f64, _>(StandardNormal);
        if z.abs() >= cut {
            direct.push(z.tanh() - rho);
            cond.push(conditional_mle(z, sigma, cut, &SolverConfig::default()).unwrap().tanh() - rho);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let sdv = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let se = |v: &[f64]| sdv(v) * (2.0 / v.len() as f64).sqrt();
    assert!(
        (d.bias - mean(&direct)).abs() < 4.0 * se(&direct),
        "{} vs {}",
        d.bias,
        mean(&direct)
    );
    assert!(
        (c.bias - mean(&cond)).abs() < 4.0 * se(&cond),
        "{} vs {}",
        c.bias,
        mean(&cond)
    );
    let p = direct.len() as f64 / 20_000.0;
    let se_p = (2.0 * p * (1.0 - p) / 20_000.0).sqrt();
    assert!((d.power - p).abs() < 4.0 * se_p);
}

#[test]
fn mixture_study_invariants() {
    let cfg = MixtureStudyConfig {
        rhos: vec![0.05, 0.15, 0.25, 0.35, 0.45],
        replications: 200,
        master_seed: 5,
        ..MixtureStudyConfig::default()
    };
    let rows = run_mixture_study(&cfg).unwrap();
    for &rho in &cfg.rhos {
        for &n in &cfg.sample_sizes {
            let d = find(&rows, rho, n, Estimator::Direct, Scope::Selected).metrics;
            let c = find(&rows, rho, n, Estimator::Conditional, Scope::Selected).metrics;
            let s = find(&rows, rho, n, Estimator::Split, Scope::Selected).metrics;
            // Once the data-driven cutoff drops below the true effect (power
            // above one half) the conditional estimator over-shrinks
            // observations near the cutoff and the direct one wins.
            if !d.undefined && d.power < 0.5 {
                assert!(c.mse < d.mse, "rho {rho} n {n}: {} vs {}", c.mse, d.mse);
            }
            // Same replications and seeds: full-sample power dominates. Near
            // the null both powers sit at a floor of order 1e-3 set by chance
            // discoveries, and the ordering is checked up to that floor.
            assert!(d.power > s.power - 0.003, "rho {rho} n {n}: {} vs {}", d.power, s.power);
            if d.power.max(s.power) >= 0.01 {
                assert!(d.power > s.power, "rho {rho} n {n}: {} vs {}", d.power, s.power);
            }
        }
    }
}

#[test]
fn fmri_study_directions() {
    let cfg = FmriStudyConfig {
        master_seed: 21,
        ..FmriStudyConfig::default()
    };
    let study = run_fmri_study(&cfg).unwrap();
    let mode = |e: Estimator| *study.modes.iter().find(|m| m.estimator == e).unwrap();
    let (d, c) = (mode(Estimator::Direct), mode(Estimator::Conditional));
    assert!(c.bias_mode < d.bias_mode, "{c:?} {d:?}");
    assert!(c.mse_mode < d.mse_mode, "{c:?} {d:?}");

    let bins = |e: Estimator| study.by_observed.iter().filter(move |b| b.estimator == e);
    let mut cutoffs: Vec<f64> = study
        .datasets
        .iter()
        .filter(|r| r.estimator == Estimator::Direct && !r.threshold_r.is_nan())
        .map(|r| r.threshold_r)
        .collect();
    cutoffs.sort_unstable_by(f64::total_cmp);
    let cutoff = cutoffs[cutoffs.len() / 2];

    // Close to the cutoff the conditional bias curve passes through zero
    // while the direct bias stays well above it.
    let cond: Vec<_> = bins(Estimator::Conditional)
        .filter(|b| b.r_lo >= 0.0 && b.count >= 50)
        .collect();
    let centre = |b: &selcorr::experiments::BinRow| 0.5 * (b.r_lo + b.r_hi);
    let pair = cond
        .windows(2)
        .find(|w| w[0].bias < 0.0 && w[1].bias >= 0.0)
        .expect("sign change");
    let (a, b) = (pair[0], pair[1]);
    let crossing = centre(a) + (centre(b) - centre(a)) * (-a.bias) / (b.bias - a.bias);
    let direct_at = |x: &selcorr::experiments::BinRow| bins(Estimator::Direct).find(|d| d.r_lo == x.r_lo).unwrap().bias;
    let direct_gap = 0.5 * (direct_at(a) + direct_at(b));
    eprintln!(
        "median cutoff {cutoff:.3}, conditional bias crosses zero at {crossing:.3}, direct bias there {direct_gap:.3}"
    );
    assert!(
        crossing >= cutoff - 0.05 && crossing <= cutoff + 0.1,
        "{crossing} vs {cutoff}"
    );
    assert!(direct_gap > 0.2);

    // Far bins: the two estimators nearly agree.
    let mut far = 0;
    for b in bins(Estimator::Conditional).filter(|b| b.r_lo.abs().min(b.r_hi.abs()) >= 0.85 - 1e-9 && b.count >= 10) {
        let d = bins(Estimator::Direct).find(|x| x.r_lo == b.r_lo).unwrap();
        let gap = (d.bias - b.bias).abs();
        eprintln!("far bin {:.2}: gap {gap:.4}", b.r_lo);
        assert!(gap < 0.05 && gap < 0.2 * direct_gap, "{b:?} {d:?}");
        far += 1;
    }
    assert!(far >= 1);
}

#[test]
fn bh_threshold_convergence() {
    let cfg = BhStudyConfig {
        ms: vec![100, 1_000, 10_000],
        generators: vec![PGenerator::Independent, PGenerator::Vanishing],
        master_seed: 8,
        ..BhStudyConfig::default()
    };
    let rows = run_bh_convergence_study(&cfg).unwrap();
    let of = |g: PGenerator| rows.iter().filter(move |r| r.generator == g).collect::<Vec<_>>();
    let ind = of(PGenerator::Independent);
    assert!(ind.windows(2).all(|w| w[1].threshold_sd < w[0].threshold_sd), "{ind:?}");
    let van = of(PGenerator::Vanishing);
    assert!(
        van.windows(2).all(|w| w[1].threshold_mean < w[0].threshold_mean),
        "{van:?}"
    );
}

#[test]
fn estimate_inverse_round_trip() {
    // The simulated direct estimate is the tanh image of the Fisher draw.
    let z = 0.731;
    assert!((inverse_fisher(z).atanh() - z).abs() < 1e-12);
}
