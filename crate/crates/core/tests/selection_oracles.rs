use proptest::prelude::*;
use selcorr_core::selection::{
    bh_select, bonferroni_select, correlation_from_p, fixed_select, p_from_correlation, select_correlations,
    SelectionRule,
};

/// BH straight from the definition, without sorting:
/// `k = max { i : #{ j : p_j <= i * alpha / m } >= i }`.
fn brute_bh(p: &[f64], alpha: f64) -> (Vec<usize>, f64) {
    let m = p.len();
    let mut k = 0;
    for i in 1..=m {
        let cut = i as f64 * alpha / m as f64;
        if p.iter().filter(|&&v| v <= cut).count() >= i {
            k = i;
        }
    }
    if k == 0 {
        return (Vec::new(), alpha / m as f64);
    }
    let cut = k as f64 * alpha / m as f64;
    ((0..m).filter(|&j| p[j] <= cut).collect(), cut)
}

fn pvalues() -> impl Strategy<Value = Vec<f64>> {
    // Mix of near-zero and uniform values so selections are non-trivial.
    prop::collection::vec(prop_oneof![0.0f64..0.01, 0.0f64..1.0, Just(0.02)], 1..200)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn bh_matches_definition(p in pvalues(), alpha in 0.01f64..0.5) {
        let res = bh_select(&p, alpha).unwrap();
        let (sel, cut) = brute_bh(&p, alpha);
        prop_assert_eq!(&res.selected, &sel);
        prop_assert!((res.threshold_p - cut).abs() < 1e-15);
    }

    #[test]
    fn bh_contains_bonferroni(p in pvalues(), alpha in 0.01f64..0.5) {
        let bh = bh_select(&p, alpha).unwrap().mask();
        let bonf = bonferroni_select(&p, alpha).unwrap().mask();
        prop_assert!(bonf.iter().zip(&bh).all(|(&b, &h)| !b || h));
    }

    #[test]
    fn bh_is_monotone_in_alpha(p in pvalues(), a in 0.01f64..0.4, extra in 0.0f64..0.5) {
        let small = bh_select(&p, a).unwrap().mask();
        let large = bh_select(&p, (a + extra).min(0.99)).unwrap().mask();
        prop_assert!(small.iter().zip(&large).all(|(&s, &l)| !s || l));
    }

    #[test]
    fn threshold_scales_are_consistent(rs in prop::collection::vec(-0.95f64..0.95, 1..100), n in 5u32..200, alpha in 0.01f64..0.3) {
        for rule in [SelectionRule::Bonferroni(alpha), SelectionRule::BenjaminiHochberg(alpha), SelectionRule::FixedCorrelation(0.5)] {
            let res = select_correlations(&rs, n, rule).unwrap();
            let tr = res.threshold_r.unwrap();
            prop_assert!((correlation_from_p(res.threshold_p, n).unwrap() - tr).abs() < 1e-9);
            for &i in &res.selected {
                prop_assert!(rs[i].abs() >= tr - 1e-12);
                prop_assert!(p_from_correlation(rs[i], n).unwrap() <= res.threshold_p * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn fixed_matches_filter(rs in prop::collection::vec(-0.99f64..0.99, 0..100), c in 0.05f64..0.95) {
        let res = fixed_select(&rs, 30, c).unwrap();
        let expected: Vec<usize> = (0..rs.len()).filter(|&i| rs[i].abs() >= c).collect();
        prop_assert_eq!(res.selected, expected);
    }

    #[test]
    fn p_and_r_are_inverse(p in 1e-12f64..0.999_999, n in 4u32..1000) {
        let r = correlation_from_p(p, n).unwrap();
        prop_assert!(((p_from_correlation(r, n).unwrap() - p) / p).abs() < 1e-9);
    }
}

#[test]
fn p_decreases_in_abs_r() {
    let mut prev = 1.0;
    for i in 1..99 {
        let p = p_from_correlation(i as f64 / 100.0, 20).unwrap();
        assert!(p < prev);
        assert_eq!(p, p_from_correlation(-(i as f64) / 100.0, 20).unwrap());
        prev = p;
    }
}
