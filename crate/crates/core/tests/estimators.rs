mod common;

use ergoflow_core::estimators::{
    exit_probability, gamma_birkhoff, ks_distance, ks_two_sample, occupation_vs_invariant,
    two_point_rate,
};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use common::{catalog, ou, table};

#[test]
fn ou_exit_probability_matches_the_invariant_cdf() {
    let m = ou(1.0);
    let t = table(&m);
    let th = t.escape_threshold();
    let r = exit_probability(&m, &t, &[-0.5, 0.5], 10_000, 50.0, 0, 1e-3, th).unwrap();
    let target = Normal::new(0.0, 0.5f64.sqrt()).unwrap().cdf(0.5);
    assert!((target - 0.7602).abs() < 1e-4);
    let z = (r[1].value - target) / r[1].std_error;
    assert!(z.abs() < 3.0, "{} (z {z})", r[1].value);
    // the same paths drive both probes, so the pair is exactly complementary
    assert!((r[0].value + r[1].value - 1.0).abs() < 0.02, "{} + {}", r[0].value, r[1].value);
    assert_eq!(r[1].diagnostics["undecided_fraction"], 0.0);
}

#[test]
fn birkhoff_average_is_seed_deterministic_and_close_to_gamma() {
    for m in catalog() {
        let t = table(&m);
        let gamma = t.gamma.finite("test").unwrap();
        let a = gamma_birkhoff(&m, &t, 3, 1e-3, (500.0 / gamma).round(), None).unwrap();
        let b = gamma_birkhoff(&m, &t, 3, 1e-3, (500.0 / gamma).round(), None).unwrap();
        assert_eq!(a, b);
        assert!((a.value - gamma).abs() < 4.0 * a.std_error, "{}: {} ± {}", m.name(), a.value, a.std_error);
    }
}

#[test]
fn ou_two_point_slope_is_minus_beta() {
    let m = ou(1.0);
    let t = table(&m);
    let r = two_point_rate(&m, &t, 5, 1e-3, -0.5, 0.5, 40.0).unwrap();
    assert!((r.value + 1.0).abs() < 0.1, "{}", r.value);
    assert_eq!(r, two_point_rate(&m, &t, 5, 1e-3, -0.5, 0.5, 40.0).unwrap());
    assert!(two_point_rate(&m, &t, 5, 1e-3, -0.5, 0.5, 10.0).is_err());
}

#[test]
fn occupation_histogram_follows_the_invariant_density() {
    let m = ou(1.0);
    let t = table(&m);
    let r = occupation_vs_invariant(&m, &t, 0, 1e-3, 2000.0, 60).unwrap();
    assert!(r.ks.value < 0.03, "{}", r.ks.value);
    let mass: f64 = r.histogram.windows(2).map(|w| (w[1].0 - w[0].0) * w[0].1).sum();
    assert!((mass - 1.0).abs() < 0.05, "{mass}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ks_distance_ignores_monotone_reparametrisation(
        xs in proptest::collection::vec(-3.0f64..3.0, 1..200),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let d = ks_distance(&xs, |x| normal.cdf(x)).unwrap();
        let ys: Vec<f64> = xs.iter().map(|x| (scale * x + shift).exp()).collect();
        let e = ks_distance(&ys, |y| normal.cdf((y.ln() - shift) / scale)).unwrap();
        prop_assert!((d - e).abs() < 1e-9, "{} vs {}", d, e);
    }

    #[test]
    fn two_sample_ks_ignores_shared_monotone_maps(
        a in proptest::collection::vec(-3.0f64..3.0, 1..100),
        b in proptest::collection::vec(-3.0f64..3.0, 1..100),
    ) {
        let d = ks_two_sample(&a, &b).unwrap();
        let f = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x.powi(3) + x).collect() };
        prop_assert_eq!(d, ks_two_sample(&f(&a), &f(&b)).unwrap());
        prop_assert_eq!(d, ks_two_sample(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
    }
}
