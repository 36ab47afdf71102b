mod common;

use ergoflow_core::flow::{advance, Direction, Ensemble, Scheme, StepOptions};
use ergoflow_core::noise::{NoisePath, Side};
use ergoflow_core::oracle::{
    fitted_order, ou_exact_flow, ou_exact_xinf, ou_stationary_sharp, strong_error, OuParams,
};
use ergoflow_core::pullback::{default_schedule, sample_xinf, PULLBACK_SCHEME};
use proptest::prelude::*;

use common::{ou, validated};
use ergoflow_core::DiffusionModel;

#[test]
fn milstein_converges_with_order_one_on_ou() {
    let m = ou(1.0);
    let p = OuParams::new(1.0, 1.0).unwrap();
    let seeds: Vec<u64> = (0..50).collect();
    let dts = [4e-3, 2e-3, 1e-3, 5e-4];
    let errors: Vec<f64> = dts
        .iter()
        .map(|&dt| strong_error(&m, &p, Scheme::Milstein, dt, 1.0, 1.0, &seeds).unwrap())
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    let order = fitted_order(&dts, &errors);
    assert!(order >= 0.9, "{order}");
}

#[test]
fn pullback_matches_the_exact_stagnation_point() {
    let m = validated(DiffusionModel::ou(1.5, 0.8).unwrap());
    let p = OuParams::new(1.5, 0.8).unwrap();
    let schedule = default_schedule(1.5);
    let n = (schedule.last().unwrap() / 1e-3).round() as usize;
    for seed in 0..4 {
        let mut path = NoisePath::new(seed, 1e-3).unwrap();
        path.extend(Side::Plus, n).unwrap();
        let v = path.view();
        let exact = ou_exact_xinf(&p, &v, n).unwrap();
        let s = sample_xinf(&m, &v, &[-2.0, 0.0, 2.0], &schedule, 1e-6, PULLBACK_SCHEME).unwrap();
        // the schemes differ from the exact discrete sum by O(dt)
        assert!((s.estimate - exact.value).abs() < 5e-3, "seed {seed}: {} vs {}", s.estimate, exact.value);
    }
}

#[test]
fn sharp_flow_carries_the_stationary_sharp_process() {
    let p = OuParams::new(1.0, 1.0).unwrap();
    let mut path = NoisePath::new(9, 1e-3).unwrap();
    path.extend(Side::Plus, 30_000).unwrap();
    let v = path.view();
    let start = ou_stationary_sharp(&p, &v, 0, 30_000).unwrap();
    let later = ou_stationary_sharp(&p, &v, 1000, 30_000).unwrap();
    let m = ou(1.0);
    let mut e = Ensemble::new(&[start], 1e-3);
    let opts = StepOptions { scheme: PULLBACK_SCHEME, ..StepOptions::default() };
    advance(&m, &v, &mut e, 1000, Direction::Sharp, opts).unwrap();
    assert!((e.x[0] - later).abs() < 5e-3, "{} vs {later}", e.x[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_flow_is_affine_in_the_start(seed in any::<u64>(), x in -5.0f64..5.0, y in -5.0f64..5.0, beta in 0.2f64..3.0) {
        let p = OuParams::new(beta, 1.0).unwrap();
        let mut path = NoisePath::new(seed, 1e-3).unwrap();
        path.extend(Side::Plus, 500).unwrap();
        let v = path.view();
        let (fx, fy) = (ou_exact_flow(&p, &v, x, 500).unwrap(), ou_exact_flow(&p, &v, y, 500).unwrap());
        prop_assert!(((fx - fy) - (x - y) * (-beta * 0.5f64).exp()).abs() < 1e-12);
    }
}
