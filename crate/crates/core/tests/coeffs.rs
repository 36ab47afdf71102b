mod common;

use std::collections::BTreeMap;

use ergoflow_core::coeffs::{central_difference, CoefficientFunction, Expression};
use ergoflow_core::{make_model, DiffusionModel, ModelSpec};
use proptest::prelude::*;

fn params() -> BTreeMap<String, f64> {
    BTreeMap::from([("k".to_string(), 1.5), ("beta".to_string(), 0.25)])
}

/// Random well-formed expressions in x; ln and sqrt get positive arguments.
fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("x".to_string()),
        Just("k".to_string()),
        Just("beta".to_string()),
        (0.0f64..10.0).prop_map(|c| format!("{c:.3}")),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), prop_oneof![Just('+'), Just('-'), Just('*')])
                .prop_map(|(a, b, op)| format!("({a} {op} {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}/(1 + ({b})^2)")),
            (inner.clone(), 0u32..4).prop_map(|(a, p)| format!("({a})^{p}")),
            inner.clone().prop_map(|a| format!("-{a}")),
            (inner.clone(), prop_oneof![Just("sin"), Just("cos"), Just("tanh"), Just("abs")])
                .prop_map(|(a, f)| format!("{f}({a})")),
            inner.clone().prop_map(|a| format!("ln(1 + ({a})^2)")),
            inner.clone().prop_map(|a| format!("sqrt(2 + cos({a}))")),
            inner.prop_map(|a| format!("exp(-({a})^2)")),
        ]
    })
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

proptest! {
    #[test]
    fn parse_unparse_parse_evaluates_identically(src in expr()) {
        let p = params();
        let e1 = Expression::parse(&src, &p).unwrap();
        let e2 = Expression::parse(&e1.unparse(), &p).unwrap();
        for i in 0..=40 {
            let x = -5.0 + 0.25 * i as f64;
            prop_assert!(same(e1.eval(x), e2.eval(x)), "{} vs {} at {}", src, e1.unparse(), x);
        }
    }

    #[test]
    fn catalog_derivatives_match_differences(x in -5.0f64..5.0, kappa in 0.3f64..3.0, a in -1.0f64..2.0) {
        let models = [
            DiffusionModel::ou(kappa, 0.8).unwrap(),
            DiffusionModel::tanh_drift(kappa, 1.3).unwrap(),
            DiffusionModel::double_well(a, kappa, 1.0).unwrap(),
        ];
        for m in &models {
            for (f, name) in [(m.sigma_fn(), "sigma"), (m.drift_fn(), "m")] {
                for order in 1..=2u8 {
                    let exact = f.derivative(x, order);
                    let fd = central_difference(|y| f.derivative(y, order - 1), x, 1);
                    let scale = exact.abs().max(1.0);
                    prop_assert!((exact - fd).abs() <= 1e-6 * scale,
                        "{} {}^({}) at {}: {} vs {}", m.name(), name, order, x, exact, fd);
                }
            }
            let stored = m.stored_q(x).unwrap();
            prop_assert!((m.q(x) - stored).abs() <= 1e-12 * stored.abs().max(1.0));
        }
    }

    #[test]
    fn expression_models_match_the_catalog(x in -5.0f64..5.0) {
        let spec = ModelSpec::expression("1", "-tanh(x)");
        let e = make_model(&spec).unwrap();
        let c = DiffusionModel::tanh_drift(1.0, 1.0).unwrap();
        prop_assert!((e.m(x) - c.m(x)).abs() < 1e-15);
        prop_assert!((e.dm(x) - c.dm(x)).abs() < 1e-7);
        prop_assert!((e.q(x) - c.q(x)).abs() < 1e-12);
    }
}

#[test]
fn hundred_probe_points_for_every_catalog_model() {
    for m in common::catalog() {
        for i in 0..100 {
            let x = -5.0 + 10.0 * i as f64 / 99.0;
            for f in [m.sigma_fn(), m.drift_fn()] {
                for order in 1..=2u8 {
                    let exact = f.derivative(x, order);
                    let fd = central_difference(|y| f.value(y), x, order);
                    let tol = if order == 1 { 1e-6 } else { 1e-4 };
                    assert!(
                        (exact - fd).abs() <= tol * exact.abs().max(1.0),
                        "{} order {order} at {x}: {exact} vs {fd}",
                        m.name()
                    );
                }
            }
        }
    }
}

#[test]
fn parameters_resolve_at_parse_time() {
    let f = CoefficientFunction::parse("k * x^2 - beta", &params()).unwrap();
    assert_eq!(f.value(2.0), 1.5 * 4.0 - 0.25);
    assert!(CoefficientFunction::parse("gamma * x", &params()).is_err());
}
