use ergoflow_core::noise::{draw_increment, NoisePath, Side};
use proptest::prelude::*;

fn path(seed: u64, plus: usize, minus: usize) -> NoisePath {
    let mut p = NoisePath::new(seed, 1e-3).unwrap();
    p.extend(Side::Plus, plus).unwrap();
    p.extend(Side::Minus, minus).unwrap();
    p
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #[test]
    fn reversal_is_an_involution(seed in any::<u64>(), n in 1usize..300) {
        let p = path(seed, n, 0);
        let v = p.view();
        let twice = v.reversed(n).reversed(n);
        prop_assert_eq!(bits(&twice.collect(0, n).unwrap()), bits(&v.collect(0, n).unwrap()));
        let rev = v.reversed(n).collect(0, n).unwrap();
        for i in 0..n {
            prop_assert_eq!(rev[i].to_bits(), (-p.increment(Side::Plus, n - 1 - i)).to_bits());
        }
        // telescoping: b↓(T) = −b(T)
        let total: f64 = rev.iter().sum();
        prop_assert!((total + v.b(n as i64)).abs() < 1e-12);
    }

    #[test]
    fn rotation_is_an_involution(seed in any::<u64>(), k in -200i64..200, shift in -100i64..100) {
        let p = path(seed, 400, 400);
        let v = p.view().shifted(shift);
        let r = v.rotated();
        prop_assert_eq!(r.rotated().get(k).to_bits(), v.get(k).to_bits());
        prop_assert!((r.b(k) - v.b(-k)).abs() < 1e-12);
    }

    #[test]
    fn shifts_compose(seed in any::<u64>(), a in -150i64..150, b in -150i64..150, k in -50i64..50) {
        let p = path(seed, 400, 400);
        let v = p.view();
        prop_assert_eq!(v.shifted(a).shifted(b).get(k).to_bits(), v.shifted(a + b).get(k).to_bits());
        prop_assert_eq!(v.shifted(0).get(k).to_bits(), v.get(k).to_bits());
        // θ_t b(s) = b(s + t) − b(t)
        let lhs = v.shifted(a).b(k);
        let rhs = v.b(k + a) - v.b(a);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn increments_depend_only_on_seed_side_and_index(seed in any::<u64>(), i in 0usize..500) {
        let p = path(seed, 500, 500);
        prop_assert_eq!(p.increment(Side::Plus, i).to_bits(), draw_increment(seed, Side::Plus, i, 1e-3).to_bits());
        prop_assert_eq!(p.increment(Side::Minus, i).to_bits(), draw_increment(seed, Side::Minus, i, 1e-3).to_bits());
        prop_assert_ne!(p.increment(Side::Plus, i), p.increment(Side::Minus, i));
    }

    #[test]
    fn extension_never_rewrites(seed in any::<u64>(), first in 1usize..200, more in 1usize..200) {
        let mut p = path(seed, first, 0);
        let before = p.increments(Side::Plus).to_vec();
        p.extend(Side::Plus, first + more).unwrap();
        prop_assert_eq!(bits(&p.increments(Side::Plus)[..first]), bits(&before));
    }
}

#[test]
fn negative_shift_crosses_the_seam() {
    let p = path(5, 10, 10);
    let v = p.view().shifted(-1);
    assert_eq!(v.get(0), -p.increment(Side::Minus, 0));
    assert_eq!(v.get(1), p.increment(Side::Plus, 0));
}

#[test]
fn views_outside_the_horizon_are_refused() {
    let p = path(1, 100, 0);
    assert!(p.view().collect(0, 100).is_ok());
    assert!(p.view().collect(0, 101).is_err());
    assert!(p.view().rotated().collect(0, 1).is_err());
    assert!(p.view().reversed(100).collect(0, 100).is_ok());
}

#[test]
fn million_increments_have_variance_dt() {
    let p = path(2024, 1_000_000, 0);
    let inc = p.increments(Side::Plus);
    let n = inc.len() as f64;
    let mean = inc.iter().sum::<f64>() / n;
    let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var / 1e-3 - 1.0).abs() < 0.01, "{var}");
}
