//! Composite Simpson rules on uniform grids, cumulative variants, log-domain
//! integration and a divergence classifier for truncated improper integrals.

use serde::Serialize;

/// Composite Simpson over an odd number of equally spaced samples.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1, "simpson needs an odd number (>= 3) of samples");
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (values[0] + values[n - 1] + 4.0 * odd + 2.0 * even)
}

/// Simpson at step h checked against step 2h. Needs 4k+1 samples.
/// Returns S_h and the Richardson error estimate |S_h − S_2h| / 15. The
/// extrapolated value is not returned because smooth decaying integrands
/// converge faster than h⁴ and extrapolation would only add the coarse error.
pub fn simpson_richardson(values: &[f64], h: f64) -> (f64, f64) {
    let n = values.len();
    assert!(n >= 5 && (n - 1) % 4 == 0, "richardson needs 4k+1 samples");
    let fine = simpson(values, h);
    let coarse: Vec<f64> = values.iter().step_by(2).copied().collect();
    let coarse = simpson(&coarse, 2.0 * h);
    (fine, ((fine - coarse) / 15.0).abs())
}

/// Cumulative integral ∫_{z_0}^{z_i} f for every node of a uniform grid with an
/// even number of intervals. Even nodes use Simpson pairs; odd nodes add the
/// three-point rule h/12·(5f₀ + 8f₁ − f₂) to the preceding even node.
pub fn cumulative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1, "cumulative needs an odd number of samples");
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    let mut i = 0;
    while i + 2 < n {
        let (f0, f1, f2) = (values[i], values[i + 1], values[i + 2]);
        let panel = h / 3.0 * (f0 + 4.0 * f1 + f2);
        let mut half = h / 12.0 * (5.0 * f0 + 8.0 * f1 - f2);
        if f0 > 0.0 && f1 > 0.0 && f2 > 0.0 && !(half > 0.0 && half < panel) {
            // the three-point rule overshoots on steep positive integrands;
            // fall back to the exponential through f0 and f1
            let r = (f1 / f0).ln();
            half = if r.abs() < 1e-12 { h * f0 } else { h * (f1 - f0) / r };
            half = half.min(panel);
        }
        out[i + 1] = acc + half;
        acc += panel;
        out[i + 2] = acc;
        i += 2;
    }
    out
}

/// Same as [`cumulative`] but accumulated from the right end: ∫_{z_i}^{z_{n-1}} f.
pub fn cumulative_from_right(values: &[f64], h: f64) -> Vec<f64> {
    let rev: Vec<f64> = values.iter().rev().copied().collect();
    let mut out = cumulative(&rev, h);
    out.reverse();
    out
}

/// ln ∫ exp(log_values) by Simpson with a max-shift, robust to overflow.
pub fn log_simpson(log_values: &[f64], h: f64) -> f64 {
    let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let shifted: Vec<f64> = log_values.iter().map(|l| (l - max).exp()).collect();
    simpson(&shifted, h).ln() + max
}

/// ln(e^a + e^b)
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Outcome of a truncated improper-integral test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralBehaviour {
    Converges,
    Diverges,
    Inconclusive,
}

/// Number of trailing shell increments inspected for a growth trend.
pub const TREND_SHELLS: usize = 10;
/// Relative size of the outermost shell below which an integral counts as converged.
pub const TAIL_NEGLIGIBLE: f64 = 1e-10;

/// Classifies an integral from the logarithms of its partial integrals over
/// nested windows (ln P_1 ≤ … ≤ ln P_K).
///
/// Diverges when the last partial exceeds `cutoff`, or when the last
/// [`TREND_SHELLS`] shell increments are non-decreasing. Converges when the
/// outermost increment is below [`TAIL_NEGLIGIBLE`] of the total.
pub fn classify_partials(log_partials: &[f64], cutoff: f64) -> IntegralBehaviour {
    let k = log_partials.len();
    assert!(k > TREND_SHELLS, "need more shells than the trend length");
    let last = log_partials[k - 1];
    if last.is_nan() {
        return IntegralBehaviour::Inconclusive;
    }
    if last > cutoff.ln() {
        return IntegralBehaviour::Diverges;
    }
    // ln of the increments P_j − P_{j−1}
    let log_inc: Vec<f64> = (1..k)
        .map(|j| {
            let (a, b) = (log_partials[j - 1], log_partials[j]);
            if b <= a {
                f64::NEG_INFINITY
            } else {
                b + (-(a - b).exp()).ln_1p()
            }
        })
        .collect();
    let tail = &log_inc[log_inc.len() - TREND_SHELLS..];
    let non_decreasing = tail[0].is_finite()
        && tail
            .windows(2)
            .all(|w| w[1] >= w[0] + (1.0 - 1e-9f64).ln());
    if non_decreasing {
        return IntegralBehaviour::Diverges;
    }
    if *tail.last().unwrap() <= TAIL_NEGLIGIBLE.ln() + last {
        return IntegralBehaviour::Converges;
    }
    IntegralBehaviour::Inconclusive
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> (Vec<f64>, f64) {
        let h = (b - a) / n as f64;
        ((0..=n).map(|i| f(a + i as f64 * h)).collect(), h)
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let (v, h) = samples(|x| 1.0 + x - 2.0 * x * x + x.powi(3), -1.0, 2.0, 6);
        let exact = |x: f64| x + x * x / 2.0 - 2.0 * x.powi(3) / 3.0 + x.powi(4) / 4.0;
        assert!((simpson(&v, h) - (exact(2.0) - exact(-1.0))).abs() < 1e-13);
    }

    #[test]
    fn richardson_estimate_bounds_the_error() {
        let (v, h) = samples(|x| (-x * x).exp(), -8.0, 8.0, 256);
        let (val, err) = simpson_richardson(&v, h);
        let exact = std::f64::consts::PI.sqrt();
        assert!((val - exact).abs() < 1e-9);
        assert!(err < 1e-12);
        let (v, h) = samples(|x| x.powi(6), 0.0, 1.0, 8);
        let (val, err) = simpson_richardson(&v, h);
        assert!((val - 1.0 / 7.0).abs() <= 1.5 * err);
    }

    #[test]
    fn cumulative_tracks_antiderivative_at_every_node() {
        let (v, h) = samples(f64::cos, 0.0, 3.0, 300);
        let c = cumulative(&v, h);
        for (i, ci) in c.iter().enumerate() {
            assert!((ci - (i as f64 * h).sin()).abs() < 1e-9, "node {i}");
        }
        let r = cumulative_from_right(&v, h);
        assert!((r[0] - 3f64.sin()).abs() < 1e-10);
        assert_eq!(*r.last().unwrap(), 0.0);
    }

    #[test]
    fn log_simpson_handles_huge_exponents() {
        let (v, h) = samples(|x| 1000.0 - x * x, -10.0, 10.0, 400);
        let l = log_simpson(&v, h);
        assert!((l - (1000.0 + 0.5 * std::f64::consts::PI.ln())).abs() < 1e-9);
        assert!((log_add(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn classifier_separates_growth_patterns() {
        let k = 40;
        let linear: Vec<f64> = (1..=k).map(|j| (j as f64).ln()).collect();
        assert_eq!(classify_partials(&linear, 1e8), IntegralBehaviour::Diverges);
        let gauss: Vec<f64> = (1..=k)
            .map(|j| (statrs::function::erf::erf(j as f64 / 4.0)).ln())
            .collect();
        assert_eq!(classify_partials(&gauss, 1e8), IntegralBehaviour::Converges);
        let huge: Vec<f64> = (1..=k).map(|j| (j * j) as f64).collect();
        assert_eq!(classify_partials(&huge, 1e8), IntegralBehaviour::Diverges);
        // slowly converging tail: 1 - 1/j
        let slow: Vec<f64> = (1..=k).map(|j| (2.0 - 1.0 / j as f64).ln()).collect();
        assert_eq!(classify_partials(&slow, 1e8), IntegralBehaviour::Inconclusive);
    }
}
