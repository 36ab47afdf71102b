//! Kolmogorov–Smirnov statistics.

use crate::error::{Error, Result};

/// 1% critical value coefficient of the KS distribution.
pub const KS_C_ONE_PERCENT: f64 = 1.63;

/// sup |F_n − F| over the sorted sample, counting both one-sided deviations.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        d = d.max(above).max(below);
    }
    Ok(d)
}

/// Piecewise-linear CDF through (grid, values); 0 left of the grid, 1 right of it.
pub fn linear_cdf<'a>(grid: &'a [f64], values: &'a [f64]) -> impl Fn(f64) -> f64 + 'a {
    move |x| {
        if x <= grid[0] {
            return 0.0;
        }
        if x >= grid[grid.len() - 1] {
            return 1.0;
        }
        let j = grid.partition_point(|&g| g <= x);
        let (x0, x1) = (grid[j - 1], grid[j]);
        let w = (x - x0) / (x1 - x0);
        values[j - 1] + w * (values[j] - values[j - 1])
    }
}

/// Two-sample statistic sup |F_n − G_m|.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

pub fn ks_critical_one_sample(n: usize) -> f64 {
    KS_C_ONE_PERCENT / (n as f64).sqrt()
}

pub fn ks_critical_two_sample(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    KS_C_ONE_PERCENT * ((n + m) / (n * m)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(x: f64) -> f64 {
        x.clamp(0.0, 1.0)
    }

    #[test]
    fn single_sample() {
        assert_eq!(ks_distance(&[0.5], uniform).unwrap(), 0.5);
        assert!(matches!(ks_distance(&[], uniform), Err(Error::EmptySample)));
    }

    #[test]
    fn exact_quantiles() {
        let n = 40;
        let s: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        assert!((ks_distance(&s, uniform).unwrap() - 0.5 / n as f64).abs() < 1e-15);
    }

    #[test]
    fn linear_interpolation() {
        let f = linear_cdf(&[0.0, 1.0, 3.0], &[0.0, 0.5, 1.0]);
        assert_eq!(f(-1.0), 0.0);
        assert_eq!(f(0.5), 0.25);
        assert_eq!(f(2.0), 0.75);
        assert_eq!(f(5.0), 1.0);
    }

    #[test]
    fn two_sample_basics() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 1.0);
        assert!((ks_critical_two_sample(100, 100) - 1.63 * 0.02f64.sqrt()).abs() < 1e-15);
    }
}
