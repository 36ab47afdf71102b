//! Monte Carlo estimators: ergodic averages for γ, the two-point focusing
//! rate, sharp-flow exit probabilities and occupation measures.

mod ks;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

pub use ks::{
    ks_critical_one_sample, ks_critical_two_sample, ks_distance, ks_two_sample, linear_cdf,
    KS_C_ONE_PERCENT,
};

use crate::coeffs::DiffusionModel;
use crate::error::{Error, Result};
use crate::flow::{advance, step_one, Direction, Ensemble, Scheme, StepOptions};
use crate::measures::MeasureTable;
use crate::noise::{grid_steps, NoisePath, Side};

pub const BATCHES: usize = 20;
/// Burn-in in units of 1/γ.
pub const BURN_IN_FOCUSING_TIMES: f64 = 10.0;
/// Exit-probability horizon in units of 1/γ.
pub const EXIT_HORIZON_FOCUSING_TIMES: f64 = 50.0;
/// Largest undecided fraction accepted by [`exit_probability`].
pub const MAX_UNDECIDED: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
    pub method: String,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EstimateReport {
    fn new(method: &str, value: f64, std_error: f64, n: usize) -> Self {
        Self {
            value,
            std_error,
            n,
            method: method.to_string(),
            diagnostics: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

/// Mean and batch-means standard error over `batches` equal consecutive batches.
pub fn batch_means(values: &[f64], batches: usize) -> Result<(f64, f64)> {
    let size = values.len() / batches;
    if batches < 2 || size == 0 {
        return Err(Error::InvalidArgument(format!(
            "need at least {batches} samples for batch means (got {})",
            values.len()
        )));
    }
    let used = &values[values.len() - size * batches..];
    let means: Vec<f64> = used.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok((mean, (var / batches as f64).sqrt()))
}

/// Mean and standard error of independent values.
pub fn mean_and_se(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

fn burn_in_or_default(table: &MeasureTable, burn_in: Option<f64>, feature: &'static str) -> Result<(f64, f64)> {
    let gamma = table.gamma.finite(feature)?;
    Ok((gamma, burn_in.unwrap_or(BURN_IN_FOCUSING_TIMES / gamma)))
}

/// Time average of 2m²/σ²(X_t) along one forward path from 0 after burn-in.
pub fn gamma_birkhoff(
    model: &DiffusionModel,
    table: &MeasureTable,
    seed: u64,
    dt: f64,
    t: f64,
    burn_in: Option<f64>,
) -> Result<EstimateReport> {
    let (_, burn) = burn_in_or_default(table, burn_in, "gamma_birkhoff")?;
    let n = grid_steps(t, dt)?;
    let n_burn = (burn / dt).ceil() as usize;
    if n_burn >= n {
        return Err(Error::InvalidArgument(format!("horizon {t} does not exceed burn-in {burn}")));
    }
    let mut path = NoisePath::new(seed, dt)?;
    path.extend(Side::Plus, n)?;
    let mut ens = Ensemble::new(&[0.0], dt);
    advance(model, &path.view(), &mut ens, n_burn, Direction::Forward, StepOptions::default())?;
    let view = path.view();
    let mut x = ens.x[0];
    let mut values = Vec::with_capacity(n - n_burn);
    for k in n_burn..n {
        let l = model.local(x);
        let r = l.m / l.sigma;
        values.push(2.0 * r * r);
        x = step_one(model, x, view.get(k as i64), dt, 1.0, Scheme::Milstein, false).0;
        if !x.is_finite() {
            return Err(Error::Overflow { member: 0, step: k });
        }
    }
    let (mean, se) = batch_means(&values, BATCHES)?;
    Ok(EstimateReport::new("birkhoff", mean, se, values.len())
        .with("burn_in", burn)
        .with("batches", BATCHES as f64))
}

/// Least-squares line through (t, y); returns (slope, slope standard error, R²).
pub fn linear_fit(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
    let sty: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let sse: f64 = t.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    let se = if t.len() > 2 { (sse / (n - 2.0) / stt).sqrt() } else { 0.0 };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    (slope, se, r2)
}

/// Trajectory of ln(s(X_t(b)) − s(X_t(a))) under shared noise.
#[derive(Debug, Clone, Serialize)]
pub struct GapTrace {
    pub times: Vec<f64>,
    pub ln_gap: Vec<f64>,
    /// Time at which the x-gap fell to the floor and the one-point
    /// log-derivative continuation took over (None if it never did).
    pub switch_time: Option<f64>,
}

/// Relative x-gap below which the pair is followed through one member's derivative.
pub const GAP_FLOOR: f64 = 1e-9;

/// Records the scale-metric gap between two shared-noise trajectories at every step.
pub fn gap_trace(
    model: &DiffusionModel,
    table: &MeasureTable,
    path: &NoisePath,
    a: f64,
    b: f64,
    n_steps: usize,
) -> Result<GapTrace> {
    if !(a < b) {
        return Err(Error::InvalidArgument(format!("need a < b (got {a}, {b})")));
    }
    let view = path.view();
    view.check(0, n_steps)?;
    let dt = path.dt();
    let (mut xa, mut xb) = (a, b);
    let mut continuation: Option<f64> = None; // ln of the x-gap
    let mut times = Vec::with_capacity(n_steps);
    let mut ln_gap = Vec::with_capacity(n_steps);
    let mut switch_time = None;
    for k in 0..n_steps {
        let db = view.get(k as i64);
        match continuation.as_mut() {
            None => {
                xa = step_one(model, xa, db, dt, 1.0, Scheme::Milstein, false).0;
                xb = step_one(model, xb, db, dt, 1.0, Scheme::Milstein, false).0;
                if !(xa.is_finite() && xb.is_finite()) {
                    return Err(Error::Overflow { member: 0, step: k });
                }
                let gap = xb - xa;
                if gap <= GAP_FLOOR * xa.abs().max(1.0) {
                    if gap <= 0.0 {
                        return Err(Error::NonConvergence(format!(
                            "pair lost order at step {k}; reduce dt"
                        )));
                    }
                    continuation = Some(gap.ln());
                    switch_time = Some((k + 1) as f64 * dt);
                }
            }
            Some(ln_dx) => {
                let (next, d) = step_one(model, xa, db, dt, 1.0, Scheme::Milstein, true);
                if d <= 0.0 {
                    return Err(Error::NonConvergence(format!(
                        "flow derivative not positive at step {k}; reduce dt"
                    )));
                }
                *ln_dx += d.ln();
                xa = next;
            }
        }
        let lg = match continuation {
            None => table.ln_scale_gap(xa, xb),
            Some(ln_dx) => ln_dx + table.ln_s_prime_at(xa),
        };
        times.push((k + 1) as f64 * dt);
        ln_gap.push(lg);
    }
    Ok(GapTrace {
        times,
        ln_gap,
        switch_time,
    })
}

/// Slope of ln(B_t − A_t) over [T/2, T] for one path, expected near −γ.
pub fn two_point_rate(
    model: &DiffusionModel,
    table: &MeasureTable,
    seed: u64,
    dt: f64,
    a: f64,
    b: f64,
    t: f64,
) -> Result<EstimateReport> {
    let gamma = table.gamma.finite("two_point_rate")?;
    if t < 20.0 / gamma - 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "horizon {t} is shorter than 20/gamma = {}",
            20.0 / gamma
        )));
    }
    let n = grid_steps(t, dt)?;
    let mut path = NoisePath::new(seed, dt)?;
    path.extend(Side::Plus, n)?;
    let trace = gap_trace(model, table, &path, a, b, n)?;
    let half = n / 2;
    let (ts, ys) = (&trace.times[half..], &trace.ln_gap[half..]);
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonConvergence("gap left the tabulated window".into()));
    }
    let (slope, se, r2) = linear_fit(ts, ys);
    let mut report = EstimateReport::new("two_point", slope, se, ts.len())
        .with("r_squared", r2)
        .with("fit_start", ts[0])
        .with("final_ln_gap", *ys.last().unwrap());
    if let Some(s) = trace.switch_time {
        report = report.with("switch_time", s);
    }
    Ok(report)
}

/// Mean of per-seed two-point slopes with the standard error across seeds.
pub fn two_point_rate_seeds(
    model: &DiffusionModel,
    table: &MeasureTable,
    seeds: &[u64],
    dt: f64,
    a: f64,
    b: f64,
    t: f64,
) -> Result<(EstimateReport, Vec<EstimateReport>)> {
    let per: Vec<EstimateReport> = seeds
        .par_iter()
        .map(|&s| two_point_rate(model, table, s, dt, a, b, t))
        .collect::<Result<_>>()?;
    let slopes: Vec<f64> = per.iter().map(|r| r.value).collect();
    let (mean, se) = mean_and_se(&slopes)?;
    Ok((EstimateReport::new("two_point_mean", mean, se, seeds.len()), per))
}

/// Fraction of sharp paths from each x₀ that escape to +∞, one shared path per
/// sample so all probes see the same noise. Paths use seeds seed0, seed0+1, ….
#[allow(clippy::too_many_arguments)]
pub fn exit_probability(
    model: &DiffusionModel,
    table: &MeasureTable,
    x0s: &[f64],
    n_paths: usize,
    horizon: f64,
    seed0: u64,
    dt: f64,
    escape_threshold: f64,
) -> Result<Vec<EstimateReport>> {
    if n_paths == 0 || x0s.is_empty() {
        return Err(Error::EmptySample);
    }
    let n_max = grid_steps(horizon, dt)?;
    const CHUNK: usize = 1000;
    let run = |p: usize| -> Result<Vec<i8>> {
        let mut path = NoisePath::new(seed0.wrapping_add(p as u64), dt)?;
        let mut ens = Ensemble::new(x0s, dt);
        let opts = StepOptions {
            escape_threshold: Some(escape_threshold),
            ..StepOptions::default()
        };
        while ens.steps < n_max && ens.status.iter().any(|s| s.is_alive()) {
            let take = CHUNK.min(n_max - ens.steps);
            path.extend(Side::Plus, ens.steps + take)?;
            advance(model, &path.view(), &mut ens, take, Direction::Sharp, opts)?;
        }
        Ok(ens.status.iter().map(|s| s.escape_sign().unwrap_or(0)).collect())
    };
    let signs: Vec<Vec<i8>> = (0..n_paths).into_par_iter().map(run).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(x0s.len());
    for (j, &x0) in x0s.iter().enumerate() {
        let plus = signs.iter().filter(|s| s[j] == 1).count();
        let undecided = signs.iter().filter(|s| s[j] == 0).count();
        let n = n_paths as f64;
        let p = plus as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        let und = undecided as f64 / n;
        if und > MAX_UNDECIDED {
            return Err(Error::NonConvergence(format!(
                "{:.2}% of sharp paths from x0 = {x0} undecided by t = {horizon}",
                100.0 * und
            )));
        }
        let cdf = table.pi_cdf_at(x0);
        let z = if se > 0.0 { (p - cdf) / se } else { 0.0 };
        out.push(
            EstimateReport::new("exit_probability", p, se, n_paths)
                .with("x0", x0)
                .with("undecided_fraction", und)
                .with("pi_cdf", cdf)
                .with("z_score", z)
                .with("horizon", horizon),
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupationReport {
    /// KS distance between thinned samples and the invariant CDF.
    pub ks: EstimateReport,
    pub samples: Vec<f64>,
    /// (bin centre, empirical density, invariant density)
    pub histogram: Vec<(f64, f64, f64)>,
}

/// Thinned samples of one forward path against the invariant law.
pub fn occupation_vs_invariant(
    model: &DiffusionModel,
    table: &MeasureTable,
    seed: u64,
    dt: f64,
    t: f64,
    n_bins: usize,
) -> Result<OccupationReport> {
    let (gamma, burn) = burn_in_or_default(table, None, "occupation_vs_invariant")?;
    let n = grid_steps(t, dt)?;
    let stride = ((1.0 / gamma) / dt).round().max(1.0) as usize;
    let n_burn = (burn / dt).ceil() as usize;
    if t < 100.0 / gamma - 1e-9 || n_bins == 0 {
        return Err(Error::InvalidArgument(format!(
            "occupation needs T >= 100/gamma = {} and at least one bin",
            100.0 / gamma
        )));
    }
    let mut path = NoisePath::new(seed, dt)?;
    path.extend(Side::Plus, n)?;
    let view = path.view();
    let lo = quantile_of(table, 1e-4);
    let hi = -quantile_of_right(table, 1e-4);
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    let mut x = 0.0;
    let mut samples = Vec::new();
    for k in 0..n {
        x = step_one(model, x, view.get(k as i64), dt, 1.0, Scheme::Milstein, false).0;
        if !x.is_finite() {
            return Err(Error::Overflow { member: 0, step: k });
        }
        let done = k + 1;
        if done <= n_burn {
            continue;
        }
        // the histogram uses every post-burn-in step, the KS sample is thinned
        if x >= lo && x < hi {
            counts[(((x - lo) / width) as usize).min(n_bins - 1)] += 1;
        }
        if (done - n_burn) % stride == 0 {
            samples.push(x);
        }
    }
    let d = ks_distance(&samples, |y| table.pi_cdf_at(y))?;
    let total = (n - n_burn) as f64;
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let centre = lo + (i as f64 + 0.5) * width;
            (centre, c as f64 / (total * width), table.pi_pdf_at(centre))
        })
        .collect();
    let ks = EstimateReport::new("occupation_ks", d, 0.0, samples.len())
        .with("ks_statistic", d)
        .with("burn_in", burn)
        .with("stride", stride as f64 * dt);
    Ok(OccupationReport {
        ks,
        samples,
        histogram,
    })
}

fn quantile_of(table: &MeasureTable, p: f64) -> f64 {
    let i = table.pi_cdf.partition_point(|&c| c < p);
    table.grid[i.min(table.grid.len() - 1)]
}

/// Negated upper quantile: −x where Π([x, ∞)) first drops below p.
fn quantile_of_right(table: &MeasureTable, p: f64) -> f64 {
    let i = table.pi_sf.partition_point(|&c| c >= p);
    -table.grid[i.min(table.grid.len() - 1)]
}

/// Local maxima of a density histogram refined by a parabola through the
/// log-density at the highest bin on each side of 0 and its neighbours.
pub fn histogram_peaks(histogram: &[(f64, f64, f64)], half_width: usize) -> Vec<f64> {
    let mut peaks = Vec::new();
    for positive in [false, true] {
        let idx: Vec<usize> = (0..histogram.len())
            .filter(|&i| (histogram[i].0 > 0.0) == positive)
            .collect();
        let Some(&best) = idx.iter().max_by(|&&a, &&b| histogram[a].1.total_cmp(&histogram[b].1)) else {
            continue;
        };
        let from = best.saturating_sub(half_width);
        let to = (best + half_width).min(histogram.len() - 1);
        let pts: Vec<(f64, f64)> = (from..=to)
            .filter(|&i| histogram[i].1 > 0.0)
            .map(|i| (histogram[i].0, histogram[i].1.ln()))
            .collect();
        peaks.push(parabola_vertex(&pts).unwrap_or(histogram[best].0));
    }
    peaks
}

/// Vertex of the least-squares parabola through the points, if it opens downward.
fn parabola_vertex(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    // normal equations in u = x − xm
    let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
    let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
    for &(x, y) in pts {
        let u = x - xm;
        s1 += u;
        s2 += u * u;
        s3 += u * u * u;
        s4 += u * u * u * u;
        t0 += y;
        t1 += u * y;
        t2 += u * u * y;
    }
    let m = [[n, s1, s2], [s1, s2, s3], [s2, s3, s4]];
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut mb = m;
    let mut mc = m;
    for (r, t) in [t0, t1, t2].iter().enumerate() {
        mb[r][1] = *t;
        mc[r][2] = *t;
    }
    let (b, c) = (det(mb) / d, det(mc) / d);
    (c < 0.0).then(|| xm - b / (2.0 * c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_means_of_constant_series() {
        let v = vec![2.0; 400];
        assert_eq!(batch_means(&v, 20).unwrap(), (2.0, 0.0));
        assert!(batch_means(&v[..10], 20).is_err());
    }

    #[test]
    fn linear_fit_recovers_line() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|v| 3.0 - 1.5 * v).collect();
        let (s, se, r2) = linear_fit(&t, &y);
        assert!((s + 1.5).abs() < 1e-12 && se < 1e-10 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parabola_vertex_is_exact_for_parabolas() {
        let pts: Vec<(f64, f64)> = (0..7).map(|i| {
            let x = 0.7 + 0.1 * i as f64;
            (x, -(x - 1.03f64).powi(2))
        }).collect();
        assert!((parabola_vertex(&pts).unwrap() - 1.03).abs() < 1e-9);
    }
}
