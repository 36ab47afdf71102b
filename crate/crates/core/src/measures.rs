//! Tabulated invariant measure, scale and speed measures of a diffusion and
//! of its sharp dual, the focusing rate γ, boundary behaviour and the
//! spectral-gap bound.
//!
//! With I(x) = ∫₀ˣ 2m/σ² and Λ = ∫ σ⁻¹e^{I}:
//!
//! * ψ² = Λ σ e^{−I}; the invariant density is ψ⁻²,
//! * scale density s′ = ψ²/σ², speed density μ′ = 2ψ⁻²,
//! * the sharp diffusion has scale density s♯′ = μ′ and speed density μ♯′ = s′.
//!
//! Everything is held in log form where it can overflow. All integrals over ℝ
//! are truncated to [−W, W].

use serde::Serialize;

use crate::coeffs::{CoefficientFunction, DiffusionModel, DEFAULT_DIVERGENCE_CUTOFF};
use crate::error::{Error, Result};
use crate::quadrature::{cumulative, cumulative_from_right, log_add, log_simpson, simpson_richardson};

pub const DEFAULT_N_GRID: usize = 16384;
/// Relative tolerance on every Richardson error estimate.
pub const QUADRATURE_TOL: f64 = 1e-9;
/// Tail mass that defines the model's numerical infinity.
pub const ESCAPE_TAIL_MASS: f64 = 1e-12;
/// Allowed relative disagreement between the two γ formulas.
pub const GAMMA_AGREEMENT: f64 = 1e-6;
/// Windows probed by [`boundary_classification`].
pub const BOUNDARY_WINDOWS: [f64; 5] = [2.5, 5.0, 10.0, 20.0, 40.0];

/// Focusing rate; an infinite value is a distinct state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "state", content = "value", rename_all = "snake_case")]
pub enum Gamma {
    Finite(f64),
    Infinite,
}

impl Gamma {
    /// The finite value, or an error naming the feature that needed it.
    pub fn finite(self, feature: &'static str) -> Result<f64> {
        match self {
            Gamma::Finite(g) => Ok(g),
            Gamma::Infinite => Err(Error::GammaInfinite(feature)),
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Gamma::Finite(_))
    }

    fn from_integral(value: f64) -> Self {
        if value.is_finite() && value <= DEFAULT_DIVERGENCE_CUTOFF {
            Gamma::Finite(value)
        } else {
            Gamma::Infinite
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeasureTable {
    pub window: f64,
    /// Grid spacing; the grid is x_i = (i − n/2)·h, i = 0..=n.
    pub h: f64,
    pub grid: Vec<f64>,
    pub lambda: f64,
    pub ln_sigma: Vec<f64>,
    /// I(x) = ∫₀ˣ 2m/σ²
    pub inner: Vec<f64>,
    pub ln_psi2: Vec<f64>,
    pub ln_s_prime: Vec<f64>,
    d_ln_s_prime: Vec<f64>,
    /// Scale function, s(0) = 0; saturates to ±∞ where it overflows.
    pub s: Vec<f64>,
    pub ln_pdf: Vec<f64>,
    d_ln_pdf: Vec<f64>,
    /// Π((−W, x]) accumulated from the left.
    pub pi_cdf: Vec<f64>,
    /// Π([x, W)) accumulated from the right, accurate deep in the right tail.
    pub pi_sf: Vec<f64>,
    /// ln s♯′, computed from the sharp Itô drift independently of ψ².
    pub ln_sharp_scale_prime: Vec<f64>,
    /// s♯, s♯(0) = 0.
    pub sharp_scale: Vec<f64>,
    /// ∫ dμ♯ over [0, x]; saturates where it overflows.
    pub sharp_speed: Vec<f64>,
    /// ∫_{−W}^{W} ds♯
    pub sharp_scale_mass: f64,
    /// ∫_{−W}^{W} dμ
    pub speed_mass: f64,
    pub gamma: Gamma,
    /// γ from the ψ′/ψ form, for the agreement check.
    pub gamma_alt: Gamma,
    /// Largest Richardson relative error estimate met while building.
    pub quadrature_error: f64,
}

fn cumulative_from_center(values: &[f64], h: f64, saturate: bool) -> Vec<f64> {
    let n = values.len() - 1;
    let c = n / 2;
    let right = cumulative(&values[c..], h);
    let left_rev: Vec<f64> = values[..=c].iter().rev().copied().collect();
    let left = cumulative(&left_rev, h);
    let mut out = vec![0.0; n + 1];
    for (k, v) in right.iter().enumerate() {
        out[c + k] = *v;
    }
    for (k, v) in left.iter().enumerate() {
        out[c - k] = -v;
    }
    if saturate {
        // a positive integrand gives a strictly monotone integral; anything else is overflow
        for i in c + 1..=n {
            if !(out[i].is_finite() && out[i] >= out[i - 1]) {
                out[i] = f64::INFINITY;
            }
        }
        for i in (0..c).rev() {
            if !(out[i].is_finite() && out[i] <= out[i + 1]) {
                out[i] = f64::NEG_INFINITY;
            }
        }
    }
    out
}

/// ∫ exp(log_values) with a Richardson check, returned as (ln value, relative error).
fn log_integral(log_values: &[f64], h: f64) -> (f64, f64) {
    let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return (max, 0.0);
    }
    let shifted: Vec<f64> = log_values.iter().map(|l| (l - max).exp()).collect();
    let (v, err) = simpson_richardson(&shifted, h);
    (v.ln() + max, err / v)
}

/// ∫ values with a Richardson check, returned as (value, error relative to ∫|values|).
fn integral(values: &[f64], h: f64) -> (f64, f64) {
    let (v, err) = simpson_richardson(values, h);
    let l1 = values.iter().map(|x| x.abs()).sum::<f64>() * h;
    (v, err / l1.max(f64::MIN_POSITIVE))
}

fn checked(quantity: &'static str, (value, rel): (f64, f64), worst: &mut f64) -> Result<f64> {
    if rel.is_finite() {
        *worst = worst.max(rel);
    }
    if rel > QUADRATURE_TOL {
        return Err(Error::Quadrature {
            quantity,
            estimate: rel,
        });
    }
    Ok(value)
}

/// Derivative of tabulated values by a five-point stencil, one-sided near the ends.
fn stencil_derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            if i >= 2 && i + 2 < n {
                (values[i - 2] - 8.0 * values[i - 1] + 8.0 * values[i + 1] - values[i + 2])
                    / (12.0 * h)
            } else if i + 2 < n {
                (-3.0 * values[i] + 4.0 * values[i + 1] - values[i + 2]) / (2.0 * h)
            } else {
                (3.0 * values[i] - 4.0 * values[i - 1] + values[i - 2]) / (2.0 * h)
            }
        })
        .collect()
}

/// Tabulates every measure of the model on [−window, window].
///
/// `n_grid` is the number of intervals; it must be a multiple of 4 and at least 1000.
pub fn build_measures(model: &DiffusionModel, window: f64, n_grid: usize) -> Result<MeasureTable> {
    if !model.is_positive_recurrent() {
        return Err(Error::NotRecurrent(format!(
            "recurrence not validated ({:?})",
            model.status()
        )));
    }
    if n_grid < 1000 || n_grid % 4 != 0 {
        return Err(Error::InvalidArgument(format!(
            "n_grid must be a multiple of 4 and at least 1000 (got {n_grid})"
        )));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::InvalidArgument(format!("window must be positive (got {window})")));
    }
    let n = n_grid;
    let c = n / 2;
    let h = 2.0 * window / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| (i as f64 - c as f64) * h).collect();
    let mut worst = 0.0f64;

    let sig: Vec<f64> = grid.iter().map(|&x| model.sigma(x)).collect();
    let dsig: Vec<f64> = grid.iter().map(|&x| model.dsigma(x)).collect();
    let m: Vec<f64> = grid.iter().map(|&x| model.m(x)).collect();
    let ln_sigma: Vec<f64> = sig.iter().map(|s| s.ln()).collect();
    let di: Vec<f64> = m.iter().zip(&sig).map(|(m, s)| 2.0 * m / (s * s)).collect();
    let inner = cumulative_from_center(&di, h, false);

    let ln_lambda_integrand: Vec<f64> = inner.iter().zip(&ln_sigma).map(|(i, l)| i - l).collect();
    let ln_lambda = checked("lambda", log_integral(&ln_lambda_integrand, h), &mut worst)?;
    let lambda = ln_lambda.exp();

    let ln_psi2: Vec<f64> = inner.iter().zip(&ln_sigma).map(|(i, l)| ln_lambda + l - i).collect();
    let ln_s_prime: Vec<f64> = inner.iter().zip(&ln_sigma).map(|(i, l)| ln_lambda - i - l).collect();
    let d_ln_s_prime: Vec<f64> = (0..=n).map(|i| -di[i] - dsig[i] / sig[i]).collect();
    let s_prime: Vec<f64> = ln_s_prime.iter().map(|l| l.exp()).collect();
    let s = cumulative_from_center(&s_prime, h, true);

    let ln_pdf: Vec<f64> = ln_lambda_integrand.iter().map(|l| l - ln_lambda).collect();
    let d_ln_pdf: Vec<f64> = (0..=n).map(|i| di[i] - dsig[i] / sig[i]).collect();
    let pdf: Vec<f64> = ln_pdf.iter().map(|l| l.exp()).collect();
    let pi_cdf = cumulative(&pdf, h);
    let pi_sf = cumulative_from_right(&pdf, h);
    let speed_mass = 2.0 * checked("speed mass", integral(&pdf, h), &mut worst)?;

    // sharp scale from the Itô drift q♯ = −m + ½σσ′: s♯′ ∝ exp(−∫₀ˣ 2q♯/σ²)
    let dj: Vec<f64> = (0..=n)
        .map(|i| 2.0 * (-m[i] + 0.5 * sig[i] * dsig[i]) / (sig[i] * sig[i]))
        .collect();
    let j = cumulative_from_center(&dj, h, false);
    let ln_sharp_scale_prime: Vec<f64> = j
        .iter()
        .map(|j| 2f64.ln() - ln_lambda - ln_sigma[c] - j)
        .collect();
    let sharp_prime: Vec<f64> = ln_sharp_scale_prime.iter().map(|l| l.exp()).collect();
    let sharp_scale = cumulative_from_center(&sharp_prime, h, true);
    let sharp_scale_mass = checked("sharp scale mass", integral(&sharp_prime, h), &mut worst)?;
    let sharp_speed_prime: Vec<f64> = (0..=n)
        .map(|i| (2f64.ln() - 2.0 * ln_sigma[i] - ln_sharp_scale_prime[i]).exp())
        .collect();
    let sharp_speed = cumulative_from_center(&sharp_speed_prime, h, true);

    let mut table = MeasureTable {
        window,
        h,
        grid,
        lambda,
        ln_sigma,
        inner,
        ln_psi2,
        ln_s_prime,
        d_ln_s_prime,
        s,
        ln_pdf,
        d_ln_pdf,
        pi_cdf,
        pi_sf,
        ln_sharp_scale_prime,
        sharp_scale,
        sharp_speed,
        sharp_scale_mass,
        speed_mass,
        gamma: Gamma::Infinite,
        gamma_alt: Gamma::Infinite,
        quadrature_error: worst,
    };
    let (g, g_alt) = gamma_forms(&table, model)?;
    table.gamma = g;
    table.gamma_alt = g_alt;
    check_gamma_agreement(g, g_alt)?;
    Ok(table)
}

/// Both γ formulas: 2∫m²/σ² dΠ and ½∫(1/s′)(σ′/σ − 2ψ′/ψ)², the latter with
/// ψ′/ψ taken from the tabulated ln ψ² by finite differences.
pub fn gamma_forms(table: &MeasureTable, model: &DiffusionModel) -> Result<(Gamma, Gamma)> {
    let h = table.h;
    let primary: Vec<f64> = table
        .grid
        .iter()
        .zip(&table.ln_pdf)
        .map(|(&x, lp)| {
            let (m, s) = (model.m(x), model.sigma(x));
            2.0 * m * m / (s * s) * lp.exp()
        })
        .collect();
    let d_ln_psi2 = stencil_derivative(&table.ln_psi2, h);
    let alternative: Vec<f64> = table
        .grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let r = model.dsigma(x) / model.sigma(x) - d_ln_psi2[i];
            let w = (-table.ln_s_prime[i]).exp();
            if w == 0.0 {
                0.0
            } else {
                0.5 * w * r * r
            }
        })
        .collect();
    let mut worst = 0.0;
    let g = integral(&primary, h);
    let g_alt = integral(&alternative, h);
    let g = if g.0.is_finite() && g.0 <= DEFAULT_DIVERGENCE_CUTOFF {
        checked("gamma", g, &mut worst)?
    } else {
        f64::INFINITY
    };
    let g_alt = if g_alt.0.is_finite() && g_alt.0 <= DEFAULT_DIVERGENCE_CUTOFF {
        checked("gamma (alternative form)", g_alt, &mut worst)?
    } else {
        f64::INFINITY
    };
    Ok((Gamma::from_integral(g), Gamma::from_integral(g_alt)))
}

fn check_gamma_agreement(g: Gamma, g_alt: Gamma) -> Result<()> {
    match (g, g_alt) {
        (Gamma::Finite(a), Gamma::Finite(b)) => {
            let rel = (a - b).abs() / a.abs().max(f64::MIN_POSITIVE);
            if rel > GAMMA_AGREEMENT && (a - b).abs() > 1e-12 {
                return Err(Error::Quadrature {
                    quantity: "gamma formula agreement",
                    estimate: rel,
                });
            }
            Ok(())
        }
        (Gamma::Infinite, Gamma::Infinite) => Ok(()),
        _ => Err(Error::Quadrature {
            quantity: "gamma formula agreement",
            estimate: f64::INFINITY,
        }),
    }
}

/// γ = 2∫m²/σ² dΠ, after checking it against the alternative formula.
pub fn gamma_quadrature(table: &MeasureTable, model: &DiffusionModel) -> Result<Gamma> {
    let (g, g_alt) = gamma_forms(table, model)?;
    check_gamma_agreement(g, g_alt)?;
    Ok(g)
}

fn hermite(x0: f64, h: f64, values: &[f64], derivs: &[f64], x: f64) -> f64 {
    let n = values.len() - 1;
    let u = (x - x0) / h;
    let i = (u.floor().max(0.0) as usize).min(n - 1);
    let t = u - i as f64;
    let (y0, y1) = (values[i], values[i + 1]);
    let (d0, d1) = (derivs[i] * h, derivs[i + 1] * h);
    if t == 0.0 {
        return y0;
    }
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * d1
}

impl MeasureTable {
    pub fn n_intervals(&self) -> usize {
        self.grid.len() - 1
    }

    fn x0(&self) -> f64 {
        self.grid[0]
    }

    /// Index of the grid node closest to x (clamped).
    pub fn nearest_index(&self, x: f64) -> usize {
        let u = ((x - self.x0()) / self.h).round();
        (u.max(0.0) as usize).min(self.n_intervals())
    }

    pub fn pi_pdf(&self, i: usize) -> f64 {
        self.ln_pdf[i].exp()
    }

    pub fn pi_pdf_at(&self, x: f64) -> f64 {
        if x.abs() > self.window {
            return 0.0;
        }
        hermite(self.x0(), self.h, &self.ln_pdf, &self.d_ln_pdf, x).exp()
    }

    /// Invariant CDF at x, using the right-tail table where it is more accurate.
    pub fn pi_cdf_at(&self, x: f64) -> f64 {
        if x <= -self.window {
            return 0.0;
        }
        if x >= self.window {
            return 1.0;
        }
        if x > 0.0 {
            return 1.0 - self.pi_sf_at(x);
        }
        self.interp_positive(&self.pi_cdf, x, false)
    }

    /// Π([x, ∞)).
    pub fn pi_sf_at(&self, x: f64) -> f64 {
        if x <= -self.window {
            return 1.0;
        }
        if x >= self.window {
            return 0.0;
        }
        if x < 0.0 {
            return 1.0 - self.pi_cdf_at(x);
        }
        self.interp_positive(&self.pi_sf, x, true)
    }

    /// Hermite interpolation of a cumulative table whose derivative is ±pdf.
    fn interp_positive(&self, values: &[f64], x: f64, decreasing: bool) -> f64 {
        let u = (x - self.x0()) / self.h;
        let i = (u.floor().max(0.0) as usize).min(self.n_intervals() - 1);
        let sign = if decreasing { -1.0 } else { 1.0 };
        let d = [sign * self.pi_pdf(i), sign * self.pi_pdf(i + 1)];
        let v = hermite(self.grid[i], self.h, &values[i..=i + 1], &d, x);
        v.clamp(0.0, 1.0)
    }

    /// ln s′(x).
    pub fn ln_s_prime_at(&self, x: f64) -> f64 {
        hermite(self.x0(), self.h, &self.ln_s_prime, &self.d_ln_s_prime, x)
    }

    /// s(x); ±∞ outside the window or where the table saturates.
    pub fn s_at(&self, x: f64) -> f64 {
        if x >= self.window {
            return f64::INFINITY;
        }
        if x <= -self.window {
            return f64::NEG_INFINITY;
        }
        let u = (x - self.x0()) / self.h;
        let i = (u.floor().max(0.0) as usize).min(self.n_intervals() - 1);
        let (a, b) = (self.s[i], self.s[i + 1]);
        if !(a.is_finite() && b.is_finite()) {
            return if x > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        }
        let d = [self.ln_s_prime[i].exp(), self.ln_s_prime[i + 1].exp()];
        hermite(self.grid[i], self.h, &[a, b], &d, x)
    }

    /// s(b) − s(a) for a < b, by quadrature of s′ when the two points are close.
    pub fn ln_scale_gap(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return f64::NEG_INFINITY;
        }
        let gap = b - a;
        if gap <= 8.0 * self.h {
            // Simpson average of s′ over [a, b] in log form
            let mid = 0.5 * (a + b);
            let l = [self.ln_s_prime_at(a), self.ln_s_prime_at(mid), self.ln_s_prime_at(b)];
            let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let avg = (l[0] - max).exp() / 6.0 + 4.0 * (l[1] - max).exp() / 6.0 + (l[2] - max).exp() / 6.0;
            return gap.ln() + max + avg.ln();
        }
        let (sa, sb) = (self.s_at(a), self.s_at(b));
        (sb - sa).ln()
    }

    /// 1.5 × the largest |x| at which a tail of Π still carries mass ≥ 1e-12.
    pub fn escape_threshold(&self) -> f64 {
        let n = self.n_intervals();
        let right = (0..=n)
            .find(|&i| self.grid[i] >= 0.0 && self.pi_sf[i] < ESCAPE_TAIL_MASS)
            .map(|i| self.grid[i])
            .unwrap_or(self.window);
        let left = (0..=n)
            .rev()
            .find(|&i| self.grid[i] <= 0.0 && self.pi_cdf[i] < ESCAPE_TAIL_MASS)
            .map(|i| -self.grid[i])
            .unwrap_or(self.window);
        1.5 * right.max(left)
    }

    /// Π mass outside the window that the table cannot see, estimated from
    /// the first and last CDF values.
    pub fn tail_mass(&self) -> f64 {
        (1.0 - self.pi_cdf[self.n_intervals()]).abs() + self.pi_cdf[0]
    }

    /// Per-interval increments of a cumulative table.
    pub fn increments(values: &[f64]) -> Vec<f64> {
        values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// μ increments, 2·ΔΠ.
    pub fn speed_increments(&self) -> Vec<f64> {
        Self::increments(&self.pi_cdf).into_iter().map(|d| 2.0 * d).collect()
    }

    pub fn scale_increments(&self) -> Vec<f64> {
        Self::increments(&self.s)
    }

    pub fn sharp_scale_increments(&self) -> Vec<f64> {
        Self::increments(&self.sharp_scale)
    }

    pub fn sharp_speed_increments(&self) -> Vec<f64> {
        Self::increments(&self.sharp_speed)
    }

    /// ∫ g dΠ over the grid with a Richardson check.
    pub fn expectation(&self, g: impl Fn(f64) -> f64) -> Result<f64> {
        let vals: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.ln_pdf)
            .map(|(&x, lp)| {
                let p = lp.exp();
                if p == 0.0 {
                    0.0
                } else {
                    g(x) * p
                }
            })
            .collect();
        let mut worst = 0.0;
        checked("expectation", integral(&vals, self.h), &mut worst)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundarySide {
    /// ln of ∫ ds♯(y) ∫ dμ♯(z) toward this boundary, one per window.
    pub log_double_integral: Vec<f64>,
    /// s♯(±W), one per window.
    pub sharp_scale_limit: Vec<f64>,
    pub non_entrance: bool,
    pub sharp_scale_converges: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryReport {
    pub windows: Vec<f64>,
    pub plus: BoundarySide,
    pub minus: BoundarySide,
}

/// ln ∫₀ᵂ s♯′(y) ∫_yᵂ μ♯′(z) dz dy on one side, given log densities ordered from 0 outward.
fn log_double_integral(ln_scale: &[f64], ln_speed: &[f64], h: f64) -> f64 {
    let k = ln_scale.len() - 1;
    let mut ln_r = vec![f64::NEG_INFINITY; k + 1];
    let mut acc = f64::NEG_INFINITY;
    let mut i = k;
    while i >= 2 {
        let (l0, l1, l2) = (ln_speed[i - 2], ln_speed[i - 1], ln_speed[i]);
        let max = l0.max(l1).max(l2);
        let e = |l: f64| (l - max).exp();
        let half = h / 12.0 * (-e(l0) + 8.0 * e(l1) + 5.0 * e(l2));
        ln_r[i - 1] = log_add(acc, half.max(f64::MIN_POSITIVE).ln() + max);
        let panel = h / 3.0 * (e(l0) + 4.0 * e(l1) + e(l2));
        acc = log_add(acc, panel.ln() + max);
        ln_r[i - 2] = acc;
        i -= 2;
    }
    let integrand: Vec<f64> = ln_scale.iter().zip(&ln_r).map(|(a, b)| a + b).collect();
    log_simpson(&integrand, h)
}

/// Truncated non-entrance integrals and sharp scale limits at ±∞.
pub fn boundary_classification(table: &MeasureTable) -> BoundaryReport {
    let n = table.n_intervals();
    let c = n / 2;
    let ln_speed: Vec<f64> = (0..=n)
        .map(|i| 2f64.ln() - 2.0 * table.ln_sigma[i] - table.ln_sharp_scale_prime[i])
        .collect();
    let windows: Vec<f64> = BOUNDARY_WINDOWS
        .iter()
        .copied()
        .filter(|w| *w <= table.window + 1e-12)
        .collect();
    let build = |sign: i64| {
        let mut logs = Vec::new();
        let mut limits = Vec::new();
        for &w in &windows {
            let mut k = (w / table.h).round() as usize;
            k -= k % 2;
            let k = k.min(c);
            let idx = |j: usize| (c as i64 + sign * j as i64) as usize;
            let ls: Vec<f64> = (0..=k).map(|j| table.ln_sharp_scale_prime[idx(j)]).collect();
            let lm: Vec<f64> = (0..=k).map(|j| ln_speed[idx(j)]).collect();
            logs.push(log_double_integral(&ls, &lm, table.h));
            limits.push(table.sharp_scale[idx(k)]);
        }
        let increasing = logs.windows(2).all(|p| p[1] > p[0]);
        let big = logs
            .iter()
            .zip(&windows)
            .any(|(l, w)| *w <= 10.0 + 1e-12 && *l > 1e4f64.ln())
            || logs.last().is_some_and(|l| *l > 1e4f64.ln());
        let k = limits.len();
        let converges = k >= 2 && (limits[k - 1] - limits[k - 2]).abs() < 1e-10;
        BoundarySide {
            log_double_integral: logs,
            sharp_scale_limit: limits,
            non_entrance: increasing && big,
            sharp_scale_converges: converges,
        }
    };
    BoundaryReport {
        plus: build(1),
        minus: build(-1),
        windows,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapConditions {
    /// ∫V² dΠ finite
    pub a: bool,
    /// ∫σ² dΠ finite
    pub b: bool,
    /// γ finite
    pub c: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub gamma: Gamma,
    pub conditions: GapConditions,
    pub beta_shift: Option<f64>,
    pub alpha_norm: Option<f64>,
    /// ∫F dΠ and ∫F² dΠ for the trial function.
    pub f_mean: Option<f64>,
    pub f_second_moment: Option<f64>,
    pub rayleigh_of_f: Option<f64>,
    /// rayleigh_of_F ≤ γ + tolerance, when all conditions hold.
    pub bound_holds: Option<bool>,
}

/// Tolerance in the bound rayleigh_of_F ≤ γ.
pub const GAP_TOLERANCE: f64 = 1e-6;

/// V = ∫₀ˣ 1/σ on the table grid.
pub fn trial_potential(table: &MeasureTable) -> Vec<f64> {
    let inv_sigma: Vec<f64> = table.ln_sigma.iter().map(|l| (-l).exp()).collect();
    cumulative_from_center(&inv_sigma, table.h, false)
}

/// Builds the trial function F = α(V + β), V = ∫₀ˣ 1/σ, and bounds the gap by its Rayleigh quotient.
pub fn spectral_gap_bound(table: &MeasureTable, model: &DiffusionModel) -> Result<GapReport> {
    let h = table.h;
    let inv_sigma: Vec<f64> = table.ln_sigma.iter().map(|l| (-l).exp()).collect();
    let v = trial_potential(table);
    let at = |vals: &[f64]| -> Vec<f64> {
        vals.iter()
            .zip(&table.ln_pdf)
            .map(|(v, lp)| {
                let p = lp.exp();
                if p == 0.0 {
                    0.0
                } else {
                    v * p
                }
            })
            .collect()
    };
    let finite = |x: f64| x.is_finite() && x.abs() <= DEFAULT_DIVERGENCE_CUTOFF;
    let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
    let sig2: Vec<f64> = table.grid.iter().map(|&x| model.sigma(x).powi(2)).collect();
    let mut worst = 0.0;
    let ev = checked("E[V]", integral(&at(&v), h), &mut worst)?;
    let ev2 = integral(&at(&v2), h).0;
    let esig2 = integral(&at(&sig2), h).0;
    let conditions = GapConditions {
        a: finite(ev2),
        b: finite(esig2),
        c: table.gamma.is_finite(),
    };
    let mut report = GapReport {
        gamma: table.gamma,
        conditions,
        beta_shift: None,
        alpha_norm: None,
        f_mean: None,
        f_second_moment: None,
        rayleigh_of_f: None,
        bound_holds: None,
    };
    if !(conditions.a && conditions.b && conditions.c) {
        return Ok(report);
    }
    let beta = -ev;
    let centred: Vec<f64> = v.iter().map(|x| (x + beta).powi(2)).collect();
    let var = checked("Var[V]", integral(&at(&centred), h), &mut worst)?;
    let alpha = 1.0 / var.sqrt();
    let f: Vec<f64> = v.iter().map(|x| alpha * (x + beta)).collect();
    let f2: Vec<f64> = f.iter().map(|x| x * x).collect();
    let f_mean = integral(&at(&f), h).0;
    let f_second = integral(&at(&f2), h).0;
    if f_mean.abs() > 1e-8 || (f_second - 1.0).abs() > 1e-8 {
        return Err(Error::Quadrature {
            quantity: "trial function normalisation",
            estimate: f_mean.abs().max((f_second - 1.0).abs()),
        });
    }
    // ½∫(F′)²/s′ with F′ = α/σ
    let integrand: Vec<f64> = (0..table.grid.len())
        .map(|i| {
            let fp = alpha * inv_sigma[i];
            0.5 * fp * fp * (-table.ln_s_prime[i]).exp()
        })
        .collect();
    let rayleigh = checked("rayleigh quotient", integral(&integrand, h), &mut worst)?;
    let gamma = table.gamma.finite("spectral gap bound")?;
    report.beta_shift = Some(beta);
    report.alpha_norm = Some(alpha);
    report.f_mean = Some(f_mean);
    report.f_second_moment = Some(f_second);
    report.rayleigh_of_f = Some(rayleigh);
    report.bound_holds = Some(rayleigh <= gamma + GAP_TOLERANCE);
    Ok(report)
}

/// ½∫(f′)²/s′ for f centred and normalised to unit variance under Π.
pub fn rayleigh_quotient(table: &MeasureTable, f: &CoefficientFunction) -> Result<f64> {
    let mean = table.expectation(|x| f.value(x))?;
    let var = table.expectation(|x| (f.value(x) - mean).powi(2))?;
    let second = table.expectation(|x| f.value(x).powi(2))?;
    if !(var > 1e-14 * second.max(f64::MIN_POSITIVE)) {
        return Err(Error::InvalidArgument(
            "trial function has zero variance under the invariant measure".into(),
        ));
    }
    let integrand: Vec<f64> = table
        .grid
        .iter()
        .zip(&table.ln_s_prime)
        .map(|(&x, ls)| {
            let w = (-ls).exp();
            if w == 0.0 {
                0.0
            } else {
                0.5 * f.derivative(x, 1).powi(2) * w
            }
        })
        .collect();
    let mut worst = 0.0;
    let energy = checked("rayleigh quotient", integral(&integrand, table.h), &mut worst)?;
    Ok(energy / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{validate_recurrence, DEFAULT_WINDOW};

    fn recurrent(mut model: DiffusionModel) -> DiffusionModel {
        validate_recurrence(&mut model, DEFAULT_WINDOW, DEFAULT_DIVERGENCE_CUTOFF);
        assert!(model.is_positive_recurrent());
        model
    }

    fn ou_table() -> (DiffusionModel, MeasureTable) {
        let model = recurrent(DiffusionModel::ou(1.0, 1.0).unwrap());
        let table = build_measures(&model, DEFAULT_WINDOW, DEFAULT_N_GRID).unwrap();
        (model, table)
    }

    #[test]
    fn ou_lambda_density_and_scale() {
        let (_, t) = ou_table();
        assert!((t.lambda - 1.7724538509055159).abs() < 1e-10);
        let c = t.n_intervals() / 2;
        assert!((t.pi_pdf(c) - 0.5641895835477563).abs() < 1e-10);
        assert!((t.pi_cdf[c] - 0.5).abs() < 1e-12);
        assert!((t.s_at(1.0) - 2.59248271956686).abs() < 1e-8, "{}", t.s_at(1.0));
        assert_eq!(t.s[c], 0.0);
    }

    #[test]
    fn unvalidated_model_is_refused() {
        let model = DiffusionModel::ou(1.0, 1.0).unwrap();
        assert!(matches!(
            build_measures(&model, 40.0, 4096),
            Err(Error::NotRecurrent(_))
        ));
    }

    #[test]
    fn gamma_values() {
        let (m, t) = ou_table();
        assert!((gamma_quadrature(&t, &m).unwrap().finite("").unwrap() - 1.0).abs() < 1e-8);
        let m = recurrent(DiffusionModel::ou(2.5, 1.0).unwrap());
        let t = build_measures(&m, 40.0, DEFAULT_N_GRID).unwrap();
        assert!((t.gamma.finite("").unwrap() - 2.5).abs() < 1e-8);
        let m = recurrent(DiffusionModel::tanh_drift(1.0, 1.0).unwrap());
        let t = build_measures(&m, 40.0, DEFAULT_N_GRID).unwrap();
        assert!((t.gamma.finite("").unwrap() - 2.0 / 3.0).abs() < 1e-9);
        assert!((t.lambda - 2.0).abs() < 1e-10);
    }

    #[test]
    fn ou_boundaries() {
        let (_, t) = ou_table();
        let r = boundary_classification(&t);
        let w20 = r.windows.iter().position(|w| *w == 20.0).unwrap();
        assert!((r.plus.sharp_scale_limit[w20 + 1] - r.plus.sharp_scale_limit[w20]).abs() < 1e-10);
        assert!(r.plus.sharp_scale_converges && r.plus.non_entrance);
        let w10 = r.windows.iter().position(|w| *w == 10.0).unwrap();
        assert!(r.plus.log_double_integral[w10] > 1e4f64.ln());
        for k in 0..r.windows.len() {
            let (a, b) = (r.plus.log_double_integral[k], r.minus.log_double_integral[k]);
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn ou_gap_is_attained() {
        let (m, t) = ou_table();
        let g = spectral_gap_bound(&t, &m).unwrap();
        assert!((g.rayleigh_of_f.unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(g.bound_holds, Some(true));
        let x = CoefficientFunction::polynomial(vec![0.0, 1.0]);
        assert!((rayleigh_quotient(&t, &x).unwrap() - 1.0).abs() < 1e-9);
        let x3 = CoefficientFunction::polynomial(vec![0.0, 0.0, 0.0, 1.0]);
        assert!((rayleigh_quotient(&t, &x3).unwrap() - 1.8).abs() < 1e-9);
        let flat = CoefficientFunction::constant(2.0);
        assert!(rayleigh_quotient(&t, &flat).is_err());
    }
}
