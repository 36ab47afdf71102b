//! Closed forms for the Ornstein–Uhlenbeck model dX = σ₀ db − βX dt,
//! evaluated on the same grid increments that drive the numerical flows.

use serde::Serialize;

use crate::coeffs::DiffusionModel;
use crate::error::{Error, Result};
use crate::flow::{advance, Direction, Ensemble, Scheme, StepOptions};
use crate::noise::{grid_steps, NoisePath, NoiseView, Side};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuParams {
    pub beta: f64,
    pub sigma0: f64,
}

impl OuParams {
    pub fn new(beta: f64, sigma0: f64) -> Result<Self> {
        if beta > 0.0 && sigma0 > 0.0 && beta.is_finite() && sigma0.is_finite() {
            Ok(Self { beta, sigma0 })
        } else {
            Err(Error::InvalidArgument(format!(
                "OU oracle needs beta > 0 and sigma0 > 0 (got {beta}, {sigma0})"
            )))
        }
    }

    /// Variance of the invariant law, σ₀²/(2β).
    pub fn stationary_variance(&self) -> f64 {
        self.sigma0 * self.sigma0 / (2.0 * self.beta)
    }

    /// Variance of the truncated grid sum for 𝔛: σ₀² Σ_{i<n} e^{−2β i dt} dt.
    pub fn xinf_grid_variance(&self, dt: f64, n: usize) -> f64 {
        let r = (-2.0 * self.beta * dt).exp();
        self.sigma0 * self.sigma0 * dt * (1.0 - r.powi(n as i32)) / (1.0 - r)
    }
}

/// x·e^{−βT} + σ₀ Σ_{i<N} e^{β(tᵢ−T)} Δbᵢ with tᵢ = i·dt and T = N·dt.
pub fn ou_exact_flow(p: &OuParams, view: &NoiseView<'_>, x0: f64, n_steps: usize) -> Result<f64> {
    view.check(0, n_steps)?;
    let dt = view.dt();
    let decay = (-p.beta * dt).exp();
    // Horner form of Σ e^{−β(N−i)dt}Δbᵢ
    let mut acc = 0.0;
    for i in 0..n_steps as i64 {
        acc = acc * decay + view.get(i);
    }
    let big_t = n_steps as f64 * dt;
    Ok(x0 * (-p.beta * big_t).exp() + p.sigma0 * decay * acc)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExactXinf {
    pub value: f64,
    /// Standard deviation of the omitted tail σ₀ e^{−βT}/√(2β).
    pub truncation_bound: f64,
}

/// −σ₀ Σ_{i<N} e^{−β tᵢ} Δbᵢ, truncated at T_max = N·dt with β·T_max ≥ 20.
pub fn ou_exact_xinf(p: &OuParams, view: &NoiseView<'_>, n_max: usize) -> Result<ExactXinf> {
    let dt = view.dt();
    let t_max = n_max as f64 * dt;
    if p.beta * t_max < 20.0 {
        return Err(Error::InvalidArgument(format!(
            "truncation horizon too short: beta * T_max = {} < 20",
            p.beta * t_max
        )));
    }
    view.check(0, n_max)?;
    Ok(ExactXinf {
        value: -p.sigma0 * discounted_sum(p, view, 0, n_max),
        truncation_bound: p.sigma0 * (-p.beta * t_max).exp() / (2.0 * p.beta).sqrt(),
    })
}

/// Σ_{from ≤ i < to} e^{−β tᵢ} Δbᵢ.
fn discounted_sum(p: &OuParams, view: &NoiseView<'_>, from: usize, to: usize) -> f64 {
    let dt = view.dt();
    let mut acc = 0.0;
    for i in (from..to).rev() {
        acc = acc * (-p.beta * dt).exp() + view.get(i as i64);
    }
    acc * (-p.beta * from as f64 * dt).exp()
}

/// −σ₀ e^{βt} Σ_{t ≤ tᵢ < T_max} e^{−β tᵢ} Δbᵢ with t = n_t·dt.
pub fn ou_stationary_sharp(
    p: &OuParams,
    view: &NoiseView<'_>,
    n_t: usize,
    n_max: usize,
) -> Result<f64> {
    let dt = view.dt();
    if (n_max as f64 - n_t as f64) * dt * p.beta < 20.0 {
        return Err(Error::InvalidArgument(
            "path horizon must exceed t by at least 20/beta".into(),
        ));
    }
    view.check(0, n_max)?;
    let t = n_t as f64 * dt;
    Ok(-p.sigma0 * (p.beta * t).exp() * discounted_sum(p, view, n_t, n_max))
}

/// Σ_{i<n} e^{−β tᵢ} Δbᵢ, the part of the 𝔛 sum before time n·dt.
pub fn ou_discounted_prefix(p: &OuParams, view: &NoiseView<'_>, n: usize) -> Result<f64> {
    view.check(0, n)?;
    Ok(discounted_sum(p, view, 0, n))
}

/// RMS over seeds of |X_T(x₀) − ou_exact_flow| for the given scheme at one dt.
pub fn strong_error(
    model: &DiffusionModel,
    p: &OuParams,
    scheme: Scheme,
    dt: f64,
    t: f64,
    x0: f64,
    seeds: &[u64],
) -> Result<f64> {
    if seeds.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = grid_steps(t, dt)?;
    let mut sum = 0.0;
    for &seed in seeds {
        let mut path = NoisePath::new(seed, dt)?;
        path.extend(Side::Plus, n)?;
        let view = path.view();
        let mut ens = Ensemble::new(&[x0], dt);
        let opts = StepOptions {
            scheme,
            ..StepOptions::default()
        };
        advance(model, &view, &mut ens, n, Direction::Forward, opts)?;
        let exact = ou_exact_flow(p, &view, x0, n)?;
        sum += (ens.x[0] - exact).powi(2);
    }
    Ok((sum / seeds.len() as f64).sqrt())
}

/// Least-squares slope of ln(error) against ln(dt).
pub fn fitted_order(dts: &[f64], errors: &[f64]) -> f64 {
    let lx: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
