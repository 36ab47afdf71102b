//! Pullback constructions on a fixed two-sided path: X↓_T driven by the
//! reversed noise b↓(t) = b(T − t) − b(T), the stagnation point 𝔛 that all
//! of them approach, the forward-from−T process 𝔷_T, the invariant-point
//! identity X♯_t(𝔛(b)) = 𝔛(θ_t b), and the discrete residual of the equation
//! satisfied by f(X↓_t).

use serde::Serialize;

use crate::coeffs::{CoefficientFunction, DiffusionModel};
use crate::error::{Error, Result};
use crate::flow::{advance, Direction, Ensemble, Scheme, StepOptions};
use crate::noise::{grid_steps, NoiseView};

/// Scheme used wherever a flow and its inverse are compared.
pub const PULLBACK_SCHEME: Scheme = Scheme::StratonovichRk4;
pub const DEFAULT_XINF_TOL: f64 = 1e-4;
pub const DEFAULT_BISECTION_TOL: f64 = 1e-6;

/// Longest default horizon in units of 1/γ.
pub const SCHEDULE_FOCUSING_TIMES: f64 = 40.0;

/// Default horizons: 1, 2, 4, … while below T_max = max(10, 40/γ), then T_max.
pub fn default_schedule(gamma: f64) -> Vec<f64> {
    let t_max = 10f64.max(SCHEDULE_FOCUSING_TIMES / gamma);
    let mut out = Vec::new();
    let mut t = 1.0;
    while t < t_max {
        out.push(t);
        t *= 2.0;
    }
    out.push(t_max);
    out
}

/// Horizons rounded onto the grid (T_max need not be a grid point).
pub fn schedule_steps(schedule: &[f64], dt: f64) -> Result<Vec<usize>> {
    let mut steps = Vec::with_capacity(schedule.len());
    for &t in schedule {
        let n = (t / dt).round() as usize;
        if n == 0 || steps.last().is_some_and(|&p| n <= p) {
            return Err(Error::InvalidArgument(format!(
                "horizon schedule must be increasing and positive (got {schedule:?})"
            )));
        }
        steps.push(n);
    }
    Ok(steps)
}

/// X↓_T(x₀) for T = n_steps·dt, forward flow driven by the view reversed at T.
pub fn pullback_map(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    n_steps: usize,
    x0s: &[f64],
    scheme: Scheme,
) -> Result<Vec<f64>> {
    let rev = view.reversed(n_steps);
    let mut ens = Ensemble::new(x0s, view.dt());
    let opts = StepOptions {
        scheme,
        ..StepOptions::default()
    };
    advance(model, &rev, &mut ens, n_steps, Direction::Forward, opts)?;
    Ok(ens.x)
}

/// Same as [`pullback_map`] with T given as a time on the grid.
pub fn pullback_map_time(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    t: f64,
    x0s: &[f64],
    scheme: Scheme,
) -> Result<Vec<f64>> {
    pullback_map(model, view, grid_steps(t, view.dt())?, x0s, scheme)
}

#[derive(Debug, Clone, Serialize)]
pub struct XinfSample {
    pub estimate: f64,
    /// Horizon (time) at which convergence was declared.
    pub horizon: f64,
    pub spread: f64,
    pub drift: f64,
    /// X↓_T at every probe, one row per horizon tried.
    pub history: Vec<(f64, Vec<f64>)>,
}

/// Runs the pullback at each horizon until the probes agree within `tol`
/// and the mean moved less than `tol` since the previous horizon.
pub fn sample_xinf(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    x0s: &[f64],
    schedule: &[f64],
    tol: f64,
    scheme: Scheme,
) -> Result<XinfSample> {
    if x0s.len() < 2 {
        return Err(Error::InvalidArgument("need at least two probe points".into()));
    }
    let dt = view.dt();
    let steps = schedule_steps(schedule, dt)?;
    let mut history = Vec::with_capacity(steps.len());
    let mut prev_mean: Option<f64> = None;
    let (mut spread, mut drift) = (f64::INFINITY, f64::INFINITY);
    for &n in &steps {
        let values = pullback_map(model, view, n, x0s, scheme)?;
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        spread = hi - lo;
        drift = prev_mean.map_or(f64::INFINITY, |p| (mean - p).abs());
        let horizon = n as f64 * dt;
        history.push((horizon, values));
        if spread < tol && drift < tol {
            return Ok(XinfSample {
                estimate: mean,
                horizon,
                spread,
                drift,
                history,
            });
        }
        prev_mean = Some(mean);
    }
    Err(Error::NonConvergence(format!(
        "pullback did not converge by T = {}: spread {spread:e}, drift {drift:e}",
        steps.last().copied().unwrap_or(0) as f64 * dt
    )))
}

#[derive(Debug, Clone, Serialize)]
pub struct Bisection {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    /// (x₀, escape sign at the horizon; 0 when still inside the window).
    pub history: Vec<(f64, i8)>,
}

/// 𝔛 as the point separating sharp trajectories that escape to −∞ from those
/// escaping to +∞ by the horizon.
pub fn stagnation_bisect(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    n_horizon: usize,
    bracket: (f64, f64),
    tol: f64,
    escape_threshold: f64,
    scheme: Scheme,
) -> Result<Bisection> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi && tol > 0.0) {
        return Err(Error::Bracket(format!("need lo < hi and tol > 0 (got {lo}, {hi})")));
    }
    let opts = StepOptions {
        scheme,
        escape_threshold: Some(escape_threshold),
        jacobian: false,
    };
    let sign = |x: f64| -> Result<i8> {
        let mut e = Ensemble::new(&[x], view.dt());
        advance(model, view, &mut e, n_horizon, Direction::Sharp, opts)?;
        Ok(e.status[0].escape_sign().unwrap_or(0))
    };
    let (s_lo, s_hi) = (sign(lo)?, sign(hi)?);
    let mut history = vec![(lo, s_lo), (hi, s_hi)];
    if s_lo == 0 || s_hi == 0 {
        return Err(Error::Bracket(format!(
            "bracket edge did not escape by the horizon (signs {s_lo} at {lo}, {s_hi} at {hi})"
        )));
    }
    if s_lo == s_hi || s_lo > s_hi {
        return Err(Error::Bracket(format!(
            "bracket edges escape with signs {s_lo} at {lo} and {s_hi} at {hi}"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let s = sign(mid)?;
        history.push((mid, s));
        match s {
            1 => hi = mid,
            -1 => lo = mid,
            // still undecided: the separating point is within reach of mid
            _ => {
                lo = mid;
                hi = mid;
            }
        }
    }
    Ok(Bisection {
        estimate: 0.5 * (lo + hi),
        lo,
        hi,
        history,
    })
}

/// Sharp members beyond this are treated as outside the domain D_T.
pub const EXPLOSION_GUARD: f64 = 1e3;

#[derive(Debug, Clone, Serialize)]
pub struct InverseCheck {
    /// X♯_T(x₀) for every probe (the last finite value for exploded members).
    pub sharp: Vec<f64>,
    /// X↓_T(X♯_T(x₀)), None for probes that left the domain.
    pub back: Vec<Option<f64>>,
    pub max_error: f64,
    pub excluded: usize,
}

/// |X↓_T(X♯_T(x₀)) − x₀| over probes whose sharp trajectory stays within
/// ±`guard` up to T = n_steps·dt.
pub fn inverse_identity(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    n_steps: usize,
    x0s: &[f64],
    guard: f64,
    scheme: Scheme,
) -> Result<InverseCheck> {
    let mut ens = Ensemble::new(x0s, view.dt());
    let opts = StepOptions {
        scheme,
        escape_threshold: Some(guard),
        jacobian: false,
    };
    advance(model, view, &mut ens, n_steps, Direction::Sharp, opts)?;
    let kept: Vec<usize> = (0..x0s.len()).filter(|&i| ens.status[i].is_alive()).collect();
    let ys: Vec<f64> = kept.iter().map(|&i| ens.x[i]).collect();
    let mut back = vec![None; x0s.len()];
    let mut max_error: f64 = 0.0;
    if !ys.is_empty() {
        let xs = pullback_map(model, view, n_steps, &ys, scheme)?;
        for (&i, &x) in kept.iter().zip(&xs) {
            max_error = max_error.max((x - x0s[i]).abs());
            back[i] = Some(x);
        }
    }
    Ok(InverseCheck {
        sharp: ens.x,
        back,
        max_error,
        excluded: x0s.len() - kept.len(),
    })
}

/// 𝔷_T: forward flow from time −T (value x₀) to time 0 on the two-sided path.
pub fn pullback_process(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    n_steps: usize,
    x0s: &[f64],
    scheme: Scheme,
) -> Result<Vec<f64>> {
    let from = view.shifted(-(n_steps as i64));
    let mut ens = Ensemble::new(x0s, view.dt());
    let opts = StepOptions {
        scheme,
        ..StepOptions::default()
    };
    advance(model, &from, &mut ens, n_steps, Direction::Forward, opts)?;
    Ok(ens.x)
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantPoint {
    pub xinf: f64,
    /// X♯_t(𝔛(b))
    pub lhs: f64,
    /// 𝔛(θ_t b)
    pub rhs: f64,
    pub residual: f64,
}

/// |X♯_t(𝔛(b)) − 𝔛(θ_t b)| for t = n_shift·dt.
pub fn invariant_point_check(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    n_shift: usize,
    x0s: &[f64],
    schedule: &[f64],
    tol: f64,
    scheme: Scheme,
) -> Result<InvariantPoint> {
    let base = sample_xinf(model, view, x0s, schedule, tol, scheme)?;
    let mut e = Ensemble::new(&[base.estimate], view.dt());
    let opts = StepOptions {
        scheme,
        ..StepOptions::default()
    };
    advance(model, view, &mut e, n_shift, Direction::Sharp, opts)?;
    let lhs = e.x[0];
    let shifted = sample_xinf(model, &view.shifted(n_shift as i64), x0s, schedule, tol, scheme)?;
    Ok(InvariantPoint {
        xinf: base.estimate,
        lhs,
        rhs: shifted.estimate,
        residual: (lhs - shifted.estimate).abs(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpdeResidual {
    pub times: Vec<f64>,
    /// RMS over the x grid of the residual at each time.
    pub rms: Vec<f64>,
    /// Final-time RMS recomputed with Δx halved.
    pub rms_half_dx: f64,
    /// Set when halving Δx changes the final residual by more than 50%.
    pub dx_dominated: bool,
}

/// Residual of f(X↓_t(x)) = f(x) − σ(x)∫₀ᵗ ∂ₓf(X↓_s(x)) db(s) + ∫₀ᵗ 𝒢f(X↓_s(·))(x) ds
/// with the flow in x differentiated by central differences, the stochastic
/// integral as a left-point sum against forward increments of b and
/// 𝒢u = ½σ²u″ + (m + ½σσ′)u′.
pub fn spde_residual(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    f: &CoefficientFunction,
    x_grid: &[f64],
    n_steps: usize,
    scheme: Scheme,
) -> Result<SpdeResidual> {
    if x_grid.is_empty() {
        return Err(Error::InvalidArgument("empty x grid".into()));
    }
    view.check(0, n_steps)?;
    let run = |dx_scale: f64| -> Result<Vec<f64>> {
        let dxs: Vec<f64> = x_grid.iter().map(|x| dx_scale * 1e-3 * x.abs().max(1.0)).collect();
        // members: x − Δx, x, x + Δx for every grid point
        let starts: Vec<f64> = x_grid
            .iter()
            .zip(&dxs)
            .flat_map(|(&x, &d)| [x - d, x, x + d])
            .collect();
        let nx = x_grid.len();
        let mut stoch = vec![0.0; nx];
        let mut drift = vec![0.0; nx];
        let mut rms = Vec::with_capacity(n_steps);
        // u at time 0 is f on the starting points themselves
        let mut u: Vec<f64> = starts.iter().map(|&x| f.value(x)).collect();
        for k in 0..n_steps {
            let db = view.get(k as i64);
            let dt = view.dt();
            for i in 0..nx {
                let x = x_grid[i];
                let d = dxs[i];
                let (um, u0, up) = (u[3 * i], u[3 * i + 1], u[3 * i + 2]);
                let ux = (up - um) / (2.0 * d);
                let uxx = (up - 2.0 * u0 + um) / (d * d);
                let l = model.local(x);
                let q = l.m + 0.5 * l.sigma * l.dsigma;
                stoch[i] += ux * db;
                drift[i] += (0.5 * l.sigma * l.sigma * uxx + q * ux) * dt;
            }
            let values = pullback_map(model, view, k + 1, &starts, scheme)?;
            u = values.iter().map(|&y| f.value(y)).collect();
            let mut sq = 0.0;
            for i in 0..nx {
                let x = x_grid[i];
                let r = u[3 * i + 1] - (f.value(x) - model.sigma(x) * stoch[i] + drift[i]);
                sq += r * r;
            }
            rms.push((sq / nx as f64).sqrt());
        }
        Ok(rms)
    };
    let rms = run(1.0)?;
    let half = run(0.5)?;
    let last = rms.last().copied().unwrap_or(0.0);
    let last_half = half.last().copied().unwrap_or(0.0);
    let dx_dominated = (last - last_half).abs() > 0.5 * last.abs().max(last_half.abs())
        && last.max(last_half) > 0.0;
    Ok(SpdeResidual {
        times: (1..=n_steps).map(|k| k as f64 * view.dt()).collect(),
        rms,
        rms_half_dx: last_half,
        dx_dominated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{validate_recurrence, DEFAULT_DIVERGENCE_CUTOFF, DEFAULT_WINDOW};
    use crate::noise::NoisePath;

    fn ou() -> DiffusionModel {
        let mut m = DiffusionModel::ou(1.0, 1.0).unwrap();
        validate_recurrence(&mut m, DEFAULT_WINDOW, DEFAULT_DIVERGENCE_CUTOFF);
        m
    }

    #[test]
    fn schedule_doubles_to_t_max() {
        assert_eq!(default_schedule(1.0), vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 40.0]);
        assert_eq!(default_schedule(8.0), vec![1.0, 2.0, 4.0, 8.0, 10.0]);
        assert_eq!(*default_schedule(2.0 / 3.0).last().unwrap(), 60.0);
    }

    #[test]
    fn zero_noise_pullback_contracts() {
        let m = ou();
        let z = NoisePath::zero(1e-3).unwrap();
        let v = pullback_map(&m, &z.view(), 5000, &[2.0], Scheme::Milstein).unwrap();
        assert!((v[0] - 2.0 * 0.999f64.powi(5000)).abs() < 1e-12);
        let b = stagnation_bisect(&m, &z.view(), 20_000, (-1.0, 1.0), 1e-6, 7.5, PULLBACK_SCHEME)
            .unwrap();
        assert!(b.estimate.abs() < 1e-6);
        let zt = pullback_process(&m, &z.view(), 10_000, &[3.0, -3.0], Scheme::Milstein).unwrap();
        assert!(zt.iter().all(|x| x.abs() < 3.0 * 0.999f64.powi(10_000) + 1e-15));
    }

    #[test]
    fn constant_f_has_zero_residual() {
        let m = ou();
        let mut p = NoisePath::new(3, 1e-2).unwrap();
        p.extend_time(1.0, 0.0).unwrap();
        let f = CoefficientFunction::constant(1.5);
        let r = spde_residual(&m, &p.view(), &f, &[-1.0, 0.0, 1.0], 100, Scheme::Milstein).unwrap();
        assert!(r.rms.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_noise_identity_residual_is_tiny() {
        let m = ou();
        let z = NoisePath::zero(1e-3).unwrap();
        let f = CoefficientFunction::polynomial(vec![0.0, 1.0]);
        let r = spde_residual(&m, &z.view(), &f, &[-1.0, 0.5, 2.0], 1000, Scheme::Milstein).unwrap();
        assert!(*r.rms.last().unwrap() < 1e-8);
    }
}
