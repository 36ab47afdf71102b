//! Integration of the forward flow dX = σ∘db + m dt and the sharp flow
//! dX♯ = σ∘db − m dt for an ensemble of starting points sharing one path.

use serde::{Deserialize, Serialize};

use crate::coeffs::DiffusionModel;
use crate::error::{Error, Result};
use crate::measures::MeasureTable;
use crate::noise::NoiseView;

/// One-step discretisation of the Stratonovich equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Itô form with q = ±m + ½σσ′ plus the Milstein term ½σσ′(Δb² − dt).
    #[default]
    Milstein,
    /// Classical RK4 on y′ = ±m(y)·dt + σ(y)·Δb over one unit of pseudo-time.
    /// Symmetric to high order, so a step driven by −Δb with the opposite
    /// drift undoes a step almost exactly; used where flows are inverted.
    StratonovichRk4,
}

/// Which flow is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Sharp,
}

impl Direction {
    fn drift_sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Sharp => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum MemberStatus {
    Alive,
    /// Crossed ±threshold; `sign` is +1 or −1.
    Escaped { sign: i8, time: f64 },
}

impl MemberStatus {
    pub fn is_alive(&self) -> bool {
        matches!(self, MemberStatus::Alive)
    }

    pub fn escape_sign(&self) -> Option<i8> {
        match self {
            MemberStatus::Escaped { sign, .. } => Some(*sign),
            MemberStatus::Alive => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            MemberStatus::Alive => "alive",
            MemberStatus::Escaped { sign: 1, .. } => "escaped_plus",
            MemberStatus::Escaped { .. } => "escaped_minus",
        }
    }
}

/// Starting points advanced together under one noise path.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub dt: f64,
    /// Steps taken; the next step reads view increment `steps`.
    pub steps: usize,
    pub x0: Vec<f64>,
    pub x: Vec<f64>,
    pub status: Vec<MemberStatus>,
    /// −2∫(m/σ)db − 2∫(m²/σ²)dτ, left-point sums.
    pub log_jacobian: Vec<f64>,
    /// ln ∂X_t/∂x by the chain rule through each discrete step.
    pub log_dx: Vec<f64>,
    /// Steps at which two alive members swapped order.
    pub order_violations: usize,
    order: Vec<usize>,
}

impl Ensemble {
    pub fn new(x0: &[f64], dt: f64) -> Self {
        let mut order: Vec<usize> = (0..x0.len()).collect();
        order.sort_by(|&a, &b| x0[a].total_cmp(&x0[b]));
        Self {
            dt,
            steps: 0,
            x0: x0.to_vec(),
            x: x0.to_vec(),
            status: vec![MemberStatus::Alive; x0.len()],
            log_jacobian: vec![0.0; x0.len()],
            log_dx: vec![0.0; x0.len()],
            order_violations: 0,
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// ln ∂s(X_t)/∂x − ln s′(x₀) from the chain-rule derivative.
    pub fn log_jacobian_chain(&self, table: &MeasureTable) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.log_dx[k] + table.ln_s_prime_at(self.x[k]) - table.ln_s_prime_at(self.x0[k]))
            .collect()
    }

    fn count_violations(&mut self) {
        let mut prev: Option<f64> = None;
        let mut bad = false;
        for &k in &self.order {
            if !self.status[k].is_alive() {
                continue;
            }
            if let Some(p) = prev {
                if self.x[k] < p {
                    bad = true;
                }
            }
            prev = Some(self.x[k]);
        }
        if bad {
            self.order_violations += 1;
        }
    }
}

/// Step settings beyond the flow direction.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepOptions {
    pub scheme: Scheme,
    /// Members with |x| beyond this are marked escaped.
    pub escape_threshold: Option<f64>,
    /// Accumulate both log-Jacobian forms.
    pub jacobian: bool,
}

/// One step of size dt with increment db from x; returns (x_new, d x_new / dx).
#[inline]
pub fn step_one(
    model: &DiffusionModel,
    x: f64,
    db: f64,
    dt: f64,
    sign: f64,
    scheme: Scheme,
    tangent: bool,
) -> (f64, f64) {
    match scheme {
        Scheme::Milstein => {
            let l = model.local(x);
            let ss = l.sigma * l.dsigma;
            let next = x + sign * l.m * dt + l.sigma * db + 0.5 * ss * db * db;
            let d = if tangent {
                let dsig = l.dsigma;
                1.0 + sign * model.dm(x) * dt
                    + dsig * db
                    + 0.5 * (dsig * dsig + l.sigma * model.d2sigma(x)) * db * db
            } else {
                1.0
            };
            (next, d)
        }
        Scheme::StratonovichRk4 => {
            let f = |y: f64| sign * model.m(y) * dt + model.sigma(y) * db;
            let k1 = f(x);
            let k2 = f(x + 0.5 * k1);
            let k3 = f(x + 0.5 * k2);
            let k4 = f(x + k3);
            let next = x + (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
            let d = if tangent {
                let fp = |y: f64| sign * model.dm(y) * dt + model.dsigma(y) * db;
                let j1 = fp(x);
                let j2 = fp(x + 0.5 * k1) * (1.0 + 0.5 * j1);
                let j3 = fp(x + 0.5 * k2) * (1.0 + 0.5 * j2);
                let j4 = fp(x + k3) * (1.0 + j3);
                1.0 + (j1 + 2.0 * j2 + 2.0 * j3 + j4) / 6.0
            } else {
                1.0
            };
            (next, d)
        }
    }
}

fn require_recurrent(model: &DiffusionModel) -> Result<()> {
    if model.is_positive_recurrent() {
        Ok(())
    } else {
        Err(Error::NotRecurrent(format!(
            "model '{}' has status {:?}",
            model.name(),
            model.status()
        )))
    }
}

/// Advances every alive member `n_steps` along the view.
pub fn advance(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    ens: &mut Ensemble,
    n_steps: usize,
    direction: Direction,
    opts: StepOptions,
) -> Result<()> {
    require_recurrent(model)?;
    view.check(ens.steps as i64, n_steps)?;
    let dt = ens.dt;
    let sign = direction.drift_sign();
    let check_order = ens.len() > 1;
    for _ in 0..n_steps {
        let db = view.get(ens.steps as i64);
        let t_new = (ens.steps + 1) as f64 * dt;
        for k in 0..ens.len() {
            if !ens.status[k].is_alive() {
                continue;
            }
            let x = ens.x[k];
            if opts.jacobian && direction == Direction::Forward {
                let l = model.local(x);
                let r = l.m / l.sigma;
                ens.log_jacobian[k] += -2.0 * r * db - 2.0 * r * r * dt;
            }
            let (next, d) = step_one(model, x, db, dt, sign, opts.scheme, opts.jacobian);
            if opts.jacobian {
                ens.log_dx[k] += d.abs().ln();
            }
            if let Some(th) = opts.escape_threshold {
                if next.is_nan() {
                    return Err(Error::Overflow {
                        member: k,
                        step: ens.steps,
                    });
                }
                if next.abs() >= th {
                    ens.status[k] = MemberStatus::Escaped {
                        sign: if next > 0.0 { 1 } else { -1 },
                        time: t_new,
                    };
                }
            } else if !next.is_finite() {
                return Err(Error::Overflow {
                    member: k,
                    step: ens.steps,
                });
            }
            ens.x[k] = next;
        }
        ens.steps += 1;
        if check_order {
            ens.count_violations();
        }
    }
    Ok(())
}

/// Forward flow with the default scheme, accumulating log-Jacobians.
pub fn step_forward(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    ens: &mut Ensemble,
    n_steps: usize,
) -> Result<()> {
    let opts = StepOptions {
        jacobian: true,
        ..StepOptions::default()
    };
    advance(model, view, ens, n_steps, Direction::Forward, opts)
}

/// Sharp flow with the default scheme; members beyond ±threshold escape.
pub fn step_sharp(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    ens: &mut Ensemble,
    n_steps: usize,
    escape_threshold: f64,
) -> Result<()> {
    if !(escape_threshold > 0.0) {
        return Err(Error::InvalidArgument("escape threshold must be positive".into()));
    }
    let opts = StepOptions {
        escape_threshold: Some(escape_threshold),
        ..StepOptions::default()
    };
    advance(model, view, ens, n_steps, Direction::Sharp, opts)
}

/// Forward steps that only matter for their log-Jacobian accumulators.
pub fn accumulate_log_jacobian(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    ens: &mut Ensemble,
    n_steps: usize,
) -> Result<()> {
    step_forward(model, view, ens, n_steps)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DomainEndpoints {
    pub left: f64,
    pub right: f64,
    /// False when no member in the bracket escaped to −∞ (resp. +∞) by t.
    pub left_exploded: bool,
    pub right_exploded: bool,
}

fn escape_sign_at(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    x0: f64,
    n: usize,
    threshold: f64,
    scheme: Scheme,
) -> Result<Option<i8>> {
    let mut e = Ensemble::new(&[x0], view.dt());
    let opts = StepOptions {
        scheme,
        escape_threshold: Some(threshold),
        jacobian: false,
    };
    advance(model, view, &mut e, n, Direction::Sharp, opts)?;
    Ok(e.status[0].escape_sign())
}

/// Bisection for the ends of the sharp flow's domain at time t = n·dt:
/// 𝕽 = inf{x: escaped to +∞}, 𝔏 = sup{x: escaped to −∞}.
pub fn domain_endpoints(
    model: &DiffusionModel,
    view: &NoiseView<'_>,
    n_steps: usize,
    bracket: (f64, f64),
    tol: f64,
    threshold: f64,
) -> Result<DomainEndpoints> {
    let (lo, hi) = bracket;
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::Bracket(format!("need lo < hi and tol > 0 (got {lo}, {hi}, {tol})")));
    }
    let sign = |x: f64| escape_sign_at(model, view, x, n_steps, threshold, Scheme::Milstein);
    let (s_lo, s_hi) = (sign(lo)?, sign(hi)?);
    if s_lo == Some(1) || s_hi == Some(-1) {
        return Err(Error::Bracket(format!(
            "escape behaviour at the edges is reversed ({s_lo:?} at {lo}, {s_hi:?} at {hi})"
        )));
    }
    let search = |target: i8, edge_hit: bool| -> Result<(f64, bool)> {
        if !edge_hit {
            return Ok((if target == 1 { hi } else { lo }, false));
        }
        // invariant: target escape at `inside` edge, not at the other
        let (mut a, mut b) = (lo, hi);
        while b - a > tol {
            let mid = 0.5 * (a + b);
            let hit = sign(mid)? == Some(target);
            match (target, hit) {
                (1, true) | (-1, false) => b = mid,
                _ => a = mid,
            }
        }
        Ok((0.5 * (a + b), true))
    };
    let (right, right_exploded) = search(1, s_hi == Some(1))?;
    let (left, left_exploded) = search(-1, s_lo == Some(-1))?;
    Ok(DomainEndpoints {
        left: left.min(right),
        right: right.max(left),
        left_exploded,
        right_exploded,
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
    fn zero_noise_ou_decays() {
        let m = ou();
        let p = NoisePath::zero(1e-3).unwrap();
        let mut e = Ensemble::new(&[1.0], 1e-3);
        step_forward(&m, &p.view(), &mut e, 1000).unwrap();
        // the first-order scheme gives (1 − dt)ⁿ, e⁻¹·dt/2 ≈ 1.8e-4 away from e⁻¹
        assert!((e.x[0] - 0.999f64.powi(1000)).abs() < 1e-13);
        assert!((e.x[0] - (-1f64).exp()).abs() < 2e-4);
        assert!((e.log_dx[0] - 1000.0 * (1.0 - 1e-3f64).ln()).abs() < 1e-12);
        let mut e = Ensemble::new(&[1.0], 1e-3);
        let opts = StepOptions {
            scheme: Scheme::StratonovichRk4,
            ..StepOptions::default()
        };
        advance(&m, &p.view(), &mut e, 1000, Direction::Forward, opts).unwrap();
        assert!((e.x[0] - (-1f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn sharp_zero_noise_escape_and_stagnation() {
        let m = ou();
        let p = NoisePath::zero(1e-3).unwrap();
        let mut e = Ensemble::new(&[-0.1, 0.0, 0.1], 1e-3);
        step_sharp(&m, &p.view(), &mut e, 10_000, 7.5).unwrap();
        assert_eq!(e.status[0].escape_sign(), Some(-1));
        assert_eq!(e.status[1], MemberStatus::Alive);
        assert_eq!(e.status[2].escape_sign(), Some(1));
    }

    #[test]
    fn unvalidated_model_cannot_step() {
        let m = DiffusionModel::ou(1.0, 1.0).unwrap();
        let p = NoisePath::zero(1e-3).unwrap();
        let mut e = Ensemble::new(&[1.0], 1e-3);
        assert!(matches!(
            step_forward(&m, &p.view(), &mut e, 1),
            Err(Error::NotRecurrent(_))
        ));
    }

    #[test]
    fn horizon_is_enforced() {
        let m = ou();
        let mut p = NoisePath::new(1, 1e-3).unwrap();
        p.extend_time(0.5, 0.0).unwrap();
        let mut e = Ensemble::new(&[1.0], 1e-3);
        assert!(matches!(
            step_forward(&m, &p.view(), &mut e, 501),
            Err(Error::BeyondHorizon { .. })
        ));
    }

    #[test]
    fn rk4_sharp_step_inverts_forward_step() {
        let m = ou();
        let (x, db, dt) = (0.7, 0.03, 1e-3);
        let (y, _) = step_one(&m, x, db, dt, -1.0, Scheme::StratonovichRk4, false);
        let (back, _) = step_one(&m, y, -db, dt, 1.0, Scheme::StratonovichRk4, false);
        assert!((back - x).abs() < 1e-12);
    }
}
