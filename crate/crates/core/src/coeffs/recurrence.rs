//! Numerical positive-recurrence test on a truncated window.
//!
//! With I(x) = ∫₀ˣ 2m/σ², the model is positive recurrent when both one-sided
//! scale integrals ∫ σ⁻¹ e^{−I} diverge and Λ = ∫ σ⁻¹ e^{+I} is finite.

use serde::Serialize;

use super::{DiffusionModel, RecurrenceStatus};
use crate::quadrature::{classify_partials, cumulative, log_add, log_simpson, IntegralBehaviour};

/// Default truncation window.
pub const DEFAULT_WINDOW: f64 = 40.0;
/// Default value above which a truncated integral counts as divergent.
pub const DEFAULT_DIVERGENCE_CUTOFF: f64 = 1e8;

const SHELLS: usize = 40;
const INTERVALS_PER_SHELL: usize = 256;

#[derive(Debug, Clone, Serialize)]
pub struct RecurrenceReport {
    pub window: f64,
    pub divergence_cutoff: f64,
    pub scale_left: IntegralBehaviour,
    pub scale_right: IntegralBehaviour,
    pub lambda_behaviour: IntegralBehaviour,
    /// Truncated Λ when it converges.
    pub lambda: Option<f64>,
    pub status: RecurrenceStatus,
}

/// Log partial integrals of e^{±I}/σ over nested shells of [0, W] on one side.
struct SideIntegrals {
    log_scale: Vec<f64>,
    log_lambda: Vec<f64>,
}

fn side(model: &DiffusionModel, window: f64, sign: f64) -> SideIntegrals {
    let n = SHELLS * INTERVALS_PER_SHELL;
    let h = window / n as f64;
    let ys: Vec<f64> = (0..=n).map(|i| sign * i as f64 * h).collect();
    // d/dy of I(sign·y) is sign·2m/σ²
    let di: Vec<f64> = ys
        .iter()
        .map(|&x| {
            let s = model.sigma(x);
            sign * 2.0 * model.m(x) / (s * s)
        })
        .collect();
    let inner = cumulative(&di, h);
    let ln_sigma: Vec<f64> = ys.iter().map(|&x| model.sigma(x).ln()).collect();

    let mut log_scale = Vec::with_capacity(SHELLS);
    let mut log_lambda = Vec::with_capacity(SHELLS);
    let (mut acc_s, mut acc_l) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in 0..SHELLS {
        let range = k * INTERVALS_PER_SHELL..=(k + 1) * INTERVALS_PER_SHELL;
        let ls: Vec<f64> = range.clone().map(|i| -inner[i] - ln_sigma[i]).collect();
        let ll: Vec<f64> = range.map(|i| inner[i] - ln_sigma[i]).collect();
        acc_s = log_add(acc_s, log_simpson(&ls, h));
        acc_l = log_add(acc_l, log_simpson(&ll, h));
        log_scale.push(acc_s);
        log_lambda.push(acc_l);
    }
    SideIntegrals {
        log_scale,
        log_lambda,
    }
}

/// Classifies the model on [−window, window] and records the verdict in its status.
///
/// Integrals are tracked over 40 nested shells; see [`classify_partials`] for
/// the divergence rule. Scale integrals are checked first, then Λ.
pub fn validate_recurrence(
    model: &mut DiffusionModel,
    window: f64,
    divergence_cutoff: f64,
) -> RecurrenceReport {
    let right = side(model, window, 1.0);
    let left = side(model, window, -1.0);
    let scale_right = classify_partials(&right.log_scale, divergence_cutoff);
    let scale_left = classify_partials(&left.log_scale, divergence_cutoff);
    let log_lambda: Vec<f64> = left
        .log_lambda
        .iter()
        .zip(&right.log_lambda)
        .map(|(a, b)| log_add(*a, *b))
        .collect();
    let lambda_behaviour = classify_partials(&log_lambda, divergence_cutoff);

    let status = if scale_left == IntegralBehaviour::Converges
        || scale_right == IntegralBehaviour::Converges
    {
        RecurrenceStatus::Rejected("scale integrals converge (transient)".into())
    } else if lambda_behaviour == IntegralBehaviour::Diverges {
        RecurrenceStatus::Rejected("Λ diverges".into())
    } else if scale_left == IntegralBehaviour::Diverges
        && scale_right == IntegralBehaviour::Diverges
        && lambda_behaviour == IntegralBehaviour::Converges
    {
        RecurrenceStatus::PositiveRecurrent
    } else {
        RecurrenceStatus::Rejected(format!("inconclusive at window {window}"))
    };
    let lambda = (lambda_behaviour == IntegralBehaviour::Converges)
        .then(|| log_lambda.last().unwrap().exp());
    model.set_status(status.clone());
    RecurrenceReport {
        window,
        divergence_cutoff,
        scale_left,
        scale_right,
        lambda_behaviour,
        lambda,
        status,
    }
}
