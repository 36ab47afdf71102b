//! Diffusion models: the diffusion coefficient σ, the Stratonovich drift m,
//! their derivatives and the Itô-modified drift q = m + ½σσ′.

mod expr;
mod recurrence;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use expr::{Expression, Node, ParseError};
pub use recurrence::{
    validate_recurrence, RecurrenceReport, DEFAULT_DIVERGENCE_CUTOFF, DEFAULT_WINDOW,
};

use crate::error::{Error, Result};

/// Number of equally spaced points on [-40, 40] where σ is checked for positivity.
const POSITIVITY_PROBES: usize = 8001;
const POSITIVITY_WINDOW: f64 = 40.0;

/// Closed-form coefficient with exact derivatives up to third order.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticFn {
    /// Σ c_k x^k, coefficients in increasing degree.
    Polynomial(Vec<f64>),
    /// amplitude · tanh(rate · x)
    ScaledTanh { amplitude: f64, rate: f64 },
}

impl AnalyticFn {
    fn derivative(&self, x: f64, order: u8) -> f64 {
        match self {
            AnalyticFn::Polynomial(c) => {
                let mut acc = 0.0;
                for k in (order as usize..c.len()).rev() {
                    let falling: f64 = (0..order as usize).map(|j| (k - j) as f64).product();
                    acc = acc * x + falling * c[k];
                }
                acc
            }
            AnalyticFn::ScaledTanh { amplitude, rate } => {
                let t = (rate * x).tanh();
                let s = 1.0 - t * t;
                match order {
                    0 => amplitude * t,
                    1 => amplitude * rate * s,
                    2 => -2.0 * amplitude * rate * rate * t * s,
                    _ => -2.0 * amplitude * rate.powi(3) * s * (1.0 - 3.0 * t * t),
                }
            }
        }
    }
}

/// A real coefficient function of x with access to derivatives of order 0..=3.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientFunction {
    Analytic(AnalyticFn),
    /// Parsed expression; derivatives by central differences.
    Expression(Expression),
}

impl CoefficientFunction {
    pub fn constant(c: f64) -> Self {
        CoefficientFunction::Analytic(AnalyticFn::Polynomial(vec![c]))
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        CoefficientFunction::Analytic(AnalyticFn::Polynomial(coeffs))
    }

    pub fn parse(source: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        Ok(CoefficientFunction::Expression(Expression::parse(
            source, params,
        )?))
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            CoefficientFunction::Analytic(f) => f.derivative(x, 0),
            CoefficientFunction::Expression(e) => e.eval(x),
        }
    }

    /// Derivative of the given order (0..=3).
    pub fn derivative(&self, x: f64, order: u8) -> f64 {
        assert!(order <= 3, "derivatives above third order are not supported");
        match self {
            CoefficientFunction::Analytic(f) => f.derivative(x, order),
            CoefficientFunction::Expression(e) => central_difference(|y| e.eval(y), x, order),
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self, CoefficientFunction::Analytic(_))
    }
}

/// Central finite differences with a step scaled to the order: ε^{1/3} for the
/// first derivative, ε^{1/4} and ε^{1/5} for the second and third.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, order: u8) -> f64 {
    let scale = x.abs().max(1.0);
    match order {
        0 => f(x),
        1 => {
            let h = f64::EPSILON.cbrt() * scale;
            (f(x + h) - f(x - h)) / (2.0 * h)
        }
        2 => {
            let h = f64::EPSILON.powf(0.25) * scale;
            (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
        }
        _ => {
            let h = f64::EPSILON.powf(0.2) * scale;
            (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h)
        }
    }
}

/// Model description as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ModelSpec {
    Catalog {
        kind: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    Expression {
        sigma: String,
        m: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
}

impl ModelSpec {
    pub fn catalog(kind: &str, params: &[(&str, f64)]) -> Self {
        ModelSpec::Catalog {
            kind: kind.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn expression(sigma: &str, m: &str) -> Self {
        ModelSpec::Expression {
            sigma: sigma.to_string(),
            m: m.to_string(),
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum RecurrenceStatus {
    Unchecked,
    PositiveRecurrent,
    Rejected(String),
}

/// A one-dimensional diffusion dX = σ(X)∘db + m(X)dt.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    name: String,
    sigma: CoefficientFunction,
    m: CoefficientFunction,
    /// Closed-form modified drift where the catalog provides one.
    stored_q: Option<CoefficientFunction>,
    status: RecurrenceStatus,
}

/// Coefficients evaluated at a single point.
#[derive(Debug, Clone, Copy)]
pub struct Local {
    pub sigma: f64,
    pub dsigma: f64,
    pub m: f64,
}

impl DiffusionModel {
    /// Builds a model from σ and m, checking that σ is positive on the probe grid.
    pub fn new(name: &str, sigma: CoefficientFunction, m: CoefficientFunction) -> Result<Self> {
        check_positive(&sigma)?;
        Ok(Self {
            name: name.to_string(),
            sigma,
            m,
            stored_q: None,
            status: RecurrenceStatus::Unchecked,
        })
    }

    /// Ornstein–Uhlenbeck: σ = σ0, m = −βx.
    pub fn ou(beta: f64, sigma0: f64) -> Result<Self> {
        if !(beta.is_finite() && sigma0 > 0.0) {
            return Err(Error::InvalidModel(format!(
                "ou requires finite beta and sigma0 > 0 (got beta={beta}, sigma0={sigma0})"
            )));
        }
        let m = CoefficientFunction::polynomial(vec![0.0, -beta]);
        let mut model = Self::new("ou", CoefficientFunction::constant(sigma0), m.clone())?;
        model.stored_q = Some(m);
        Ok(model)
    }

    /// Symmetric double well: σ = σ0, m = a x − b x³.
    pub fn double_well(a: f64, b: f64, sigma0: f64) -> Result<Self> {
        if !(b > 0.0 && sigma0 > 0.0 && a.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "double_well requires b > 0 and sigma0 > 0 (got a={a}, b={b}, sigma0={sigma0})"
            )));
        }
        let m = CoefficientFunction::polynomial(vec![0.0, a, 0.0, -b]);
        let mut model =
            Self::new("double_well", CoefficientFunction::constant(sigma0), m.clone())?;
        model.stored_q = Some(m);
        Ok(model)
    }

    /// Bounded restoring drift: σ = σ0, m = −tanh(κx).
    pub fn tanh_drift(kappa: f64, sigma0: f64) -> Result<Self> {
        if !(kappa.is_finite() && sigma0 > 0.0) {
            return Err(Error::InvalidModel(format!(
                "tanh_drift requires finite kappa and sigma0 > 0 (got kappa={kappa}, sigma0={sigma0})"
            )));
        }
        let m = CoefficientFunction::Analytic(AnalyticFn::ScaledTanh {
            amplitude: -1.0,
            rate: kappa,
        });
        let mut model = Self::new("tanh_drift", CoefficientFunction::constant(sigma0), m.clone())?;
        model.stored_q = Some(m);
        Ok(model)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sigma_fn(&self) -> &CoefficientFunction {
        &self.sigma
    }

    pub fn drift_fn(&self) -> &CoefficientFunction {
        &self.m
    }

    pub fn status(&self) -> &RecurrenceStatus {
        &self.status
    }

    pub fn is_positive_recurrent(&self) -> bool {
        self.status == RecurrenceStatus::PositiveRecurrent
    }

    pub(crate) fn set_status(&mut self, status: RecurrenceStatus) {
        self.status = status;
    }

    #[inline]
    pub fn sigma(&self, x: f64) -> f64 {
        self.sigma.value(x)
    }

    #[inline]
    pub fn dsigma(&self, x: f64) -> f64 {
        self.sigma.derivative(x, 1)
    }

    pub fn d2sigma(&self, x: f64) -> f64 {
        self.sigma.derivative(x, 2)
    }

    #[inline]
    pub fn m(&self, x: f64) -> f64 {
        self.m.value(x)
    }

    pub fn dm(&self, x: f64) -> f64 {
        self.m.derivative(x, 1)
    }

    /// Modified drift q = m + ½σσ′.
    pub fn q(&self, x: f64) -> f64 {
        self.m(x) + 0.5 * self.sigma(x) * self.dsigma(x)
    }

    /// q′ = m′ + ½(σ′² + σσ″).
    pub fn dq(&self, x: f64) -> f64 {
        let ds = self.dsigma(x);
        self.dm(x) + 0.5 * (ds * ds + self.sigma(x) * self.d2sigma(x))
    }

    /// Closed-form q from the catalog, when one is stored.
    pub fn stored_q(&self, x: f64) -> Option<f64> {
        self.stored_q.as_ref().map(|q| q.value(x))
    }

    #[inline]
    pub fn local(&self, x: f64) -> Local {
        Local {
            sigma: self.sigma.value(x),
            dsigma: self.sigma.derivative(x, 1),
            m: self.m.value(x),
        }
    }

    /// Whether σ is constant (additive noise), which several fast paths rely on.
    pub fn has_constant_sigma(&self) -> bool {
        matches!(&self.sigma, CoefficientFunction::Analytic(AnalyticFn::Polynomial(c)) if c.len() <= 1)
    }
}

fn check_positive(sigma: &CoefficientFunction) -> Result<()> {
    let n = POSITIVITY_PROBES;
    for i in 0..n {
        let x = -POSITIVITY_WINDOW + 2.0 * POSITIVITY_WINDOW * i as f64 / (n - 1) as f64;
        let v = sigma.value(x);
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::SigmaNotPositive { x, value: v });
        }
    }
    Ok(())
}

fn take_params(
    kind: &str,
    params: &BTreeMap<String, f64>,
    allowed: &[(&str, f64)],
) -> Result<Vec<f64>> {
    for name in params.keys() {
        if !allowed.iter().any(|(a, _)| a == name) {
            return Err(Error::InvalidModel(format!(
                "unknown parameter '{name}' for model '{kind}'"
            )));
        }
    }
    Ok(allowed
        .iter()
        .map(|(name, default)| params.get(*name).copied().unwrap_or(*default))
        .collect())
}

/// Builds a model from its configuration description.
pub fn make_model(spec: &ModelSpec) -> Result<DiffusionModel> {
    match spec {
        ModelSpec::Catalog { kind, params } => match kind.as_str() {
            "ou" => {
                let p = take_params(kind, params, &[("beta", 1.0), ("sigma0", 1.0)])?;
                DiffusionModel::ou(p[0], p[1])
            }
            "double_well" => {
                let p = take_params(kind, params, &[("a", 1.0), ("b", 1.0), ("sigma0", 1.0)])?;
                DiffusionModel::double_well(p[0], p[1], p[2])
            }
            "tanh_drift" => {
                let p = take_params(kind, params, &[("kappa", 1.0), ("sigma0", 1.0)])?;
                DiffusionModel::tanh_drift(p[0], p[1])
            }
            other => Err(Error::UnknownModel(other.to_string())),
        },
        ModelSpec::Expression { sigma, m, params } => {
            let sigma = CoefficientFunction::parse(sigma, params)?;
            let m = CoefficientFunction::parse(m, params)?;
            DiffusionModel::new("expression", sigma, m)
        }
    }
}
