use thiserror::Error;

use crate::coeffs::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown catalog model '{0}'")]
    UnknownModel(String),

    #[error("expression parse error: {0}")]
    Parse(#[from] ParseError),

    #[error("sigma not positive: sigma({x}) = {value}")]
    SigmaNotPositive { x: f64, value: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model is not positive recurrent: {0}")]
    NotRecurrent(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} is not on the grid of step {dt}")]
    OffGrid { t: f64, dt: f64 },

    #[error("noise path horizon exceeded: need {needed} steps on the {side} side, have {available}")]
    BeyondHorizon {
        side: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("quadrature did not converge: {quantity} has relative error estimate {estimate:e}")]
    Quadrature { quantity: &'static str, estimate: f64 },

    #[error("focusing rate gamma is infinite; {0} is unavailable")]
    GammaInfinite(&'static str),

    #[error("numeric overflow at step {step} for member {member}")]
    Overflow { member: usize, step: usize },

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("bisection bracket invalid: {0}")]
    Bracket(String),

    #[error("empty sample set")]
    EmptySample,
}
