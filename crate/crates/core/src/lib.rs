//! Numerics for one-dimensional positive recurrent diffusions and their
//! stochastic flows: invariant measures and focusing rates by quadrature,
//! forward and sharp flow simulation, pullback sampling of the stagnation
//! point, and an exact Ornstein–Uhlenbeck reference.

pub mod coeffs;
pub mod error;
pub mod estimators;
pub mod flow;
pub mod measures;
pub mod noise;
pub mod oracle;
pub mod pullback;
pub mod quadrature;

pub use coeffs::{make_model, validate_recurrence, DiffusionModel, ModelSpec, RecurrenceStatus};
pub use error::{Error, Result};
