//! Run configuration: one JSON file, optional command-specific fields, and
//! the command-line overrides applied on top.

use std::fs;
use std::path::Path;

use ergoflow_core::coeffs::{DEFAULT_DIVERGENCE_CUTOFF, DEFAULT_WINDOW};
use ergoflow_core::flow::{Direction, Scheme};
use ergoflow_core::measures::DEFAULT_N_GRID;
use ergoflow_core::ModelSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

fn default_dt() -> f64 {
    1e-3
}

fn default_window() -> f64 {
    DEFAULT_WINDOW
}

fn default_n_grid() -> usize {
    DEFAULT_N_GRID
}

fn default_cutoff() -> f64 {
    DEFAULT_DIVERGENCE_CUTOFF
}

/// Everything a command reads. Fields left out are filled per command and
/// echoed back in the sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_n_grid")]
    pub n_grid: usize,
    #[serde(default = "default_cutoff")]
    pub divergence_cutoff: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escape_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    /// Horizon T of the command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Number of paths or seeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bisection_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_list: Option<Vec<f64>>,
    /// Test function for the residual check, as an expression in x.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// Output every k-th step of a simulated trajectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at '{path}': {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Default configuration: OU with β = 1, σ₀ = 1.
    pub fn ou_default() -> Self {
        Self::from_json(r#"{"model": {"kind": "ou", "params": {"beta": 1, "sigma0": 1}}}"#)
            .expect("built-in config parses")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::Config(format!("at '{name}': must be positive and finite (got {v})")))
            }
        };
        positive("dt", self.dt)?;
        positive("window", self.window)?;
        positive("divergence_cutoff", self.divergence_cutoff)?;
        for (name, v) in [
            ("escape_threshold", self.escape_threshold),
            ("t", self.t),
            ("tol", self.tol),
            ("bisection_tol", self.bisection_tol),
            ("t_shift", self.t_shift),
            ("burn_in", self.burn_in),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if let Some(dts) = &self.dt_list {
            for (i, &d) in dts.iter().enumerate() {
                positive(&format!("dt_list[{i}]"), d)?;
            }
        }
        if self.n_grid < 1000 || self.n_grid % 4 != 0 {
            return Err(CliError::Config(format!(
                "at 'n_grid': must be a multiple of 4 and at least 1000 (got {})",
                self.n_grid
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_filled() {
        let c = RunConfig::ou_default();
        assert_eq!(c.dt, 1e-3);
        assert_eq!(c.window, 40.0);
        assert_eq!(c.n_grid, 16384);
        assert!(c.t.is_none());
    }

    #[test]
    fn errors_carry_the_field_path() {
        let err = RunConfig::from_json(r#"{"model": {"kind": "ou"}, "dt": "fast"}"#).unwrap_err();
        assert!(err.to_string().contains("'dt'"), "{err}");
        let err = RunConfig::from_json(r#"{"model": {"kind": "ou"}, "x0": [1, "a"]}"#).unwrap_err();
        assert!(err.to_string().contains("x0[1]"), "{err}");
        let err = RunConfig::from_json(r#"{"model": {"kind": "ou"}, "dtt": 1}"#).unwrap_err();
        assert!(err.to_string().contains("dtt"), "{err}");
    }

    #[test]
    fn expression_models_parse() {
        let c = RunConfig::from_json(r#"{"model": {"sigma": "1", "m": "-x"}}"#).unwrap();
        assert_eq!(c.model, ModelSpec::expression("1", "-x"));
    }
}
