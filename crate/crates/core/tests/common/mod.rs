#![allow(dead_code)]

use ergoflow_core::coeffs::{DEFAULT_DIVERGENCE_CUTOFF, DEFAULT_WINDOW};
use ergoflow_core::measures::{build_measures, MeasureTable, DEFAULT_N_GRID};
use ergoflow_core::{validate_recurrence, DiffusionModel};

pub fn validated(mut m: DiffusionModel) -> DiffusionModel {
    validate_recurrence(&mut m, DEFAULT_WINDOW, DEFAULT_DIVERGENCE_CUTOFF);
    assert!(m.is_positive_recurrent(), "{} should be positive recurrent", m.name());
    m
}

pub fn ou(beta: f64) -> DiffusionModel {
    validated(DiffusionModel::ou(beta, 1.0).unwrap())
}

pub fn tanh() -> DiffusionModel {
    validated(DiffusionModel::tanh_drift(1.0, 1.0).unwrap())
}

pub fn double_well() -> DiffusionModel {
    validated(DiffusionModel::double_well(1.0, 1.0, 1.0).unwrap())
}

pub fn catalog() -> Vec<DiffusionModel> {
    vec![ou(1.0), tanh(), double_well()]
}

pub fn table(m: &DiffusionModel) -> MeasureTable {
    build_measures(m, DEFAULT_WINDOW, DEFAULT_N_GRID).unwrap()
}
