//! Shared fixtures for the benchmarks.

use credit_hjb::hjb::{default_grid, GridSpec};
use credit_hjb::model::{make_cir_model, CirParams, ModelSpec, Preferences};

/// The reference CIR model with `alpha = 3`, `T = 1`.
pub fn reference_setup() -> (ModelSpec, Preferences) {
    let m = make_cir_model(CirParams::reference()).expect("reference parameters are valid");
    let pref = Preferences::new(3.0, 1.0).expect("valid preferences");
    (m, pref)
}

pub fn reference_grid(n_space: usize, n_time: usize) -> GridSpec {
    let (m, pref) = reference_setup();
    default_grid(&m, &pref, n_space, n_time).expect("default grid")
}
