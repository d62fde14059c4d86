//! Backward solver for the certainty-equivalent equation on a 1-D grid.
//!
//! Crank-Nicolson (or backward Euler) in time, central differences in space
//! and a full Newton iteration per step with a tridiagonal Jacobian.

mod grid;
mod solver;
mod surface;
pub(crate) mod tridiag;

pub use grid::GridSpec;
pub use solver::{
    hjb_rhs, max_norm, protected_residual, residual, solve_full, solve_local, solve_protected, Boundary,
    Scheme, SolverOptions,
};
pub use surface::{fmt17, gradient_of, interpolate, write_grid_csv, Surface, SurfaceMode};

use crate::error::{Error, Result};
use crate::model::{Coefficients, ModelSpec, Preferences};
use crate::stats;

/// Default truncation of the state space.
///
/// CIR: the 0.1% and 99.9% stationary quantiles, widened by a factor 1.5
/// (divided below, multiplied above). OU: six standard deviations of the
/// stationary law around 0, or of the law at the horizon when there is no
/// mean reversion. Tabulated models: the domain shrunk by 1% of its width at
/// each end; unbounded tabulated domains need an explicit grid.
pub fn default_bounds(m: &ModelSpec, horizon: f64) -> Result<(f64, f64)> {
    match m.coefficients() {
        Coefficients::Cir(p) => {
            let lo = stats::cir_stationary_quantile(p, 0.001)? / 1.5;
            let hi = stats::cir_stationary_quantile(p, 0.999)? * 1.5;
            Ok((lo, hi))
        }
        Coefficients::Ou(p) => {
            let sd = stats::ou_spread_variance(p.b_mr, horizon).sqrt();
            Ok((-6.0 * sd, 6.0 * sd))
        }
        Coefficients::Custom(_) => {
            let d = m.domain;
            if !d.is_bounded() {
                return Err(Error::InvalidGrid(
                    "tabulated models on unbounded domains need explicit grid bounds".into(),
                ));
            }
            let pad = 0.01 * d.width();
            Ok((d.lower + pad, d.upper - pad))
        }
    }
}

pub fn default_grid(m: &ModelSpec, pref: &Preferences, n_space: usize, n_time: usize) -> Result<GridSpec> {
    let (lo, hi) = default_bounds(m, pref.horizon)?;
    GridSpec::new(lo, hi, n_space, n_time, 0.0, pref.horizon)
}
