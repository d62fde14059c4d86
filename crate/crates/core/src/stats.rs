//! Stationary laws of the built-in factor processes.

use statrs::distribution::{ContinuousCDF, Gamma, Normal};

use crate::error::{Error, Result};
use crate::model::{CirParams, Coefficients, ModelSpec};

/// Quantile of the stationary Gamma law `(2 kappa theta / xi^2, 2 kappa / xi^2)`.
pub fn cir_stationary_quantile(p: &CirParams, prob: f64) -> Result<f64> {
    let (shape, rate) = p.stationary_gamma();
    let g = Gamma::new(shape, rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    check_prob(prob)?;
    Ok(g.inverse_cdf(prob))
}

/// Variance of `dX = -b X dt + dW` used to size the OU domain: the stationary
/// variance `1/(2b)` when `b > 0`, otherwise the variance at the horizon.
pub fn ou_spread_variance(b: f64, horizon: f64) -> f64 {
    if b > 0.0 {
        0.5 / b
    } else if b == 0.0 {
        horizon
    } else {
        (-2.0 * b * horizon).exp_m1() / (-2.0 * b)
    }
}

/// Central 95% band of the invariant distribution, used for reporting.
pub fn reporting_band(m: &ModelSpec, horizon: f64) -> Result<(f64, f64)> {
    match m.coefficients() {
        Coefficients::Cir(p) => Ok((cir_stationary_quantile(p, 0.025)?, cir_stationary_quantile(p, 0.975)?)),
        Coefficients::Ou(p) => {
            let sd = ou_spread_variance(p.b_mr, horizon).sqrt();
            let n = Normal::new(0.0, sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok((n.inverse_cdf(0.025), n.inverse_cdf(0.975)))
        }
        Coefficients::Custom(_) => crate::hjb::default_bounds(m, horizon),
    }
}

fn check_prob(prob: f64) -> Result<()> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::InvalidParameter(format!("probability must lie in (0, 1), got {prob}")));
    }
    Ok(())
}
