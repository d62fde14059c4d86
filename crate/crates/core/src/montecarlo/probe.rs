//! Exponential-moment probes for the market price of risk.

use rayon::prelude::*;

use super::kernel::{draw, FactorStepper};
use super::{path_rng, MCEstimate, Moments, SimScheme};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Paths whose factor exceeds this magnitude count as exploded.
const EXPLOSION_CAP: f64 = 1e8;

/// Measure under which the factor is simulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeMeasure {
    Physical,
    /// Drift `b - l a rho`.
    P0,
    /// Drift `b + (p - 1) l a rho`.
    Pp(f64),
}

impl ProbeMeasure {
    fn drift_weight(&self) -> f64 {
        match self {
            ProbeMeasure::Physical => 0.0,
            ProbeMeasure::P0 => -1.0,
            ProbeMeasure::Pp(p) => p - 1.0,
        }
    }
}

/// CIR parameters `dX = kappa (theta - X) dt + xi sqrt(X) dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirDynamics {
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub estimate: MCEstimate,
    /// Paths that left the hard cap or produced a non-finite value.
    pub exploded: usize,
}

// Full-truncation step for explicit CIR dynamics.
#[inline]
fn cir_step(d: &CirDynamics, state: f64, dt: f64, dw: f64) -> f64 {
    let xp = state.max(0.0);
    state + d.kappa * (d.theta - xp) * dt + d.xi * xp.sqrt() * dw
}

/// `E[exp(int_0^T (A/X + B X) du)]` for a CIR process started at `x0`,
/// left-point rule on `n_steps` steps.
#[allow(clippy::too_many_arguments)]
pub fn cir_exponential_moment(
    dynamics: CirDynamics,
    a_coef: f64,
    b_coef: f64,
    x0: f64,
    horizon: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<MCEstimate> {
    if !(x0 > 0.0 && horizon > 0.0) || n_paths == 0 || n_steps == 0 {
        return Err(Error::InvalidParameter("need x0 > 0, T > 0 and a positive path and step count".into()));
    }
    let dt = horizon / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let vals: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p);
            let mut state = x0;
            let mut integral = 0.0;
            for _ in 0..n_steps {
                let x = state.max(0.0);
                let recip = if a_coef == 0.0 { 0.0 } else { a_coef / x };
                integral += (recip + b_coef * x) * dt;
                let d = draw(&mut rng, sqrt_dt, false, 1);
                state = cir_step(&dynamics, state, dt, d.dw);
            }
            integral.exp()
        })
        .collect();
    Ok(Moments::from_iter(vals).estimate("cir_exponential_moment", seed))
}

/// Squared market price of risk with the CIR singularity at zero handled in
/// closed form.
fn lambda_sq(m: &ModelSpec, x: f64) -> f64 {
    if let Some(p) = m.cir_params() {
        let (m1, m2) = (p.mu1 - p.gamma1, p.mu2 - p.gamma2);
        let xp = x.max(0.0);
        let num = m1 + m2 * xp;
        return if num == 0.0 { 0.0 } else { num * num / xp };
    }
    let l = m.at(x).market_price_of_risk();
    l * l
}

/// `E[exp(eps int_0^T l(X)^2 du)]` with `X` simulated under `measure`.
#[allow(clippy::too_many_arguments)]
pub fn mc_integrability_probe(
    m: &ModelSpec,
    measure: ProbeMeasure,
    eps: f64,
    x0: f64,
    horizon: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<ProbeResult> {
    if !(eps >= 0.0) || !(horizon > 0.0) || n_paths == 0 || n_steps == 0 {
        return Err(Error::InvalidParameter("need eps >= 0, T > 0 and a positive path and step count".into()));
    }
    if let ProbeMeasure::Pp(p) = measure {
        if !(p > 1.0) {
            return Err(Error::InvalidParameter(format!("power measure needs p > 1, got {p}")));
        }
    }
    if !m.domain.contains(x0) {
        return Err(Error::Domain(format!("x0 = {x0} outside the state space")));
    }
    let k = measure.drift_weight();
    let dt = horizon / n_steps as f64;
    let sqrt_dt = dt.sqrt();

    // drift-changed CIR stays CIR; everything else runs through Euler
    let cir = m.cir_params().map(|p| {
        let (m1, m2) = (p.mu1 - p.gamma1, p.mu2 - p.gamma2);
        let kappa = p.kappa - k * p.xi * p.rho * m2;
        let level = p.kappa * p.theta + k * p.xi * p.rho * m1;
        CirDynamics { kappa, theta: if kappa != 0.0 { level / kappa } else { 0.0 }, xi: p.xi }
    });
    let euler = FactorStepper::new(m, SimScheme::EulerMaruyama, dt);

    let results: Vec<(f64, bool)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p);
            let mut state = x0;
            let mut integral = 0.0;
            for _ in 0..n_steps {
                let x = if cir.is_some() { state.max(0.0) } else { state };
                if eps > 0.0 {
                    integral += eps * lambda_sq(m, x) * dt;
                }
                let d = draw(&mut rng, sqrt_dt, false, 1);
                state = match &cir {
                    Some(c) => cir_step(c, state, dt, d.dw),
                    None => {
                        let c = m.at(state);
                        let tilt = if k == 0.0 { 0.0 } else { k * c.market_price_of_risk() * c.a() * c.rho };
                        euler.step(m, state, &d) + tilt * dt
                    }
                };
                if !state.is_finite() || state.abs() > EXPLOSION_CAP {
                    return (f64::NAN, true);
                }
            }
            (integral.exp(), false)
        })
        .collect();

    let exploded = results.iter().filter(|r| r.1).count();
    let est = Moments::from_iter(results.iter().filter(|r| !r.1).map(|r| r.0));
    let label = match measure {
        ProbeMeasure::Physical => "integrability_physical".to_string(),
        ProbeMeasure::P0 => "integrability_p0".to_string(),
        ProbeMeasure::Pp(p) => format!("integrability_p{p}"),
    };
    Ok(ProbeResult { estimate: est.estimate(&label, seed), exploded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_cir_model, make_ou_model, CirParams, OuParams};

    #[test]
    fn zero_eps_gives_one() {
        let m = make_cir_model(CirParams::reference()).unwrap();
        let r = mc_integrability_probe(&m, ProbeMeasure::P0, 0.0, 0.06, 1.0, 200, 50, 1).unwrap();
        assert_eq!(r.estimate.mean, 1.0);
        assert_eq!(r.estimate.std_error, 0.0);
        assert_eq!(r.exploded, 0);
    }

    #[test]
    fn bounded_lambda_is_deterministic() {
        let p = OuParams { b_mr: 1.0, mu1: 0.3, mu2: 0.0, sigma: 0.2, gamma: 0.1, rho: 0.4 };
        let m = make_ou_model(p).unwrap();
        let r = mc_integrability_probe(&m, ProbeMeasure::Pp(1.5), 0.7, 0.0, 2.0, 100, 40, 3).unwrap();
        let cap = (0.7_f64 * 2.0 * 0.2 * 0.2).exp();
        assert!((r.estimate.mean - cap).abs() < 1e-12);
    }

    #[test]
    fn cir_lambda_sq_expansion() {
        let mut p = CirParams::reference();
        p.mu1 = 0.2;
        p.gamma1 = 0.05;
        let m = make_cir_model(p).unwrap();
        let (m1, m2) = (p.mu1 - p.gamma1, p.mu2 - p.gamma2);
        for x in [0.01, 0.06, 0.3, 2.0] {
            let expanded = m1 * m1 / x + 2.0 * m1 * m2 + m2 * m2 * x;
            let direct = m.at(x).market_price_of_risk().powi(2);
            assert!((expanded - direct).abs() < 1e-12 * direct.max(1.0));
            assert!((lambda_sq(&m, x) - direct).abs() < 1e-12 * direct.max(1.0));
        }
    }
}
