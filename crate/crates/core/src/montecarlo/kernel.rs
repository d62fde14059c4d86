//! Per-step building blocks shared by the path-bundle API and the streaming
//! verifier, so both consume random numbers in the same order.

use rand::Rng;
use rand_distr::{Open01, StandardNormal};

use super::SimScheme;
use crate::model::ModelSpec;

/// Brownian increments for one step: factor noise `dw`, independent asset
/// noise `dw0`, and for the exact OU transition a third standard normal.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Draws {
    pub dw: f64,
    pub dw0: f64,
    pub zx: f64,
}

/// `-ln U` with `U` uniform on the open interval.
pub(crate) fn exp_draw<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -u.ln()
}

/// Draws one step. With `substeps > 1` each increment is the sum of that many
/// finer increments, so a coarse run shares its noise with a fine run.
pub(crate) fn draw<R: Rng>(rng: &mut R, sqrt_dt: f64, extra: bool, substeps: usize) -> Draws {
    let mut d = Draws::default();
    for _ in 0..substeps {
        d.dw += rng.sample::<f64, _>(StandardNormal);
        d.dw0 += rng.sample::<f64, _>(StandardNormal);
        if extra {
            d.zx += rng.sample::<f64, _>(StandardNormal);
        }
    }
    let scale = sqrt_dt / (substeps as f64).sqrt();
    d.dw *= scale;
    d.dw0 *= scale;
    d.zx /= (substeps as f64).sqrt();
    d
}

#[derive(Debug, Clone, Copy)]
enum Transition {
    Euler,
    /// `X' = decay X + load dW + resid zx`
    ExactOu { decay: f64, load: f64, resid: f64 },
    FullTruncation { kappa: f64, theta: f64, xi: f64 },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FactorStepper {
    transition: Transition,
    pub dt: f64,
    pub sqrt_dt: f64,
}

impl FactorStepper {
    /// Assumes the scheme was already checked against the model.
    pub fn new(m: &ModelSpec, scheme: SimScheme, dt: f64) -> Self {
        let transition = match scheme {
            SimScheme::EulerMaruyama => Transition::Euler,
            SimScheme::ExactOu => {
                let b = m.ou_params().expect("scheme checked").b_mr;
                let (var, cov) = if b.abs() * dt < 1e-12 {
                    (dt, dt)
                } else {
                    (-(-2.0 * b * dt).exp_m1() / (2.0 * b), -(-b * dt).exp_m1() / b)
                };
                let load = cov / dt;
                Transition::ExactOu { decay: (-b * dt).exp(), load, resid: (var - cov * cov / dt).max(0.0).sqrt() }
            }
            SimScheme::FullTruncationCir => {
                let p = m.cir_params().expect("scheme checked");
                Transition::FullTruncation { kappa: p.kappa, theta: p.theta, xi: p.xi }
            }
        };
        Self { transition, dt, sqrt_dt: dt.sqrt() }
    }

    pub fn needs_extra(&self) -> bool {
        matches!(self.transition, Transition::ExactOu { .. })
    }

    /// Advances the scheme state. For full truncation the state may go
    /// negative; use [`observe`](Self::observe) before evaluating coefficients.
    #[inline]
    pub fn step(&self, m: &ModelSpec, state: f64, d: &Draws) -> f64 {
        match self.transition {
            Transition::Euler => {
                let c = m.at(state);
                state + c.b * self.dt + c.a() * d.dw
            }
            Transition::ExactOu { decay, load, resid } => decay * state + load * d.dw + resid * d.zx,
            Transition::FullTruncation { kappa, theta, xi } => {
                let xp = state.max(0.0);
                state + kappa * (theta - xp) * self.dt + xi * xp.sqrt() * d.dw
            }
        }
    }

    #[inline]
    pub fn observe(&self, state: f64) -> f64 {
        match self.transition {
            Transition::FullTruncation { .. } => state.max(0.0),
            _ => state,
        }
    }
}

/// Fraction of the step at which the cumulative intensity `lam + s * inc`
/// reaches `e`, if it does within the step.
#[inline]
pub(crate) fn crossing(lam: f64, inc: f64, e: f64) -> Option<f64> {
    if lam + inc >= e {
        Some(if inc > 0.0 { ((e - lam) / inc).clamp(0.0, 1.0) } else { 0.0 })
    } else {
        None
    }
}

/// Wealth change over a fraction `frac` of a step before any default loss.
/// `drift` is the per-dollar drift of the position.
#[inline]
pub(crate) fn wealth_increment(pi: f64, drift: f64, sigma: f64, rho: f64, dt: f64, d: &Draws, frac: f64) -> f64 {
    let db = rho * d.dw + (1.0 - rho * rho).max(0.0).sqrt() * d.dw0;
    pi * frac * (drift * dt + sigma * db)
}

/// Log-increment of the stochastic-exponential density over a fraction of a
/// surviving step (jump factor excluded).
#[inline]
pub(crate) fn log_density_increment(
    a: f64,
    b: f64,
    c: f64,
    gamma: f64,
    dt: f64,
    d: &Draws,
    frac: f64,
) -> f64 {
    frac * (a * d.dw + b * d.dw0 - 0.5 * (a * a + b * b) * dt - c * gamma * dt)
}
