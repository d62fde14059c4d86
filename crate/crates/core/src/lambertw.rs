//! The principal branch of the Lambert-W function on the positive real axis.
//!
//! `theta(y)` is the unique `w > 0` with `w * exp(w) = y`. The HJB
//! nonlinearity only ever needs `theta(k * exp(u))`, so [`theta_exp`] takes the
//! logarithm of the argument directly and never forms `exp(u)` when that would
//! overflow.

use crate::error::{Error, Result};

const MAX_HALLEY_ITER: usize = 50;
const BISECTION_ITER: usize = 1100;
/// Above this log-argument `exp(u)` is too close to `f64::MAX` to be formed.
const LOG_FORM_THRESHOLD: f64 = 700.0;

/// Relative accuracy guaranteed on `w * exp(w) = y`.
pub const THETA_TOLERANCE: f64 = 1e-12;

/// Evaluates `theta(y)` for `y > 0`.
pub fn theta(y: f64) -> Result<f64> {
    if !y.is_finite() || y <= 0.0 {
        return Err(Error::Domain(format!("theta requires a finite y > 0, got {y}")));
    }
    Ok(theta_positive(y))
}

/// `theta'(y) = theta(y) / (y (1 + theta(y)))`.
///
/// Evaluated as `exp(-theta) / (1 + theta)`, which is the same quantity
/// (`theta / y = exp(-theta)`) but stays finite as `y -> 0+`.
pub fn theta_derivative(y: f64) -> Result<f64> {
    let w = theta(y)?;
    Ok((-w).exp() / (1.0 + w))
}

/// Evaluates `theta(exp(u))` for any finite `u`.
pub fn theta_exp(u: f64) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::Domain(format!("theta_exp requires a finite exponent, got {u}")));
    }
    Ok(theta_exp_unchecked(u))
}

#[inline]
pub(crate) fn theta_exp_unchecked(u: f64) -> f64 {
    if u > LOG_FORM_THRESHOLD {
        solve_log_form(u)
    } else if u < -LOG_FORM_THRESHOLD {
        // theta(y) = y * exp(-theta(y)) and theta(y) < 1e-304 here.
        u.exp()
    } else {
        theta_positive(u.exp())
    }
}

/// Arguments of the composite term `theta_f` appearing in the HJB equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaCompositeArgs {
    /// `gamma / sigma^2`, strictly positive.
    pub gamma_over_sigma2: f64,
    /// `mu / sigma^2`.
    pub mu_over_sigma2: f64,
    /// Absolute risk aversion.
    pub alpha: f64,
    /// Value of the certainty equivalent at the node.
    pub f_value: f64,
    /// `(alpha / sigma) * f_x * a * rho` at the node.
    pub grad_term: f64,
}

/// `theta( gamma/sigma^2 * exp(mu/sigma^2 + alpha f - grad_term) )`.
pub fn theta_composite(args: &ThetaCompositeArgs) -> Result<f64> {
    let ThetaCompositeArgs {
        gamma_over_sigma2,
        mu_over_sigma2,
        alpha,
        f_value,
        grad_term,
    } = *args;
    let all_finite = [gamma_over_sigma2, mu_over_sigma2, alpha, f_value, grad_term]
        .iter()
        .all(|v| v.is_finite());
    if !all_finite {
        return Err(Error::Domain(format!("non-finite theta_composite input: {args:?}")));
    }
    if gamma_over_sigma2 <= 0.0 || alpha <= 0.0 {
        return Err(Error::Domain(format!(
            "theta_composite requires gamma/sigma^2 > 0 and alpha > 0, got {args:?}"
        )));
    }
    let u = gamma_over_sigma2.ln() + mu_over_sigma2 + alpha * f_value - grad_term;
    theta_exp(u)
}

fn initial_guess(y: f64) -> f64 {
    if y < 1.0 {
        y
    } else if y < std::f64::consts::E {
        // theta(1) ~ 0.567, theta(e) = 1; the chord is within 3% on [1, e].
        0.567_143 + (y - 1.0) * (1.0 - 0.567_143) / (std::f64::consts::E - 1.0)
    } else {
        let l1 = y.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

fn theta_positive(y: f64) -> f64 {
    if y > 1e300 {
        return solve_log_form(y.ln());
    }
    let mut w = initial_guess(y);
    for _ in 0..MAX_HALLEY_ITER {
        let ew = w.exp();
        let f = w * ew - y;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = w - step;
        if !(next.is_finite() && next > 0.0) {
            break;
        }
        w = next;
        if step.abs() <= 4.0 * f64::EPSILON * w {
            return w;
        }
    }
    bisect(y)
}

fn bisect(y: f64) -> f64 {
    let mut lo = 0.0_f64;
    let mut hi = if y > std::f64::consts::E { y.ln() } else { 1.0 };
    for _ in 0..BISECTION_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mid * mid.exp() < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `w + ln(w) = u` for large `u` (so that `w e^w = e^u`).
fn solve_log_form(u: f64) -> f64 {
    let mut w = u - u.ln();
    for _ in 0..MAX_HALLEY_ITER {
        let g = w + w.ln() - u;
        let step = g / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w {
            break;
        }
    }
    w
}
