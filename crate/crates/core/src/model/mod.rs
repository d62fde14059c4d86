//! Factor-process and asset coefficients on a one-dimensional state space.
//!
//! The factor `X` follows `dX = b(X) dt + a(X) dW` with `a = sqrt(A)`. Before
//! default the asset has return `mu(X)`, volatility `sigma(X)` and correlation
//! `rho(X)` with `W`; default arrives with intensity `gamma(X)`.

mod localization;
mod spline;

pub use localization::{build_localization, exhaustion, LocalizationSpec};
pub use spline::CubicSpline;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Open interval `(lower, upper)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain1D {
    pub lower: f64,
    pub upper: f64,
}

impl Domain1D {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::InvalidParameter(format!(
                "domain requires lower < upper, got ({lower}, {upper})"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn real_line() -> Self {
        Self { lower: f64::NEG_INFINITY, upper: f64::INFINITY }
    }

    pub fn positive_half_line() -> Self {
        Self { lower: 0.0, upper: f64::INFINITY }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    pub fn contains_closed(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Ornstein-Uhlenbeck factor with constant volatility and intensity:
/// `dX = -b X dt + dW`, `mu = sigma (mu1 + mu2 x)`, `gamma = sigma * gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuParams {
    pub b_mr: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub rho: f64,
}

impl OuParams {
    pub fn validate(&self) -> Result<()> {
        check_finite(&[self.b_mr, self.mu1, self.mu2, self.sigma, self.gamma, self.rho])?;
        if self.sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!("OU sigma must be > 0, got {}", self.sigma)));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidParameter(format!("OU gamma must be > 0, got {}", self.gamma)));
        }
        check_rho(self.rho)
    }
}

/// CIR factor with affine return and intensity:
/// `dX = kappa (theta - X) dt + xi sqrt(X) dW`, `sigma(x) = sigma sqrt(x)`,
/// `mu = sigma (mu1 + mu2 x)`, `gamma = sigma (gamma1 + gamma2 x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirParams {
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub rho: f64,
}

impl CirParams {
    /// The calibration used for the defaultable-bond and insurance study:
    /// `sigma^2 theta = 0.09`, `sigma mu2 theta = 0.10`, `exp(-sigma gamma2 theta) = 0.97`.
    pub fn reference() -> Self {
        Self {
            kappa: 0.25,
            theta: 0.06,
            xi: 0.1,
            mu1: 0.0,
            mu2: 1.3608,
            sigma: 1.2247,
            gamma1: 0.0,
            gamma2: 0.4145,
            rho: -0.53,
        }
    }

    /// `kappa theta - xi^2 / 2`; non-negative under the Feller condition.
    pub fn feller_gap(&self) -> f64 {
        self.kappa * self.theta - 0.5 * self.xi * self.xi
    }

    pub fn validate(&self) -> Result<()> {
        check_finite(&[
            self.kappa, self.theta, self.xi, self.mu1, self.mu2, self.sigma, self.gamma1,
            self.gamma2, self.rho,
        ])?;
        if self.kappa <= 0.0 || self.theta <= 0.0 || self.xi <= 0.0 || self.sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "CIR requires kappa, theta, xi, sigma > 0 (got {}, {}, {}, {})",
                self.kappa, self.theta, self.xi, self.sigma
            )));
        }
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 || self.gamma1 + self.gamma2 <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "CIR intensity needs gamma1, gamma2 >= 0, not both zero (got {}, {})",
                self.gamma1, self.gamma2
            )));
        }
        check_rho(self.rho)?;
        let gap = self.feller_gap();
        if gap < 0.0 {
            return Err(Error::FellerViolation { gap });
        }
        Ok(())
    }

    /// Shape and rate of the stationary Gamma law.
    pub fn stationary_gamma(&self) -> (f64, f64) {
        let shape = 2.0 * self.kappa * self.theta / (self.xi * self.xi);
        let rate = 2.0 * self.kappa / (self.xi * self.xi);
        (shape, rate)
    }
}

/// Coefficients tabulated on knots and interpolated with natural cubic splines.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCoefficients {
    pub b: CubicSpline,
    pub a_sq: CubicSpline,
    pub mu: CubicSpline,
    pub sigma: CubicSpline,
    pub rho: CubicSpline,
    pub gamma: CubicSpline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ou,
    Cir,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    Ou(OuParams),
    Cir(CirParams),
    Custom(Box<TabulatedCoefficients>),
}

/// All coefficients evaluated at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffPoint {
    pub b: f64,
    pub a_sq: f64,
    pub mu: f64,
    pub sigma: f64,
    pub rho: f64,
    pub gamma: f64,
}

impl CoeffPoint {
    pub fn a(&self) -> f64 {
        self.a_sq.sqrt()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// `(mu - gamma) / sigma`.
    pub fn market_price_of_risk(&self) -> f64 {
        (self.mu - self.gamma) / self.sigma
    }
}

/// A factor model on an interval. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub domain: Domain1D,
    coefficients: Coefficients,
}

impl ModelSpec {
    /// Builds a model without validating parameters. Used by the assumption
    /// checker, which must be able to report on invalid parameter sets.
    pub fn from_parts_unchecked(domain: Domain1D, coefficients: Coefficients) -> Self {
        Self { domain, coefficients }
    }

    pub fn kind(&self) -> ModelKind {
        match self.coefficients {
            Coefficients::Ou(_) => ModelKind::Ou,
            Coefficients::Cir(_) => ModelKind::Cir,
            Coefficients::Custom(_) => ModelKind::Custom,
        }
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coefficients
    }

    pub fn ou_params(&self) -> Option<&OuParams> {
        match &self.coefficients {
            Coefficients::Ou(p) => Some(p),
            _ => None,
        }
    }

    pub fn cir_params(&self) -> Option<&CirParams> {
        match &self.coefficients {
            Coefficients::Cir(p) => Some(p),
            _ => None,
        }
    }

    /// Evaluates every coefficient at `x` without a domain check.
    #[inline]
    pub fn at(&self, x: f64) -> CoeffPoint {
        match &self.coefficients {
            Coefficients::Ou(p) => CoeffPoint {
                b: -p.b_mr * x,
                a_sq: 1.0,
                mu: p.sigma * (p.mu1 + p.mu2 * x),
                sigma: p.sigma,
                rho: p.rho,
                gamma: p.sigma * p.gamma,
            },
            Coefficients::Cir(p) => {
                let xp = x.max(0.0);
                CoeffPoint {
                    b: p.kappa * (p.theta - x),
                    a_sq: p.xi * p.xi * xp,
                    mu: p.sigma * (p.mu1 + p.mu2 * xp),
                    sigma: p.sigma * xp.sqrt(),
                    rho: p.rho,
                    gamma: p.sigma * (p.gamma1 + p.gamma2 * xp),
                }
            }
            Coefficients::Custom(t) => CoeffPoint {
                b: t.b.eval(x),
                a_sq: t.a_sq.eval(x),
                mu: t.mu.eval(x),
                sigma: t.sigma.eval(x),
                rho: t.rho.eval(x),
                gamma: t.gamma.eval(x),
            },
        }
    }

    pub fn checked_at(&self, x: f64) -> Result<CoeffPoint> {
        if !self.domain.contains(x) {
            return Err(Error::Domain(format!(
                "x = {x} outside ({}, {})",
                self.domain.lower, self.domain.upper
            )));
        }
        Ok(self.at(x))
    }

    pub fn b(&self, x: f64) -> f64 {
        self.at(x).b
    }
    pub fn a_sq(&self, x: f64) -> f64 {
        self.at(x).a_sq
    }
    pub fn mu(&self, x: f64) -> f64 {
        self.at(x).mu
    }
    pub fn sigma(&self, x: f64) -> f64 {
        self.at(x).sigma
    }
    pub fn rho(&self, x: f64) -> f64 {
        self.at(x).rho
    }
    pub fn gamma(&self, x: f64) -> f64 {
        self.at(x).gamma
    }
}

pub fn make_ou_model(p: OuParams) -> Result<ModelSpec> {
    p.validate()?;
    Ok(ModelSpec { domain: Domain1D::real_line(), coefficients: Coefficients::Ou(p) })
}

pub fn make_cir_model(p: CirParams) -> Result<ModelSpec> {
    p.validate()?;
    Ok(ModelSpec { domain: Domain1D::positive_half_line(), coefficients: Coefficients::Cir(p) })
}

/// Builds a tabulated model. Positivity of `A`, `sigma`, `gamma` and
/// `rho^2 <= 1` are checked on the knots.
pub fn make_custom_model(domain: Domain1D, table: TabulatedCoefficients) -> Result<ModelSpec> {
    let knots_ok = |s: &CubicSpline, name: &str, pred: &dyn Fn(f64) -> bool| -> Result<()> {
        match s.values().iter().find(|v| !pred(**v)) {
            Some(v) => Err(Error::InvalidParameter(format!("tabulated {name} has invalid value {v}"))),
            None => Ok(()),
        }
    };
    knots_ok(&table.a_sq, "A", &|v| v > 0.0)?;
    knots_ok(&table.sigma, "sigma", &|v| v > 0.0)?;
    knots_ok(&table.gamma, "gamma", &|v| v > 0.0)?;
    knots_ok(&table.rho, "rho", &|v| v * v <= 1.0)?;
    Ok(ModelSpec { domain, coefficients: Coefficients::Custom(Box::new(table)) })
}

/// `(mu(x) - gamma(x)) / sigma(x)`.
pub fn market_price_of_risk(m: &ModelSpec, x: f64) -> Result<f64> {
    Ok(m.checked_at(x)?.market_price_of_risk())
}

/// Terminal payoff `phi`, paid on survival.
#[derive(Debug, Clone, PartialEq)]
pub enum Payoff {
    Zero,
    One,
    /// Spline through a table, held flat outside the knots.
    Table(CubicSpline),
}

impl Payoff {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Payoff::Zero => 0.0,
            Payoff::One => 1.0,
            Payoff::Table(s) => {
                let k = s.knots();
                s.eval(x.clamp(k[0], k[k.len() - 1]))
            }
        }
    }
}

/// Claim `q * phi(X_T)` received at `T` if the asset has not defaulted.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimSpec {
    pub payoff: Payoff,
    pub q: f64,
}

impl ClaimSpec {
    pub fn new(payoff: Payoff, q: f64) -> Result<Self> {
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::InvalidParameter(format!("notional q must be > 0, got {q}")));
        }
        Ok(Self { payoff, q })
    }

    /// No claim (`phi = 0`).
    pub fn none() -> Self {
        Self { payoff: Payoff::Zero, q: 1.0 }
    }

    /// `q` units of a zero-recovery defaultable bond (`phi = 1`).
    pub fn bond(q: f64) -> Result<Self> {
        Self::new(Payoff::One, q)
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.payoff.eval(x)
    }

    /// `q * phi(x)`.
    pub fn value(&self, x: f64) -> f64 {
        self.q * self.phi(x)
    }

    /// `(min(0, inf phi), max(0, sup phi))`, unscaled by `q`.
    pub fn phi_bounds(&self) -> (f64, f64) {
        match &self.payoff {
            Payoff::Zero => (0.0, 0.0),
            Payoff::One => (0.0, 1.0),
            Payoff::Table(s) => {
                let k = s.knots();
                let (lo, hi) = s.min_max(k[0], k[k.len() - 1], 4000);
                (lo.min(0.0), hi.max(0.0))
            }
        }
    }
}

/// Exponential-utility preferences and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preferences {
    pub alpha: f64,
    pub horizon: f64,
}

impl Preferences {
    pub fn new(alpha: f64, horizon: f64) -> Result<Self> {
        let p = Self { alpha, horizon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be > 0, got {}", self.horizon)));
        }
        Ok(())
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("model parameters must be finite".into()));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if rho * rho > 1.0 {
        return Err(Error::InvalidParameter(format!("correlation must lie in [-1, 1], got {rho}")));
    }
    Ok(())
}
