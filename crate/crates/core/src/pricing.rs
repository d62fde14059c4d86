//! Economic outputs derived from solved surfaces: the optimal policy,
//! indifference prices and the dynamic default-insurance rate.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::hjb::{GridSpec, Surface};
use crate::lambertw::theta_exp_unchecked;
use crate::model::{ModelSpec, Preferences};

/// Radicands in `[-RADICAND_SLACK, 0)` are rounding noise and clamp to zero.
pub const RADICAND_SLACK: f64 = 1e-10;

/// Dollar amount held in the risky asset at each grid node.
#[derive(Debug, Clone)]
pub struct Policy {
    pub grid: GridSpec,
    pub values: Array2<f64>,
}

impl Policy {
    /// Bilinear lookup, clamped to the grid.
    pub fn at(&self, t: f64, x: f64) -> f64 {
        crate::hjb::interpolate(&self.grid, &self.values, t, x)
    }
}

/// Quantities shared by the policy and insurance formulas at one node.
#[derive(Debug, Clone, Copy)]
struct NodeTerms {
    sigma2: f64,
    gamma: f64,
    /// `X = mu/sigma^2 - (alpha/sigma) G_x a rho`
    x_tilde: f64,
    theta: f64,
    /// `(gamma/sigma^2) e^{alpha G}`
    y: f64,
}

fn node_terms(m: &ModelSpec, alpha: f64, x: f64, g: f64, gx: f64) -> Result<NodeTerms> {
    let p = m.at(x);
    let sigma2 = p.sigma2();
    if !(sigma2 > 0.0 && p.gamma > 0.0) {
        return Err(Error::Domain(format!("sigma and gamma must be positive at x = {x}")));
    }
    let gamma_s2 = p.gamma / sigma2;
    let c = alpha / p.sigma * p.a() * p.rho;
    let x_tilde = p.mu / sigma2 - c * gx;
    let theta = theta_exp_unchecked(gamma_s2.ln() + x_tilde + alpha * g);
    Ok(NodeTerms { sigma2, gamma: p.gamma, x_tilde, theta, y: gamma_s2 * (alpha * g).exp() })
}

fn map_nodes<F>(s: &Surface, m: &ModelSpec, pref: &Preferences, mut f: F) -> Result<Array2<f64>>
where
    F: FnMut(usize, usize, &NodeTerms) -> Result<f64>,
{
    check_alpha(s, pref)?;
    let xs = s.grid.xs();
    let mut out = Array2::zeros(s.values.dim());
    for ((i, j), v) in out.indexed_iter_mut() {
        let t = node_terms(m, pref.alpha, xs[j], s.values[[i, j]], s.gradient[[i, j]])?;
        *v = f(i, j, &t)?;
    }
    Ok(out)
}

fn check_alpha(s: &Surface, pref: &Preferences) -> Result<()> {
    if s.alpha != pref.alpha {
        return Err(Error::GridMismatch(format!(
            "surface solved with alpha = {}, preferences have {}",
            s.alpha, pref.alpha
        )));
    }
    Ok(())
}

/// `pi = (1/alpha) (mu/sigma^2 - (alpha/sigma) G_x a rho - theta_G)`.
pub fn optimal_policy(g: &Surface, m: &ModelSpec, pref: &Preferences) -> Result<Policy> {
    let alpha = pref.alpha;
    let values = map_nodes(g, m, pref, |_, _, t| Ok((t.x_tilde - t.theta) / alpha))?;
    Ok(Policy { grid: g.grid, values })
}

/// Per-unit buyer's price `(G_q - G_0) / q`.
pub fn indifference_price(g_q: &Surface, g_0: &Surface, q: f64) -> Result<Array2<f64>> {
    if g_q.grid != g_0.grid || g_q.alpha != g_0.alpha {
        return Err(Error::GridMismatch("price surfaces must share grid and risk aversion".into()));
    }
    if !(q > 0.0) {
        return Err(Error::InvalidParameter(format!("notional q must be > 0, got {q}")));
    }
    Ok((&g_q.values - &g_0.values) / q)
}

fn radicand(t: &NodeTerms, i: usize, j: usize) -> Result<f64> {
    let r = t.x_tilde * t.x_tilde - (t.theta * t.theta + 2.0 * t.theta - 2.0 * t.y);
    if r < -RADICAND_SLACK {
        return Err(Error::RadicandNegative { time_index: i, space_index: j, value: r });
    }
    Ok(r.max(0.0))
}

/// Insurance rate on the lower branch:
/// `f = sigma^2 (X - sqrt(X^2 - (theta^2 + 2 theta - 2 (gamma/sigma^2) e^{alpha G})))`.
pub fn insurance_rate(g: &Surface, m: &ModelSpec, pref: &Preferences) -> Result<Array2<f64>> {
    map_nodes(g, m, pref, |i, j, t| Ok(t.sigma2 * (t.x_tilde - radicand(t, i, j)?.sqrt())))
}

/// Upper root `f_+` of the indifference condition. Diagnostic only.
pub fn insurance_rate_upper_branch(g: &Surface, m: &ModelSpec, pref: &Preferences) -> Result<Array2<f64>> {
    map_nodes(g, m, pref, |i, j, t| Ok(t.sigma2 * (t.x_tilde + radicand(t, i, j)?.sqrt())))
}

/// `h(l, y) = l + y e^l - sqrt(l^2 + 2 y (l e^l + 1 - e^l))`, the insurance
/// rate per unit variance with `l = alpha pi` and `y = (gamma/sigma^2) e^{alpha G}`.
pub fn insurance_rate_h_form(l: f64, y: f64) -> Result<f64> {
    if !(y > 0.0 && y.is_finite()) || !l.is_finite() {
        return Err(Error::Domain(format!("h(l, y) needs finite l and y > 0, got ({l}, {y})")));
    }
    let el = l.exp();
    let r = l * l + 2.0 * y * (l * el + 1.0 - el);
    if r < -RADICAND_SLACK {
        return Err(Error::Domain(format!("negative radicand {r} in h({l}, {y})")));
    }
    Ok(l + y * el - r.max(0.0).sqrt())
}

/// Short-horizon approximation `f / sigma^2 ~ h(alpha pi, gamma/sigma^2)`,
/// obtained by setting `G = 0`.
pub fn insurance_rate_short_horizon(alpha_pi: f64, gamma_over_sigma2: f64) -> Result<f64> {
    insurance_rate_h_form(alpha_pi, gamma_over_sigma2)
}

/// Unique root of `h(., y)`: `l_0 = log((sqrt(1 + 2y) - 1) / y)`.
pub fn h_root(y: f64) -> Result<f64> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::Domain(format!("l_0(y) needs y > 0, got {y}")));
    }
    // (sqrt(1+2y) - 1) / y = 2 / (sqrt(1+2y) + 1) without cancellation
    Ok((2.0 / ((1.0 + 2.0 * y).sqrt() + 1.0)).ln())
}

#[derive(Debug, Clone)]
pub struct InsuranceBounds {
    /// `gamma e^{alpha (G + pi)}`, the default intensity under the dual measure.
    pub upper: Array2<f64>,
    /// `gamma e^{alpha (2 pi + G)} / (2 sigma^2) + e^{alpha pi} - 1`; shares the sign of `f`.
    pub sign_indicator: Array2<f64>,
}

pub fn insurance_bounds(g: &Surface, policy: &Policy, m: &ModelSpec, pref: &Preferences) -> Result<InsuranceBounds> {
    if policy.grid != g.grid {
        return Err(Error::GridMismatch("policy and surface grids differ".into()));
    }
    let alpha = pref.alpha;
    let upper = map_nodes(g, m, pref, |i, j, t| {
        Ok(t.gamma * (alpha * (g.values[[i, j]] + policy.values[[i, j]])).exp())
    })?;
    let sign_indicator = map_nodes(g, m, pref, |i, j, t| {
        let (gv, pi) = (g.values[[i, j]], policy.values[[i, j]]);
        Ok(t.gamma * (alpha * (2.0 * pi + gv)).exp() / (2.0 * t.sigma2) + (alpha * pi).exp_m1())
    })?;
    Ok(InsuranceBounds { upper, sign_indicator })
}

/// `pi^d = (1/alpha) ((mu - f)/sigma^2 - (alpha/sigma) G^d_x a rho)`.
pub fn protected_policy(g_d: &Surface, f: &Array2<f64>, m: &ModelSpec, pref: &Preferences) -> Result<Array2<f64>> {
    if f.dim() != g_d.values.dim() {
        return Err(Error::GridMismatch("rate field and surface differ in shape".into()));
    }
    check_alpha(g_d, pref)?;
    let alpha = pref.alpha;
    let xs = g_d.grid.xs();
    let mut out = Array2::zeros(f.dim());
    for ((i, j), v) in out.indexed_iter_mut() {
        let p = m.at(xs[j]);
        let c = alpha / p.sigma * p.a() * p.rho;
        *v = ((p.mu - f[[i, j]]) / p.sigma2() - c * g_d.gradient[[i, j]]) / alpha;
    }
    Ok(out)
}

/// `gamma(x_j)` broadcast over time.
pub fn physical_intensity(grid: &GridSpec, m: &ModelSpec) -> Array2<f64> {
    let xs = grid.xs();
    Array2::from_shape_fn((grid.n_time + 1, grid.n_space + 1), |(_, j)| m.gamma(xs[j]))
}

/// Everything derived from a solved no-claim surface.
#[derive(Debug, Clone)]
pub struct PricingResult {
    pub policy: Policy,
    pub insurance_rate: Array2<f64>,
    pub upper_bound: Array2<f64>,
    pub sign_indicator: Array2<f64>,
    pub physical_intensity: Array2<f64>,
    pub protected_policy: Array2<f64>,
}

/// Computes the insurance analysis for `g`. The protected policy uses `g_d`
/// when supplied and otherwise `g` itself, which solves the protected
/// equation for the lower-branch rate.
pub fn insurance_analysis(
    g: &Surface,
    g_d: Option<&Surface>,
    m: &ModelSpec,
    pref: &Preferences,
) -> Result<PricingResult> {
    let policy = optimal_policy(g, m, pref)?;
    let insurance_rate = insurance_rate(g, m, pref)?;
    let InsuranceBounds { upper, sign_indicator } = insurance_bounds(g, &policy, m, pref)?;
    let protected_policy = protected_policy(g_d.unwrap_or(g), &insurance_rate, m, pref)?;
    Ok(PricingResult {
        physical_intensity: physical_intensity(&g.grid, m),
        policy,
        insurance_rate,
        upper_bound: upper,
        sign_indicator,
        protected_policy,
    })
}

/// One sample of the short-horizon curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortHorizonPoint {
    pub alpha_pi: f64,
    pub rate: f64,
    pub upper: f64,
}

/// The short-horizon rate `h(l, y)` and its upper bound `y e^l` on
/// `l = -2, -1.99, ..., 2`.
pub fn short_horizon_curve(gamma_over_sigma2: f64) -> Result<Vec<ShortHorizonPoint>> {
    (-200..=200)
        .map(|k| {
            let l = k as f64 / 100.0;
            Ok(ShortHorizonPoint {
                alpha_pi: l,
                rate: insurance_rate_short_horizon(l, gamma_over_sigma2)?,
                upper: gamma_over_sigma2 * l.exp(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::{solve_full, GridSpec, SolverOptions};
    use crate::lambertw::theta;
    use crate::model::{make_ou_model, ClaimSpec, OuParams};
    use proptest::prelude::*;
    use std::f64::consts::E;

    /// Direct evaluation of h without any shared code.
    fn h_oracle(l: f64, y: f64) -> f64 {
        l + y * l.exp() - (l * l + 2.0 * y * (l * l.exp() + 1.0 - l.exp())).sqrt()
    }

    fn constant_model(mu: f64, sigma: f64, gamma: f64, rho: f64) -> ModelSpec {
        make_ou_model(OuParams { b_mr: 0.0, mu1: mu / sigma, mu2: 0.0, sigma, gamma: gamma / sigma, rho }).unwrap()
    }

    fn flat_surface(m: &ModelSpec, alpha: f64, value: f64) -> Surface {
        let pref = Preferences::new(alpha, 1.0).unwrap();
        let grid = GridSpec::new(-1.0, 1.0, 16, 16, 0.0, 1.0).unwrap();
        let s = solve_full(m, &ClaimSpec::none(), &pref, &grid, &SolverOptions::default()).unwrap();
        s.with_values(Array2::from_elem(s.values.dim(), value)).unwrap()
    }

    #[test]
    fn h_examples() {
        assert_eq!(insurance_rate_h_form(0.0, 0.7).unwrap(), 0.7);
        assert!((h_oracle(1.0, 1.0) - 1.986_231_021).abs() < 1e-9);
        assert!((insurance_rate_h_form(1.0, 1.0).unwrap() - h_oracle(1.0, 1.0)).abs() < 1e-15);
        assert!((h_oracle(1.0, 2.0 / 3.0) - 1.284_662_654).abs() < 1e-9);
        assert!((insurance_rate_short_horizon(1.0, 2.0 / 3.0).unwrap() - 1.284_662_654).abs() < 1e-9);
        assert_eq!(insurance_rate_short_horizon(0.0, 2.0 / 3.0).unwrap(), 2.0 / 3.0);
        assert!(insurance_rate_h_form(0.0, 0.0).is_err());
    }

    #[test]
    fn h_root_example() {
        let l0 = h_root(2.0 / 3.0).unwrap();
        assert!((l0 + 0.234_093_474_2).abs() < 1e-9);
        assert!(insurance_rate_short_horizon(l0, 2.0 / 3.0).unwrap().abs() < 1e-6);
        assert!(h_oracle(l0, 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn policy_examples() {
        let m = constant_model(1.0, 1.0, 1.0, 0.0);
        let s = flat_surface(&m, 1.0, 0.0);
        let pref = Preferences::new(1.0, 1.0).unwrap();
        let pi = optimal_policy(&s, &m, &pref).unwrap();
        assert!(pi.values.iter().all(|v| v.abs() < 1e-15));

        let m2 = constant_model(2.0, 1.0, 1.0, 0.0);
        let s2 = flat_surface(&m2, 1.0, 0.0);
        let pi2 = optimal_policy(&s2, &m2, &pref).unwrap();
        let expected = 2.0 - theta(E * E).unwrap();
        assert!((expected - 0.442_854_4).abs() < 1e-7);
        assert!(pi2.values.iter().all(|v| (v - expected).abs() < 1e-14));
    }

    #[test]
    fn zero_policy_attains_the_upper_bound() {
        let m = constant_model(1.0, 1.0, 1.0, 0.0);
        let s = flat_surface(&m, 1.0, 0.0);
        let pref = Preferences::new(1.0, 1.0).unwrap();
        let r = insurance_analysis(&s, None, &m, &pref).unwrap();
        for (f, u) in r.insurance_rate.iter().zip(r.upper_bound.iter()) {
            assert!((f - u).abs() < 1e-12);
            assert!((f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_matches_h_form_at_unit_policy() {
        // alpha pi = 1 and y = 1 require mu/sigma^2 - theta(e^{mu/sigma^2}) = 1: mu = 1 + e
        let mu = 1.0 + E;
        let m = constant_model(mu, 1.0, 1.0, 0.0);
        let s = flat_surface(&m, 1.0, 0.0);
        let pref = Preferences::new(1.0, 1.0).unwrap();
        let pi = optimal_policy(&s, &m, &pref).unwrap();
        assert!((pi.values[[0, 0]] - 1.0).abs() < 1e-12);
        let f = insurance_rate(&s, &m, &pref).unwrap();
        assert!((f[[0, 3]] - 1.986_231_021).abs() < 1e-9);
    }

    #[test]
    fn protected_policy_with_neutral_rate_vanishes() {
        let m = constant_model(0.5, 1.0, 0.3, 0.0);
        let s = flat_surface(&m, 2.0, 0.1);
        let pref = Preferences::new(2.0, 1.0).unwrap();
        let f = Array2::from_elem(s.values.dim(), 0.5);
        let pd = protected_policy(&s, &f, &m, &pref).unwrap();
        assert!(pd.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn indifference_price_rejects_mismatch() {
        let m = constant_model(0.5, 1.0, 0.3, 0.0);
        let a = flat_surface(&m, 2.0, 0.1);
        let b = flat_surface(&m, 1.0, 0.1);
        assert!(indifference_price(&a, &b, 1.0).is_err());
        let p = indifference_price(&a, &a, 3.0).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_horizon_curve_layout() {
        let c = short_horizon_curve(2.0 / 3.0).unwrap();
        assert_eq!(c.len(), 401);
        assert_eq!(c[200].alpha_pi, 0.0);
        assert_eq!(c[200].rate, 2.0 / 3.0);
    }

    proptest! {
        #[test]
        fn h_properties(l in -10.0_f64..10.0, y in 1e-6_f64..10.0, dl in 1e-3_f64..0.5) {
            let h = insurance_rate_h_form(l, y).unwrap();
            prop_assert!(l + y * l.exp() - h >= -1e-10 * (1.0 + y * l.exp()));
            prop_assert!(insurance_rate_h_form(l + dl, y).unwrap() > h);
            let l0 = h_root(y).unwrap();
            if (l - l0).abs() > 1e-6 {
                prop_assert_eq!(h.signum(), (l - l0).signum());
            }
        }
    }
}
