//! Staged simulation on stored trajectories. Meant for small runs and
//! debugging; the streaming verifier covers large path counts.

use ndarray::Array2;
use rayon::prelude::*;

use super::kernel::{crossing, draw, exp_draw, log_density_increment, wealth_increment, FactorStepper};
use super::{path_rng, MCEstimate, Moments, SimConfig};
use crate::error::{Error, Result};
use crate::hjb::{interpolate, Surface};
use crate::model::{ClaimSpec, ModelSpec, Preferences};
use crate::pricing::Policy;

/// Strategy replayed on simulated paths.
#[derive(Debug, Clone, Copy)]
pub enum PolicyChoice<'a> {
    Grid(&'a Policy),
    Constant(f64),
    /// Grid policy plus a constant dollar amount.
    Shifted(&'a Policy, f64),
    /// Protected market: no loss at default, protection paid at `rate`
    /// (given on the policy grid).
    Protected { policy: &'a Policy, rate: &'a Array2<f64> },
}

impl PolicyChoice<'_> {
    fn amount(&self, t: f64, x: f64) -> f64 {
        match self {
            PolicyChoice::Grid(p) | PolicyChoice::Protected { policy: p, .. } => p.at(t, x),
            PolicyChoice::Constant(c) => *c,
            PolicyChoice::Shifted(p, s) => p.at(t, x) + s,
        }
    }

    fn protection_rate(&self, t: f64, x: f64) -> Option<f64> {
        match self {
            PolicyChoice::Protected { policy, rate } => Some(interpolate(&policy.grid, rate, t, x)),
            _ => None,
        }
    }
}

/// Simulated trajectories. Fields are filled stage by stage.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub config: SimConfig,
    pub times: Vec<f64>,
    /// Observed factor values, `n_steps + 1` per path.
    pub x: Vec<Vec<f64>>,
    pub dw: Vec<Vec<f64>>,
    pub dw0: Vec<Vec<f64>>,
    pub exp_draw: Vec<f64>,
    /// Default time, `None` if no default by the horizon.
    pub default_time: Vec<Option<f64>>,
    /// Step containing the default and the fraction of it elapsed.
    pub default_step: Vec<Option<(usize, f64)>>,
    /// Trapezoidal `int gamma(X) du` over the whole horizon.
    pub int_gamma: Vec<f64>,
    pub wealth: Vec<Vec<f64>>,
    /// Closed-form density trajectory.
    pub z: Vec<Vec<f64>>,
    /// Stochastic-exponential density trajectory.
    pub z_se: Vec<Vec<f64>>,
}

impl PathBundle {
    pub fn n_paths(&self) -> usize {
        self.x.len()
    }

    fn has_default(&self) -> bool {
        self.default_step.len() == self.n_paths()
    }

    fn survived(&self, i: usize) -> bool {
        self.default_step[i].is_none()
    }

    // default time strictly after time node k
    fn alive_at_step(&self, i: usize, k: usize) -> bool {
        match self.default_step[i] {
            None => true,
            Some((kd, frac)) => k < kd || (k == kd && frac > 0.0),
        }
    }
}

/// Factor path, factor Brownian increments, independent Brownian increments, unit exponential draw.
type PathParts = (Vec<f64>, Vec<f64>, Vec<f64>, f64);

pub fn simulate_factor(m: &ModelSpec, cfg: &SimConfig) -> Result<PathBundle> {
    cfg.validate(m)?;
    let dt = cfg.dt();
    let stepper = FactorStepper::new(m, cfg.scheme, dt);
    let n = cfg.n_steps;
    let paths: Vec<PathParts> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(cfg.seed, p);
            let e = exp_draw(&mut rng);
            let mut x = Vec::with_capacity(n + 1);
            let mut dw = Vec::with_capacity(n);
            let mut dw0 = Vec::with_capacity(n);
            let mut state = cfg.x0;
            x.push(stepper.observe(state));
            for _ in 0..n {
                let d = draw(&mut rng, stepper.sqrt_dt, stepper.needs_extra(), 1);
                state = stepper.step(m, state, &d);
                x.push(stepper.observe(state));
                dw.push(d.dw);
                dw0.push(d.dw0);
            }
            (x, dw, dw0, e)
        })
        .collect();

    let mut bundle = PathBundle {
        config: *cfg,
        times: (0..=n).map(|k| cfg.t0 + k as f64 * dt).collect(),
        x: Vec::with_capacity(cfg.n_paths),
        dw: Vec::with_capacity(cfg.n_paths),
        dw0: Vec::with_capacity(cfg.n_paths),
        exp_draw: Vec::with_capacity(cfg.n_paths),
        default_time: Vec::new(),
        default_step: Vec::new(),
        int_gamma: Vec::new(),
        wealth: Vec::new(),
        z: Vec::new(),
        z_se: Vec::new(),
    };
    for (x, dw, dw0, e) in paths {
        bundle.x.push(x);
        bundle.dw.push(dw);
        bundle.dw0.push(dw0);
        bundle.exp_draw.push(e);
    }
    Ok(bundle)
}

/// Fills default times from the trapezoidal cumulative intensity.
pub fn simulate_default(m: &ModelSpec, mut bundle: PathBundle) -> PathBundle {
    let dt = bundle.config.dt();
    let t0 = bundle.config.t0;
    let n = bundle.config.n_steps;
    let mut steps = Vec::with_capacity(bundle.n_paths());
    let mut times = Vec::with_capacity(bundle.n_paths());
    let mut ints = Vec::with_capacity(bundle.n_paths());
    for (x, &e) in bundle.x.iter().zip(&bundle.exp_draw) {
        let mut lam = 0.0;
        let mut hit = None;
        let mut g_prev = m.gamma(x[0]);
        for k in 0..n {
            let g_next = m.gamma(x[k + 1]);
            let inc = 0.5 * (g_prev + g_next) * dt;
            if hit.is_none() {
                hit = crossing(lam, inc, e).map(|f| (k, f));
            }
            lam += inc;
            g_prev = g_next;
        }
        times.push(hit.map(|(k, f)| t0 + (k as f64 + f) * dt));
        steps.push(hit);
        ints.push(lam);
    }
    bundle.default_step = steps;
    bundle.default_time = times;
    bundle.int_gamma = ints;
    bundle
}

fn require_default(bundle: &PathBundle) -> Result<()> {
    if bundle.has_default() {
        Ok(())
    } else {
        Err(Error::InvalidParameter("default times have not been simulated".into()))
    }
}

/// Replays a strategy. The unprotected holder loses the position at default;
/// wealth is frozen afterwards in both markets.
pub fn replay_policy(
    m: &ModelSpec,
    policy: PolicyChoice<'_>,
    mut bundle: PathBundle,
    _pref: &Preferences,
) -> Result<PathBundle> {
    require_default(&bundle)?;
    let dt = bundle.config.dt();
    let n = bundle.config.n_steps;
    let mut all = Vec::with_capacity(bundle.n_paths());
    for i in 0..bundle.n_paths() {
        let mut w = Vec::with_capacity(n + 1);
        let mut cur = 0.0;
        w.push(cur);
        let stop = bundle.default_step[i];
        for k in 0..n {
            let (t, x) = (bundle.times[k], bundle.x[i][k]);
            let frac = match stop {
                Some((kd, _)) if k > kd => {
                    w.push(cur);
                    continue;
                }
                Some((kd, f)) if k == kd => f,
                _ => 1.0,
            };
            let c = m.at(x);
            let pi = policy.amount(t, x);
            let rate = policy.protection_rate(t, x);
            let drift = c.mu - rate.unwrap_or(0.0);
            let d = super::kernel::Draws { dw: bundle.dw[i][k], dw0: bundle.dw0[i][k], zx: 0.0 };
            cur += wealth_increment(pi, drift, c.sigma, c.rho, dt, &d, frac);
            if matches!(stop, Some((kd, _)) if kd == k) && rate.is_none() {
                cur -= pi;
            }
            w.push(cur);
        }
        all.push(w);
    }
    bundle.wealth = all;
    Ok(bundle)
}

/// Computes the candidate dual density both from its closed form and by
/// integrating its stochastic-exponential dynamics. `bundle` must carry the
/// wealth of `policy`.
pub fn simulate_dual_density(
    m: &ModelSpec,
    g: &Surface,
    policy: &Policy,
    mut bundle: PathBundle,
    pref: &Preferences,
) -> Result<PathBundle> {
    require_default(&bundle)?;
    if bundle.wealth.len() != bundle.n_paths() {
        return Err(Error::InvalidParameter("wealth has not been simulated".into()));
    }
    let alpha = pref.alpha;
    let dt = bundle.config.dt();
    let n = bundle.config.n_steps;
    let g0 = g.value_at(bundle.config.t0, bundle.config.x0);
    let mut zs = Vec::with_capacity(bundle.n_paths());
    let mut zses = Vec::with_capacity(bundle.n_paths());
    for i in 0..bundle.n_paths() {
        let mut z = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let gv = if bundle.alive_at_step(i, k) { g.value_at(bundle.times[k], bundle.x[i][k]) } else { 0.0 };
            z.push((-alpha * (bundle.wealth[i][k] - g0 + gv)).exp());
        }
        let mut log_z: f64 = 0.0;
        let mut zse = Vec::with_capacity(n + 1);
        zse.push(1.0);
        let stop = bundle.default_step[i];
        for k in 0..n {
            match stop {
                Some((kd, _)) if k > kd => {
                    zse.push(log_z.exp());
                    continue;
                }
                _ => {}
            }
            let (t, x) = (bundle.times[k], bundle.x[i][k]);
            let c = m.at(x);
            let pi = policy.at(t, x);
            let gv = g.value_at(t, x);
            let gx = g.gradient_at(t, x);
            let a = -alpha * (pi * c.sigma * c.rho + c.a() * gx);
            let b = -alpha * pi * c.sigma * (1.0 - c.rho * c.rho).max(0.0).sqrt();
            let jump = alpha * (pi + gv);
            let cc = jump.exp_m1();
            let d = super::kernel::Draws { dw: bundle.dw[i][k], dw0: bundle.dw0[i][k], zx: 0.0 };
            match stop {
                Some((kd, f)) if kd == k => log_z += log_density_increment(a, b, cc, c.gamma, dt, &d, f) + jump,
                _ => log_z += log_density_increment(a, b, cc, c.gamma, dt, &d, 1.0),
            }
            zse.push(log_z.exp());
        }
        zs.push(z);
        zses.push(zse);
    }
    bundle.z = zs;
    bundle.z_se = zses;
    Ok(bundle)
}

fn terminal_claim(bundle: &PathBundle, claim: &ClaimSpec, i: usize) -> f64 {
    if bundle.survived(i) {
        claim.value(*bundle.x[i].last().unwrap())
    } else {
        0.0
    }
}

/// `-(1/alpha) log E[exp(-alpha (W_T + 1{no default} q phi(X_T)))]`.
pub fn estimate_certainty_equivalent(bundle: &PathBundle, claim: &ClaimSpec, pref: &Preferences) -> Result<MCEstimate> {
    if bundle.wealth.len() != bundle.n_paths() {
        return Err(Error::InvalidParameter("wealth has not been simulated".into()));
    }
    if bundle.n_paths() < 2 {
        return Err(Error::DegenerateSample("need at least two paths".into()));
    }
    let mom = Moments::from_iter((0..bundle.n_paths()).map(|i| {
        let v = bundle.wealth[i].last().unwrap() + terminal_claim(bundle, claim, i);
        (-pref.alpha * v).exp()
    }));
    mom.certainty_equivalent(pref.alpha, "certainty_equivalent", bundle.config.seed)
}

/// `(1/alpha) E[Z_T log Z_T] + E[Z_T 1{no default} q phi(X_T)]`.
pub fn estimate_dual_value(bundle: &PathBundle, claim: &ClaimSpec, pref: &Preferences) -> Result<MCEstimate> {
    if bundle.z.len() != bundle.n_paths() {
        return Err(Error::InvalidParameter("dual density has not been simulated".into()));
    }
    let mom = Moments::from_iter((0..bundle.n_paths()).map(|i| {
        let z = *bundle.z[i].last().unwrap();
        z * z.ln() / pref.alpha + z * terminal_claim(bundle, claim, i)
    }));
    Ok(mom.estimate("dual_value", bundle.config.seed))
}
