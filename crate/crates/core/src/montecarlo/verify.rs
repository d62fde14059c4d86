//! Streaming verification of a solved surface: one pass per path produces
//! every functional needed for the primal, dual and martingale checks.

use rayon::prelude::*;

use super::kernel::{crossing, draw, exp_draw, log_density_increment, wealth_increment, FactorStepper};
use super::{path_rng, MCEstimate, Moments, SimConfig, SimScheme};
use crate::error::Result;
use crate::hjb::{GridSpec, Surface};
use crate::model::{ClaimSpec, ModelSpec, Preferences};
use crate::pricing::Policy;

#[derive(Debug, Clone, Copy)]
pub struct VerifyInputs<'a> {
    pub model: &'a ModelSpec,
    pub pref: &'a Preferences,
    pub claim: &'a ClaimSpec,
    pub surface: &'a Surface,
    pub policy: &'a Policy,
    pub x0: f64,
    pub t0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: SimScheme,
    /// Each step's noise is the sum of this many finer increments.
    pub substeps: usize,
    /// Dollar shift added to the policy for the sub-optimality check.
    pub policy_shift: f64,
    /// Constant added to the surface inside the density (debugging only).
    pub value_shift: f64,
}

impl VerifyConfig {
    pub fn new(m: &ModelSpec, n_paths: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            n_paths,
            n_steps,
            seed,
            scheme: SimScheme::default_for(m),
            substeps: 1,
            policy_shift: 0.5,
            value_shift: 0.0,
        }
    }
}

/// Per-path results of one verification pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub survived: bool,
    pub default_time: f64,
    pub wealth: f64,
    pub wealth_shifted: f64,
    pub x_terminal: f64,
    pub claim: f64,
    pub z_closed: f64,
    pub z_se: f64,
    pub int_gamma: f64,
}

pub fn simulate_outcomes(inp: &VerifyInputs<'_>, cfg: &VerifyConfig) -> Result<Vec<PathOutcome>> {
    let sim = SimConfig {
        n_paths: cfg.n_paths,
        n_steps: cfg.n_steps,
        seed: cfg.seed,
        scheme: cfg.scheme,
        x0: inp.x0,
        t0: inp.t0,
        horizon: inp.pref.horizon,
    };
    sim.validate(inp.model)?;
    if cfg.substeps == 0 {
        return Err(crate::Error::InvalidParameter("substeps must be >= 1".into()));
    }
    if !inp.policy.grid.same_nodes(&inp.surface.grid) {
        return Err(crate::Error::GridMismatch("policy and surface grids differ".into()));
    }
    let stepper = FactorStepper::new(inp.model, cfg.scheme, sim.dt());
    let table = NodeTable::new(inp.surface, inp.policy);
    let g0 = inp.surface.value_at(inp.t0, inp.x0) + cfg.value_shift;
    let ctx = Ctx { inp, cfg, st: &stepper, table: &table, g0 };
    let blocks: Vec<Vec<PathOutcome>> = (0..cfg.n_paths.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| run_block(&ctx, b * BLOCK, ((b + 1) * BLOCK).min(cfg.n_paths)))
        .collect();
    Ok(blocks.into_iter().flatten().collect())
}

/// Policy, value and gradient packed per node so one lookup serves all three.
struct NodeTable {
    grid: GridSpec,
    cols: usize,
    inv_dx: f64,
    data: Vec<[f64; 3]>,
}

impl NodeTable {
    fn new(s: &Surface, p: &Policy) -> Self {
        let cols = s.grid.n_space + 1;
        let data = ndarray::Zip::from(&p.values)
            .and(&s.values)
            .and(&s.gradient)
            .map_collect(|&a, &b, &c| [a, b, c])
            .into_iter()
            .collect();
        Self { grid: s.grid, cols, inv_dx: 1.0 / s.grid.dx(), data }
    }

    #[inline]
    fn at(&self, (i, wt): (usize, f64), x: f64) -> [f64; 3] {
        let s = (x - self.grid.x_min) * self.inv_dx;
        let n = self.grid.n_space;
        let (j, wx) = if !(s > 0.0) {
            (0, 0.0)
        } else if s >= n as f64 {
            (n - 1, 1.0)
        } else {
            let j = s as usize;
            (j, s - j as f64)
        };
        let k = i * self.cols + j;
        let (a, b, c, d) = (self.data[k], self.data[k + 1], self.data[k + self.cols], self.data[k + self.cols + 1]);
        let mut out = [0.0; 3];
        for q in 0..3 {
            let lo = (1.0 - wx) * a[q] + wx * b[q];
            let hi = (1.0 - wx) * c[q] + wx * d[q];
            out[q] = (1.0 - wt) * lo + wt * hi;
        }
        out
    }
}

/// Paths advanced together so each time step reuses the same table rows.
const BLOCK: usize = 512;

struct Ctx<'a> {
    inp: &'a VerifyInputs<'a>,
    cfg: &'a VerifyConfig,
    st: &'a FactorStepper,
    table: &'a NodeTable,
    g0: f64,
}

struct PathState {
    rng: rand_chacha::ChaCha8Rng,
    e: f64,
    state: f64,
    x: f64,
    c: crate::model::CoeffPoint,
    w: f64,
    ws: f64,
    log_z: f64,
    lam: f64,
    default_time: f64,
}

impl PathState {
    fn start(ctx: &Ctx<'_>, path: usize) -> Self {
        let mut rng = path_rng(ctx.cfg.seed, path);
        let e = exp_draw(&mut rng);
        let x = ctx.st.observe(ctx.inp.x0);
        Self {
            rng,
            e,
            state: ctx.inp.x0,
            x,
            c: ctx.inp.model.at(x),
            w: 0.0,
            ws: 0.0,
            log_z: 0.0,
            lam: 0.0,
            default_time: f64::INFINITY,
        }
    }

    #[inline]
    fn advance(&mut self, ctx: &Ctx<'_>, t: f64, row: (usize, f64)) {
        let (m, st, cfg) = (ctx.inp.model, ctx.st, ctx.cfg);
        let alpha = ctx.inp.pref.alpha;
        let dt = st.dt;
        let d = draw(&mut self.rng, st.sqrt_dt, st.needs_extra(), cfg.substeps);
        let next = st.step(m, self.state, &d);
        let x_next = st.observe(next);
        let c_next = m.at(x_next);
        let c = self.c;
        let inc = 0.5 * (c.gamma + c_next.gamma) * dt;

        if self.default_time.is_infinite() {
            let [pi, gv, gx] = ctx.table.at(row, self.x);
            let pis = pi + cfg.policy_shift;
            let gv = gv + cfg.value_shift;
            let a = -alpha * (pi * c.sigma * c.rho + c.a() * gx);
            let b = -alpha * pi * c.sigma * (1.0 - c.rho * c.rho).max(0.0).sqrt();
            let jump = alpha * (pi + gv);
            let cc = jump.exp() - 1.0;
            match crossing(self.lam, inc, self.e) {
                Some(f) => {
                    self.w += wealth_increment(pi, c.mu, c.sigma, c.rho, dt, &d, f) - pi;
                    self.ws += wealth_increment(pis, c.mu, c.sigma, c.rho, dt, &d, f) - pis;
                    self.log_z += log_density_increment(a, b, cc, c.gamma, dt, &d, f) + jump;
                    self.default_time = t + f * dt;
                }
                None => {
                    self.w += wealth_increment(pi, c.mu, c.sigma, c.rho, dt, &d, 1.0);
                    self.ws += wealth_increment(pis, c.mu, c.sigma, c.rho, dt, &d, 1.0);
                    self.log_z += log_density_increment(a, b, cc, c.gamma, dt, &d, 1.0);
                }
            }
        }
        self.lam += inc;
        self.state = next;
        self.x = x_next;
        self.c = c_next;
    }

    fn finish(self, ctx: &Ctx<'_>, t_end: f64) -> PathOutcome {
        let alpha = ctx.inp.pref.alpha;
        let survived = self.default_time.is_infinite();
        let claim = if survived { ctx.inp.claim.value(self.x) } else { 0.0 };
        let g_end = if survived { ctx.inp.surface.value_at(t_end, self.x) + ctx.cfg.value_shift } else { 0.0 };
        PathOutcome {
            survived,
            default_time: self.default_time,
            wealth: self.w,
            wealth_shifted: self.ws,
            x_terminal: self.x,
            claim,
            z_closed: (-alpha * (self.w - ctx.g0 + g_end)).exp(),
            z_se: self.log_z.exp(),
            int_gamma: self.lam,
        }
    }
}

fn run_block(ctx: &Ctx<'_>, first: usize, last: usize) -> Vec<PathOutcome> {
    let mut paths: Vec<PathState> = (first..last).map(|p| PathState::start(ctx, p)).collect();
    let t0 = ctx.inp.t0;
    for k in 0..ctx.cfg.n_steps {
        let t = t0 + k as f64 * ctx.st.dt;
        let row = ctx.table.grid.locate_t(t);
        for p in paths.iter_mut() {
            p.advance(ctx, t, row);
        }
    }
    let t_end = t0 + ctx.cfg.n_steps as f64 * ctx.st.dt;
    paths.into_iter().map(|p| p.finish(ctx, t_end)).collect()
}

/// Moments of every verification functional; merge across seeds before
/// transforming.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VerificationSummary {
    pub alpha: f64,
    pub seed: u64,
    /// `exp(-alpha (W_T + claim))` under the candidate policy.
    pub utility: Moments,
    pub utility_shifted: Moments,
    /// `(1/alpha) Z log Z + Z claim`
    pub dual: Moments,
    pub z_mass: Moments,
    pub z_mass_se: Moments,
    /// `|Z_closed - Z_se|`
    pub z_gap: Moments,
    pub survival: Moments,
    /// `1{no default} - exp(-int gamma)`, paired on each path.
    pub survival_gap: Moments,
}

impl VerificationSummary {
    pub fn from_outcomes(outcomes: &[PathOutcome], alpha: f64, seed: u64) -> Self {
        let mut s = Self { alpha, seed, ..Self::default() };
        for o in outcomes {
            s.utility.push((-alpha * (o.wealth + o.claim)).exp());
            s.utility_shifted.push((-alpha * (o.wealth_shifted + o.claim)).exp());
            s.dual.push(o.z_closed * o.z_closed.ln() / alpha + o.z_closed * o.claim);
            s.z_mass.push(o.z_closed);
            s.z_mass_se.push(o.z_se);
            s.z_gap.push((o.z_closed - o.z_se).abs());
            let alive = if o.survived { 1.0 } else { 0.0 };
            s.survival.push(alive);
            s.survival_gap.push(alive - (-o.int_gamma).exp());
        }
        s
    }

    pub fn merge(&self, o: &Self) -> Self {
        Self {
            alpha: self.alpha,
            seed: self.seed,
            utility: self.utility.merge(&o.utility),
            utility_shifted: self.utility_shifted.merge(&o.utility_shifted),
            dual: self.dual.merge(&o.dual),
            z_mass: self.z_mass.merge(&o.z_mass),
            z_mass_se: self.z_mass_se.merge(&o.z_mass_se),
            z_gap: self.z_gap.merge(&o.z_gap),
            survival: self.survival.merge(&o.survival),
            survival_gap: self.survival_gap.merge(&o.survival_gap),
        }
    }

    pub fn certainty_equivalent(&self) -> Result<MCEstimate> {
        self.utility.certainty_equivalent(self.alpha, "certainty_equivalent", self.seed)
    }

    pub fn certainty_equivalent_shifted(&self) -> Result<MCEstimate> {
        self.utility_shifted.certainty_equivalent(self.alpha, "certainty_equivalent_shifted_policy", self.seed)
    }

    pub fn dual_value(&self) -> MCEstimate {
        self.dual.estimate("dual_value", self.seed)
    }

    pub fn martingale_mass(&self) -> MCEstimate {
        self.z_mass.estimate("martingale_mass", self.seed)
    }

    pub fn martingale_mass_se_form(&self) -> MCEstimate {
        self.z_mass_se.estimate("martingale_mass_se_form", self.seed)
    }

    pub fn density_gap(&self) -> MCEstimate {
        self.z_gap.estimate("density_gap", self.seed)
    }

    pub fn survival_probability(&self) -> MCEstimate {
        self.survival.estimate("survival_probability", self.seed)
    }

    pub fn survival_identity_gap(&self) -> MCEstimate {
        self.survival_gap.estimate("survival_identity_gap", self.seed)
    }

    pub fn estimates(&self) -> Result<Vec<MCEstimate>> {
        Ok(vec![
            self.certainty_equivalent()?,
            self.certainty_equivalent_shifted()?,
            self.dual_value(),
            self.martingale_mass(),
            self.martingale_mass_se_form(),
            self.density_gap(),
            self.survival_probability(),
            self.survival_identity_gap(),
        ])
    }
}
