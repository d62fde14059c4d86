//! Run configuration: a sectioned TOML file plus command-line overrides.
//!
//! ```toml
//! [model]
//! kind = "cir"              # cir | ou | custom
//!
//! [model.cir]               # kappa, theta, xi, mu1, mu2, sigma, gamma1, gamma2, rho
//! [model.ou]                # b_mr, mu1, mu2, sigma, gamma, rho
//! [model.custom]            # lower, upper, knots, b, a_sq, mu, sigma, rho, gamma
//!
//! [claim]
//! phi = "one"               # zero | one | table
//! q = [1.0, 3.0, 5.0, 10.0]
//! table_x = [...]           # phi = "table" only
//! table_phi = [...]
//!
//! [preferences]
//! alpha = 3.0
//! horizon = 1.0
//!
//! [grid]
//! n_space = 400
//! n_time = 400
//! x_min = 0.002             # optional; default truncation otherwise
//! x_max = 0.34
//! mode = "full"             # full | local:N[,N...] | protected
//! scheme = "crank-nicolson" # or backward-euler
//! boundary = "linear"       # linear | neumann | dirichlet
//! newton_tol = 1e-10
//! newton_max_iter = 30
//! startup_steps = 2
//! transition_width = 0.01   # optional, local mode
//! refinements = 3
//!
//! [mc]
//! x0 = 0.06                 # optional; theta for CIR, 0 for OU
//! paths = 100000
//! steps = 1000
//! seed = 1
//! seeds = 1
//! policy_shift = 0.5
//! value_shift = 0.0
//! tolerance_se = 3.0
//! probe_paths = 20000
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Every section and key is checked; unknown keys are errors.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use credit_hjb::hjb::{default_bounds, Boundary, Scheme};
use credit_hjb::model::{
    make_cir_model, make_custom_model, make_ou_model, CirParams, Coefficients, CubicSpline, Domain1D, ModelKind,
    OuParams, Payoff, TabulatedCoefficients,
};
use credit_hjb::{ClaimSpec, GridSpec, ModelSpec, Preferences, SolverOptions};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub claim: ClaimSection,
    pub preferences: Preferences,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cir: Option<CirParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ou: Option<OuParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSection {
    pub lower: f64,
    pub upper: f64,
    pub knots: Vec<f64>,
    pub b: Vec<f64>,
    pub a_sq: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rho: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiKind {
    Zero,
    One,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimSection {
    pub phi: PhiKind,
    pub q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table_x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table_phi: Vec<f64>,
}

impl Default for ClaimSection {
    fn default() -> Self {
        Self { phi: PhiKind::Zero, q: vec![1.0], table_x: Vec::new(), table_phi: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n_space: usize,
    pub n_time: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    pub mode: String,
    pub scheme: String,
    pub boundary: String,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub startup_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transition_width: Option<f64>,
    pub refinements: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let opt = SolverOptions::default();
        Self {
            n_space: 400,
            n_time: 400,
            x_min: None,
            x_max: None,
            mode: "full".into(),
            scheme: "crank-nicolson".into(),
            boundary: "linear".into(),
            newton_tol: opt.newton_tol,
            newton_max_iter: opt.newton_max_iter,
            startup_steps: opt.startup_steps,
            transition_width: None,
            refinements: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub seeds: u64,
    pub policy_shift: f64,
    pub value_shift: f64,
    pub tolerance_se: f64,
    pub probe_paths: usize,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            x0: None,
            paths: 100_000,
            steps: 1000,
            seed: 1,
            seeds: 1,
            policy_shift: 0.5,
            value_shift: 0.0,
            tolerance_se: 3.0,
            probe_paths: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mode {
    Full,
    Local(Vec<usize>),
    Protected,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "full" => Ok(Mode::Full),
            "protected" => Ok(Mode::Protected),
            _ => {
                let Some(list) = s.strip_prefix("local:") else {
                    return bad(format!("mode must be full, local:N[,N...] or protected, got {s:?}"));
                };
                let ns = list
                    .split(',')
                    .map(|n| n.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| ConfigError(format!("bad localization index list {list:?}")))?;
                if ns.is_empty() || ns.iter().any(|&n| n < 2) {
                    return bad(format!("localization indices must be >= 2, got {list:?}"));
                }
                Ok(Mode::Local(ns))
            }
        }
    }
}

/// Values given on the command line; they replace the file's entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub grid: Option<(usize, usize)>,
    pub mode: Option<String>,
    pub value_shift: Option<f64>,
}

pub fn parse_grid_flag(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected NX,NT, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("expected NX,NT, got {s:?}"));
    Ok((parse(a)?, parse(b)?))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.mc.seed = seed;
        }
        if let Some(paths) = o.paths {
            self.mc.paths = paths;
        }
        if let Some((nx, nt)) = o.grid {
            self.grid.n_space = nx;
            self.grid.n_time = nt;
        }
        if let Some(mode) = &o.mode {
            self.grid.mode = mode.clone();
        }
        if let Some(shift) = o.value_shift {
            self.mc.value_shift = shift;
        }
    }

    /// The resolved configuration as TOML, one line per entry.
    pub fn echo(&self) -> Vec<String> {
        toml::to_string(self)
            .unwrap_or_default()
            .lines()
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect()
    }

    pub fn mode(&self) -> Result<Mode, ConfigError> {
        Mode::parse(&self.grid.mode)
    }

    pub fn preferences(&self) -> Result<Preferences, ConfigError> {
        self.preferences.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(self.preferences)
    }

    fn check_model_sections(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        let given = [("cir", m.cir.is_some()), ("ou", m.ou.is_some()), ("custom", m.custom.is_some())];
        let want = match m.kind {
            ModelKind::Cir => "cir",
            ModelKind::Ou => "ou",
            ModelKind::Custom => "custom",
        };
        for (name, present) in given {
            if name == want && !present {
                return bad(format!("model kind {want:?} needs a [model.{want}] section"));
            }
            if name != want && present {
                return bad(format!("[model.{name}] given but model kind is {want:?}"));
            }
        }
        Ok(())
    }

    /// The validated model.
    pub fn model(&self) -> Result<ModelSpec, ConfigError> {
        self.check_model_sections()?;
        let m = &self.model;
        let built = match m.kind {
            ModelKind::Cir => make_cir_model(m.cir.unwrap()),
            ModelKind::Ou => make_ou_model(m.ou.unwrap()),
            ModelKind::Custom => {
                let c = m.custom.as_ref().unwrap();
                let domain = Domain1D::new(c.lower, c.upper).map_err(|e| ConfigError(e.to_string()))?;
                make_custom_model(domain, tabulate(c)?)
            }
        };
        built.map_err(|e| ConfigError(e.to_string()))
    }

    /// The model without parameter validation, for assumption reports.
    pub fn model_unchecked(&self) -> Result<ModelSpec, ConfigError> {
        self.check_model_sections()?;
        let m = &self.model;
        Ok(match m.kind {
            ModelKind::Cir => {
                ModelSpec::from_parts_unchecked(Domain1D::positive_half_line(), Coefficients::Cir(m.cir.unwrap()))
            }
            ModelKind::Ou => ModelSpec::from_parts_unchecked(Domain1D::real_line(), Coefficients::Ou(m.ou.unwrap())),
            ModelKind::Custom => return self.model(),
        })
    }

    fn payoff(&self) -> Result<Payoff, ConfigError> {
        let c = &self.claim;
        if c.phi != PhiKind::Table && !(c.table_x.is_empty() && c.table_phi.is_empty()) {
            return bad("table_x/table_phi are only allowed with phi = \"table\"");
        }
        Ok(match c.phi {
            PhiKind::Zero => Payoff::Zero,
            PhiKind::One => Payoff::One,
            PhiKind::Table => Payoff::Table(
                CubicSpline::new(c.table_x.clone(), c.table_phi.clone())
                    .map_err(|e| ConfigError(format!("claim table: {e}")))?,
            ),
        })
    }

    /// One claim per notional in the `q` list.
    pub fn claims(&self) -> Result<Vec<ClaimSpec>, ConfigError> {
        if self.claim.q.is_empty() {
            return bad("claim.q must list at least one notional");
        }
        let payoff = self.payoff()?;
        self.claim
            .q
            .iter()
            .map(|&q| ClaimSpec::new(payoff.clone(), q).map_err(|e| ConfigError(e.to_string())))
            .collect()
    }

    pub fn solver_options(&self) -> Result<SolverOptions, ConfigError> {
        let g = &self.grid;
        let scheme = match g.scheme.as_str() {
            "crank-nicolson" => Scheme::CrankNicolson,
            "backward-euler" => Scheme::BackwardEuler,
            s => return bad(format!("grid.scheme must be crank-nicolson or backward-euler, got {s:?}")),
        };
        let boundary = match g.boundary.as_str() {
            "linear" => Boundary::Linear,
            "neumann" => Boundary::Neumann,
            "dirichlet" => Boundary::Dirichlet,
            s => return bad(format!("grid.boundary must be linear, neumann or dirichlet, got {s:?}")),
        };
        if !(g.newton_tol > 0.0) || g.newton_max_iter == 0 {
            return bad("grid.newton_tol must be > 0 and grid.newton_max_iter >= 1");
        }
        Ok(SolverOptions {
            newton_tol: g.newton_tol,
            newton_max_iter: g.newton_max_iter,
            scheme,
            boundary,
            startup_steps: g.startup_steps,
        })
    }

    /// Grid for the full and protected equations.
    pub fn grid(&self, m: &ModelSpec) -> Result<GridSpec, ConfigError> {
        let pref = self.preferences()?;
        let (lo, hi) = match (self.grid.x_min, self.grid.x_max) {
            (Some(a), Some(b)) => (a, b),
            (None, None) => default_bounds(m, pref.horizon).map_err(|e| ConfigError(e.to_string()))?,
            _ => return bad("grid.x_min and grid.x_max must be given together"),
        };
        GridSpec::new(lo, hi, self.grid.n_space, self.grid.n_time, 0.0, pref.horizon)
            .map_err(|e| ConfigError(e.to_string()))
    }

    /// Starting state for simulation and point reports.
    pub fn x0(&self, m: &ModelSpec) -> Result<f64, ConfigError> {
        let x0 = match self.mc.x0 {
            Some(x) => x,
            None => match m.coefficients() {
                Coefficients::Cir(p) => p.theta,
                Coefficients::Ou(_) => 0.0,
                Coefficients::Custom(_) => 0.5 * (m.domain.lower + m.domain.upper),
            },
        };
        if !m.domain.contains(x0) {
            return bad(format!("mc.x0 = {x0} lies outside the state space"));
        }
        Ok(x0)
    }

    pub fn check_mc(&self) -> Result<(), ConfigError> {
        let mc = &self.mc;
        if mc.paths < 2 || mc.steps == 0 || mc.seeds == 0 {
            return bad("mc.paths must be >= 2 and mc.steps, mc.seeds >= 1");
        }
        if !(mc.tolerance_se > 0.0) {
            return bad("mc.tolerance_se must be > 0");
        }
        Ok(())
    }
}

fn tabulate(c: &CustomSection) -> Result<TabulatedCoefficients, ConfigError> {
    let spline = |name: &str, ys: &[f64]| {
        CubicSpline::new(c.knots.clone(), ys.to_vec()).map_err(|e| ConfigError(format!("model.custom.{name}: {e}")))
    };
    Ok(TabulatedCoefficients {
        b: spline("b", &c.b)?,
        a_sq: spline("a_sq", &c.a_sq)?,
        mu: spline("mu", &c.mu)?,
        sigma: spline("sigma", &c.sigma)?,
        rho: spline("rho", &c.rho)?,
        gamma: spline("gamma", &c.gamma)?,
    })
}
