//! Monte Carlo oracle for the factor process, default time, wealth and the
//! candidate dual density.
//!
//! Every path draws from its own ChaCha8 stream (`seed`, stream = path index),
//! so results do not depend on how paths are scheduled across threads. Sums
//! are always accumulated in path order.

mod kernel;
mod paths;
mod probe;
mod verify;

pub use paths::{
    estimate_certainty_equivalent, estimate_dual_value, replay_policy, simulate_default,
    simulate_dual_density, simulate_factor, PathBundle, PolicyChoice,
};
pub use probe::{cir_exponential_moment, mc_integrability_probe, CirDynamics, ProbeMeasure, ProbeResult};
pub use verify::{
    simulate_outcomes, PathOutcome, VerificationSummary, VerifyConfig, VerifyInputs,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelSpec};

/// Discretization of the factor process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimScheme {
    EulerMaruyama,
    ExactOu,
    FullTruncationCir,
}

impl SimScheme {
    /// Exact transition for OU, full truncation for CIR, Euler otherwise.
    pub fn default_for(m: &ModelSpec) -> Self {
        match m.kind() {
            ModelKind::Ou => SimScheme::ExactOu,
            ModelKind::Cir => SimScheme::FullTruncationCir,
            ModelKind::Custom => SimScheme::EulerMaruyama,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub scheme: SimScheme,
    pub x0: f64,
    pub t0: f64,
    pub horizon: f64,
}

impl SimConfig {
    pub fn new(m: &ModelSpec, n_paths: usize, n_steps: usize, seed: u64, x0: f64, horizon: f64) -> Self {
        Self { n_paths, n_steps, seed, scheme: SimScheme::default_for(m), x0, t0: 0.0, horizon }
    }

    pub fn dt(&self) -> f64 {
        (self.horizon - self.t0) / self.n_steps as f64
    }

    pub fn validate(&self, m: &ModelSpec) -> Result<()> {
        if self.n_paths == 0 || self.n_steps == 0 {
            return Err(Error::InvalidParameter("need at least one path and one step".into()));
        }
        if !(self.t0 >= 0.0 && self.t0 < self.horizon) {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= t0 < T, got t0 = {}, T = {}",
                self.t0, self.horizon
            )));
        }
        if !m.domain.contains(self.x0) {
            return Err(Error::Domain(format!("x0 = {} outside the state space", self.x0)));
        }
        let ok = match self.scheme {
            SimScheme::EulerMaruyama => true,
            SimScheme::ExactOu => m.kind() == ModelKind::Ou,
            SimScheme::FullTruncationCir => m.kind() == ModelKind::Cir,
        };
        if !ok {
            return Err(Error::SchemeMismatch(format!("{:?} cannot simulate a {:?} model", self.scheme, m.kind())));
        }
        Ok(())
    }
}

/// Running first and second moments of a per-path quantity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        Moments { n: self.n + other.n, sum: self.sum + other.sum, sum_sq: self.sum_sq + other.sum_sq }
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Sample variance (`n - 1` denominator), floored at zero.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn estimate(&self, label: &str, seed: u64) -> MCEstimate {
        MCEstimate { label: label.to_string(), mean: self.mean(), std_error: self.std_error(), n_paths: self.n, seed }
    }

    /// `-(1/alpha) log(mean)` for moments of `exp(-alpha V)`, with a
    /// delta-method standard error.
    pub fn certainty_equivalent(&self, alpha: f64, label: &str, seed: u64) -> Result<MCEstimate> {
        let mean = self.mean();
        if !(mean > 0.0 && mean.is_finite()) || self.n == 0 {
            return Err(Error::DegenerateSample(format!("{label}: mean utility {mean} over {} paths", self.n)));
        }
        Ok(MCEstimate {
            label: label.to_string(),
            mean: -mean.ln() / alpha,
            std_error: self.std_error() / (alpha * mean),
            n_paths: self.n,
            seed,
        })
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(it: I) -> Self {
        let mut m = Self::default();
        for v in it {
            m.push(v);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCEstimate {
    pub label: String,
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl MCEstimate {
    /// `label,mean,std_error,n_paths,seed`
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.label,
            crate::hjb::fmt17(self.mean),
            crate::hjb::fmt17(self.std_error),
            self.n_paths,
            self.seed
        )
    }

    pub const CSV_HEADER: &'static str = "label,mean,std_error,n_paths,seed";

    /// `|mean - target| <= k * sqrt(se^2 + extra_se^2)`.
    pub fn within(&self, target: f64, k: f64, extra_se: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error.hypot(extra_se)
    }
}

pub(crate) fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}
