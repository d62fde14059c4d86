use super::{Domain1D, ModelKind, ModelSpec};
use crate::error::{Error, Result};

/// Nested exhausting intervals `E_n` and a smooth cutoff `chi_n`.
///
/// `chi_n = 1` on `E_{n-1}`, vanishes outside `E_n` and is positive inside.
/// The profile rises over a band of width `transition_width` next to each
/// end of `E_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationSpec {
    pub n: usize,
    pub outer: Domain1D,
    /// `E_{n-1}`; `None` when it is empty (e.g. CIR with `n = 2`).
    pub inner: Option<Domain1D>,
    pub transition_width: f64,
    profile: Profile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Profile {
    SmoothStep,
    Constant(f64),
}

/// `s(t) = psi(t) / (psi(t) + psi(1 - t))`, `psi(t) = exp(-1/t)` for `t > 0`.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    // ratio form avoids 0/0 when both exponentials underflow
    let r = (1.0 / t - 1.0 / (1.0 - t)).exp();
    1.0 / (1.0 + r)
}

impl LocalizationSpec {
    /// Degenerate cutoff equal to `value` on all of `outer`; only for testing
    /// the local mode against the full equation.
    pub fn constant(outer: Domain1D, n: usize, value: f64) -> Self {
        Self { n, outer, inner: None, transition_width: 0.0, profile: Profile::Constant(value) }
    }

    pub fn chi(&self, x: f64) -> f64 {
        match self.profile {
            Profile::Constant(v) => {
                if self.outer.contains_closed(x) {
                    v
                } else {
                    0.0
                }
            }
            Profile::SmoothStep => {
                let d = (x - self.outer.lower).min(self.outer.upper - x);
                smooth_step(d / self.transition_width)
            }
        }
    }

    /// Checks the four cutoff properties on `points` equally spaced nodes
    /// spanning a neighbourhood of `E_n`.
    pub fn validate(&self, points: usize) -> Result<()> {
        let pad = 0.05 * self.outer.width();
        let (lo, hi) = (self.outer.lower - pad, self.outer.upper + pad);
        for k in 0..points {
            let x = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let c = self.chi(x);
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidNesting(format!("chi({x}) = {c} outside [0, 1]")));
            }
            if !self.outer.contains_closed(x) && c != 0.0 {
                return Err(Error::InvalidNesting(format!("chi({x}) = {c} outside E_n")));
            }
            if self.outer.contains(x) && c <= 0.0 && self.profile == Profile::SmoothStep {
                return Err(Error::InvalidNesting(format!("chi({x}) = 0 inside E_n")));
            }
            if let Some(inner) = self.inner {
                if inner.contains_closed(x) && c != 1.0 {
                    return Err(Error::InvalidNesting(format!("chi({x}) = {c} on E_(n-1)")));
                }
            }
        }
        Ok(())
    }
}

/// The `n`-th exhausting interval: `(1/n, n)` for CIR, `(-n, n)` for OU.
/// For tabulated models a finite end `l` moves inward to `l + s/n` with
/// `s = min(1, width/4)` and an infinite end is replaced by `-n` or `n`.
pub fn exhaustion(m: &ModelSpec, n: usize) -> Result<Domain1D> {
    if n == 0 {
        return Err(Error::InvalidNesting("localization index must be >= 1".into()));
    }
    let nf = n as f64;
    let (lo, hi) = match m.kind() {
        ModelKind::Cir => (1.0 / nf, nf),
        ModelKind::Ou => (-nf, nf),
        ModelKind::Custom => {
            let d = m.domain;
            let s = if d.is_bounded() { (0.25 * d.width()).min(1.0) } else { 1.0 };
            let lo = if d.lower.is_finite() { d.lower + s / nf } else { -nf };
            let hi = if d.upper.is_finite() { d.upper - s / nf } else { nf };
            (lo, hi)
        }
    };
    if lo >= hi {
        return Err(Error::InvalidNesting(format!("E_{n} = ({lo}, {hi}) is empty")));
    }
    if lo <= m.domain.lower || hi >= m.domain.upper {
        return Err(Error::InvalidNesting(format!(
            "E_{n} = ({lo}, {hi}) is not strictly inside ({}, {})",
            m.domain.lower, m.domain.upper
        )));
    }
    Ok(Domain1D { lower: lo, upper: hi })
}

/// Builds `chi_n`. `transition_width` defaults to a tenth of the smaller gap
/// between `E_{n-1}` and the ends of `E_n`.
pub fn build_localization(
    m: &ModelSpec,
    n: usize,
    transition_width: Option<f64>,
) -> Result<LocalizationSpec> {
    if n < 2 {
        return Err(Error::InvalidNesting(format!("localization index must be >= 2, got {n}")));
    }
    let outer = exhaustion(m, n)?;
    let inner = exhaustion(m, n - 1).ok();
    let gap = match inner {
        Some(i) => (i.lower - outer.lower).min(outer.upper - i.upper),
        None => 0.5 * outer.width(),
    };
    if gap <= 0.0 {
        return Err(Error::InvalidNesting(format!("E_{} is not inside E_{n}", n - 1)));
    }
    let width = transition_width.unwrap_or(0.1 * gap);
    if !(width > 0.0 && width <= gap) {
        return Err(Error::InvalidNesting(format!(
            "transition width {width} must lie in (0, {gap}]"
        )));
    }
    let spec = LocalizationSpec { n, outer, inner, transition_width: width, profile: Profile::SmoothStep };
    spec.validate(1001)?;
    Ok(spec)
}
