use ndarray::Array2;

use super::grid::GridSpec;
use super::surface::{Surface, SurfaceMode};
use super::tridiag;
use crate::error::{Error, Result};
use crate::lambertw::theta_exp_unchecked;
use crate::model::{ClaimSpec, LocalizationSpec, ModelSpec, Preferences};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    BackwardEuler,
    CrankNicolson,
}

/// Lateral boundary treatment for the full and protected equations. The local
/// equation always uses zero Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// `G_xx = 0` at the edge; the gradient there is one-sided.
    Linear,
    /// `G_x = 0` through a mirrored ghost node.
    Neumann,
    /// `G = 0` for `t < T`.
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub scheme: Scheme,
    pub boundary: Boundary,
    /// Crank-Nicolson only: number of backward Euler steps taken first from
    /// the terminal row, damping oscillations from steep terminal data.
    pub startup_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            newton_max_iter: 30,
            scheme: Scheme::CrankNicolson,
            boundary: Boundary::Linear,
            startup_steps: 2,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter(format!(
                "newton_tol must be > 0 and newton_max_iter >= 1, got {} and {}",
                self.newton_tol, self.newton_max_iter
            )));
        }
        Ok(())
    }
}

/// Coefficients frozen at one grid node.
#[derive(Debug, Clone, Copy)]
struct Node {
    b: f64,
    a_sq: f64,
    sigma2: f64,
    mu_s2: f64,
    gamma_s2: f64,
    ln_k: f64,
    /// `(alpha / sigma) a rho`
    c: f64,
}

impl Node {
    fn new(m: &ModelSpec, x: f64, alpha: f64) -> Result<Self> {
        let p = m.at(x);
        let sigma2 = p.sigma2();
        if !(sigma2 > 0.0 && p.gamma > 0.0 && p.a_sq >= 0.0) {
            return Err(Error::Domain(format!(
                "coefficients at x = {x} need sigma > 0, gamma > 0, A >= 0 (sigma = {}, gamma = {}, A = {})",
                p.sigma, p.gamma, p.a_sq
            )));
        }
        let gamma_s2 = p.gamma / sigma2;
        Ok(Self {
            b: p.b,
            a_sq: p.a_sq,
            sigma2,
            mu_s2: p.mu / sigma2,
            gamma_s2,
            ln_k: gamma_s2.ln(),
            c: alpha / p.sigma * p.a() * p.rho,
        })
    }
}

#[derive(Clone, Copy)]
enum Source<'a> {
    Full,
    Local(&'a [f64]),
    Protected(&'a Array2<f64>),
}

/// Nonlinear part and its derivatives in `g` and `p = g_x`.
#[inline]
fn nonlinear(src: Source<'_>, nd: &Node, alpha: f64, g: f64, p: f64, row: usize, j: usize) -> (f64, f64, f64) {
    let quad = -0.5 * alpha * nd.a_sq * p * p;
    let dquad = -alpha * nd.a_sq * p;
    let half = nd.sigma2 / (2.0 * alpha);
    match src {
        Source::Full | Source::Local(_) => {
            let x = nd.mu_s2 - nd.c * p;
            let th = theta_exp_unchecked(nd.ln_k + nd.mu_s2 + alpha * g - nd.c * p);
            let s = half * (2.0 * nd.gamma_s2 + x * x - th * th - 2.0 * th);
            let ds_dg = -nd.sigma2 * th;
            let ds_dp = -nd.sigma2 * nd.c / alpha * (x - th);
            let chi = match src {
                Source::Local(chi) => chi[j],
                _ => 1.0,
            };
            (quad + chi * s, chi * ds_dg, dquad + chi * ds_dp)
        }
        Source::Protected(rate) => {
            let xd = nd.mu_s2 - rate[[row, j]] / nd.sigma2 - nd.c * p;
            let e = (alpha * g).exp();
            let s = half * (2.0 * nd.gamma_s2 * (1.0 - e) + xd * xd);
            let ds_dg = -nd.sigma2 * nd.gamma_s2 * e;
            let ds_dp = -nd.sigma2 * nd.c / alpha * xd;
            (quad + s, ds_dg, dquad + ds_dp)
        }
    }
}

/// Tridiagonal Jacobian rows.
struct Jacobian {
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
}

impl Jacobian {
    fn zeros(n: usize) -> Self {
        Self { lo: vec![0.0; n], di: vec![0.0; n], up: vec![0.0; n] }
    }
}

struct Stepper<'a> {
    nodes: Vec<Node>,
    alpha: f64,
    dx: f64,
    dt: f64,
    /// weight of the unknown level: 1 for backward Euler, 1/2 for Crank-Nicolson
    w: f64,
    /// rows at or above this index are stepped with backward Euler
    startup_row: usize,
    boundary: Boundary,
    source: Source<'a>,
}

impl<'a> Stepper<'a> {
    fn new(
        m: &ModelSpec,
        grid: &GridSpec,
        alpha: f64,
        opt: &SolverOptions,
        boundary: Boundary,
        source: Source<'a>,
    ) -> Result<Self> {
        let nodes = grid.xs().into_iter().map(|x| Node::new(m, x, alpha)).collect::<Result<Vec<_>>>()?;
        let w = match opt.scheme {
            Scheme::BackwardEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        };
        let startup_row = grid.n_time.saturating_sub(opt.startup_steps);
        Ok(Self { nodes, alpha, dx: grid.dx(), dt: grid.dt(), w, startup_row, boundary, source })
    }

    /// Spatial operator `L g` at time row `row`, with its Jacobian.
    fn operator(&self, g: &[f64], row: usize, l: &mut [f64], jac: &mut Jacobian) {
        let n = g.len();
        let (dx, alpha) = (self.dx, self.alpha);
        let inv2dx = 0.5 / dx;
        let invdx2 = 1.0 / (dx * dx);
        for j in 1..n - 1 {
            let nd = &self.nodes[j];
            let p = (g[j + 1] - g[j - 1]) * inv2dx;
            let gxx = (g[j + 1] - 2.0 * g[j] + g[j - 1]) * invdx2;
            let (s, ds_dg, ds_dp) = nonlinear(self.source, nd, alpha, g[j], p, row, j);
            l[j] = nd.b * p + 0.5 * nd.a_sq * gxx + s;
            jac.lo[j] = -(nd.b + ds_dp) * inv2dx + 0.5 * nd.a_sq * invdx2;
            jac.di[j] = -nd.a_sq * invdx2 + ds_dg;
            jac.up[j] = (nd.b + ds_dp) * inv2dx + 0.5 * nd.a_sq * invdx2;
        }
        for (j, inner) in [(0usize, 1usize), (n - 1, n - 2)] {
            let nd = &self.nodes[j];
            let (lo, di, up);
            match self.boundary {
                Boundary::Linear => {
                    let sign = if j == 0 { 1.0 } else { -1.0 };
                    let p = sign * (g[inner] - g[j]) / dx;
                    let (s, ds_dg, ds_dp) = nonlinear(self.source, nd, alpha, g[j], p, row, j);
                    l[j] = nd.b * p + s;
                    let d_inner = sign * (nd.b + ds_dp) / dx;
                    di = ds_dg - d_inner;
                    (lo, up) = if j == 0 { (0.0, d_inner) } else { (d_inner, 0.0) };
                }
                Boundary::Neumann => {
                    let gxx = 2.0 * (g[inner] - g[j]) * invdx2;
                    let (s, ds_dg, _) = nonlinear(self.source, nd, alpha, g[j], 0.0, row, j);
                    l[j] = 0.5 * nd.a_sq * gxx + s;
                    let d_inner = nd.a_sq * invdx2;
                    di = ds_dg - d_inner;
                    (lo, up) = if j == 0 { (0.0, d_inner) } else { (d_inner, 0.0) };
                }
                Boundary::Dirichlet => {
                    l[j] = 0.0;
                    (lo, di, up) = (0.0, 0.0, 0.0);
                }
            }
            jac.lo[j] = lo;
            jac.di[j] = di;
            jac.up[j] = up;
        }
    }

    /// Residual of the step from `next` (row `row + 1`) to `g` (row `row`),
    /// given the precomputed explicit part `(1 - w) L(next)`.
    fn step_residual(&self, g: &[f64], next: &[f64], explicit: &[f64], row: usize, f: &mut [f64], jac: &mut Jacobian) {
        let n = g.len();
        let w = self.weight(row);
        self.operator(g, row, f, jac);
        let inv_dt = 1.0 / self.dt;
        for j in 0..n {
            f[j] = (next[j] - g[j]) * inv_dt + w * f[j] + explicit[j];
            jac.lo[j] *= w;
            jac.di[j] = w * jac.di[j] - inv_dt;
            jac.up[j] *= w;
        }
        if self.boundary == Boundary::Dirichlet {
            for j in [0, n - 1] {
                f[j] = g[j];
                jac.lo[j] = 0.0;
                jac.di[j] = 1.0;
                jac.up[j] = 0.0;
            }
        }
    }

    fn weight(&self, row: usize) -> f64 {
        if row >= self.startup_row {
            1.0
        } else {
            self.w
        }
    }

    fn explicit_part(&self, next: &[f64], row_next: usize) -> Vec<f64> {
        let n = next.len();
        let mut e = vec![0.0; n];
        let w = self.weight(row_next - 1);
        if w < 1.0 {
            let mut jac = Jacobian::zeros(n);
            self.operator(next, row_next, &mut e, &mut jac);
            for v in &mut e {
                *v *= 1.0 - w;
            }
        }
        e
    }

    fn step(&self, next: &[f64], row: usize, opt: &SolverOptions) -> Result<Vec<f64>> {
        let n = next.len();
        let explicit = self.explicit_part(next, row + 1);
        let mut g = next.to_vec();
        if self.boundary == Boundary::Dirichlet {
            g[0] = 0.0;
            g[n - 1] = 0.0;
        }
        let mut f = vec![0.0; n];
        let mut jac = Jacobian::zeros(n);
        self.step_residual(&g, next, &explicit, row, &mut f, &mut jac);
        let mut merit = max_abs(&f);

        let mut trial = vec![0.0; n];
        let mut f_trial = vec![0.0; n];
        let mut jac_trial = Jacobian::zeros(n);
        let mut delta = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        for _ in 0..opt.newton_max_iter {
            if merit <= opt.newton_tol {
                return Ok(g);
            }
            for j in 0..n {
                delta[j] = -f[j];
            }
            if !tridiag::solve_in_place(&jac.lo, &jac.di, &jac.up, &mut delta, &mut scratch) {
                return Err(Error::NewtonDivergence { step: row, residual: merit });
            }
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..=10 {
                for j in 0..n {
                    trial[j] = g[j] + lambda * delta[j];
                }
                self.step_residual(&trial, next, &explicit, row, &mut f_trial, &mut jac_trial);
                let m = max_abs(&f_trial);
                if m < merit {
                    std::mem::swap(&mut g, &mut trial);
                    std::mem::swap(&mut f, &mut f_trial);
                    std::mem::swap(&mut jac, &mut jac_trial);
                    merit = m;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            let step = lambda * max_abs(&delta);
            if !accepted || step <= 1e-14 * max_abs(&g).max(1.0) {
                // no further progress is possible in floating point
                if merit <= 10.0 * opt.newton_tol {
                    return Ok(g);
                }
                if !accepted {
                    return Err(Error::NewtonDivergence { step: row, residual: merit });
                }
            }
        }
        if merit <= opt.newton_tol {
            Ok(g)
        } else {
            Err(Error::NewtonDivergence { step: row, residual: merit })
        }
    }

    fn march(&self, terminal: Vec<f64>, grid: &GridSpec, opt: &SolverOptions) -> Result<Array2<f64>> {
        let (nt, nx) = (grid.n_time, grid.n_space + 1);
        let mut values = Array2::zeros((nt + 1, nx));
        values.row_mut(nt).assign(&ndarray::ArrayView1::from(&terminal));
        let mut next = terminal;
        for row in (0..nt).rev() {
            let g = self.step(&next, row, opt)?;
            values.row_mut(row).assign(&ndarray::ArrayView1::from(&g));
            next = g;
        }
        Ok(values)
    }

    fn residual_of(&self, values: &Array2<f64>) -> Array2<f64> {
        let (rows, nx) = values.dim();
        let mut out = Array2::zeros((rows - 1, nx));
        let mut jac = Jacobian::zeros(nx);
        let mut f = vec![0.0; nx];
        for row in 0..rows - 1 {
            let next = values.row(row + 1).to_vec();
            let g = values.row(row).to_vec();
            let explicit = self.explicit_part(&next, row + 1);
            self.step_residual(&g, &next, &explicit, row, &mut f, &mut jac);
            out.row_mut(row).assign(&ndarray::ArrayView1::from(&f));
        }
        out
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn check_grid_inside(m: &ModelSpec, grid: &GridSpec) -> Result<()> {
    grid.validate()?;
    if !(m.domain.contains(grid.x_min) && m.domain.contains(grid.x_max)) {
        return Err(Error::InvalidGrid(format!(
            "grid [{}, {}] must lie strictly inside ({}, {})",
            grid.x_min, grid.x_max, m.domain.lower, m.domain.upper
        )));
    }
    Ok(())
}

/// Pointwise nonlinearity of the full equation:
/// `-(alpha/2) A gx^2 + (sigma^2 / 2 alpha) (2 gamma/sigma^2 + X^2 - theta^2 - 2 theta)`
/// with `X = mu/sigma^2 - (alpha/sigma) gx a rho`.
pub fn hjb_rhs(m: &ModelSpec, g: f64, gx: f64, x: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    if !(g.is_finite() && gx.is_finite()) {
        return Err(Error::Domain(format!("non-finite input g = {g}, gx = {gx}")));
    }
    m.checked_at(x)?;
    let nd = Node::new(m, x, alpha)?;
    Ok(nonlinear(Source::Full, &nd, alpha, g, gx, 0, 0).0)
}

/// Solves the full equation backward from `G(T) = q phi`.
pub fn solve_full(
    m: &ModelSpec,
    claim: &ClaimSpec,
    pref: &Preferences,
    grid: &GridSpec,
    opt: &SolverOptions,
) -> Result<Surface> {
    pref.validate()?;
    opt.validate()?;
    check_grid_inside(m, grid)?;
    let stepper = Stepper::new(m, grid, pref.alpha, opt, opt.boundary, Source::Full)?;
    let terminal: Vec<f64> = grid.xs().into_iter().map(|x| claim.value(x)).collect();
    let values = stepper.march(terminal, grid, opt)?;
    Ok(Surface::new(*grid, values, SurfaceMode::Full, pref.alpha, *opt))
}

/// Solves the localized equation on `E_n`: the bracketed source is weighted by
/// `chi_n`, the terminal value is `chi_n q phi` and the lateral data are zero.
pub fn solve_local(
    m: &ModelSpec,
    claim: &ClaimSpec,
    pref: &Preferences,
    loc: &LocalizationSpec,
    grid: &GridSpec,
    opt: &SolverOptions,
) -> Result<Surface> {
    pref.validate()?;
    opt.validate()?;
    check_grid_inside(m, grid)?;
    let tol = 1e-12 * loc.outer.width().max(1.0);
    if (grid.x_min - loc.outer.lower).abs() > tol || (grid.x_max - loc.outer.upper).abs() > tol {
        return Err(Error::GridMismatch(format!(
            "local grid [{}, {}] must coincide with E_{} = ({}, {})",
            grid.x_min, grid.x_max, loc.n, loc.outer.lower, loc.outer.upper
        )));
    }
    let xs = grid.xs();
    let chi: Vec<f64> = xs.iter().map(|&x| loc.chi(x)).collect();
    let opt_local = SolverOptions { boundary: Boundary::Dirichlet, ..*opt };
    let stepper = Stepper::new(m, grid, pref.alpha, &opt_local, Boundary::Dirichlet, Source::Local(&chi))?;
    let terminal: Vec<f64> = xs.iter().zip(&chi).map(|(&x, &c)| c * claim.value(x)).collect();
    let values = stepper.march(terminal, grid, &opt_local)?;
    let mut s = Surface::new(*grid, values, SurfaceMode::Local(loc.n), pref.alpha, opt_local);
    s.chi = Some(chi);
    Ok(s)
}

/// Solves the protected-market equation with insurance rate `rate[[i, j]]`
/// and zero terminal value.
pub fn solve_protected(
    m: &ModelSpec,
    pref: &Preferences,
    rate: &Array2<f64>,
    grid: &GridSpec,
    opt: &SolverOptions,
) -> Result<Surface> {
    pref.validate()?;
    opt.validate()?;
    check_grid_inside(m, grid)?;
    check_rate_shape(rate, grid)?;
    let stepper = Stepper::new(m, grid, pref.alpha, opt, opt.boundary, Source::Protected(rate))?;
    let values = stepper.march(vec![0.0; grid.n_space + 1], grid, opt)?;
    let mut s = Surface::new(*grid, values, SurfaceMode::Protected, pref.alpha, *opt);
    s.rate = Some(rate.clone());
    Ok(s)
}

fn check_rate_shape(rate: &Array2<f64>, grid: &GridSpec) -> Result<()> {
    let want = (grid.n_time + 1, grid.n_space + 1);
    if rate.dim() != want {
        return Err(Error::GridMismatch(format!("rate field is {:?}, grid needs {:?}", rate.dim(), want)));
    }
    Ok(())
}

/// Discrete residual of every time step, using the operators and boundary
/// rows the surface was solved with. Row `i` is the step from `t_{i+1}` to `t_i`.
pub fn residual(surface: &Surface, m: &ModelSpec, pref: &Preferences) -> Result<Array2<f64>> {
    let grid = &surface.grid;
    let opt = &surface.options;
    let source = match surface.mode {
        SurfaceMode::Full => Source::Full,
        SurfaceMode::Local(_) => Source::Local(
            surface.chi.as_deref().ok_or_else(|| Error::GridMismatch("local surface without cutoff".into()))?,
        ),
        SurfaceMode::Protected => Source::Protected(
            surface.rate.as_ref().ok_or_else(|| Error::GridMismatch("protected surface without rate".into()))?,
        ),
    };
    let stepper = Stepper::new(m, grid, pref.alpha, opt, opt.boundary, source)?;
    Ok(stepper.residual_of(&surface.values))
}

/// Residual of `surface` inserted into the protected-market operator with the
/// given rate field.
pub fn protected_residual(
    surface: &Surface,
    m: &ModelSpec,
    pref: &Preferences,
    rate: &Array2<f64>,
) -> Result<Array2<f64>> {
    check_rate_shape(rate, &surface.grid)?;
    let opt = &surface.options;
    let stepper = Stepper::new(m, &surface.grid, pref.alpha, opt, opt.boundary, Source::Protected(rate))?;
    Ok(stepper.residual_of(&surface.values))
}

pub fn max_norm(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}
