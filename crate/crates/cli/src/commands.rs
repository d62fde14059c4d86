use std::fmt::Write as _;
use std::io;

use ndarray::Array2;

use credit_hjb::assumptions::{check_integrability, check_static_assumptions, AssumptionReport};
use credit_hjb::hjb::{fmt17, max_norm, residual, solve_full, solve_local, solve_protected};
use credit_hjb::model::{build_localization, Payoff};
use credit_hjb::montecarlo::{simulate_outcomes, MCEstimate, SimScheme, VerificationSummary, VerifyConfig, VerifyInputs};
use credit_hjb::pricing::{indifference_price, insurance_analysis, optimal_policy, short_horizon_curve};
use credit_hjb::stats::reporting_band;
use credit_hjb::{ClaimSpec, GridSpec, ModelSpec, Surface};

use crate::config::{ConfigError, Mode, PhiKind, RunConfig};
use crate::output::{q_tag, Output};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Engine(#[from] credit_hjb::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn config_err(e: credit_hjb::Error) -> CliError {
    CliError::Config(ConfigError(e.to_string()))
}

/// The claims to solve for, with a file-name suffix each. A zero payoff
/// gives a single claim-free solve whatever the notional list says.
fn claim_list(cfg: &RunConfig) -> Result<Vec<(String, ClaimSpec)>, CliError> {
    let claims = cfg.claims()?;
    if cfg.claim.phi == PhiKind::Zero {
        return Ok(vec![(String::new(), ClaimSpec::none())]);
    }
    Ok(claims.into_iter().map(|c| (format!("_q{}", q_tag(c.q)), c)).collect())
}

fn lower_bound(claim: &ClaimSpec) -> f64 {
    claim.q * claim.phi_bounds().0
}

/// Largest `|G_coarse - G_fine|` at `t = 0` over the coarse nodes in the
/// middle 80% of the grid.
fn interior_gap(coarse: &Surface, fine: &Surface) -> f64 {
    let g = &coarse.grid;
    let (a, b) = (g.x_min + 0.1 * (g.x_max - g.x_min), g.x_max - 0.1 * (g.x_max - g.x_min));
    let r = fine.grid.n_space / g.n_space;
    (0..=g.n_space)
        .filter(|&j| (a..=b).contains(&g.x(j)))
        .map(|j| (coarse.values[[0, j]] - fine.values[[0, r * j]]).abs())
        .fold(0.0, f64::max)
}

struct SolveRecord {
    name: String,
    max_residual: f64,
    min_value: f64,
    floor: f64,
}

fn record(name: String, s: &Surface, m: &ModelSpec, cfg: &RunConfig, floor: f64) -> Result<SolveRecord, CliError> {
    let res = max_norm(&residual(s, m, &cfg.preferences()?)?);
    Ok(SolveRecord { name, max_residual: res, min_value: s.min(), floor })
}

pub fn solve(cfg: &RunConfig, out: &Output) -> Result<Vec<Check>, CliError> {
    let m = cfg.model()?;
    let pref = cfg.preferences()?;
    let opt = cfg.solver_options()?;
    let x0 = cfg.x0(&m)?;
    let mode = cfg.mode()?;
    let mut records = Vec::new();
    let mut checks = Vec::new();

    match &mode {
        Mode::Full => {
            let grid = cfg.grid(&m)?;
            for (suffix, claim) in claim_list(cfg)? {
                let levels = cfg.grid.refinements.max(1);
                let mut surfaces = Vec::with_capacity(levels);
                for k in 0..levels {
                    surfaces.push(solve_full(&m, &claim, &pref, &grid.refined(1 << k), &opt)?);
                }
                let s = &surfaces[0];
                out.grid(&format!("surface_full{suffix}.csv"), &s.grid, &s.values)?;
                records.push(record(format!("full{suffix}"), s, &m, cfg, lower_bound(&claim))?);

                let gaps: Vec<f64> = surfaces.windows(2).map(|w| interior_gap(&w[0], &w[1])).collect();
                let rows: Vec<Vec<f64>> = surfaces
                    .iter()
                    .enumerate()
                    .map(|(k, s)| {
                        let gap = gaps.get(k).copied().unwrap_or(f64::NAN);
                        let order = match (gaps.get(k.wrapping_sub(1)), gaps.get(k)) {
                            (Some(prev), Some(cur)) if k > 0 => (prev / cur).log2(),
                            _ => f64::NAN,
                        };
                        vec![k as f64, s.grid.n_space as f64, s.grid.n_time as f64, s.value_at(0.0, x0), gap, order]
                    })
                    .collect();
                let columns = ["level", "n_space", "n_time", "value_at_x0", "sup_gap_to_next", "order"];
                out.table(&format!("convergence{suffix}.csv"), &columns.map(String::from), &rows)?;
            }
        }
        Mode::Local(ns) => {
            let mut ns = ns.clone();
            ns.sort_unstable();
            ns.dedup();
            let locs = ns
                .iter()
                .map(|&n| build_localization(&m, n, cfg.grid.transition_width).map_err(config_err))
                .collect::<Result<Vec<_>, _>>()?;
            // n_space applies to the smallest domain; larger ones keep its spacing.
            let dx = locs[0].outer.width() / cfg.grid.n_space as f64;
            // Gaps are measured on a fixed compact: the inner set of the smallest domain.
            let k = locs[0].inner.unwrap_or(locs[0].outer);
            for (suffix, claim) in claim_list(cfg)? {
                let mut solved = Vec::new();
                for loc in &locs {
                    let nx = (loc.outer.width() / dx).round() as usize;
                    let grid = GridSpec::new(loc.outer.lower, loc.outer.upper, nx, cfg.grid.n_time, 0.0, pref.horizon)
                        .map_err(config_err)?;
                    let s = solve_local(&m, &claim, &pref, loc, &grid, &opt)?;
                    out.grid(&format!("surface_local_n{}{suffix}.csv", loc.n), &s.grid, &s.values)?;
                    records.push(record(format!("local_n{}{suffix}", loc.n), &s, &m, cfg, lower_bound(&claim))?);
                    solved.push((loc.n, s));
                }
                if solved.len() < 2 {
                    continue;
                }
                let mut body = format!("# gaps over [{}, {}] x [0, T]\nn_a,n_b,sup_gap\n", fmt17(k.lower), fmt17(k.upper));
                let mut gaps = Vec::new();
                for w in solved.windows(2) {
                    let ((na, a), (nb, b)) = (&w[0], &w[1]);
                    let mut gap = 0.0_f64;
                    for (i, row) in a.values.rows().into_iter().enumerate() {
                        let t = a.grid.t(i);
                        for (j, v) in row.iter().enumerate() {
                            let x = a.grid.x(j);
                            if k.contains_closed(x) {
                                gap = gap.max((v - b.value_at(t, x)).abs());
                            }
                        }
                    }
                    writeln!(body, "{na},{nb},{}", fmt17(gap)).unwrap();
                    gaps.push(gap);
                }
                out.text(&format!("local_gaps{suffix}.csv"), &body)?;
                let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
                checks.push(Check::new(
                    &format!("local-gaps-decreasing{suffix}"),
                    decreasing,
                    format!("sup gaps between consecutive n: {:?}", gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>()),
                ));
            }
        }
        Mode::Protected => {
            let grid = cfg.grid(&m)?;
            let g0 = solve_full(&m, &ClaimSpec::none(), &pref, &grid, &opt)?;
            let rate = credit_hjb::pricing::insurance_rate(&g0, &m, &pref)?;
            let gd = solve_protected(&m, &pref, &rate, &grid, &opt)?;
            out.grid("surface_protected.csv", &gd.grid, &gd.values)?;
            out.grid("insurance_rate.csv", &grid, &rate)?;
            records.push(record("protected".into(), &gd, &m, cfg, 0.0)?);
            let gap = max_norm(&(&gd.values - &g0.values));
            checks.push(Check::new(
                "protected-matches-full",
                gap <= 1e-5,
                format!("max |G^d - G| = {gap:.3e} with the lower-branch insurance rate"),
            ));
        }
    }

    let mut body = String::from("surface,max_residual,min_value,lower_bound\n");
    for r in &records {
        writeln!(body, "{},{},{},{}", r.name, fmt17(r.max_residual), fmt17(r.min_value), fmt17(r.floor)).unwrap();
        checks.push(Check::new(
            &format!("lower-bound {}", r.name),
            r.min_value >= r.floor - 1e-8,
            format!("min G = {:.6e} >= {} - 1e-8; max residual {:.3e}", r.min_value, r.floor, r.max_residual),
        ));
    }
    out.text("residual.csv", &body)?;
    Ok(checks)
}

/// Node indices of `grid` inside `[lo, hi]`.
fn band_nodes(grid: &GridSpec, lo: f64, hi: f64) -> Vec<usize> {
    (0..=grid.n_space).filter(|&j| (lo..=hi).contains(&grid.x(j))).collect()
}

pub fn price_bond(cfg: &RunConfig, out: &Output) -> Result<Vec<Check>, CliError> {
    if cfg.claim.phi == PhiKind::Zero {
        return Err(ConfigError("price-bond needs claim.phi = \"one\" or \"table\"".into()).into());
    }
    let m = cfg.model()?;
    let pref = cfg.preferences()?;
    let opt = cfg.solver_options()?;
    let grid = cfg.grid(&m)?;
    let mut claims = claim_list(cfg)?;
    claims.sort_by(|a, b| a.1.q.total_cmp(&b.1.q));

    let g0 = solve_full(&m, &ClaimSpec::none(), &pref, &grid, &opt)?;
    let mut prices: Vec<(f64, Array2<f64>)> = Vec::new();
    for (suffix, claim) in &claims {
        let gq = solve_full(&m, claim, &pref, &grid, &opt)?;
        let p = indifference_price(&gq, &g0, claim.q)?;
        out.grid(&format!("price{suffix}.csv"), &grid, &p)?;
        prices.push((claim.q, p));
    }

    let (lo, hi) = reporting_band(&m, pref.horizon)?;
    let band = band_nodes(&grid, lo, hi);
    let mut columns = vec!["x".to_string()];
    columns.extend(prices.iter().map(|(q, _)| format!("p_q{}", q_tag(*q))));
    let rows: Vec<Vec<f64>> = band
        .iter()
        .map(|&j| std::iter::once(grid.x(j)).chain(prices.iter().map(|(_, p)| p[[0, j]])).collect())
        .collect();
    out.table("price_band.csv", &columns, &rows)?;

    let mut checks = Vec::new();
    let violations: usize = prices
        .windows(2)
        .map(|w| w[0].1.iter().zip(w[1].1.iter()).filter(|(a, b)| b > a).count())
        .sum();
    checks.push(Check::new(
        "price-decreasing-in-q",
        violations == 0,
        format!("{violations} nodes where a larger notional has a higher unit price"),
    ));
    let payoff = &claims[0].1;
    let terminal_gap = prices
        .iter()
        .flat_map(|(_, p)| (0..=grid.n_space).map(move |j| (p[[grid.n_time, j]] - payoff.phi(grid.x(j))).abs()))
        .fold(0.0, f64::max);
    let exact = matches!(payoff.payoff, Payoff::One);
    checks.push(Check::new(
        "terminal-price",
        if exact { terminal_gap == 0.0 } else { terminal_gap <= 1e-12 },
        format!("max |p(T, x) - phi(x)| = {terminal_gap:.3e}"),
    ));
    if let (Some(&a), Some(&b)) = (band.first(), band.last()) {
        let ends: Vec<String> =
            prices.iter().map(|(q, p)| format!("q = {q}: {:.6} -> {:.6}", p[[0, a]], p[[0, b]])).collect();
        checks.push(Check::new(
            "band",
            true,
            format!("p(0, x) over [{lo:.6}, {hi:.6}] ({} nodes): {}", band.len(), ends.join("; ")),
        ));
    }
    Ok(checks)
}

pub fn price_insurance(cfg: &RunConfig, out: &Output) -> Result<Vec<Check>, CliError> {
    let m = cfg.model()?;
    let pref = cfg.preferences()?;
    let opt = cfg.solver_options()?;
    let grid = cfg.grid(&m)?;
    let g = solve_full(&m, &ClaimSpec::none(), &pref, &grid, &opt)?;
    let r = insurance_analysis(&g, None, &m, &pref)?;
    out.grid("insurance_rate.csv", &grid, &r.insurance_rate)?;
    out.grid("insurance_upper_bound.csv", &grid, &r.upper_bound)?;
    out.grid("insurance_sign_indicator.csv", &grid, &r.sign_indicator)?;
    out.grid("optimal_policy.csv", &grid, &r.policy.values)?;
    out.grid("protected_policy.csv", &grid, &r.protected_policy)?;

    let (lo, hi) = reporting_band(&m, pref.horizon)?;
    let band = band_nodes(&grid, lo, hi);
    let rows: Vec<Vec<f64>> = band
        .iter()
        .map(|&j| vec![grid.x(j), r.insurance_rate[[0, j]], r.upper_bound[[0, j]], r.physical_intensity[[0, j]]])
        .collect();
    out.table("insurance_band.csv", &["x", "f", "upper_bound", "gamma"].map(String::from), &rows)?;

    let curve = short_horizon_curve(2.0 / 3.0)?;
    let rows: Vec<Vec<f64>> = curve.iter().map(|p| vec![p.alpha_pi, p.rate, p.upper]).collect();
    out.table("short_horizon.csv", &["alpha_pi", "rate", "upper_bound"].map(String::from), &rows)?;

    let f = &r.insurance_rate;
    let over = f.iter().zip(r.upper_bound.iter()).map(|(f, u)| f - u).fold(f64::NEG_INFINITY, f64::max);
    let sign_miss = f
        .iter()
        .zip(r.sign_indicator.iter())
        .filter(|(fv, ind)| ind.abs() > 1e-8 && fv.signum() != ind.signum())
        .count();
    let not_increasing = band.windows(2).filter(|w| f[[0, w[1]]] <= f[[0, w[0]]]).count();
    let below = band.iter().filter(|&&j| f[[0, j]] < r.physical_intensity[[0, j]]).count();
    Ok(vec![
        Check::new("upper-bound", over <= 1e-8, format!("max f - gamma e^(alpha (G + pi)) = {over:.3e}")),
        Check::new("sign", sign_miss == 0, format!("{sign_miss} nodes where f and the sign indicator disagree")),
        Check::new(
            "increasing-on-band",
            not_increasing == 0,
            format!("{not_increasing} non-increasing steps of f(0, .) on [{lo:.6}, {hi:.6}]"),
        ),
        Check::new("above-physical-intensity", below == 0, format!("{below} band nodes with f(0, x) < gamma(x)")),
    ])
}

pub fn verify(cfg: &RunConfig, out: &Output) -> Result<Vec<Check>, CliError> {
    let m = cfg.model()?;
    let pref = cfg.preferences()?;
    let opt = cfg.solver_options()?;
    let grid = cfg.grid(&m)?;
    let x0 = cfg.x0(&m)?;
    cfg.check_mc()?;
    let (_, claim) = claim_list(cfg)?.remove(0);
    let s = solve_full(&m, &claim, &pref, &grid, &opt)?;
    let policy = optimal_policy(&s, &m, &pref)?;
    let g0 = s.value_at(0.0, x0);
    let inp = VerifyInputs { model: &m, pref: &pref, claim: &claim, surface: &s, policy: &policy, x0, t0: 0.0 };

    let mc = &cfg.mc;
    let mut rows = vec![MCEstimate::CSV_HEADER.to_string()];
    let mut pooled: Option<VerificationSummary> = None;
    for seed in mc.seed..mc.seed + mc.seeds {
        let vc = VerifyConfig {
            n_paths: mc.paths,
            n_steps: mc.steps,
            seed,
            scheme: SimScheme::default_for(&m),
            substeps: 1,
            policy_shift: mc.policy_shift,
            value_shift: mc.value_shift,
        };
        let summary = VerificationSummary::from_outcomes(&simulate_outcomes(&inp, &vc)?, pref.alpha, seed);
        rows.extend(summary.estimates()?.iter().map(MCEstimate::csv_row));
        pooled = Some(match pooled {
            None => summary,
            Some(p) => p.merge(&summary),
        });
    }
    let pooled = pooled.expect("at least one seed");
    if mc.seeds > 1 {
        for mut e in pooled.estimates()? {
            e.label = format!("pooled_{}", e.label);
            rows.push(e.csv_row());
        }
    }
    rows.push(String::new());
    out.text("verify.csv", &rows.join("\n"))?;

    let k = mc.tolerance_se;
    let ce = pooled.certainty_equivalent()?;
    let dual = pooled.dual_value();
    let mass = pooled.martingale_mass();
    let shifted = pooled.certainty_equivalent_shifted()?;
    let checks = vec![
        Check::new(
            "certainty-equivalent",
            ce.within(g0, k, 0.0),
            format!("MC {:.8} (se {:.2e}) vs G(0, {x0}) = {g0:.8}", ce.mean, ce.std_error),
        ),
        Check::new("dual-value", dual.within(g0, k, 0.0), format!("MC {:.8} (se {:.2e}) vs G = {g0:.8}", dual.mean, dual.std_error)),
        Check::new("martingale-mass", mass.within(1.0, k, 0.0), format!("E[Z_T] = {:.6} (se {:.2e})", mass.mean, mass.std_error)),
        Check::new(
            "suboptimal-policy",
            shifted.mean <= g0 + k * shifted.std_error,
            format!("CE under pi + {} = {:.8} (se {:.2e}) vs G = {g0:.8}", mc.policy_shift, shifted.mean, shifted.std_error),
        ),
    ];
    let mut report = format!(
        "paths {} x seeds {} ({}..{}), steps {}, tolerance {k} se\n",
        mc.paths,
        mc.seeds,
        mc.seed,
        mc.seed + mc.seeds - 1,
        mc.steps
    );
    for c in &checks {
        report.push_str(&c.line());
        report.push('\n');
    }
    out.text("verify.txt", &report)?;
    Ok(checks)
}

fn write_report(out: &Output, r: &AssumptionReport) -> io::Result<()> {
    out.text("assumptions.txt", &r.to_text())?;
    let mut body = format!("{}\n", AssumptionReport::CSV_HEADER);
    for row in r.csv_rows() {
        body.push_str(&row);
        body.push('\n');
    }
    out.text("assumptions.csv", &body)
}

pub fn check_assumptions(cfg: &RunConfig, out: &Output) -> Result<Vec<Check>, CliError> {
    let m = cfg.model_unchecked()?;
    let pref = cfg.preferences()?;
    let (_, claim) = claim_list(cfg)?.remove(0);
    let mut report = check_static_assumptions(&m, &claim);
    let integrability = check_integrability(&m, &pref, cfg.mc.probe_paths.max(2), cfg.mc.seed);
    if let Ok(r) = &integrability {
        report.extend(r.clone());
    }
    write_report(out, &report)?;
    integrability?;
    let failing: Vec<&str> = report
        .entries
        .iter()
        .filter(|e| e.role == credit_hjb::assumptions::Role::Required && e.status == credit_hjb::assumptions::Status::Fails)
        .map(|e| e.id.as_str())
        .collect();
    let unverified = report.entries.iter().filter(|e| e.status == credit_hjb::assumptions::Status::Unverified).count();
    Ok(vec![Check::new(
        "assumptions",
        report.passes(),
        if failing.is_empty() {
            format!("{} entries, none failing, {unverified} unverified", report.entries.len())
        } else {
            format!("failing: {}", failing.join(", "))
        },
    )])
}
