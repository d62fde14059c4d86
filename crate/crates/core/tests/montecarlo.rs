use credit_hjb::hjb::{default_grid, solve_full, SolverOptions};
use credit_hjb::model::{make_cir_model, make_ou_model, CirParams, ClaimSpec, ModelSpec, OuParams, Preferences};
use credit_hjb::montecarlo::*;
use credit_hjb::pricing::optimal_policy;
use credit_hjb::Error;

fn constant_model(mu: f64, sigma: f64, gamma: f64, rho: f64) -> ModelSpec {
    make_ou_model(OuParams { b_mr: 0.0, mu1: mu / sigma, mu2: 0.0, sigma, gamma: gamma / sigma, rho }).unwrap()
}

fn cfg(m: &ModelSpec, n_paths: usize, n_steps: usize, seed: u64, x0: f64, horizon: f64) -> SimConfig {
    SimConfig::new(m, n_paths, n_steps, seed, x0, horizon)
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let m = Moments::from_iter(v.iter().copied());
    (m.mean(), m.std_error())
}

#[test]
fn ou_exact_marginal_mean() {
    let m = make_ou_model(OuParams { b_mr: 0.8, mu1: 0.1, mu2: 0.2, sigma: 0.3, gamma: 0.1, rho: 0.2 }).unwrap();
    let oracle = 0.7 * (-0.8_f64 * 1.5).exp();
    assert!((oracle - 0.2108359483).abs() < 1e-10);
    let b = simulate_factor(&m, &cfg(&m, 100_000, 5, 11, 0.7, 1.5)).unwrap();
    let xt: Vec<f64> = b.x.iter().map(|p| *p.last().unwrap()).collect();
    let (mean, se) = mean_se(&xt);
    assert!((mean - oracle).abs() <= 3.0 * se, "{mean} vs {oracle} (se {se})");
}

#[test]
fn cir_full_truncation_mean() {
    let m = make_cir_model(CirParams::reference()).unwrap();
    let oracle = 0.06 + (0.02 - 0.06) * (-0.25_f64).exp();
    assert!((oracle - 0.0288479687).abs() < 1e-10);
    let b = simulate_factor(&m, &cfg(&m, 100_000, 100, 5, 0.02, 1.0)).unwrap();
    let xt: Vec<f64> = b.x.iter().map(|p| *p.last().unwrap()).collect();
    assert!(b.x.iter().flatten().all(|&x| x >= 0.0));
    let (mean, se) = mean_se(&xt);
    assert!((mean - oracle).abs() <= 3.0 * se, "{mean} vs {oracle} (se {se})");
}

#[test]
fn single_step_is_scaled_normal() {
    let m = constant_model(0.1, 1.0, 0.2, 0.0);
    let t = 2.0;
    let b = simulate_factor(&m, &cfg(&m, 50_000, 1, 3, 0.4, t)).unwrap();
    for (x, dw) in b.x.iter().zip(&b.dw) {
        assert!((x[1] - 0.4 - dw[0]).abs() < 1e-15);
    }
    let incs: Vec<f64> = b.x.iter().map(|x| x[1] - 0.4).collect();
    let m2 = Moments::from_iter(incs.iter().copied());
    assert!(m2.mean().abs() < 3.0 * m2.std_error());
    assert!((m2.variance() / t - 1.0).abs() < 0.03);
}

#[test]
fn scheme_mismatch_is_rejected() {
    let m = make_cir_model(CirParams::reference()).unwrap();
    let mut c = cfg(&m, 10, 10, 1, 0.06, 1.0);
    c.scheme = SimScheme::ExactOu;
    assert!(matches!(simulate_factor(&m, &c), Err(Error::SchemeMismatch(_))));
    c.scheme = SimScheme::EulerMaruyama;
    assert!(simulate_factor(&m, &c).is_ok());
    c.x0 = -0.1;
    assert!(simulate_factor(&m, &c).is_err());
}

#[test]
fn constant_intensity_survival() {
    let c = 0.5;
    let oracle = (-c * 1.0_f64).exp();
    assert!((oracle - 0.6065306597).abs() < 1e-10);
    let run = |gamma: f64| {
        let m = constant_model(0.3, 0.4, gamma, 0.1);
        let b = simulate_default(&m, simulate_factor(&m, &cfg(&m, 100_000, 20, 1, 0.0, 1.0)).unwrap());
        assert!(b.exp_draw.iter().all(|e| e.is_finite() && *e > 0.0));
        let alive: Vec<f64> = b.default_time.iter().map(|d| if d.is_none() { 1.0 } else { 0.0 }).collect();
        mean_se(&alive)
    };
    let (s1, se1) = run(c);
    assert!((s1 - oracle).abs() <= 3.0 * se1, "{s1} vs {oracle}");
    let (s2, se2) = run(2.0 * c);
    let ratio_se = ((se2 / s2).powi(2) + 4.0 * (se1 / s1).powi(2)).sqrt();
    assert!((s2.ln() - 2.0 * s1.ln()).abs() <= 3.0 * ratio_se);
}

#[test]
fn default_time_solves_the_intensity_equation() {
    let m = make_cir_model(CirParams::reference()).unwrap();
    let b = simulate_default(&m, simulate_factor(&m, &cfg(&m, 2000, 50, 2, 0.06, 1.0)).unwrap());
    let dt = b.config.dt();
    for i in 0..b.n_paths() {
        if let Some((k, f)) = b.default_step[i] {
            let mut lam = 0.0;
            for j in 0..k {
                lam += 0.5 * (m.gamma(b.x[i][j]) + m.gamma(b.x[i][j + 1])) * dt;
            }
            lam += f * 0.5 * (m.gamma(b.x[i][k]) + m.gamma(b.x[i][k + 1])) * dt;
            assert!((lam - b.exp_draw[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_policy_keeps_zero_wealth() {
    let m = constant_model(0.3, 0.4, 0.5, 0.1);
    let pref = Preferences::new(1.0, 1.0).unwrap();
    let b = simulate_default(&m, simulate_factor(&m, &cfg(&m, 500, 20, 1, 0.0, 1.0)).unwrap());
    let b = replay_policy(&m, PolicyChoice::Constant(0.0), b, &pref).unwrap();
    assert!(b.wealth.iter().flatten().all(|&w| w == 0.0));
}

#[test]
fn wealth_is_drift_only_without_noise_and_freezes_after_default() {
    let (mu, pi) = (0.3, 0.7);
    let m = constant_model(mu, 1e-12, 0.5, 0.0);
    let pref = Preferences::new(1.0, 1.0).unwrap();
    let b = simulate_default(&m, simulate_factor(&m, &cfg(&m, 2000, 50, 4, 0.0, 1.0)).unwrap());
    let b = replay_policy(&m, PolicyChoice::Constant(pi), b, &pref).unwrap();
    for i in 0..b.n_paths() {
        let w = &b.wealth[i];
        match b.default_time[i] {
            None => assert!((w[50] - pi * mu * 1.0).abs() < 1e-9),
            Some(delta) => {
                let (k, _) = b.default_step[i].unwrap();
                assert!((w[k + 1] - (pi * mu * delta - pi)).abs() < 1e-9);
                assert!(w[k + 1..].iter().all(|&v| v == w[k + 1]));
            }
        }
    }
    // protected: no loss at default
    let pol = protected_fixture();
    let rate = ndarray::Array2::from_elem(pol.values.dim(), 0.1);
    let bp = replay_policy(&m, PolicyChoice::Protected { policy: &pol, rate: &rate }, b, &pref).unwrap();
    for i in 0..bp.n_paths() {
        let end = bp.default_time[i].unwrap_or(1.0);
        assert!((bp.wealth[i][50] - pi * (mu - 0.1) * end).abs() < 1e-9);
    }
}

fn protected_fixture() -> credit_hjb::pricing::Policy {
    let grid = credit_hjb::GridSpec::new(-1.0, 1.0, 16, 16, 0.0, 1.0).unwrap();
    credit_hjb::pricing::Policy { grid, values: ndarray::Array2::from_elem((17, 17), 0.7) }
}

#[test]
fn certainty_equivalent_oracles() {
    let c = 0.5;
    let pref = Preferences::new(1.0, 1.0).unwrap();
    let m = constant_model(0.3, 0.4, c, 0.1);
    let b = simulate_default(&m, simulate_factor(&m, &cfg(&m, 100_000, 20, 21, 0.0, 1.0)).unwrap());
    let b = replay_policy(&m, PolicyChoice::Constant(0.0), b, &pref).unwrap();

    let zero = estimate_certainty_equivalent(&b, &ClaimSpec::none(), &pref).unwrap();
    assert_eq!(zero.mean, 0.0);
    assert_eq!(zero.std_error, 0.0);

    let s = (-c * 1.0_f64).exp();
    let oracle = -(s * (-1.0_f64).exp() + 1.0 - s).ln();
    assert!((oracle - 0.4835355737).abs() < 1e-10);
    let est = estimate_certainty_equivalent(&b, &ClaimSpec::bond(1.0).unwrap(), &pref).unwrap();
    assert!(est.within(oracle, 3.0, 0.0), "{} vs {oracle}", est.csv_row());
}

fn reference_setup(nx: usize, nt: usize) -> (ModelSpec, Preferences, credit_hjb::Surface, credit_hjb::pricing::Policy) {
    let m = make_cir_model(CirParams::reference()).unwrap();
    let pref = Preferences::new(3.0, 1.0).unwrap();
    let g = default_grid(&m, &pref, nx, nt).unwrap();
    let s = solve_full(&m, &ClaimSpec::none(), &pref, &g, &SolverOptions::default()).unwrap();
    let p = optimal_policy(&s, &m, &pref).unwrap();
    (m, pref, s, p)
}

#[test]
fn dual_density_starts_at_one_and_has_unit_mass() {
    let (m, pref, s, p) = reference_setup(200, 250);
    let c = cfg(&m, 20_000, 250, 8, 0.06, 1.0);
    let b = simulate_default(&m, simulate_factor(&m, &c).unwrap());
    let b = replay_policy(&m, PolicyChoice::Grid(&p), b, &pref).unwrap();
    let b = simulate_dual_density(&m, &s, &p, b, &pref).unwrap();
    for i in 0..b.n_paths() {
        assert!((b.z[i][0] - 1.0).abs() < 1e-14);
        assert_eq!(b.z_se[i][0], 1.0);
        assert!(b.z[i].iter().all(|&z| z > 0.0));
    }
    let zt: Vec<f64> = b.z.iter().map(|z| *z.last().unwrap()).collect();
    let (mass, se) = mean_se(&zt);
    assert!((mass - 1.0).abs() <= 3.0 * se, "{mass} ({se})");
    let dual = estimate_dual_value(&b, &ClaimSpec::none(), &pref).unwrap();
    assert!(dual.within(s.value_at(0.0, 0.06), 3.0, 0.0), "{}", dual.csv_row());
}

#[test]
fn bundle_and_streaming_agree() {
    let (m, pref, s, p) = reference_setup(200, 250);
    let claim = ClaimSpec::none();
    let c = cfg(&m, 3000, 250, 17, 0.06, 1.0);
    let b = simulate_default(&m, simulate_factor(&m, &c).unwrap());
    let b = replay_policy(&m, PolicyChoice::Grid(&p), b, &pref).unwrap();
    let b = simulate_dual_density(&m, &s, &p, b, &pref).unwrap();
    let inp = VerifyInputs { model: &m, pref: &pref, claim: &claim, surface: &s, policy: &p, x0: 0.06, t0: 0.0 };
    let out = simulate_outcomes(&inp, &VerifyConfig::new(&m, 3000, 250, 17)).unwrap();
    for (i, o) in out.iter().enumerate() {
        assert_eq!(o.survived, b.default_time[i].is_none());
        assert!((o.wealth - b.wealth[i][250]).abs() < 1e-12);
        assert!((o.z_closed / b.z[i][250] - 1.0).abs() < 1e-10);
        assert!((o.z_se / b.z_se[i][250] - 1.0).abs() < 1e-10);
        assert!((o.int_gamma - b.int_gamma[i]).abs() < 1e-14);
    }
}

#[test]
fn density_forms_converge_at_first_order() {
    let (m, pref, s, p) = reference_setup(200, 400);
    let claim = ClaimSpec::none();
    let inp = VerifyInputs { model: &m, pref: &pref, claim: &claim, surface: &s, policy: &p, x0: 0.06, t0: 0.0 };
    let gap = |steps: usize, sub: usize| {
        let mut c = VerifyConfig::new(&m, 10_000, steps, 4);
        c.substeps = sub;
        let out = simulate_outcomes(&inp, &c).unwrap();
        VerificationSummary::from_outcomes(&out, pref.alpha, 4).density_gap().mean
    };
    let ratio = gap(400, 1) / gap(200, 2);
    assert!(ratio > 0.35 && ratio < 0.65, "gap ratio {ratio}");
}

#[test]
fn neutral_market_dual_value_is_zero() {
    // mu = gamma makes G = 0 and the optimal policy vanish, so Z = 1
    let m = constant_model(0.4, 0.5, 0.4, 0.3);
    let pref = Preferences::new(2.0, 1.0).unwrap();
    let g = credit_hjb::GridSpec::new(-1.0, 1.0, 40, 40, 0.0, 1.0).unwrap();
    let s = solve_full(&m, &ClaimSpec::none(), &pref, &g, &SolverOptions::default()).unwrap();
    assert!(s.values.iter().all(|v| v.abs() < 1e-12));
    let p = optimal_policy(&s, &m, &pref).unwrap();
    let b = simulate_default(&m, simulate_factor(&m, &cfg(&m, 2000, 40, 1, 0.0, 1.0)).unwrap());
    let b = replay_policy(&m, PolicyChoice::Grid(&p), b, &pref).unwrap();
    let b = simulate_dual_density(&m, &s, &p, b, &pref).unwrap();
    let d = estimate_dual_value(&b, &ClaimSpec::none(), &pref).unwrap();
    assert!(d.mean.abs() < 1e-10 && d.std_error < 1e-10);
}

#[test]
fn physical_density_upper_bounds_the_value() {
    // with mu = gamma the physical measure is a martingale measure, so Z = 1
    // gives E[1{no default} q phi] and the infimum G can only be lower
    let c = 0.5;
    let m = constant_model(c, 0.4, c, 0.1);
    let pref = Preferences::new(1.0, 1.0).unwrap();
    let claim = ClaimSpec::bond(1.0).unwrap();
    let g = credit_hjb::GridSpec::new(-1.0, 1.0, 40, 200, 0.0, 1.0).unwrap();
    let s = solve_full(&m, &claim, &pref, &g, &SolverOptions::default()).unwrap();
    let mut b = simulate_default(&m, simulate_factor(&m, &cfg(&m, 50_000, 20, 6, 0.0, 1.0)).unwrap());
    b.wealth = vec![vec![0.0; 21]; b.n_paths()];
    b.z = vec![vec![1.0; 21]; b.n_paths()];
    let d = estimate_dual_value(&b, &claim, &pref).unwrap();
    assert!(d.mean >= s.value_at(0.0, 0.0) - 3.0 * d.std_error);
}

#[test]
fn fixed_seed_is_bit_identical() {
    let (m, pref, s, p) = reference_setup(100, 100);
    let claim = ClaimSpec::none();
    let inp = VerifyInputs { model: &m, pref: &pref, claim: &claim, surface: &s, policy: &p, x0: 0.06, t0: 0.0 };
    let c = VerifyConfig::new(&m, 2000, 100, 99);
    let a = simulate_outcomes(&inp, &c).unwrap();
    let b = simulate_outcomes(&inp, &c).unwrap();
    assert_eq!(a, b);
    let sa = VerificationSummary::from_outcomes(&a, 3.0, 99);
    assert_eq!(sa.estimates().unwrap(), VerificationSummary::from_outcomes(&b, 3.0, 99).estimates().unwrap());
}
