use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_credit-hjb");

fn reference() -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/reference.toml");
    fs::read_to_string(p).unwrap()
}

/// Reference config shrunk to test size.
fn small() -> String {
    reference()
        .replace("n_space = 400", "n_space = 80")
        .replace("n_time = 400", "n_time = 80")
        .replace("paths = 100000", "paths = 4000")
        .replace("steps = 1000", "steps = 100")
        .replace("q = [1.0, 3.0, 5.0, 10.0]", "q = [1.0, 3.0]")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).map(String::from).collect()
}

#[test]
fn solve_writes_surface_layout_and_echo() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let out = tmp.path().join("out");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let text = fs::read_to_string(out.join("surface_full_q1.csv")).unwrap();
    assert!(text.starts_with("# credit-hjb solve\n"));
    assert!(text.contains("# kappa = 0.25"));
    assert!(text.contains("# n_space = 80"));

    let rows = data_lines(&out.join("surface_full_q1.csv"));
    assert_eq!(rows.len(), 1 + 81);
    let xs: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(xs.len(), 1 + 81);
    for r in &rows[1..] {
        let cells: Vec<&str> = r.split(',').collect();
        assert_eq!(cells.len(), 82);
        for c in &cells {
            let v: f64 = c.parse().unwrap();
            assert!(v.is_finite());
        }
        // 17 significant digits in scientific form.
        let mantissa = cells[1].trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.replace('.', "").len(), 17, "{}", cells[1]);
    }
    assert!(out.join("residual.csv").exists());
    assert_eq!(data_lines(&out.join("convergence_q3.csv")).len(), 1 + 3);
}

#[test]
fn zero_claim_solve_stays_above_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small().replace("phi = \"one\"", "phi = \"zero\""));
    let out = tmp.path().join("out");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let rows = data_lines(&out.join("surface_full.csv"));
    let min = rows[1..]
        .iter()
        .flat_map(|r| r.split(',').skip(1).map(|c| c.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .fold(f64::INFINITY, f64::min);
    assert!(min >= -1e-8, "{min}");
}

#[test]
fn local_mode_gaps_decrease() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small().replace("q = [1.0, 3.0]", "q = [1.0]"));
    let out = tmp.path().join("out");
    let o = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--mode",
        "local:4,8,16",
        "--grid",
        "200,100",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    for n in [4, 8, 16] {
        assert!(out.join(format!("surface_local_n{n}_q1.csv")).exists());
    }
    let gaps: Vec<f64> = data_lines(&out.join("local_gaps_q1.csv"))[1..]
        .iter()
        .map(|r| r.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(gaps.len(), 2);
    assert!(gaps[1] < gaps[0], "{gaps:?}");
}

#[test]
fn missing_model_section_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "[preferences]\nalpha = 3.0\nhorizon = 1.0\n";
    let cfg = write_config(tmp.path(), body);
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("model"));
}

#[test]
fn unknown_key_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small().replace("seeds = 1", "seeds = 1\nsead = 4"));
    let o = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sead"));
}

#[test]
fn bad_flags_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&run(&["solve", "--config", c, "--mode", "sideways"])), 2);
    assert_eq!(code(&run(&["solve", "--config", c, "--grid", "80"])), 2);
    assert_eq!(code(&run(&["solve"])), 2);
    assert_eq!(code(&run(&["solve", "--config", tmp.path().join("absent.toml").to_str().unwrap()])), 2);
}

#[test]
fn price_bond_needs_a_claim() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small().replace("phi = \"one\"", "phi = \"zero\""));
    assert_eq!(code(&run(&["price-bond", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn price_bond_band_is_ordered_in_q() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let out = tmp.path().join("out");
    let o = run(&["price-bond", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rows = data_lines(&out.join("price_band.csv"));
    assert_eq!(rows[0], "x,p_q1,p_q3");
    for r in &rows[1..] {
        let v: Vec<f64> = r.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((0.012..=0.145).contains(&v[0]));
        assert!(v[2] <= v[1] && v[1] <= 1.0);
    }
}

#[test]
fn price_insurance_writes_band_and_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let out = tmp.path().join("out");
    let o = run(&["price-insurance", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(data_lines(&out.join("insurance_band.csv"))[0], "x,f,upper_bound,gamma");
    assert_eq!(data_lines(&out.join("short_horizon.csv"))[0], "alpha_pi,rate,upper_bound");
}

#[test]
fn feller_violation_fails_assumption_check() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small().replace("xi = 0.1", "xi = 0.2"));
    let out = tmp.path().join("out");
    let o = run(&["check-assumptions", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let rows = data_lines(&out.join("assumptions.csv"));
    assert_eq!(rows[0], "id,status,witness");
    let factor = rows.iter().find(|r| r.starts_with("factor,")).unwrap();
    assert!(factor.contains("Fails") && factor.contains("kappa*theta - xi^2/2"));
    assert!(fs::read_to_string(out.join("assumptions.txt")).unwrap().contains("factor"));
}

#[test]
fn reference_assumptions_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let o = run(&["check-assumptions", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn verify_is_deterministic_and_detects_perturbation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let c = cfg.to_str().unwrap();
    let (a, b, p) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("p"));
    let args = |dir: &Path| vec!["verify", "--config", c, "--seed", "7", "--out", dir.to_str().unwrap()].into_iter().map(String::from).collect::<Vec<_>>();

    let oa = Command::new(BIN).args(args(&a)).output().unwrap();
    assert_eq!(code(&oa), 0, "{}", String::from_utf8_lossy(&oa.stdout));
    Command::new(BIN).args(args(&b)).output().unwrap();
    assert_eq!(data_lines(&a.join("verify.csv")), data_lines(&b.join("verify.csv")));

    let rows = data_lines(&a.join("verify.csv"));
    assert_eq!(rows[0], "label,mean,std_error,n_paths,seed");
    assert!(rows[1..].iter().all(|r| r.ends_with(",4000,7")));

    let mut pa = args(&p);
    pa.extend(["--perturb-value".into(), "0.2".into()]);
    let op = Command::new(BIN).args(pa).output().unwrap();
    assert_eq!(code(&op), 1);
    assert!(String::from_utf8_lossy(&op.stdout).contains("FAIL martingale-mass"));
}

#[test]
fn seed_flag_changes_estimates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let c = cfg.to_str().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&["verify", "--config", c, "--seed", "1", "--paths", "2000", "--out", a.to_str().unwrap()]);
    run(&["verify", "--config", c, "--seed", "2", "--paths", "2000", "--out", b.to_str().unwrap()]);
    let (ra, rb) = (data_lines(&a.join("verify.csv")), data_lines(&b.join("verify.csv")));
    assert!(ra[1].ends_with(",2000,1") && rb[1].ends_with(",2000,2"));
    assert_ne!(ra[1].split(',').nth(1), rb[1].split(',').nth(1));
}
