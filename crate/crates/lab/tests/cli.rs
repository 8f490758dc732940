use std::path::Path;
use std::process::{Command, Output};

use smlab::fields;
use smlab::report::{ExponentReport, SolveReport, StudyReport, TABLE_COLUMNS};

/// Single interior node at the centre of `[0, 4]^3`: stencil diagonal
/// `6/h² = 1.5`, and with `M = I` the potential is `ψ = u²/1.5`. Starting
/// the ladder at `n = 4` keeps `1/n` below `u`, so the tracked ratios settle.
const SINGLE_NODE: &str = "\
problem.cells = 2
problem.side = 4.0
problem.theta = 0.5
problem.r = 2.0
problem.m = 2.0
solver.relaxation = 0.5
solver.n_schedule = [4, 8, 16]
outputs.dump_fields = true
";

fn smlab(mode: &str, config: &str, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_smlab"))
        .arg(mode)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn read(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(file)).unwrap()
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn verify_on_single_node_passes_every_audit() {
    let dir = tempfile::tempdir().unwrap();
    let out = smlab("verify", SINGLE_NODE, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = SolveReport::from_toml(&read(dir.path(), "report.toml")).unwrap();
    assert!(report.violations.is_empty());
    assert!(report.ladder.as_ref().unwrap().equiintegrability.degenerate);
    for rung in &report.rungs {
        assert_eq!(rung.audits.len(), 10);
        assert!(rung.audits.iter().all(|a| a.passed), "n={}: {:?}", rung.n, rung.audits);
        let u = fields::read(&dir.path().join("out").join(rung.u_field.as_ref().unwrap())).unwrap();
        let c = 1.0 / rung.n as f64;
        let root = bisect(|v| 1.5 * v + v * v * v / 1.5 - (v + c).powf(-0.5), 0.0, 2.0);
        assert!((u.values()[0] - root).abs() < 1e-10, "n={}: {} vs {root}", rung.n, u.values()[0]);
    }
}

#[test]
fn zero_datum_gives_zero_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = smlab("solve", "problem.cells = 4\nproblem.f.preset = \"zero\"\noutputs.dump_fields = true\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = SolveReport::from_toml(&read(dir.path(), "report.toml")).unwrap();
    for rung in &report.rungs {
        for file in [&rung.u_field, &rung.psi_field] {
            let field = fields::read(&dir.path().join("out").join(file.as_ref().unwrap())).unwrap();
            assert!(field.is_identically_zero());
        }
    }
}

#[test]
fn invalid_config_exits_3_naming_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = smlab("solve", "problem.theta = 1.5\nsolver.relaxation = 0.0\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("problem.theta") && err.contains("(0, 1)"), "{err}");
    assert!(err.contains("solver.relaxation"), "{err}");
    assert!(!dir.path().join("out").exists());

    let out = smlab("solve", "problem.tehta = 0.5\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tehta"));
}

#[test]
fn half_dimension_warns_but_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = smlab("solve", "problem.cells = 3\nproblem.m = 1.5\nsolver.n_schedule = [1]\n", dir.path(), &["--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: problem.m"));
    assert!(out.stdout.is_empty());
}

#[test]
fn non_convergence_exits_2_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = smlab("solve", "problem.r = 3.0\nsolver.max_fp_iters = 1\n", dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let report = SolveReport::from_toml(&read(dir.path(), "report.toml")).unwrap();
    assert!(report.failure.unwrap().contains("max_fp_iters"));
    assert!(report.rungs.is_empty());
}

#[test]
fn exponents_row_for_four_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let config = "exponents.dim = [4]\nexponents.m = [1.5]\nexponents.r = [3.0]\nexponents.theta = [0.5]\n";
    let out = smlab("exponents", config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = ExponentReport::from_toml(&read(dir.path(), "report.toml")).unwrap();
    let v = report.rows[0].verdict.as_ref().unwrap();
    assert_eq!(v.sigma, Some(9.0));
    assert_eq!(v.m_double_star, 6.0);
    let table = read(dir.path(), "table.csv");
    let row: Vec<&str> = table.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..5], ["4", "1.5", "3", "0.5", "CaseI"]);
    assert_eq!(row[8], "9");
}

#[test]
fn convergence_study_reports_second_order() {
    let dir = tempfile::tempdir().unwrap();
    let config = "problem.dim = 2\nproblem.a.value = 2.0\nproblem.M.preset = \"diagonal\"\nproblem.M.diagonal = [1.0, 3.0]\nstudy.cells = [16, 32]\n";
    let out = smlab("convergence-study", config, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = StudyReport::from_toml(&read(dir.path(), "report.toml")).unwrap();
    let orders: Vec<f64> = report.rows.iter().filter_map(|r| r.order).collect();
    assert_eq!(orders.len(), 2);
    assert!(orders.iter().all(|o| (o - 2.0).abs() < 0.1), "{orders:?}");
}

#[test]
fn saddle_mode_checks_the_last_rung() {
    let dir = tempfile::tempdir().unwrap();
    let config = "problem.cells = 4\nproblem.r = 1.05\nsolver.n_schedule = [1, 2]\nsaddle.num_perturbations = 50\n";
    let out = smlab("saddle", config, dir.path(), &["--seed", "42"]);
    assert_eq!(out.status.code(), Some(0));
    let report = SolveReport::from_toml(&read(dir.path(), "report.toml")).unwrap();
    assert_eq!(report.config.solver.seed, 42);
    assert!(report.rungs[0].saddle.is_none());
    let s = report.rungs[1].saddle.as_ref().unwrap();
    assert!(s.applicable && s.seed == 42 && s.num_perturbations == 50);
    let table = read(dir.path(), "table.csv");
    assert_eq!(table.lines().next().unwrap(), TABLE_COLUMNS.join(","));
    assert!(!table.lines().nth(2).unwrap().split(',').nth(15).unwrap().is_empty());
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_smlab")).arg("solve").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}
