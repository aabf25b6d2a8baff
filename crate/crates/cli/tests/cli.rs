use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn glscv(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glscv"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn panel_args<'a>(cmd: &'a str, input: &'a str) -> Vec<&'a str> {
    vec![
        cmd,
        "--input",
        input,
        "--numeric",
        "dose",
        "--categorical",
        "arm:placebo",
        "--estimate-rho",
    ]
}

#[test]
fn fit_mean_model() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("mean_model.csv");
    let o = glscv(
        &[
            "fit",
            "--input",
            input.to_str().unwrap(),
            "--family",
            "identity",
        ],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(stdout(&o).lines().count(), 1);
    let j = read_json(dir.path().join("fit.json"));
    assert_eq!(j["beta"][0]["name"], "(Intercept)");
    assert_eq!(j["beta"][0]["value"], 1.0);
    assert_eq!(j["sigma2"], 3.0);
    assert_eq!(j["n"], 3);
    assert_eq!(j["p"], 1);
}

#[test]
fn check_passes_on_bundled_data() {
    let dir = tempfile::tempdir().unwrap();
    let panel = data("panel.csv");
    let panel = panel.to_str().unwrap();
    for family in ["identity", "ar1", "car1"] {
        let mut args = vec![
            "check",
            "--input",
            panel,
            "--numeric",
            "dose",
            "--categorical",
            "arm:placebo",
        ];
        args.extend(["--family", family]);
        if family != "identity" {
            args.push("--estimate-rho");
        }
        let o = glscv(&args, dir.path());
        assert_eq!(
            o.status.code(),
            Some(0),
            "{family}: {}{}",
            stdout(&o),
            String::from_utf8_lossy(&o.stderr)
        );
        assert_eq!(read_json(dir.path().join("check.json"))["pass"], true);
    }
    let (x, y, g) = (
        data("design/x.csv"),
        data("design/y.csv"),
        data("design/groups.csv"),
    );
    let o = glscv(
        &[
            "check",
            "--mode",
            "design",
            "--x",
            x.to_str().unwrap(),
            "--y",
            y.to_str().unwrap(),
            "--groups",
            g.to_str().unwrap(),
            "--rho",
            "0.6",
        ],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn long_and_design_inputs_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let panel = data("panel.csv");
    let o = glscv(&panel_args("fit", panel.to_str().unwrap()), a.path());
    assert_eq!(o.status.code(), Some(0));
    let (x, y, g) = (
        data("design/x.csv"),
        data("design/y.csv"),
        data("design/groups.csv"),
    );
    let o = glscv(
        &[
            "fit",
            "--mode",
            "design",
            "--x",
            x.to_str().unwrap(),
            "--y",
            y.to_str().unwrap(),
            "--groups",
            g.to_str().unwrap(),
            "--estimate-rho",
        ],
        b.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let (ja, jb) = (
        read_json(a.path().join("fit.json")),
        read_json(b.path().join("fit.json")),
    );
    for key in ["sigma2", "rho", "reml"] {
        let (va, vb) = (ja[key].as_f64().unwrap(), jb[key].as_f64().unwrap());
        assert!(
            (va - vb).abs() <= 1e-9 * va.abs().max(1.0),
            "{key}: {va} vs {vb}"
        );
    }
}

#[test]
fn cv_writes_folds_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let panel = data("panel.csv");
    let mut args = panel_args("cv", panel.to_str().unwrap());
    args.extend(["--scheme", "subject", "--rho-policy", "fixed"]);
    let o = glscv(&args, dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("cv_folds.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "fold_id,m,srd_est,srd_actual,lmocv_sq,cook_multiple,rho_full,rho_deleted,error"
    );
    assert_eq!(lines.count(), 36);
    let j = read_json(dir.path().join("cv_summary.json"));
    assert_eq!(j["scheme"], "leave_subject");
    assert_eq!(j["rho_policy"], "hold_fixed");
    let (est, act) = (
        j["mean_srd_est"].as_f64().unwrap(),
        j["mean_srd_actual"].as_f64().unwrap(),
    );
    assert!((est - act).abs() <= 1e-8 * act.abs());
}

#[test]
fn simulate_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let panel = data("panel.csv");
    let mut args = panel_args("simulate", panel.to_str().unwrap());
    args.extend(["--k", "10", "--n-sims", "25", "--seed", "3", "--watch", "7"]);
    for dir in [&a, &b] {
        let o = glscv(&args, dir.path());
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for f in ["simulation.csv", "simulation.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
    let csv = std::fs::read_to_string(a.path().join("simulation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 25 * 10);
    let watched = csv.lines().skip(1).filter(|l| l.ends_with(",true")).count();
    assert_eq!(watched, 25);
    let j = read_json(a.path().join("simulation.json"));
    assert_eq!(j["sim_means"].as_array().unwrap().len(), 25);
    assert_eq!(j["watch"], 7);
}

#[test]
fn diagnose_per_subject() {
    let dir = tempfile::tempdir().unwrap();
    let panel = data("panel.csv");
    let mut args = panel_args("diagnose", panel.to_str().unwrap());
    args.extend(["--scheme", "subject"]);
    let o = glscv(&args, dir.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let first = csv.lines().nth(1).unwrap();
    assert!(first.starts_with("p00,1;2;"), "{first}");
    assert_eq!(csv.lines().count(), 37);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let panel = data("panel.csv");
    let panel = panel.to_str().unwrap();
    let code = |args: &[&str]| glscv(args, dir.path()).status.code();
    // Usage: missing ρ, bad flag, ρ outside its domain, missing input.
    assert_eq!(
        code(&["fit", "--input", panel, "--family", "car1"]),
        Some(1)
    );
    assert_eq!(code(&["fit", "--input", panel, "--bogus"]), Some(1));
    assert_eq!(
        code(&["fit", "--input", panel, "--family", "ar1", "--rho", "-1.2"]),
        Some(1)
    );
    assert_eq!(code(&["fit", "--family", "identity"]), Some(1));
    assert_eq!(
        code(&["simulate", "--input", panel, "--family", "identity", "--watch", "1000"]),
        Some(1)
    );
    // Data: unreadable file, unknown column.
    assert_eq!(
        code(&["fit", "--input", "/nonexistent.csv", "--family", "identity"]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "fit",
            "--input",
            panel,
            "--family",
            "identity",
            "--numeric",
            "weight"
        ]),
        Some(2)
    );
    // Numerical: a duplicated column makes X rank deficient.
    assert_eq!(
        code(&[
            "fit",
            "--input",
            panel,
            "--family",
            "identity",
            "--numeric",
            "dose,dose"
        ]),
        Some(3)
    );
}

#[test]
fn data_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "subject,time,response\na,0,1\na,1,NA\nb,0,2\n").unwrap();
    let o = glscv(
        &[
            "fit",
            "--input",
            bad.to_str().unwrap(),
            "--family",
            "identity",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.contains("line 3"), "{err}");
}
