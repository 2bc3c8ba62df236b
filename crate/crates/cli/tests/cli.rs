use std::path::Path;
use std::process::{Command, Output};

use pucci_core::{Domain, Field, Grid};
use serde_json::Value;

fn pucci(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pucci"))
        .args(args)
        .env("PUCCI_OUT", root)
        .current_dir(root)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    std::fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const LINEAR_1D: &str =
    "domain.shape = interval\ndomain.length = pi\noperator.kind = laplacian\ngrid.h = pi/128\n";

#[test]
fn unknown_experiment_is_a_usage_error_listing_the_registry() {
    let root = tempfile::tempdir().unwrap();
    let o = pucci(&["experiment", "no-such-thing"], root.path());
    assert_eq!(code(&o), 2);
    let err = text(&o.stderr);
    assert!(err.contains("no-such-thing"), "{err}");
    for name in pucci_core::verify::names() {
        assert!(err.contains(name), "{name} missing from {err}");
    }
}

#[test]
fn experiment_list_prints_every_name() {
    let root = tempfile::tempdir().unwrap();
    let o = pucci(&["experiment", "--list"], root.path());
    assert_eq!(code(&o), 0);
    assert_eq!(
        text(&o.stdout).lines().count(),
        pucci_core::verify::names().len()
    );
}

#[test]
fn concavity_check_fails_on_a_log_convex_field() {
    let root = tempfile::tempdir().unwrap();
    let grid = Grid::build(
        Domain::<f64>::interval(std::f64::consts::PI).unwrap(),
        std::f64::consts::PI / 32.0,
    )
    .unwrap();
    let f = Field::from_fn(grid, |p| ((p[0] - 1.0).powi(2)).exp());
    write(root.path(), "convex.csv", &f.to_csv());
    let cfg = write(
        root.path(),
        "convex.cfg",
        "domain.shape = interval\ndomain.length = pi\noperator.kind = laplacian\ngrid.h = pi/32\n\
         check.source = file\ncheck.field = convex.csv\n",
    );
    let o = pucci(&["check", "concavity", &cfg], root.path());
    assert_eq!(code(&o), 1, "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert!(
        out.contains("FAIL") && out.contains("worst triple"),
        "{out}"
    );
    let run = root.path().join("check-concavity-convex");
    assert!(run.join("worst_triples.csv").exists());
    assert_eq!(json(&run.join("manifest.json"))["status"], "fail");
}

#[test]
fn eigen_run_writes_mu_and_a_reproducible_manifest() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write(root.path(), "linear-1d.cfg", LINEAR_1D);
    let o = pucci(&["eigen", &cfg], root.path());
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let run = root.path().join("eigen-linear-1d");
    let mu = json(&run.join("eigen.json"))["mu"].as_f64().unwrap();
    assert!((mu - 1.0).abs() < 1e-2, "{mu}");

    let manifest = json(&run.join("manifest.json"));
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["config"]["tol.mu"], "1e-5");
    assert_eq!(manifest["config"]["grid.h"], "pi/128");

    let again = pucci(
        &[
            "eigen",
            "--out",
            "again",
            run.join("config.resolved").to_str().unwrap(),
        ],
        root.path(),
    );
    assert_eq!(code(&again), 0, "{}", text(&again.stderr));
    let mu2 = json(&root.path().join("again/eigen.json"))["mu"]
        .as_f64()
        .unwrap();
    assert_eq!(mu.to_bits(), mu2.to_bits());
    assert_eq!(
        std::fs::read_to_string(run.join("profile.csv")).unwrap(),
        std::fs::read_to_string(root.path().join("again/profile.csv")).unwrap()
    );
}

#[test]
fn existing_output_needs_force() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write(root.path(), "b.cfg", "domain.shape = rectangle\ndomain.lx = 4\ndomain.ly = 4\noperator.kind = laplacian\ngrid.h = 1/8\n");
    assert_eq!(
        code(&pucci(
            &["check", "barriers", &cfg, "--out", "run"],
            root.path()
        )),
        0
    );
    let o = pucci(&["check", "barriers", &cfg, "--out", "run"], root.path());
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("--force"));
    assert_eq!(
        code(&pucci(
            &["--force", "check", "barriers", &cfg, "--out", "run"],
            root.path()
        )),
        0
    );
}

#[test]
fn config_errors_exit_two_with_details() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write(
        root.path(),
        "bad.cfg",
        "domain.shape = disk\noperator.kind = pucci_minus\noperator.lambda_low = 2\noperator.lambda_high = 0.5\n",
    );
    let o = pucci(&["eigen", &cfg], root.path());
    assert_eq!(code(&o), 2);
    let err = text(&o.stderr);
    assert!(
        err.contains("line 4") && err.contains("0.5") && err.contains('2'),
        "{err}"
    );

    let cfg = write(
        root.path(),
        "dup.cfg",
        "domain.shape = disk\ndomain.shape = disk\n",
    );
    let o = pucci(&["evolve", &cfg], root.path());
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("line 2"));
    assert!(!root.path().join("evolve-dup").exists());
}

#[test]
fn help_is_available_at_every_level() {
    let root = tempfile::tempdir().unwrap();
    for args in [
        vec!["--help"],
        vec!["check", "--help"],
        vec!["check", "ab", "--help"],
        vec!["experiment", "--help"],
        vec!["report", "--help"],
    ] {
        let o = pucci(&args, root.path());
        assert_eq!(code(&o), 0, "{args:?}");
        assert!(text(&o.stdout).contains("Usage"), "{args:?}");
    }
    let o = pucci(&["--help", "defaults"], root.path());
    assert_eq!(code(&o), 0);
    let out = text(&o.stdout);
    for key in [
        "grid.h",
        "operator.lambda_high",
        "tol.concavity",
        "barrier.kind",
    ] {
        assert!(out.contains(key), "{key}");
    }
    assert_eq!(code(&pucci(&["check", "sideways"], root.path())), 2);
}

#[test]
fn ab_check_rejects_linear_flows() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write(root.path(), "lin.cfg", LINEAR_1D);
    let o = pucci(&["check", "ab", &cfg], root.path());
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("m > 1"));
}

#[test]
fn report_aggregates_runs_and_flags_failures() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write(
        root.path(),
        "cmp.cfg",
        "domain.shape = interval\noperator.kind = pucci_minus\noperator.lambda_high = 2\nm = 2\n\
         initial.kind = distance_power\ngrid.h = 1/32\nflow.t_end = 0.05\ncomparison.pairs = 3\n",
    );
    assert_eq!(
        code(&pucci(
            &["check", "comparison", &cfg, "--out", "runs/a"],
            root.path()
        )),
        0
    );
    let convex = "domain.shape = interval\noperator.kind = laplacian\ngrid.h = 1/16\ncheck.source = initial\ncheck.transform = identity\n";
    let convex = write(root.path(), "dist.cfg", convex);
    // the distance tent is concave, so this passes too
    assert_eq!(
        code(&pucci(
            &["check", "concavity", &convex, "--out", "runs/b"],
            root.path()
        )),
        0
    );

    let o = pucci(&["report", "runs"], root.path());
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let summary = json(&root.path().join("runs/summary.json"));
    assert_eq!(summary["total"], 2);
    let csv = std::fs::read_to_string(root.path().join("runs/summary.csv")).unwrap();
    assert!(csv.starts_with("run,command,status,wall_time_s,metric,value"));
    assert!(csv.contains("check-comparison,pass") && csv.contains("max_violation"));

    // a failing run turns the report into a failure, and rewriting needs --force
    let bad = write(
        root.path(),
        "tight.cfg",
        "domain.shape = interval\noperator.kind = laplacian\nm = 2\ninitial.kind = distance_power\n\
         grid.h = 1/64\nflow.t_end = 1\nsnapshots.dt = 1/32\nab.window = 0.25, 1\ntol.ab = 0.01\n",
    );
    assert_eq!(
        code(&pucci(
            &["check", "ab", &bad, "--out", "runs/c"],
            root.path()
        )),
        1
    );
    assert_eq!(code(&pucci(&["report", "runs"], root.path())), 2);
    assert_eq!(code(&pucci(&["report", "runs", "--force"], root.path())), 1);
}
