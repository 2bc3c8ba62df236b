//! Acceptance suite: one line per criterion, `PASS` or `FAIL`, with every measured value
//! printed beside its threshold.

use pucci_core::verify::{run_experiment, Outcome, Relation};

fn report(index: usize, title: &str, outcome: &Outcome) {
    let status = if outcome.passed { "PASS" } else { "FAIL" };
    println!(
        "criterion {index:>2} [{}] {status}: {title} ({:.1} s)",
        outcome.name, outcome.wall_time_s
    );
    for c in &outcome.checks {
        let rel = match c.relation {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
        };
        println!(
            "    {} {}: {:.6e} {rel} {:.6e}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.measured,
            c.threshold
        );
    }
}

fn criterion(index: usize, name: &str, title: &str) {
    match run_experiment(name) {
        Ok(outcome) => {
            report(index, title, &outcome);
            let failed: Vec<_> = outcome.failures().map(|c| c.name.clone()).collect();
            assert!(
                failed.is_empty(),
                "criterion {index} failed checks: {failed:?}"
            );
        }
        Err(e) => {
            println!("criterion {index:>2} [{name}] FAIL: {title} (error: {e})");
            panic!("criterion {index} errored: {e}");
        }
    }
}

#[test]
fn criterion_01_linear_1d_laplacian() {
    criterion(
        1,
        "linear-1d-laplacian",
        "1D Laplacian eigenpair on (0, pi), h = pi/256",
    );
}

#[test]
fn criterion_02_linear_1d_pucci() {
    criterion(
        2,
        "linear-1d-pucci",
        "1D M-/M+ eigenpairs with lambda = 1, Lambda = 2 against shooting",
    );
}

#[test]
fn criterion_03_domain_scaling() {
    criterion(
        3,
        "domain-scaling",
        "halving L multiplies mu by 4 within 2%",
    );
}

#[test]
fn criterion_04_logconc_2d_pucci() {
    criterion(
        4,
        "logconc-2d-pucci",
        "log-concavity of the M- eigenfield, unit square, h = 1/96",
    );
}

#[test]
fn criterion_05_sublinear_1d_m2() {
    criterion(
        5,
        "sublinear-1d-m2",
        "m = 2 limit profile on (0, 1), h = 1/256",
    );
}

#[test]
fn criterion_06_sqrtconc_pressure() {
    criterion(
        6,
        "sqrtconc-pressure",
        "square-root pressure concavity of the m = 2 limits",
    );
}

#[test]
fn criterion_07_ab_inequality_m2() {
    criterion(
        7,
        "ab-inequality-m2",
        "Aronson-Benilan constant, m = 2, t in [0.5, 4]",
    );
}

#[test]
fn criterion_08_comparison_random() {
    criterion(
        8,
        "comparison-random",
        "100 random ordered pairs stay ordered",
    );
}

#[test]
fn criterion_09_barrier_residuals() {
    criterion(
        9,
        "barrier-residuals",
        "barrier residuals and Barenblatt exponent identities",
    );
}

#[test]
fn criterion_10_limit_uniqueness() {
    criterion(
        10,
        "limit-uniqueness",
        "normalized limits agree for unrelated data",
    );
}

#[test]
fn criterion_11_eventual_logconc() {
    criterion(
        11,
        "eventual-logconc",
        "eventual strict log-concavity from a two-humped start",
    );
}
