use std::f64::consts::PI;

use pucci_core::eigen::{solve_linear, solve_sublinear, EigenOptions};
use pucci_core::flow::{Flow, FlowConfig, SnapshotSchedule};
use pucci_core::geometry::{preservation_audit, Transform};
use pucci_core::grid::band_nodes;
use pucci_core::stencil::DiscreteOperator;
use pucci_core::{
    canonical_initial_data, Domain, EllipticitySpec, Field, Grid, InitialKind, OperatorKind,
};

fn pucci_minus(hi: f64) -> OperatorKind<f64> {
    OperatorKind::pucci_minus(EllipticitySpec::new(1.0, hi).unwrap())
}

#[test]
fn linear_solve_is_scale_equivariant() {
    let grid = Grid::build(Domain::<f64>::rectangle(1.0, 1.0).unwrap(), 1.0 / 16.0).unwrap();
    let u0 = canonical_initial_data(&grid, &InitialKind::Distance, 1.0)
        .unwrap()
        .field;
    let opts = EigenOptions::default();
    let a = solve_linear(&pucci_minus(2.0), &grid, &u0, &opts).unwrap();
    let b = solve_linear(&pucci_minus(2.0), &grid, &u0.scale(3.0), &opts).unwrap();
    assert!(a.profile.sup_distance(&b.profile) < 1e-10);
    assert!((a.mu() - b.mu()).abs() < 1e-10 * a.mu());
    let ratio = b.gamma_star.unwrap() / a.gamma_star.unwrap();
    assert!((ratio - 3.0).abs() < 1e-10 * 3.0, "{ratio}");
}

#[test]
fn mu_nondecreasing_in_lambda_high() {
    let grid = Grid::build(Domain::<f64>::interval(PI).unwrap(), PI / 64.0).unwrap();
    let u0 = canonical_initial_data(&grid, &InitialKind::Distance, 1.0)
        .unwrap()
        .field;
    let mus: Vec<f64> = [1.0, 1.5, 2.0]
        .iter()
        .map(|&hi| {
            solve_linear(&pucci_minus(hi), &grid, &u0, &EigenOptions::default())
                .unwrap()
                .mu()
        })
        .collect();
    assert!(mus.windows(2).all(|w| w[0] <= w[1]), "{mus:?}");
}

#[test]
fn halving_the_interval_quadruples_mu() {
    let mu = |l: f64| {
        let grid = Grid::build(Domain::<f64>::interval(l).unwrap(), PI / 128.0).unwrap();
        let u0 = canonical_initial_data(&grid, &InitialKind::Distance, 1.0)
            .unwrap()
            .field;
        solve_linear(&pucci_minus(2.0), &grid, &u0, &EigenOptions::default())
            .unwrap()
            .mu()
    };
    let r = mu(PI / 2.0) / mu(PI);
    assert!((r / 4.0 - 1.0).abs() < 0.02, "{r}");
}

#[test]
fn rayleigh_residual_of_exact_pair_is_second_order() {
    // |F_h(J₀) + μ_h J₀| on the band of the unit disk, μ_h the computed eigenvalue
    let residual = |h: f64| {
        let grid = Grid::build(Domain::<f64>::disk(1.0).unwrap(), h).unwrap();
        let kind = OperatorKind::laplacian(EllipticitySpec::unit());
        let exact = canonical_initial_data(&grid, &InitialKind::EigenOfLaplacian, 1.0)
            .unwrap()
            .field;
        let u0 = canonical_initial_data(&grid, &InitialKind::Distance, 1.0)
            .unwrap()
            .field;
        let opts = EigenOptions {
            tol_mu: 1e-9,
            tol_profile: 1e-8,
            ..EigenOptions::default()
        };
        let mu = solve_linear(&kind, &grid, &u0, &opts).unwrap().mu();
        let f = DiscreteOperator::standard(kind, grid.clone())
            .unwrap()
            .apply(&exact)
            .unwrap();
        band_nodes(&grid, 4.0 * h)
            .into_iter()
            .map(|id| (f.get(id) + mu * exact.get(id)).abs())
            .fold(0.0, f64::max)
    };
    let r = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0].map(residual);
    assert!(r[0] / r[1] >= 3.0 && r[1] / r[2] >= 3.0, "{r:?}");
}

#[test]
fn sublinear_limit_is_stationary() {
    let grid = Grid::build(Domain::<f64>::interval(1.0).unwrap(), 1.0 / 64.0).unwrap();
    let kind = OperatorKind::laplacian(EllipticitySpec::unit());
    let m = 2.0;
    let u0 = canonical_initial_data(&grid, &InitialKind::DistancePower(0.5), m)
        .unwrap()
        .field;
    let f = solve_sublinear(&kind, &grid, m, &u0, &EigenOptions::default())
        .unwrap()
        .profile;
    let t0 = 1.0;
    let cfg =
        FlowConfig::new(m, kind, 4.0).with_schedule(SnapshotSchedule::Uniform { dt_snap: 1.0 });
    let trace = Flow::new(cfg, grid)
        .unwrap()
        .evolve(&f.scale(1.0 / t0))
        .unwrap();
    for s in &trace.snapshots {
        let want = f.scale(1.0 / (t0 + s.t));
        let rel = s.u.sup_distance(&want) / want.sup_norm();
        assert!(rel < 5e-3, "t = {}: {rel}", s.t);
    }
}

#[test]
fn square_eigenfield_has_positive_hopf_slopes() {
    let grid = Grid::build(Domain::<f64>::rectangle(1.0, 1.0).unwrap(), 1.0 / 32.0).unwrap();
    let u0 = canonical_initial_data(&grid, &InitialKind::Distance, 1.0)
        .unwrap()
        .field;
    let r = solve_linear(&pucci_minus(2.0), &grid, &u0, &EigenOptions::default()).unwrap();
    assert!(r.slopes.min > 0.0, "{:?}", r.slopes);
    assert!(r.slopes.count > 0);
    assert!(r.residual_ok());
}

#[test]
fn log_concavity_preserved_from_tent() {
    let grid = Grid::build(Domain::<f64>::interval(PI).unwrap(), PI / 64.0).unwrap();
    let u0 = canonical_initial_data(&grid, &InitialKind::Distance, 1.0)
        .unwrap()
        .field;
    let cfg = FlowConfig::new(1.0, pucci_minus(2.0), 1.0)
        .with_schedule(SnapshotSchedule::Uniform { dt_snap: 0.05 });
    let trace = Flow::new(cfg, grid).unwrap().evolve(&u0).unwrap();
    let audit = preservation_audit(&trace, Transform::Log, 4.0, 1).unwrap();
    assert!(audit.passed, "{audit:?}");
}

#[test]
fn export_writes_json_and_profile() {
    let grid = Grid::build(Domain::<f64>::interval(PI).unwrap(), PI / 32.0).unwrap();
    let u0 = canonical_initial_data(&grid, &InitialKind::Distance, 1.0)
        .unwrap()
        .field;
    let kind = OperatorKind::laplacian(EllipticitySpec::unit());
    let r = solve_linear(&kind, &grid, &u0, &EigenOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    r.export(dir.path()).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("eigen.json")).unwrap())
            .unwrap();
    assert!(json.get("mu").is_some());
    let csv = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert_eq!(
        Field::from_csv(grid, &csv).unwrap().values(),
        r.profile.values()
    );
}
