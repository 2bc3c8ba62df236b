use std::f64::consts::PI;

use proptest::prelude::*;
use pucci_core::barriers::{sandwich_run, BarrierKind, BarrierSpec};
use pucci_core::eigen::{solve_linear, solve_sublinear, EigenOptions};
use pucci_core::flow::{comparison_harness, Flow, FlowConfig, SnapshotSchedule};
use pucci_core::{
    canonical_initial_data, Domain, EllipticitySpec, Field, Grid, InitialKind, OperatorKind,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ordered_data_stay_ordered(
        low in prop::collection::vec(0.0f64..1.0, 64),
        lift in prop::collection::vec(0.0f64..1.0, 64),
        quadratic in any::<bool>(),
    ) {
        let grid = Grid::build(Domain::<f64>::rectangle(1.0, 1.0).unwrap(), 1.0 / 8.0).unwrap();
        let m = if quadratic { 2.0 } else { 1.0 };
        let spec = EllipticitySpec::new(1.0, 2.0).unwrap();
        let mut a = Field::zeros(grid.clone());
        let mut b = Field::zeros(grid.clone());
        for id in grid.interior_ids() {
            a.values_mut()[id] = low[id];
            b.values_mut()[id] = low[id] + lift[id];
        }
        let flow = Flow::new(FlowConfig::new(m, OperatorKind::pucci_minus(spec), 0.05), grid).unwrap();
        let r = comparison_harness(&flow, &a, &b, 0.05).unwrap();
        prop_assert!(r.passed(1e-12), "{:?}", r);
    }
}

#[test]
fn decay_sandwich_for_linear_flow() {
    let grid = Grid::build(Domain::<f64>::interval(PI).unwrap(), PI / 64.0).unwrap();
    let kind = OperatorKind::pucci_minus(EllipticitySpec::new(1.0, 2.0).unwrap());
    let u0 = canonical_initial_data(&grid, &InitialKind::Distance, 1.0)
        .unwrap()
        .field;
    let eig = solve_linear(&kind, &grid, &u0, &EigenOptions::default()).unwrap();
    let barrier = |c: f64| {
        BarrierSpec::new(
            BarrierKind::EigenDecay {
                profile: eig.profile.clone(),
                rate: eig.mu(),
                amplitude: c,
            },
            *kind.spec(),
            1.0,
        )
        .unwrap()
    };
    let t_end = 5.0 / eig.mu();
    let cfg = FlowConfig::new(1.0, kind.clone(), t_end).with_schedule(SnapshotSchedule::Uniform {
        dt_snap: t_end / 20.0,
    });
    let r = sandwich_run(&barrier(0.1), &barrier(10.0), &cfg, &grid, &u0).unwrap();
    assert!(r.passed, "{r:?}");

    // starting on the lower barrier: equality at t = 0, and it stays a solution
    let r = sandwich_run(
        &barrier(0.1),
        &barrier(10.0),
        &cfg,
        &grid,
        &eig.profile.scale(0.1),
    )
    .unwrap();
    assert_eq!(r.below[0], 0.0);
    assert!(r.passed);

    let bad = u0.scale(100.0);
    assert!(sandwich_run(&barrier(0.1), &barrier(10.0), &cfg, &grid, &bad).is_err());
}

#[test]
fn separable_sandwich_for_quadratic_flow() {
    let grid = Grid::build(Domain::<f64>::interval(1.0).unwrap(), 1.0 / 64.0).unwrap();
    let kind = OperatorKind::laplacian(EllipticitySpec::unit());
    let m = 2.0;
    let u0 = canonical_initial_data(&grid, &InitialKind::DistancePower(0.5), m)
        .unwrap()
        .field;
    let f = solve_sublinear(&kind, &grid, m, &u0, &EigenOptions::default())
        .unwrap()
        .profile;
    let sep = |k: f64| {
        BarrierSpec::new(
            BarrierKind::SeparableSuper {
                profile: f.clone(),
                k,
            },
            *kind.spec(),
            m,
        )
        .unwrap()
    };
    let cfg = FlowConfig::new(m, kind.clone(), 4.0)
        .with_schedule(SnapshotSchedule::Uniform { dt_snap: 0.25 });
    let r = sandwich_run(&sep(4.0), &sep(1.0), &cfg, &grid, &f.scale(0.5)).unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn trace_export_writes_snapshots() {
    let grid = Grid::build(Domain::<f64>::interval(1.0).unwrap(), 1.0 / 16.0).unwrap();
    let kind = OperatorKind::laplacian(EllipticitySpec::unit());
    let u0 = canonical_initial_data(&grid, &InitialKind::Distance, 1.0)
        .unwrap()
        .field;
    let cfg =
        FlowConfig::new(1.0, kind, 0.1).with_schedule(SnapshotSchedule::Uniform { dt_snap: 0.05 });
    let trace = Flow::new(cfg, grid.clone()).unwrap().evolve(&u0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    trace
        .export(dir.path(), serde_json::json!({"note": "test"}))
        .unwrap();
    assert!(dir.path().join("trace.json").exists());
    let last = std::fs::read_to_string(
        dir.path()
            .join(format!("snapshot_{:04}.csv", trace.len() - 1)),
    )
    .unwrap();
    let back = Field::from_csv(grid, &last).unwrap();
    assert_eq!(back.values(), trace.last().u.values());
}
