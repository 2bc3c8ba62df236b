use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::oracle::{porous_1d_profile, pucci_1d_eigen};
use super::{ab_constant, decay_fit, Bundle, Check, Experiment, FitMode, OperatorDesc};
use crate::barriers::{
    barenblatt_exponents, residual_check, BarrierKind, BarrierSpec, Sign, C_CONS,
};
use crate::eigen::{
    geometric_schedule, solve_linear, solve_sublinear, uniqueness_probe, EigenOptions, EigenResult,
    ProbeMode,
};
use crate::error::Result;
use crate::flow::{comparison_harness, Flow, FlowConfig, SnapshotSchedule};
use crate::geometry::{
    eventual_concavity_probe, hessian_bound, midpoint_concavity, ProbeQuantity, Transform,
};
use crate::grid::{canonical_initial_data, Domain, DomainDescriptor, Field, Grid, InitialKind};
use crate::matrix::{EllipticitySpec, OperatorKind};

pub(super) static REGISTRY: &[Experiment] = &[
    Experiment {
        name: "linear-1d-laplacian",
        summary: "principal eigenpair of -u'' on (0, pi) against separation of variables",
        bundle: linear_1d_laplacian_bundle,
        run: linear_1d_laplacian,
    },
    Experiment {
        name: "linear-1d-pucci",
        summary: "principal eigenpairs of M- and M+ on (0, pi) against a shooting solver",
        bundle: linear_1d_pucci_bundle,
        run: linear_1d_pucci,
    },
    Experiment {
        name: "domain-scaling",
        summary: "halving the square side multiplies the fitted decay rate by four",
        bundle: domain_scaling_bundle,
        run: domain_scaling,
    },
    Experiment {
        name: "logconc-2d-pucci",
        summary: "midpoint log-concavity of the M- eigenfunction on the unit square",
        bundle: logconc_2d_pucci_bundle,
        run: logconc_2d_pucci,
    },
    Experiment {
        name: "sublinear-1d-m2",
        summary: "t u(t) converges to the solution of -(f^2)'' = f on (0, 1)",
        bundle: sublinear_1d_m2_bundle,
        run: sublinear_1d_m2,
    },
    Experiment {
        name: "sqrtconc-pressure",
        summary: "midpoint concavity of f^((m-1)/2) for the m = 2 limit profiles",
        bundle: sqrtconc_pressure_bundle,
        run: sqrtconc_pressure,
    },
    Experiment {
        name: "ab-inequality-m2",
        summary: "empirical Aronson-Benilan constant for m = 2",
        bundle: ab_inequality_m2_bundle,
        run: ab_inequality_m2,
    },
    Experiment {
        name: "comparison-random",
        summary: "ordered random data stay ordered under a shared time step",
        bundle: comparison_random_bundle,
        run: comparison_random,
    },
    Experiment {
        name: "barrier-residuals",
        summary: "discrete residuals of the heat-kernel, Barenblatt and separable barriers",
        bundle: barrier_residuals_bundle,
        run: barrier_residuals,
    },
    Experiment {
        name: "limit-uniqueness",
        summary: "unrelated initial data give the same normalized limit profile",
        bundle: limit_uniqueness_bundle,
        run: limit_uniqueness,
    },
    Experiment {
        name: "eventual-logconc",
        summary: "a non-log-concave start becomes strongly log-concave in finite time",
        bundle: eventual_logconc_bundle,
        run: eventual_logconc,
    },
];

fn tols(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn grid_for(domain: &DomainDescriptor, h: f64) -> Result<Arc<Grid<f64>>> {
    Grid::build(Domain::from_descriptor(domain)?, h)
}

fn spec(lo: f64, hi: f64) -> EllipticitySpec<f64> {
    EllipticitySpec::new(lo, hi).expect("valid constants")
}

fn sup_normalized(f: &Field<f64>) -> Field<f64> {
    f.scale(1.0 / f.sup_norm())
}

fn sup_gap_to(f: &Field<f64>, exact: impl Fn([f64; 2]) -> f64) -> f64 {
    f.grid()
        .nodes()
        .iter()
        .zip(f.values())
        .map(|(n, v)| (v - exact(n.pos)).abs())
        .fold(0.0, f64::max)
}

fn eigen_opts(b: &Bundle) -> EigenOptions<f64> {
    EigenOptions {
        tol_mu: b.tolerances.get("tol_mu").copied().unwrap_or(1e-5),
        tol_profile: b.tolerances.get("tol_profile").copied().unwrap_or(1e-4),
        ..EigenOptions::default()
    }
}

fn linear_eigen(b: &Bundle, kind: &OperatorKind<f64>, h: f64) -> Result<EigenResult<f64>> {
    let grid = grid_for(&b.domain, h)?;
    let u0 = canonical_initial_data(&grid, &InitialKind::Distance, 1.0)?.field;
    solve_linear(kind, &grid, &u0, &eigen_opts(b))
}

fn sublinear_eigen(b: &Bundle, kind: &OperatorKind<f64>, h: f64) -> Result<EigenResult<f64>> {
    let grid = grid_for(&b.domain, h)?;
    let u0 = canonical_initial_data(&grid, &InitialKind::DistancePower(1.0 / b.m), b.m)?.field;
    solve_sublinear(kind, &grid, b.m, &u0, &eigen_opts(b))
}

fn linear_1d_laplacian_bundle() -> Bundle {
    Bundle {
        domain: DomainDescriptor::Interval { length: PI },
        operator: OperatorDesc::new("laplacian", 1.0, 1.0),
        m: 1.0,
        levels: vec![PI / 256.0],
        tolerances: tols(&[("mu_rel", 1e-2), ("profile", 5e-3)]),
    }
}

fn linear_1d_laplacian(b: &Bundle) -> Result<Vec<Check>> {
    const T: &str = "principal Dirichlet eigenpair (1, sin x) of the Laplacian on (0, pi)";
    let r = linear_eigen(b, &b.operator.kind()?, b.levels[0])?;
    let phi = sup_normalized(&r.profile);
    Ok(vec![
        Check::at_most(
            "mu relative error",
            T,
            (r.mu() - 1.0).abs(),
            b.tol("mu_rel"),
        ),
        Check::at_most(
            "profile sup distance to sin",
            T,
            sup_gap_to(&phi, |p| p[0].sin()),
            b.tol("profile"),
        ),
        Check::at_most("eigen residual on band", T, r.residual, r.residual_bound),
    ])
}

fn linear_1d_pucci_bundle() -> Bundle {
    Bundle {
        domain: DomainDescriptor::Interval { length: PI },
        operator: OperatorDesc::new("pucci_minus", 1.0, 2.0),
        m: 1.0,
        levels: vec![PI / 256.0],
        tolerances: tols(&[("mu_rel", 1e-2), ("profile", 5e-3)]),
    }
}

fn linear_1d_pucci(b: &Bundle) -> Result<Vec<Check>> {
    const T: &str =
        "concave principal profile reduces M-(phi'') to Lambda phi'' and M+(phi'') to lambda phi''";
    let (lo, hi) = (b.operator.lambda_low, b.operator.lambda_high);
    let length = match b.domain {
        DomainDescriptor::Interval { length } => length,
        _ => PI,
    };
    let s = spec(lo, hi);
    let (minus, plus) = rayon::join(
        || linear_eigen(b, &OperatorKind::pucci_minus(s), b.levels[0]),
        || linear_eigen(b, &OperatorKind::pucci_plus(s), b.levels[0]),
    );
    let (minus, plus) = (minus?, plus?);
    let (om, op) = rayon::join(
        || pucci_1d_eigen(lo, hi, false, length),
        || pucci_1d_eigen(lo, hi, true, length),
    );
    let mu_minus = hi * (PI / length).powi(2);
    let mu_plus = lo * (PI / length).powi(2);
    let sin = |p: [f64; 2]| (PI * p[0] / length).sin();
    Ok(vec![
        Check::at_most(
            "shooting M- mu vs Lambda",
            T,
            (om.mu - mu_minus).abs() / mu_minus,
            1e-8,
        ),
        Check::at_most("shooting M- max phi''", T, om.max_second, 0.0),
        Check::at_most(
            "shooting M+ mu vs lambda",
            T,
            (op.mu - mu_plus).abs() / mu_plus,
            1e-8,
        ),
        Check::at_most("shooting M+ max phi''", T, op.max_second, 0.0),
        Check::at_most(
            "M- mu relative error",
            T,
            (minus.mu() - om.mu).abs() / om.mu,
            b.tol("mu_rel"),
        ),
        Check::at_most(
            "M- profile sup distance to sin",
            T,
            sup_gap_to(&sup_normalized(&minus.profile), sin),
            b.tol("profile"),
        ),
        Check::at_most(
            "M+ mu relative error",
            T,
            (plus.mu() - op.mu).abs() / op.mu,
            b.tol("mu_rel"),
        ),
        Check::at_most(
            "M+ profile sup distance to sin",
            T,
            sup_gap_to(&sup_normalized(&plus.profile), sin),
            b.tol("profile"),
        ),
    ])
}

fn domain_scaling_bundle() -> Bundle {
    Bundle {
        domain: DomainDescriptor::Rectangle { lx: 1.0, ly: 1.0 },
        operator: OperatorDesc::new("pucci_minus", 1.0, 2.0),
        m: 1.0,
        levels: vec![1.0 / 64.0],
        tolerances: tols(&[("ratio_rel", 2e-2)]),
    }
}

fn domain_scaling(b: &Bundle) -> Result<Vec<Check>> {
    const T: &str = "homogeneity of F and parabolic scaling: mu(L/2) = 4 mu(L)";
    let (lx, ly) = match b.domain {
        DomainDescriptor::Rectangle { lx, ly } => (lx, ly),
        _ => (1.0, 1.0),
    };
    let kind = b.operator.kind()?;
    let fit = |scale: f64| -> Result<f64> {
        let grid = Grid::build(Domain::rectangle(lx * scale, ly * scale)?, b.levels[0])?;
        let u0 = canonical_initial_data(&grid, &InitialKind::EigenOfLaplacian, 1.0)?.field;
        let t_end = 0.5 * scale * scale;
        let cfg =
            FlowConfig::new(1.0, kind.clone(), t_end).with_schedule(SnapshotSchedule::Uniform {
                dt_snap: t_end / 30.0,
            });
        let trace = Flow::new(cfg, grid)?.evolve(&u0)?;
        Ok(decay_fit(&trace, FitMode::Linear)?.rate)
    };
    let (full, half) = rayon::join(|| fit(1.0), || fit(0.5));
    let ratio = half? / full?;
    Ok(vec![Check::at_most(
        "mu(L/2)/mu(L) relative distance to 4",
        T,
        (ratio / 4.0 - 1.0).abs(),
        b.tol("ratio_rel"),
    )])
}

fn logconc_2d_pucci_bundle() -> Bundle {
    Bundle {
        domain: DomainDescriptor::Rectangle { lx: 1.0, ly: 1.0 },
        operator: OperatorDesc::new("pucci_minus", 1.0, 2.0),
        m: 1.0,
        levels: vec![1.0 / 96.0],
        tolerances: tols(&[("band", 4.0), ("rel", 1e-8)]),
    }
}

fn logconc_2d_pucci(b: &Bundle) -> Result<Vec<Check>> {
    const T: &str = "the principal eigenfunction is log-concave";
    let r = linear_eigen(b, &b.operator.kind()?, b.levels[0])?;
    let rep = midpoint_concavity(&r.profile, Transform::Log, b.tol("band"))?;
    Ok(vec![
        Check::at_most(
            "worst log midpoint second difference",
            T,
            rep.worst,
            b.tol("rel") * rep.scale,
        ),
        Check::at_least("admissible triples", T, rep.admissible as f64, 1.0),
    ])
}

fn sublinear_1d_m2_bundle() -> Bundle {
    Bundle {
        domain: DomainDescriptor::Interval { length: 1.0 },
        operator: OperatorDesc::new("laplacian", 1.0, 1.0),
        m: 2.0,
        levels: vec![1.0 / 256.0],
        tolerances: tols(&[("tol_profile", 1e-4), ("oracle", 1e-2), ("slope_rel", 2e-2)]),
    }
}

fn sublinear_1d_m2(b: &Bundle) -> Result<Vec<Check>> {
    const T: &str = "t^(1/(m-1)) u converges to the positive solution of -(f^m)'' = f/(m-1)";
    let r = sublinear_eigen(b, &b.operator.kind()?, b.levels[0])?;
    let length = match b.domain {
        DomainDescriptor::Interval { length } => length,
        _ => 1.0,
    };
    let oracle = porous_1d_profile(b.m, length);
    let last_change = r.log.last().map(|e| e.change).unwrap_or(f64::INFINITY);
    // the doubling trace is too sparse for a fit; rerun to the same time on a finer schedule
    let doubling = r.trace.as_ref().expect("sublinear solves keep their trace");
    let t_final = doubling.last().t;
    let grid = r.profile.grid().clone();
    let u0 = canonical_initial_data(&grid, &InitialKind::DistancePower(1.0 / b.m), b.m)?.field;
    let cfg = FlowConfig::new(b.m, b.operator.kind()?, t_final).with_schedule(geometric_schedule(
        t_final,
        2f64.powf(0.25),
        4 * doubling.len(),
    ));
    let fit = decay_fit(&Flow::new(cfg, grid)?.evolve(&u0)?, FitMode::Sublinear)?;
    let expected = -1.0 / (b.m - 1.0);
    Ok(vec![
        Check::at_most(
            "final doubling difference",
            T,
            last_change,
            b.tol("tol_profile"),
        ),
        Check::at_most(
            "sup distance to shooting profile",
            T,
            sup_gap_to(&r.profile, |p| oracle.eval(p[0])),
            b.tol("oracle"),
        ),
        Check::at_most(
            "log-log decay slope relative error",
            T,
            (fit.slope / expected - 1.0).abs(),
            b.tol("slope_rel"),
        ),
    ])
}

fn sqrtconc_pressure_bundle() -> Bundle {
    Bundle {
        domain: DomainDescriptor::Interval { length: 1.0 },
        operator: OperatorDesc::new("pucci_minus", 1.0, 2.0),
        m: 2.0,
        levels: vec![1.0 / 256.0, 1.0 / 48.0],
        tolerances: tols(&[("band", 4.0), ("rel", 1e-8), ("tol_profile", 1e-4)]),
    }
}

fn sqrtconc_pressure(b: &Bundle) -> Result<Vec<Check>> {
    const T: &str = "the square root of the limit pressure is concave";
    let lap = OperatorKind::laplacian(spec(1.0, 1.0));
    let square = Bundle {
        domain: DomainDescriptor::Rectangle { lx: 1.0, ly: 1.0 },
        ..b.clone()
    };
    let (line, sq) = rayon::join(
        || sublinear_eigen(b, &lap, b.levels[0]),
        || -> Result<_> { sublinear_eigen(&square, &b.operator.kind()?, b.levels[1]) },
    );
    let t = Transform::Power((b.m - 1.0) / 2.0);
    let mut out = Vec::new();
    for (label, r) in [("interval, Laplacian", line?), ("square, M-", sq?)] {
        let rep = midpoint_concavity(&r.profile, t, b.tol("band"))?;
        out.push(Check::at_most(
            &format!("{label}: worst midpoint second difference"),
            T,
            rep.worst,
            b.tol("rel") * rep.scale,
        ));
    }
    Ok(out)
}

fn ab_inequality_m2_bundle() -> Bundle {
    Bundle {
        domain: DomainDescriptor::Interval { length: 1.0 },
        operator: OperatorDesc::new("laplacian", 1.0, 1.0),
        m: 2.0,
        levels: vec![1.0 / 128.0],
        tolerances: tols(&[
            ("t_lo", 0.5),
            ("t_hi", 4.0),
            ("slack", 0.5),
            ("separable", 1e-6),
        ]),
    }
}

fn ab_inequality_m2(b: &Bundle) -> Result<Vec<Check>> {
    const T: &str = "Aronson-Benilan: u_t >= -C u / t";
    let m = b.m;
    let (lo, hi) = (b.tol("t_lo"), b.tol("t_hi"));
    let grid = grid_for(&b.domain, b.levels[0])?;
    let u0 = canonical_initial_data(&grid, &InitialKind::DistancePower(1.0 / m), m)?.field;
    let dt_snap = 1.0 / 64.0;
    let cfg = FlowConfig::new(m, b.operator.kind()?, hi + dt_snap)
        .with_schedule(SnapshotSchedule::Uniform { dt_snap });
    let trace = Flow::new(cfg, grid.clone())?.evolve(&u0)?;
    let run = ab_constant(&trace, (lo, hi), 0.0)?;

    // closed-form separable trace f (tau + t)^{-1/(m-1)}
    let tau = 1.0;
    let dt = 1.0 / 1024.0;
    let n = ((hi - lo) / dt).round() as usize + 2;
    let f = u0.clone();
    let snapshots = (0..=n)
        .map(|k| {
            let t = lo - dt + k as f64 * dt;
            let u = f.scale((tau + t).powf(-1.0 / (m - 1.0)));
            crate::flow::Snapshot {
                t,
                sup_norm: u.sup_norm(),
                u,
                w: None,
                steps: 0,
                boundary_slope: None,
            }
        })
        .collect();
    let sep = ab_constant(&crate::flow::FlowTrace { m, snapshots }, (lo, hi), 0.0)?;
    let sep_bound = m / (m - 1.0) * hi / (tau + hi);
    Ok(vec![
        Check::at_most(
            "canonical run C* (w)",
            T,
            run.c_star_w,
            m / (m - 1.0) + b.tol("slack"),
        ),
        Check::at_most(
            "canonical run C* (v = u^(m-1))",
            T,
            run.c_star_v,
            1.0 + (m - 1.0) / m * b.tol("slack"),
        ),
        Check::at_most(
            "separable trace C* (w)",
            T,
            sep.c_star_w,
            sep_bound + b.tol("separable"),
        ),
    ])
}

fn comparison_random_bundle() -> Bundle {
    Bundle {
        domain: DomainDescriptor::Rectangle { lx: 1.0, ly: 1.0 },
        operator: OperatorDesc::new("pucci_minus", 1.0, 2.0),
        m: 2.0,
        levels: vec![1.0 / 16.0],
        tolerances: tols(&[
            ("pairs", 100.0),
            ("t_end", 0.02),
            ("violation", 1e-12),
            ("seed", 20.0),
        ]),
    }
}

fn comparison_random(b: &Bundle) -> Result<Vec<Check>> {
    const T: &str = "comparison principle for ordered data";
    let grid = grid_for(&b.domain, b.levels[0])?;
    let s = spec(b.operator.lambda_low, b.operator.lambda_high);
    let pairs = b.tol("pairs") as u64;
    let seed = b.tol("seed") as u64;
    let worst = (0..pairs)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(i));
            let m = if i % 2 == 0 { 1.0 } else { b.m };
            let kind = match (i / 2) % 3 {
                0 => OperatorKind::pucci_minus(s),
                1 => OperatorKind::pucci_plus(s),
                _ => OperatorKind::laplacian(s),
            };
            let mut low = Field::zeros(grid.clone());
            let mut high = Field::zeros(grid.clone());
            for id in grid.interior_ids() {
                let a: f64 = rng.gen();
                low.values_mut()[id] = a;
                high.values_mut()[id] = a + rng.gen::<f64>() * 0.5;
            }
            let flow = Flow::new(FlowConfig::new(m, kind, b.tol("t_end")), grid.clone())?;
            Ok(comparison_harness(&flow, &low, &high, b.tol("t_end"))?.max_violation)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(vec![Check::at_most(
        "largest ordering violation",
        T,
        worst,
        b.tol("violation"),
    )])
}

fn barrier_residuals_bundle() -> Bundle {
    Bundle {
        domain: DomainDescriptor::Rectangle { lx: 4.0, ly: 4.0 },
        operator: OperatorDesc::new("pucci_minus", 1.0, 2.0),
        m: 2.0,
        levels: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0],
        tolerances: tols(&[
            ("c_cons", C_CONS),
            ("order", 1.9),
            ("separable_h", 1.0 / 16.0),
        ]),
    }
}

fn barrier_residuals(b: &Bundle) -> Result<Vec<Check>> {
    const HEAT: &str = "the heat kernel is a subsolution, exact when lambda = Lambda";
    const BAREN: &str = "Barenblatt exponents from (lambda, Lambda, n, m)";
    const SEP: &str = "the separable M+ solution is a supersolution for every F";
    let c = b.tol("c_cons");
    let window = [0.5, 0.75, 1.0];
    let mut out = Vec::new();

    let heat = |lo: f64, hi: f64, h: f64| -> Result<(f64, f64)> {
        let grid = grid_for(&b.domain, h)?;
        let s = spec(lo, hi);
        let center = [2.0, 2.0];
        let bar = BarrierSpec::new(BarrierKind::HeatKernelSub { center }, s, 1.0)?;
        let r = residual_check(
            &bar,
            &OperatorKind::pucci_minus(s),
            &grid,
            &window,
            Sign::Sub,
            c * h * h,
        )?;
        Ok((r.max_abs, r.worst))
    };
    let unit: Vec<(f64, f64)> = b
        .levels
        .par_iter()
        .map(|&h| heat(1.0, 1.0, h))
        .collect::<Result<_>>()?;
    for (h, (max_abs, _)) in b.levels.iter().zip(&unit) {
        out.push(Check::at_most(
            &format!("lambda = Lambda, |residual| at h = {h}"),
            HEAT,
            *max_abs,
            c * h * h,
        ));
    }
    let order = unit
        .windows(2)
        .zip(b.levels.windows(2))
        .map(|(r, h)| (r[0].0 / r[1].0).ln() / (h[0] / h[1]).ln())
        .fold(f64::INFINITY, f64::min);
    out.push(Check::at_least(
        "lambda = Lambda, empirical order",
        HEAT,
        order,
        b.tol("order"),
    ));
    let (lo, hi) = (b.operator.lambda_low, b.operator.lambda_high);
    let skew: Vec<(f64, f64)> = b
        .levels
        .par_iter()
        .map(|&h| heat(lo, hi, h))
        .collect::<Result<_>>()?;
    for (h, (_, worst)) in b.levels.iter().zip(&skew) {
        out.push(Check::at_least(
            &format!("M- residual at h = {h}"),
            HEAT,
            *worst,
            -c * h * h,
        ));
    }

    let r = |n: i64, d: i64| Ratio::new(n, d);
    let cases = [
        (r(1, 1), r(1, 1), r(1, 1), r(2, 1)),
        (r(1, 1), r(2, 1), r(2, 1), r(3, 2)),
        (r(1, 2), r(3, 1), r(2, 1), r(5, 2)),
        (r(2, 1), r(7, 3), r(1, 1), r(4, 1)),
        (r(3, 4), r(5, 4), r(3, 1), r(7, 5)),
    ];
    let mismatches = cases
        .iter()
        .filter(|&&(l, big, n, m)| {
            let (a, be, k) = barenblatt_exponents(l, big, n, m);
            let d = r(2, 1) * l + n * (m - r(1, 1)) * big;
            a * d != n * (m - r(1, 1)) * big || be * d != r(2, 1) * l || k * r(2, 1) * d != r(1, 1)
        })
        .count();
    out.push(Check::at_most(
        "exponent identity mismatches",
        BAREN,
        mismatches as f64,
        0.0,
    ));

    let h = b.tol("separable_h");
    let grid = Grid::build(Domain::rectangle(1.0, 1.0)?, h)?;
    let s = spec(lo, hi);
    let u0 = canonical_initial_data(&grid, &InitialKind::DistancePower(1.0 / b.m), b.m)?.field;
    let f = solve_sublinear(
        &OperatorKind::pucci_plus(s),
        &grid,
        b.m,
        &u0,
        &EigenOptions::default(),
    )?
    .profile;
    let bar = BarrierSpec::new(BarrierKind::SeparableSuper { profile: f, k: 1.0 }, s, b.m)?;
    let tol = c * h * h;
    for (label, kind) in [
        ("M-", OperatorKind::pucci_minus(s)),
        ("Laplacian", OperatorKind::laplacian(s)),
        ("M+", OperatorKind::pucci_plus(s)),
    ] {
        let rep = residual_check(&bar, &kind, &grid, &[0.0, 0.5, 1.0], Sign::Super, tol)?;
        out.push(Check::at_most(
            &format!("separable residual under {label}"),
            SEP,
            rep.worst,
            tol,
        ));
    }
    Ok(out)
}

fn limit_uniqueness_bundle() -> Bundle {
    Bundle {
        domain: DomainDescriptor::Rectangle { lx: 1.0, ly: 1.0 },
        operator: OperatorDesc::new("pucci_minus", 1.0, 2.0),
        m: 2.0,
        levels: vec![1.0 / 32.0, 1.0 / 128.0],
        tolerances: tols(&[("gap", 1e-3), ("tol_profile", 1e-5)]),
    }
}

fn limit_uniqueness(b: &Bundle) -> Result<Vec<Check>> {
    const T: &str = "the normalized long-time limit does not depend on the initial data";
    let opts = eigen_opts(b);
    let kind = b.operator.kind()?;
    let linear = || -> Result<f64> {
        let grid = grid_for(&b.domain, b.levels[0])?;
        let a = canonical_initial_data(&grid, &InitialKind::Distance, 1.0)?.field;
        let mut f = Field::from_fn(grid.clone(), |p| {
            p[0] * (1.0 - p[0]) * p[1] * (1.0 - p[1]) * (3.0 * p[0] - 2.0 * p[1]).exp()
        });
        f.set_boundary(0.0);
        Ok(uniqueness_probe(&kind, &grid, ProbeMode::Linear, &a, &f, &opts)?.profile_gap)
    };
    let sublinear = || -> Result<f64> {
        let grid = Grid::build(Domain::interval(1.0)?, b.levels[1])?;
        let m = b.m;
        let a = canonical_initial_data(&grid, &InitialKind::DistancePower(1.0 / m), m)?.field;
        let mut f = Field::from_fn(grid.clone(), |p| {
            (p[0] * (1.0 - p[0])).max(0.0).sqrt() * (1.0 + 0.9 * (5.0 * PI * p[0]).sin())
        });
        f.set_boundary(0.0);
        Ok(uniqueness_probe(&kind, &grid, ProbeMode::Sublinear { m }, &a, &f, &opts)?.profile_gap)
    };
    let (gl, gs) = rayon::join(linear, sublinear);
    Ok(vec![
        Check::at_most(
            "m = 1, square, M-: normalized profile gap",
            T,
            gl?,
            b.tol("gap"),
        ),
        Check::at_most(
            "m = 2, interval, M-: normalized profile gap",
            T,
            gs?,
            b.tol("gap"),
        ),
    ])
}

fn eventual_logconc_bundle() -> Bundle {
    Bundle {
        domain: DomainDescriptor::Interval { length: PI },
        operator: OperatorDesc::new("laplacian", 1.0, 1.0),
        m: 1.0,
        levels: vec![PI / 128.0],
        tolerances: tols(&[
            ("band", 4.0),
            ("eps_frac", 0.2),
            ("t_end", 2.0),
            ("rel", 1e-8),
        ]),
    }
}

fn eventual_logconc(b: &Bundle) -> Result<Vec<Check>> {
    const T: &str = "solutions become strictly log-concave for large t";
    let grid = grid_for(&b.domain, b.levels[0])?;
    let kind = b.operator.kind()?;
    let band = b.tol("band");
    let eig = linear_eigen(b, &kind, b.levels[0])?;
    let (_, c1) = hessian_bound(&eig.profile, Transform::Log, band)?;
    let c1 = c1.unwrap_or(0.0);
    let eps = b.tol("eps_frac") * c1;
    let mut u0 = Field::from_fn(grid.clone(), |p| {
        let s = p[0].sin();
        s * (2.8 - 2.4 * s * s)
    });
    u0.set_boundary(0.0);
    let start = midpoint_concavity(&u0, Transform::Log, band)?;
    let t_end = b.tol("t_end");
    let cfg = FlowConfig::new(1.0, kind, t_end).with_schedule(SnapshotSchedule::Uniform {
        dt_snap: t_end / 80.0,
    });
    let trace = Flow::new(cfg, grid)?.evolve(&u0)?;
    let probe = eventual_concavity_probe(&trace, ProbeQuantity::Log, c1, eps, band)?;
    Ok(vec![
        Check::at_least("eigenprofile c1", T, c1, 0.0),
        Check::at_least(
            "initial datum log midpoint violation",
            T,
            start.worst,
            b.tol("rel") * start.scale,
        ),
        Check::at_most("onset time t0", T, probe.t0.unwrap_or(f64::INFINITY), t_end),
    ])
}
