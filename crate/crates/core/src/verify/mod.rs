//! Named experiments with pass/fail outcome records, plus the trace fits they use.

mod experiments;
pub mod oracle;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowTrace;
use crate::grid::{band_nodes, DomainDescriptor, Field};
use crate::matrix::{EllipticitySpec, OperatorKind};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

/// One measured quantity against its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// The statement under test.
    pub target: String,
    pub measured: f64,
    pub threshold: f64,
    pub relation: Relation,
    /// Distance to the threshold, positive when passing.
    pub margin: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(
        name: &str,
        target: &str,
        measured: f64,
        relation: Relation,
        threshold: f64,
    ) -> Self {
        let margin = match relation {
            Relation::AtMost => threshold - measured,
            Relation::AtLeast => measured - threshold,
        };
        Self {
            name: name.into(),
            target: target.into(),
            measured,
            threshold,
            relation,
            margin,
            passed: !measured.is_nan() && margin >= 0.0,
        }
    }

    pub fn at_most(name: &str, target: &str, measured: f64, threshold: f64) -> Self {
        Self::new(name, target, measured, Relation::AtMost, threshold)
    }

    pub fn at_least(name: &str, target: &str, measured: f64, threshold: f64) -> Self {
        Self::new(name, target, measured, Relation::AtLeast, threshold)
    }
}

/// Operator named by variant and ellipticity constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDesc {
    pub variant: String,
    pub lambda_low: f64,
    pub lambda_high: f64,
}

impl OperatorDesc {
    pub fn new(variant: &str, lambda_low: f64, lambda_high: f64) -> Self {
        Self {
            variant: variant.into(),
            lambda_low,
            lambda_high,
        }
    }

    pub fn kind(&self) -> Result<OperatorKind<f64>> {
        let spec = EllipticitySpec::new(self.lambda_low, self.lambda_high)?;
        match self.variant.as_str() {
            "pucci_minus" => Ok(OperatorKind::pucci_minus(spec)),
            "pucci_plus" => Ok(OperatorKind::pucci_plus(spec)),
            "laplacian" => Ok(OperatorKind::laplacian(spec)),
            other => Err(Error::Config(format!(
                "unknown operator '{other}' (expected pucci_minus, pucci_plus or laplacian)"
            ))),
        }
    }
}

/// The fixed configuration an experiment runs with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub domain: DomainDescriptor,
    pub operator: OperatorDesc,
    pub m: f64,
    /// Grid spacings, coarse to fine.
    pub levels: Vec<f64>,
    pub tolerances: BTreeMap<String, f64>,
}

impl Bundle {
    pub fn tol(&self, key: &str) -> f64 {
        self.tolerances[key]
    }
}

/// A registered experiment.
pub struct Experiment {
    pub name: &'static str,
    pub summary: &'static str,
    pub bundle: fn() -> Bundle,
    run: fn(&Bundle) -> Result<Vec<Check>>,
}

impl std::fmt::Debug for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Experiment")
            .field("name", &self.name)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub name: String,
    pub summary: String,
    pub bundle: Bundle,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub wall_time_s: f64,
}

impl Outcome {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub fn registry() -> &'static [Experiment] {
    experiments::REGISTRY
}

pub fn names() -> Vec<&'static str> {
    registry().iter().map(|e| e.name).collect()
}

pub fn find(name: &str) -> Result<&'static Experiment> {
    registry().iter().find(|e| e.name == name).ok_or_else(|| {
        Error::Config(format!(
            "unknown experiment '{name}'; registered: {}",
            names().join(", ")
        ))
    })
}

/// Runs one experiment with its registered bundle.
pub fn run_experiment(name: &str) -> Result<Outcome> {
    let exp = find(name)?;
    run_with(exp, (exp.bundle)())
}

/// Runs an experiment with an explicit bundle.
pub fn run_with(exp: &Experiment, bundle: Bundle) -> Result<Outcome> {
    let start = Instant::now();
    let checks = (exp.run)(&bundle)?;
    if checks.is_empty() {
        return Err(Error::Config(format!(
            "experiment '{}' produced no checks",
            exp.name
        )));
    }
    Ok(Outcome {
        name: exp.name.into(),
        summary: exp.summary.into(),
        passed: checks.iter().all(|c| c.passed),
        bundle,
        checks,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs every registered experiment in parallel.
pub fn run_all() -> Vec<(&'static str, Result<Outcome>)> {
    registry()
        .par_iter()
        .map(|e| (e.name, run_with(e, (e.bundle)())))
        .collect()
}

/// Summary table: one row per check.
pub fn outcomes_csv(outcomes: &[Outcome]) -> String {
    let mut s = String::from("experiment,check,measured,relation,threshold,margin,passed\n");
    for o in outcomes {
        for c in &o.checks {
            s.push_str(&format!(
                "{},{},{:e},{},{:e},{:e},{}\n",
                o.name,
                c.name,
                c.measured,
                match c.relation {
                    Relation::AtMost => "<=",
                    Relation::AtLeast => ">=",
                },
                c.threshold,
                c.margin,
                c.passed
            ));
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitMode {
    /// `log ‖u‖_∞` against `t`.
    Linear,
    /// `log ‖u‖_∞` against `log t`.
    Sublinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    /// `-slope`: the decay rate `μ̂`, or the estimate of `1/(m-1)`.
    pub rate: f64,
    pub max_residual: f64,
    pub points: usize,
}

/// Least-squares decay fit over the final third of the trace.
pub fn decay_fit<T: Real>(trace: &FlowTrace<T>, mode: FitMode) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = trace
        .snapshots
        .iter()
        .filter(|s| mode == FitMode::Linear || s.t > T::zero())
        .map(|s| {
            let t = s.t.as_f64();
            let x = match mode {
                FitMode::Linear => t,
                FitMode::Sublinear => t.ln(),
            };
            (x, s.sup_norm.as_f64().ln())
        })
        .collect();
    let window = &pts[pts.len() - pts.len() / 3..];
    if window.len() < 8 {
        return Err(Error::InputDomain(format!(
            "decay fit needs 8 snapshots in the final third, trace has {} usable",
            pts.len()
        )));
    }
    if window.iter().any(|(_, y)| !y.is_finite()) {
        return Err(Error::InputDomain(
            "solution vanished inside the fit window".into(),
        ));
    }
    let n = window.len() as f64;
    let mx = window.iter().map(|p| p.0).sum::<f64>() / n;
    let my = window.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = window.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InputDomain("fit window spans a single time".into()));
    }
    let slope = window.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let max_residual = window
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).abs())
        .fold(0.0, f64::max);
    Ok(DecayFit {
        slope,
        rate: -slope,
        max_residual,
        points: window.len(),
    })
}

/// Empirical Aronson–Bénilan constants over a band and a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbReport {
    /// `max -t w_t / w` with `w = u^m`.
    pub c_star_w: f64,
    /// `max -t v_t / v` with `v = u^{m-1}`.
    pub c_star_v: f64,
    pub worst_node: Option<usize>,
    pub worst_time: Option<f64>,
    pub samples: usize,
    /// Node-times skipped because `w` vanished.
    pub excluded: usize,
}

/// Aronson–Bénilan constant from centred time differences between snapshots, over
/// interior nodes at least `band` grid spacings from the boundary and snapshots with
/// `t` in `window`. The window must start after the first snapshot.
pub fn ab_constant<T: Real>(
    trace: &FlowTrace<T>,
    window: (f64, f64),
    band: f64,
) -> Result<AbReport> {
    let m = trace.m.as_f64();
    if !(m > 1.0) {
        return Err(Error::InputDomain(format!(
            "AB constant needs m > 1, got {m}"
        )));
    }
    let snaps = &trace.snapshots;
    if snaps.len() < 3 || !(window.0 > snaps[0].t.as_f64()) {
        return Err(Error::InputDomain(
            "AB window must exclude the first snapshot and the trace needs three snapshots".into(),
        ));
    }
    let grid = snaps[0].u.grid();
    let ids = band_nodes(grid, T::lit(band) * grid.h());
    let pow = |u: &Field<T>, p: f64| -> Vec<f64> {
        u.values()
            .iter()
            .map(|v| v.as_f64().max(0.0).powf(p))
            .collect()
    };
    let mut r = AbReport {
        c_star_w: f64::NEG_INFINITY,
        c_star_v: f64::NEG_INFINITY,
        worst_node: None,
        worst_time: None,
        samples: 0,
        excluded: 0,
    };
    for k in 1..snaps.len() - 1 {
        let t = snaps[k].t.as_f64();
        if t < window.0 || t > window.1 {
            continue;
        }
        let (ta, tb) = (snaps[k - 1].t.as_f64(), snaps[k + 1].t.as_f64());
        let [wa, w, wb] = [&snaps[k - 1].u, &snaps[k].u, &snaps[k + 1].u].map(|u| pow(u, m));
        let [va, v, vb] = [&snaps[k - 1].u, &snaps[k].u, &snaps[k + 1].u].map(|u| pow(u, m - 1.0));
        for &id in &ids {
            if !(w[id] > 0.0 && wa[id] > 0.0 && wb[id] > 0.0) {
                r.excluded += 1;
                continue;
            }
            let cw = -t * (wb[id] - wa[id]) / (tb - ta) / w[id];
            let cv = -t * (vb[id] - va[id]) / (tb - ta) / v[id];
            r.samples += 1;
            if cw > r.c_star_w {
                r.c_star_w = cw;
                r.worst_node = Some(id);
                r.worst_time = Some(t);
            }
            r.c_star_v = r.c_star_v.max(cv);
        }
    }
    if r.samples == 0 {
        return Err(Error::InputDomain(
            "no positive samples inside the AB window".into(),
        ));
    }
    Ok(r)
}
