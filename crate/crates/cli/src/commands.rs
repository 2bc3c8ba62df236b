use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pucci_core::barriers::{residual_check, BarrierKind, BarrierSpec, Sign};
use pucci_core::eigen::{solve_linear, solve_sublinear, EigenOptions, EigenResult};
use pucci_core::flow::{comparison_harness, Flow};
use pucci_core::geometry::midpoint_concavity;
use pucci_core::verify::{self, ab_constant};
use pucci_core::{Field, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{BarrierChoice, RunConfig, Source};
use crate::CliError;

/// Result of a command that ran to completion.
pub struct Outcome {
    pub passed: bool,
    pub summary: Value,
}

/// A run directory that was empty, new, or released with `--force`.
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn prepare(path: PathBuf, force: bool) -> Result<Self, CliError> {
        let occupied = path.exists()
            && std::fs::read_dir(&path)
                .map(|mut d| d.next().is_some())
                .unwrap_or(true);
        if occupied && !force {
            return Err(CliError::Usage(format!(
                "{} already exists and is not empty; pass --force to overwrite",
                path.display()
            )));
        }
        std::fs::create_dir_all(&path)?;
        Ok(Self { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&self, name: &str, text: &str) -> Result<(), CliError> {
        std::fs::write(self.path.join(name), text)?;
        Ok(())
    }

    /// Directory for grid level `i` of `n`; the run directory itself when `n = 1`.
    fn level(&self, i: usize, n: usize) -> Result<PathBuf, CliError> {
        let p = if n == 1 {
            self.path.clone()
        } else {
            self.path.join(format!("level_{i}"))
        };
        std::fs::create_dir_all(&p)?;
        Ok(p)
    }
}

fn eigen_options(cfg: &RunConfig) -> EigenOptions<f64> {
    EigenOptions {
        tol_mu: cfg.tol.mu,
        tol_profile: cfg.tol.profile,
        cfl_safety: cfg.cfl_safety,
        ..EigenOptions::default()
    }
}

fn solve(cfg: &RunConfig, grid: &Arc<Grid<f64>>) -> Result<EigenResult<f64>, CliError> {
    let kind = cfg.operator_kind()?;
    let u0 = cfg.initial_data(grid)?.field;
    let opts = eigen_options(cfg);
    Ok(if cfg.m == 1.0 {
        solve_linear(&kind, grid, &u0, &opts)?
    } else {
        solve_sublinear(&kind, grid, cfg.m, &u0, &opts)?
    })
}

pub fn evolve(cfg: &RunConfig, out: &RunDir) -> Result<Outcome, CliError> {
    let n = cfg.levels.len();
    let mut levels = Vec::new();
    for (i, &h) in cfg.levels.iter().enumerate() {
        let grid = cfg.grid(h)?;
        let init = cfg.initial_data(&grid)?;
        let flow = Flow::new(cfg.flow_config()?, grid)?;
        let trace = flow.evolve(&init.field)?;
        let dir = out.level(i, n)?;
        trace.export(&dir, cfg.to_json())?;
        let mut csv = String::from("t,sup_norm\n");
        for (t, s) in trace.times().iter().zip(trace.sup_norms()) {
            writeln!(csv, "{t},{s}").unwrap();
        }
        std::fs::write(dir.join("sup_norm.csv"), csv)?;
        let last = trace.last();
        println!(
            "h = {h}: {} steps, {} snapshots, sup |u(t_end)| = {:e}",
            trace.steps(),
            trace.len(),
            last.u.sup_norm()
        );
        levels.push(json!({
            "h": h,
            "steps": trace.steps(),
            "snapshots": trace.len(),
            "final_sup_norm": last.u.sup_norm(),
            "cb_holds": init.cb.holds,
        }));
    }
    Ok(Outcome {
        passed: true,
        summary: json!({ "levels": levels }),
    })
}

pub fn eigen(cfg: &RunConfig, out: &RunDir) -> Result<Outcome, CliError> {
    let n = cfg.levels.len();
    let mut levels = Vec::new();
    for (i, &h) in cfg.levels.iter().enumerate() {
        let grid = cfg.grid(h)?;
        let r = solve(cfg, &grid)?;
        r.export(&out.level(i, n)?)?;
        println!(
            "h = {h}: mu = {:.10}, residual {:e} (bound {:e}), min Hopf slope {:e}",
            r.mu(),
            r.residual,
            r.residual_bound,
            r.slopes.min
        );
        levels.push(json!({
            "h": h,
            "mu": r.mu(),
            "residual": r.residual,
            "residual_bound": r.residual_bound,
            "min_hopf_slope": r.slopes.min,
            "steps": r.steps,
        }));
    }
    Ok(Outcome {
        passed: true,
        summary: json!({ "levels": levels }),
    })
}

pub fn concavity(cfg: &RunConfig, out: &RunDir) -> Result<Outcome, CliError> {
    let n = cfg.levels.len();
    let mut levels = Vec::new();
    let mut passed = true;
    for (i, &h) in cfg.levels.iter().enumerate() {
        let grid = cfg.grid(h)?;
        let field = match &cfg.source {
            Source::Eigen => solve(cfg, &grid)?.profile,
            Source::Initial => cfg.initial_data(&grid)?.field,
            Source::Final => {
                let init = cfg.initial_data(&grid)?;
                let flow = Flow::new(cfg.flow_config()?, grid.clone())?;
                let mut st = flow.state(&init.field)?;
                flow.advance(&mut st, cfg.t_end)?;
                flow.u_field(&st.values)
            }
            Source::File(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read field {}: {e}", p.display()))
                })?;
                Field::from_csv(grid.clone(), &text)?
            }
        };
        let report = midpoint_concavity(&field, cfg.transform, cfg.band)?;
        let ok = report.passes(cfg.tol.concavity);
        passed &= ok;
        let dir = out.level(i, n)?;
        std::fs::write(
            dir.join("concavity.json"),
            serde_json::to_string_pretty(&report).unwrap(),
        )?;
        std::fs::write(dir.join("worst_triples.csv"), report.top_csv(&grid))?;
        let tol = cfg.tol.concavity * report.scale;
        println!(
            "h = {h}: worst second difference {:e} (tolerance {tol:e}) over {} triples: {}",
            report.worst,
            report.admissible,
            if ok { "pass" } else { "FAIL" }
        );
        if let (false, Some(t)) = (ok, report.worst_triple) {
            let pos = |id: usize| grid.node(id).pos;
            println!(
                "  worst triple x = {:?} (node {}), y = {:?} (node {}), midpoint {:?} (node {})",
                pos(t.x),
                t.x,
                pos(t.y),
                t.y,
                pos(t.mid),
                t.mid
            );
        }
        levels.push(json!({
            "h": h,
            "worst": report.worst,
            "tolerance": tol,
            "admissible": report.admissible,
            "worst_triple": report.worst_triple,
            "passed": ok,
        }));
    }
    Ok(Outcome {
        passed,
        summary: json!({ "levels": levels }),
    })
}

pub fn ab(cfg: &RunConfig, out: &RunDir) -> Result<Outcome, CliError> {
    if cfg.m <= 1.0 {
        return Err(CliError::Usage(format!(
            "check ab needs m > 1, config has m = {}",
            cfg.m
        )));
    }
    if cfg.ab_window.1 > cfg.t_end {
        return Err(CliError::Usage(format!(
            "ab.window ends at {} after flow.t_end = {}",
            cfg.ab_window.1, cfg.t_end
        )));
    }
    let n = cfg.levels.len();
    let mut levels = Vec::new();
    let mut passed = true;
    for (i, &h) in cfg.levels.iter().enumerate() {
        let grid = cfg.grid(h)?;
        let init = cfg.initial_data(&grid)?;
        let trace = Flow::new(cfg.flow_config()?, grid.clone())?.evolve(&init.field)?;
        let r = ab_constant(&trace, cfg.ab_window, cfg.band)?;
        let ok = r.c_star_w <= cfg.tol.ab;
        passed &= ok;
        std::fs::write(
            out.level(i, n)?.join("ab.json"),
            serde_json::to_string_pretty(&r).unwrap(),
        )?;
        println!(
            "h = {h}: C* = {:.6} (bound {}), worst node {:?} at t = {:?}: {}",
            r.c_star_w,
            cfg.tol.ab,
            r.worst_node.map(|id| grid.node(id).pos),
            r.worst_time,
            if ok { "pass" } else { "FAIL" }
        );
        levels.push(json!({
            "h": h,
            "c_star_w": r.c_star_w,
            "c_star_v": r.c_star_v,
            "bound": cfg.tol.ab,
            "worst_node": r.worst_node,
            "worst_time": r.worst_time,
            "passed": ok,
        }));
    }
    Ok(Outcome {
        passed,
        summary: json!({ "levels": levels }),
    })
}

pub fn comparison(cfg: &RunConfig, out: &RunDir) -> Result<Outcome, CliError> {
    let n = cfg.levels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut levels = Vec::new();
    let mut passed = true;
    for (i, &h) in cfg.levels.iter().enumerate() {
        let grid = cfg.grid(h)?;
        let base = cfg.initial_data(&grid)?.field;
        let flow = Flow::new(cfg.flow_config()?, grid.clone())?;
        let mut csv = String::from("pair,max_violation,worst_node,worst_time,steps\n");
        let mut worst: f64 = 0.0;
        for k in 0..cfg.pairs {
            let mut low = Field::zeros(grid.clone());
            let mut high = Field::zeros(grid.clone());
            for id in grid.interior_ids() {
                let a: f64 = rng.gen();
                let b: f64 = rng.gen();
                low.values_mut()[id] = base.get(id) * a;
                high.values_mut()[id] = base.get(id) * (a + b);
            }
            let r = comparison_harness(&flow, &low, &high, cfg.t_end)?;
            worst = worst.max(r.max_violation);
            writeln!(
                csv,
                "{k},{:e},{},{},{}",
                r.max_violation,
                r.worst_node.map(|v| v.to_string()).unwrap_or_default(),
                r.worst_time.map(|v| v.to_string()).unwrap_or_default(),
                r.steps
            )
            .unwrap();
            if !r.passed(cfg.tol.comparison) {
                println!(
                    "  pair {k}: violation {:e} at node {:?} (t = {:?})",
                    r.max_violation, r.worst_node, r.worst_time
                );
            }
        }
        let ok = worst <= cfg.tol.comparison;
        passed &= ok;
        std::fs::write(out.level(i, n)?.join("comparison.csv"), csv)?;
        println!(
            "h = {h}: {} pairs, worst violation {worst:e} (tolerance {:e}): {}",
            cfg.pairs,
            cfg.tol.comparison,
            if ok { "pass" } else { "FAIL" }
        );
        levels.push(json!({ "h": h, "pairs": cfg.pairs, "max_violation": worst, "passed": ok }));
    }
    Ok(Outcome {
        passed,
        summary: json!({ "levels": levels }),
    })
}

pub fn barriers(cfg: &RunConfig, out: &RunDir) -> Result<Outcome, CliError> {
    let kind = cfg.operator_kind()?;
    let center = cfg.center;
    let barrier = match cfg.barrier {
        BarrierChoice::HeatKernel => BarrierKind::HeatKernelSub { center },
        BarrierChoice::TruncatedHeat { c0, tau0, delta0 } => BarrierKind::TruncatedHeatSub {
            c0,
            tau0,
            delta0,
            center,
        },
        BarrierChoice::Barenblatt { c } => BarrierKind::BarenblattSub { c, center },
    };
    let spec = BarrierSpec::new(barrier, *kind.spec(), cfg.m)?;
    let mut csv =
        String::from("h,worst,max_abs,threshold,nodes_checked,worst_node,worst_time,passed\n");
    let mut levels = Vec::new();
    let mut passed = true;
    let mut prev: Option<(f64, f64)> = None;
    for &h in &cfg.levels {
        let grid = cfg.grid(h)?;
        let tol = cfg.tol.residual_factor * h * h;
        let r = residual_check(&spec, &kind, &grid, &cfg.barrier_times, Sign::Sub, tol)?;
        passed &= r.passed;
        let order = prev.map(|(ph, pr)| (pr / r.max_abs).ln() / (ph / h).ln());
        prev = Some((h, r.max_abs));
        writeln!(
            csv,
            "{h},{:e},{:e},{:e},{},{},{},{}",
            r.worst,
            r.max_abs,
            r.threshold,
            r.nodes_checked,
            r.worst_node.map(|v| v.to_string()).unwrap_or_default(),
            r.worst_time.map(|v| v.to_string()).unwrap_or_default(),
            r.passed
        )
        .unwrap();
        println!(
            "h = {h}: min residual {:e} (threshold -{tol:e}), max |residual| {:e}{}: {}",
            r.worst,
            r.max_abs,
            order.map(|p| format!(", order {p:.3}")).unwrap_or_default(),
            if r.passed { "pass" } else { "FAIL" }
        );
        if !r.passed {
            println!(
                "  worst at node {:?} ({:?}), t = {:?}",
                r.worst_node,
                r.worst_node.map(|id| grid.node(id).pos),
                r.worst_time
            );
        }
        levels.push(json!({ "h": h, "report": r, "order": order }));
    }
    out.write("barriers.csv", &csv)?;
    Ok(Outcome {
        passed,
        summary: json!({ "levels": levels }),
    })
}

pub fn experiment(name: &str, out: &RunDir) -> Result<Outcome, CliError> {
    let outcomes = if name == "all" {
        verify::run_all()
            .into_iter()
            .map(|(_, r)| r)
            .collect::<Result<Vec<_>, _>>()?
    } else {
        vec![verify::run_experiment(name)?]
    };
    for o in &outcomes {
        println!(
            "{} [{}] {:.2} s",
            o.name,
            if o.passed { "PASS" } else { "FAIL" },
            o.wall_time_s
        );
        for c in &o.checks {
            println!(
                "  {} {}: measured {:e}, threshold {:e}",
                if c.passed { "ok  " } else { "FAIL" },
                c.name,
                c.measured,
                c.threshold
            );
        }
    }
    out.write(
        "outcome.json",
        &serde_json::to_string_pretty(&outcomes).unwrap(),
    )?;
    out.write("checks.csv", &verify::outcomes_csv(&outcomes))?;
    let summary: serde_json::Map<String, Value> = outcomes
        .iter()
        .flat_map(|o| {
            o.checks
                .iter()
                .map(move |c| (format!("{}.{}", o.name, c.name), json!(c.measured)))
        })
        .collect();
    Ok(Outcome {
        passed: outcomes.iter().all(|o| o.passed),
        summary: Value::Object(summary),
    })
}

fn manifests(dir: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            manifests(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == "manifest.json") {
            found.push(p);
        }
    }
    Ok(())
}

/// Numeric leaves of `v`, keyed by dotted path.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, f64)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Number(n) => out.push((prefix.to_string(), n.as_f64().unwrap_or(f64::NAN))),
        Value::Bool(b) => out.push((prefix.to_string(), if *b { 1.0 } else { 0.0 })),
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&join(k), v, out)),
        Value::Array(a) => a
            .iter()
            .enumerate()
            .for_each(|(i, v)| flatten(&join(&i.to_string()), v, out)),
        _ => {}
    }
}

pub fn report(dir: &Path, force: bool) -> Result<u8, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    for name in ["summary.json", "summary.csv"] {
        if dir.join(name).exists() && !force {
            return Err(CliError::Usage(format!(
                "{} exists; pass --force to overwrite",
                dir.join(name).display()
            )));
        }
    }
    let mut found = Vec::new();
    manifests(dir, &mut found)?;
    if found.is_empty() {
        return Err(CliError::Usage(format!(
            "no manifest.json under {}",
            dir.display()
        )));
    }
    let mut runs = Vec::new();
    let mut csv = String::from("run,command,status,wall_time_s,metric,value\n");
    let mut failed = 0;
    for p in &found {
        let text = std::fs::read_to_string(p)?;
        let m: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        let run = p
            .parent()
            .and_then(|d| d.strip_prefix(dir).ok())
            .map(|d| d.display().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| ".".into());
        let command = m["command"].as_str().unwrap_or("?");
        let status = m["status"].as_str().unwrap_or("?");
        let wall = m["wall_time_s"].as_f64().unwrap_or(f64::NAN);
        if status != "pass" {
            failed += 1;
        }
        let mut metrics = Vec::new();
        flatten("", &m["summary"], &mut metrics);
        if metrics.is_empty() {
            writeln!(csv, "{run},{command},{status},{wall},,").unwrap();
        }
        for (k, v) in &metrics {
            writeln!(csv, "{run},{command},{status},{wall},{k},{v}").unwrap();
        }
        runs.push(json!({
            "run": run,
            "command": command,
            "status": status,
            "exit_code": m["exit_code"],
            "wall_time_s": wall,
            "version": m["version"],
            "error": m["error"],
            "summary": m["summary"],
        }));
    }
    let total = runs.len();
    let summary = json!({ "runs": runs, "total": total, "not_passed": failed });
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).unwrap(),
    )?;
    std::fs::write(dir.join("summary.csv"), csv)?;
    println!(
        "report: {total} runs, {failed} not passed -> {}",
        dir.join("summary.json").display()
    );
    Ok(if failed == 0 { 0 } else { 1 })
}
