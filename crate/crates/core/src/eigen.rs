//! Principal eigenpairs from renormalized flows.
//!
//! Linear mode: `v = e^{μt} u` settles on `γ* φ`, with `μ` read off the sup-norm
//! log-slope. Sublinear mode (`m > 1`): `z = t^{1/(m-1)} u` settles on the profile `f`
//! with `-F(D²f^m) = f/(m-1)`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{Flow, FlowConfig, FlowState, FlowTrace, Snapshot, SnapshotSchedule};
use crate::grid::{band_nodes, cb_report, distance_field, CbReport, Field, Grid};
use crate::matrix::OperatorKind;
use crate::scalar::Real;
use crate::stencil::DiscreteOperator;

/// Extremes of the inward gradient magnitude over boundary nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub min: f64,
    pub max: f64,
    /// Boundary nodes that contributed.
    pub count: usize,
    /// Nodes without two interior samples along a grid line, or with a grazing line.
    pub skipped: usize,
    /// Corner nodes, where the normal is not defined.
    pub corners: usize,
}

/// One-sided second-order derivative at 0 from samples at `0, s1, s2`.
#[inline]
pub fn one_sided_derivative<T: Real>(f0: T, f1: T, f2: T, s1: T, s2: T) -> T {
    -(s1 + s2) / (s1 * s2) * f0 + s2 / (s1 * (s2 - s1)) * f1 - s1 / (s2 * (s2 - s1)) * f2
}

/// Inward gradient magnitude at every boundary node with a usable grid line.
pub fn hopf_slope<T: Real>(profile: &Field<T>) -> Result<SlopeSummary> {
    let grid = profile.grid();
    let mut out = SlopeSummary {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        count: 0,
        skipped: 0,
        corners: 0,
    };
    for id in grid.boundary_ids() {
        let Some(p) = grid.probe(id) else {
            out.skipped += 1;
            continue;
        };
        if p.corner {
            out.corners += 1;
            continue;
        }
        if p.normal_cos < T::lit(0.1) {
            out.skipped += 1;
            continue;
        }
        let d = one_sided_derivative(
            profile.get(id),
            profile.get(p.first.node),
            profile.get(p.second.node),
            p.first.length,
            p.second.length,
        );
        let g = (d / p.normal_cos).as_f64();
        out.min = out.min.min(g);
        out.max = out.max.max(g);
        out.count += 1;
    }
    if out.count == 0 {
        return Err(Error::InputDomain(
            "no boundary node has two interior samples along a grid line".into(),
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EigenMode {
    Linear { mu: f64 },
    Sublinear { m: f64, mu: f64 },
}

/// One convergence check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub t: f64,
    /// Sup-norm change of the renormalized profile since the previous check.
    pub change: f64,
    /// Log-slope decay rate over the last interval (linear mode).
    pub mu_hat: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EigenResult<T> {
    pub mode: EigenMode,
    /// Sup-normalized `φ` (linear) or the limit `f` (sublinear).
    pub profile: Field<T>,
    /// Limit amplitude `lim e^{μ̂t} ‖u(t)‖_∞` (linear only).
    pub gamma_star: Option<f64>,
    /// Raw sup-norm log-slope `μ̂`; `μ = (1 - e^{-μ̂ dt}) / dt` (linear only).
    pub mu_hat: Option<f64>,
    pub log: Vec<LogEntry>,
    pub slopes: SlopeSummary,
    /// `‖F_h(φ) + μ φ‖` or `‖F_h(f^m) + f/(m-1)‖` on the band `dist ≥ 4h`.
    pub residual: f64,
    pub residual_bound: f64,
    pub steps: usize,
    pub dt: f64,
    /// Comparability of `u₀^m` with the distance (sublinear only).
    pub cb: Option<CbReport>,
    /// Doubling-time snapshots of `u` (sublinear only).
    pub trace: Option<FlowTrace<T>>,
}

impl<T: Real> EigenResult<T> {
    pub fn mu(&self) -> f64 {
        match self.mode {
            EigenMode::Linear { mu } | EigenMode::Sublinear { mu, .. } => mu,
        }
    }

    pub fn residual_ok(&self) -> bool {
        self.residual <= self.residual_bound
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mode": self.mode,
            "mu": self.mu(),
            "mu_hat": self.mu_hat,
            "gamma_star": self.gamma_star,
            "convergence": self.log,
            "slopes": self.slopes,
            "residual": self.residual,
            "residual_bound": self.residual_bound,
            "steps": self.steps,
            "dt": self.dt,
            "cb": self.cb,
        })
    }

    /// Writes `eigen.json` and `profile.csv`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("eigen.json"),
            serde_json::to_string_pretty(&self.to_json())?,
        )?;
        std::fs::write(dir.join("profile.csv"), self.profile.to_csv())?;
        Ok(())
    }
}

/// Tolerances and discretization knobs shared by both solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions<T> {
    pub tol_mu: T,
    pub tol_profile: T,
    pub max_steps: usize,
    pub cfl_safety: T,
    pub frames: usize,
    pub reach: i64,
}

impl<T: Real> Default for EigenOptions<T> {
    fn default() -> Self {
        Self {
            tol_mu: T::lit(1e-5),
            tol_profile: T::lit(1e-4),
            max_steps: 50_000_000,
            cfl_safety: T::lit(0.5),
            frames: 8,
            reach: 2,
        }
    }
}

impl<T: Real> EigenOptions<T> {
    fn flow(&self, kind: &OperatorKind<T>, grid: &Arc<Grid<T>>, m: T) -> Result<Flow<T>> {
        let mut cfg = FlowConfig::new(m, kind.clone(), T::one())
            .with_safety(self.cfl_safety)
            .with_frames(self.frames);
        cfg.reach = self.reach;
        cfg.max_steps = self.max_steps;
        Flow::new(cfg, grid.clone())
    }
}

fn check_nonzero<T: Real>(u0: &Field<T>) -> Result<()> {
    let g = u0.grid();
    if g.interior_ids().all(|id| u0.get(id) == T::zero()) {
        return Err(Error::InputDomain("initial data vanish identically".into()));
    }
    if let Some(id) = g.interior_ids().find(|&id| u0.get(id) < T::zero()) {
        return Err(Error::InputDomain(format!(
            "initial data negative at node {id} ({})",
            u0.get(id)
        )));
    }
    Ok(())
}

fn band_residual<T: Real>(op: &DiscreteOperator<T>, x: &Field<T>, rhs: impl Fn(usize) -> T) -> f64 {
    let grid = op.grid();
    let f = op.apply(x).expect("same grid");
    band_nodes(grid, T::lit(4.0) * grid.h())
        .into_iter()
        .map(|id| (f.get(id) + rhs(id)).abs().as_f64())
        .fold(0.0, f64::max)
}

fn ensure_positive<T: Real>(profile: &Field<T>) -> Result<()> {
    let g = profile.grid();
    if let Some(id) = g.interior_ids().find(|&id| !(profile.get(id) > T::zero())) {
        return Err(Error::NoConvergence {
            steps: 0,
            message: format!("profile not positive at interior node {id}"),
            history: Vec::new(),
        });
    }
    Ok(())
}

/// Principal pair `(μ, φ)` of `-F(D²φ) = μ φ`.
pub fn solve_linear<T: Real>(
    kind: &OperatorKind<T>,
    grid: &Arc<Grid<T>>,
    u0: &Field<T>,
    opts: &EigenOptions<T>,
) -> Result<EigenResult<T>> {
    check_nonzero(u0)?;
    let flow = opts.flow(kind, grid, T::one())?;
    let mut state = flow.state(u0)?;
    let dt = flow.cfl_dt_values(&state.values);
    let norm0 = sup(&state.values);
    let mut log_scale = norm0.ln();
    normalize(&mut state.values, norm0);

    let mut chunk = 64usize;
    let mut prev = state.values.clone();
    let mut prev_mu: Option<T> = None;
    let mut log = Vec::new();
    let mut history = Vec::new();
    let mut scratch = vec![T::zero(); state.values.len()];
    let mut k = 0usize;
    loop {
        for _ in 0..chunk {
            flow.step_values(&state.values, dt, &mut scratch, state.t)?;
            std::mem::swap(&mut state.values, &mut scratch);
            state.steps += 1;
            state.t += dt;
        }
        let norm = sup(&state.values);
        if !(norm > T::zero()) {
            return Err(Error::Integration {
                node: 0,
                time: state.t.as_f64(),
                message: "solution vanished".into(),
            });
        }
        let mu_hat = -norm.ln() / (T::from_usize_lossy(chunk) * dt);
        normalize(&mut state.values, norm);
        log_scale += norm.ln();
        let change = sup_diff(&state.values, &prev);
        prev.copy_from_slice(&state.values);
        history.push(mu_hat.as_f64());
        log.push(LogEntry {
            iteration: k,
            t: state.t.as_f64(),
            change: change.as_f64(),
            mu_hat: Some(mu_hat.as_f64()),
        });
        if k == 0 {
            // one interval per e-fold of decay
            chunk = (T::one() / (mu_hat * dt))
                .round()
                .to_usize()
                .unwrap_or(1)
                .max(1);
        }
        if let Some(pm) = prev_mu {
            if (mu_hat - pm).abs() < opts.tol_mu && change < opts.tol_profile {
                let mu = (T::one() - (-mu_hat * dt).exp()) / dt;
                let profile = Field::new(grid.clone(), state.values.clone())?;
                ensure_positive(&profile)?;
                let gamma = (mu_hat * state.t + log_scale).exp();
                let residual = band_residual(flow.operator(), &profile, |id| mu * profile.get(id));
                let h = grid.h();
                return Ok(EigenResult {
                    mode: EigenMode::Linear { mu: mu.as_f64() },
                    slopes: hopf_slope(&profile)?,
                    profile,
                    gamma_star: Some(gamma.as_f64()),
                    mu_hat: Some(mu_hat.as_f64()),
                    log,
                    residual,
                    residual_bound: (T::lit(10.0) * (h * h + opts.tol_mu) * mu).as_f64(),
                    steps: state.steps,
                    dt: dt.as_f64(),
                    cb: None,
                    trace: None,
                });
            }
        }
        prev_mu = Some(mu_hat);
        k += 1;
        if state.steps >= opts.max_steps {
            return Err(Error::NoConvergence {
                steps: state.steps,
                message: "renormalized linear flow did not settle".into(),
                history,
            });
        }
    }
}

fn sup<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, b| a.max(b.abs()))
}

fn sup_diff<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (x, y)| m.max((*x - *y).abs()))
}

fn normalize<T: Real>(v: &mut [T], by: T) {
    for x in v {
        *x /= by;
    }
}

/// Limit profile `f` of `z = t^{1/(m-1)} u` for the flow `u_t = F(D²u^m)`.
pub fn solve_sublinear<T: Real>(
    kind: &OperatorKind<T>,
    grid: &Arc<Grid<T>>,
    m: T,
    u0: &Field<T>,
    opts: &EigenOptions<T>,
) -> Result<EigenResult<T>> {
    if !(m > T::one()) {
        return Err(Error::InputDomain(format!(
            "sublinear mode needs m > 1, got {m}"
        )));
    }
    check_nonzero(u0)?;
    let cb = cb_report(u0, &distance_field(grid), m);
    let flow = opts.flow(kind, grid, m)?;
    let mut state: FlowState<T> = flow.state(u0)?;
    let dt0 = flow.cfl_dt_values(&state.values);
    let expo = T::one() / (m - T::one());
    let mut t = T::lit(100.0) * dt0;
    let z_of = |st: &FlowState<T>| -> Vec<T> {
        let s = st.t.powf(expo);
        let p = T::one() / m;
        st.values.iter().map(|w| w.powf(p) * s).collect()
    };
    let mut snapshots: Vec<Snapshot<T>> = Vec::new();
    let mut push = |st: &FlowState<T>| {
        let u = flow.u_field(&st.values);
        snapshots.push(Snapshot {
            t: st.t,
            sup_norm: u.sup_norm(),
            w: Some(Field::from_raw(grid.clone(), st.values.clone())),
            u,
            steps: st.steps,
            boundary_slope: None,
        });
    };
    push(&state);
    flow.advance(&mut state, t)?;
    push(&state);
    let mut prev = z_of(&state);
    let mut log = Vec::new();
    let mut history = Vec::new();
    for k in 0.. {
        t = t + t;
        flow.advance(&mut state, t)?;
        push(&state);
        let z = z_of(&state);
        let change = sup_diff(&z, &prev);
        history.push(change.as_f64());
        log.push(LogEntry {
            iteration: k,
            t: t.as_f64(),
            change: change.as_f64(),
            mu_hat: None,
        });
        prev = z;
        if change < opts.tol_profile {
            break;
        }
        if state.steps >= opts.max_steps || k > 200 {
            return Err(Error::NoConvergence {
                steps: state.steps,
                message: "rescaled profile did not settle over time doublings".into(),
                history,
            });
        }
    }
    let mut profile = Field::new(grid.clone(), prev)?;
    profile.set_boundary(T::zero());
    ensure_positive(&profile)?;
    let fm = profile.map(|f| f.powf(m));
    let mu = T::one() / (m - T::one());
    let residual = band_residual(flow.operator(), &fm, |id| profile.get(id) * mu);
    let h = grid.h();
    Ok(EigenResult {
        mode: EigenMode::Sublinear {
            m: m.as_f64(),
            mu: mu.as_f64(),
        },
        slopes: hopf_slope(&fm)?,
        profile,
        gamma_star: None,
        mu_hat: None,
        log,
        residual,
        residual_bound: (T::lit(10.0) * (h * h + opts.tol_profile) * mu).as_f64(),
        steps: state.steps,
        dt: dt0.as_f64(),
        cb: Some(cb),
        trace: Some(FlowTrace { m, snapshots }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProbeMode {
    Linear,
    Sublinear { m: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub profile_gap: f64,
    pub mu: [f64; 2],
    pub gamma_star: [Option<f64>; 2],
    pub agree: bool,
}

/// Solves from two data and compares the sup-normalized profiles (agreement within 1e-3).
pub fn uniqueness_probe<T: Real>(
    kind: &OperatorKind<T>,
    grid: &Arc<Grid<T>>,
    mode: ProbeMode,
    u0_a: &Field<T>,
    u0_b: &Field<T>,
    opts: &EigenOptions<T>,
) -> Result<UniquenessReport> {
    let run = |u0: &Field<T>| match mode {
        ProbeMode::Linear => solve_linear(kind, grid, u0, opts),
        ProbeMode::Sublinear { m } => solve_sublinear(kind, grid, T::lit(m), u0, opts),
    };
    let (a, b) = rayon::join(|| run(u0_a), || run(u0_b));
    let (a, b) = (a?, b?);
    let na = a.profile.scale(T::one() / a.profile.sup_norm());
    let nb = b.profile.scale(T::one() / b.profile.sup_norm());
    let gap = na.sup_distance(&nb).as_f64();
    Ok(UniquenessReport {
        profile_gap: gap,
        mu: [a.mu(), b.mu()],
        gamma_star: [a.gamma_star, b.gamma_star],
        agree: gap <= 1e-3,
    })
}

/// Snapshot schedule with `count` geometric levels ending at `t_end`.
pub fn geometric_schedule<T: Real>(t_end: T, ratio: T, count: usize) -> SnapshotSchedule<T> {
    let first = t_end / ratio.powi(count as i32);
    SnapshotSchedule::Geometric { first, ratio }
}
