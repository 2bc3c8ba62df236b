//! Explicit time stepping of `u_t = F(D²u)` and, for `m > 1`, of `w = u^m` solving
//! `w_t = m w^{1-1/m} F(D²w)`.
//!
//! The degenerate coefficient is frozen at the start of every step, which keeps the
//! update nondecreasing in every node value under the CFL restriction. Hence ordered
//! data stay ordered, exactly, when two flows share a time step sequence.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{hopf_slope, SlopeSummary};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::matrix::OperatorKind;
use crate::scalar::Real;
use crate::stencil::{DiscreteOperator, StencilSet};

const COEFFICIENT_FLOOR: f64 = 1e-14;
const PARALLEL_MIN_NODES: usize = 4096;

/// When to record snapshots. `t = 0` and `t_end` are always recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnapshotSchedule<T> {
    Geometric { first: T, ratio: T },
    Uniform { dt_snap: T },
}

impl<T: Real> SnapshotSchedule<T> {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Geometric { first, ratio } => first > T::zero() && ratio > T::one(),
            Self::Uniform { dt_snap } => dt_snap > T::zero(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid snapshot schedule {self:?}")))
        }
    }

    /// Snapshot times in `(0, t_end]`, ending with `t_end`.
    pub fn times(&self, t_end: T) -> Vec<T> {
        let mut out = Vec::new();
        match *self {
            Self::Geometric { first, ratio } => {
                let mut t = first;
                while t < t_end {
                    out.push(t);
                    t *= ratio;
                }
            }
            Self::Uniform { dt_snap } => {
                let mut k = 1usize;
                loop {
                    let t = T::from_usize_lossy(k) * dt_snap;
                    if t >= t_end * (T::one() - T::lit(1e-12)) {
                        break;
                    }
                    out.push(t);
                    k += 1;
                }
            }
        }
        out.push(t_end);
        out
    }
}

/// Parameters of a flow run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig<T> {
    /// Diffusion exponent `m ≥ 1`.
    pub m: T,
    pub operator: OperatorKind<T>,
    /// Dirichlet value `η` of `u` on the boundary; zero unless `m > 1`.
    pub boundary_value: T,
    pub cfl_safety: T,
    pub t_end: T,
    pub schedule: SnapshotSchedule<T>,
    /// Number of wide-stencil frames requested in 2D.
    pub frames: usize,
    /// Largest entry of a lattice direction.
    pub reach: i64,
    pub max_steps: usize,
}

impl<T: Real> FlowConfig<T> {
    pub fn new(m: T, operator: OperatorKind<T>, t_end: T) -> Self {
        Self {
            m,
            operator,
            boundary_value: T::zero(),
            cfl_safety: T::lit(0.5),
            t_end,
            schedule: SnapshotSchedule::Uniform {
                dt_snap: t_end / T::lit(16.0),
            },
            frames: 8,
            reach: 2,
            max_steps: 200_000_000,
        }
    }

    pub fn with_schedule(mut self, schedule: SnapshotSchedule<T>) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_boundary_value(mut self, eta: T) -> Self {
        self.boundary_value = eta;
        self
    }

    pub fn with_safety(mut self, safety: T) -> Self {
        self.cfl_safety = safety;
        self
    }

    pub fn with_frames(mut self, frames: usize) -> Self {
        self.frames = frames;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.m >= T::one()) {
            return Err(Error::Config(format!("m = {} must be >= 1", self.m)));
        }
        if !(self.boundary_value.is_finite() && self.boundary_value >= T::zero()) {
            return Err(Error::Config(format!(
                "boundary value eta = {} must be >= 0",
                self.boundary_value
            )));
        }
        if self.m == T::one() && self.boundary_value != T::zero() {
            return Err(Error::Config(format!(
                "m = 1 requires eta = 0, got eta = {}",
                self.boundary_value
            )));
        }
        if !(self.cfl_safety > T::zero() && self.cfl_safety <= T::one()) {
            return Err(Error::Config(format!(
                "cfl_safety = {} must lie in (0, 1]",
                self.cfl_safety
            )));
        }
        if !(self.t_end.is_finite() && self.t_end > T::zero()) {
            return Err(Error::Config(format!(
                "t_end = {} must be positive",
                self.t_end
            )));
        }
        self.schedule.validate()
    }

    pub fn is_linear(&self) -> bool {
        self.m == T::one()
    }
}

/// Evolved state: `u` when `m = 1`, `w = u^m` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState<T> {
    pub t: T,
    pub values: Vec<T>,
    pub steps: usize,
}

/// A configured flow bound to a grid.
#[derive(Debug, Clone)]
pub struct Flow<T> {
    config: FlowConfig<T>,
    op: DiscreteOperator<T>,
    base_dt: T,
}

impl<T: Real> Flow<T> {
    pub fn new(config: FlowConfig<T>, grid: Arc<Grid<T>>) -> Result<Self> {
        config.validate()?;
        let stencils = StencilSet::new(grid.dim(), config.frames, config.reach)?;
        let op = DiscreteOperator::new(config.operator.clone(), stencils, grid.clone())?;
        let h = grid.h();
        let n = T::from_usize_lossy(grid.dim());
        let base_dt = config.cfl_safety * h * h
            / (T::lit(2.0) * n * config.operator.max_coefficient() * op.cfl_weight());
        Ok(Self {
            config,
            op,
            base_dt,
        })
    }

    pub fn config(&self) -> &FlowConfig<T> {
        &self.config
    }

    pub fn operator(&self) -> &DiscreteOperator<T> {
        &self.op
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        self.op.grid()
    }

    /// Stable step for the given evolved values (`u` or `w`).
    pub fn cfl_dt_values(&self, values: &[T]) -> T {
        if self.config.is_linear() {
            return self.base_dt;
        }
        let m = self.config.m;
        let wmax = values.iter().fold(T::zero(), |a, &b| a.max(b));
        let coeff = (m * wmax.powf(T::one() - T::one() / m)).max(T::lit(COEFFICIENT_FLOOR));
        self.base_dt / coeff
    }

    /// Stable step for the field `u`.
    pub fn cfl_dt(&self, u: &Field<T>) -> Result<T> {
        self.op.check_grid(u)?;
        Ok(self.cfl_dt_values(&self.to_state_values(u.values())))
    }

    fn to_state_values(&self, u: &[T]) -> Vec<T> {
        if self.config.is_linear() {
            u.to_vec()
        } else {
            let m = self.config.m;
            u.iter().map(|&x| x.max(T::zero()).powf(m)).collect()
        }
    }

    fn boundary_state_value(&self) -> T {
        self.config.boundary_value.powf(self.config.m)
    }

    /// Checks `u₀ ≥ η` and builds the evolved state with Dirichlet values imposed.
    pub fn state(&self, u0: &Field<T>) -> Result<FlowState<T>> {
        self.op.check_grid(u0)?;
        let eta = self.config.boundary_value;
        let grid = self.grid();
        for id in grid.interior_ids() {
            let v = u0.get(id);
            if !v.is_finite() || v < eta {
                return Err(Error::InputDomain(format!(
                    "initial value {v} at node {id} ({:?}) is below the boundary value {eta}",
                    grid.node(id).pos
                )));
            }
        }
        let mut values = self.to_state_values(u0.values());
        let b = self.boundary_state_value();
        for v in &mut values[grid.boundary_ids()] {
            *v = b;
        }
        Ok(FlowState {
            t: T::zero(),
            values,
            steps: 0,
        })
    }

    /// One explicit step of the evolved variable from `w` into `out`.
    pub fn step_values(&self, w: &[T], dt: T, out: &mut [T], t: T) -> Result<()> {
        let grid = self.grid();
        let ni = grid.n_interior();
        let m = self.config.m;
        let linear = self.config.is_linear();
        let expo = T::one() - T::one() / m;
        let update = |id: usize| -> T {
            let f = self.op.eval_node(w, id);
            if linear {
                w[id] + dt * f
            } else {
                let c = m * w[id].powf(expo);
                (w[id] + dt * c * f).max(T::zero())
            }
        };
        if ni >= PARALLEL_MIN_NODES {
            out[..ni]
                .par_iter_mut()
                .with_min_len(512)
                .enumerate()
                .for_each(|(id, o)| *o = update(id));
        } else {
            for (id, o) in out[..ni].iter_mut().enumerate() {
                *o = update(id);
            }
        }
        let b = self.boundary_state_value();
        for v in &mut out[grid.boundary_ids()] {
            *v = b;
        }
        if let Some(node) = out[..ni].iter().position(|v| !v.is_finite()) {
            return Err(Error::Integration {
                node,
                time: (t + dt).as_f64(),
                message: format!("non-finite value after step of size {dt}"),
            });
        }
        Ok(())
    }

    /// `u` after one explicit step of size `dt` from `u`.
    pub fn step(&self, u: &Field<T>, dt: T) -> Result<Field<T>> {
        let st = self.state(u)?;
        let mut out = vec![T::zero(); st.values.len()];
        self.step_values(&st.values, dt, &mut out, T::zero())?;
        Ok(self.u_field(&out))
    }

    /// `u + dt (F_h(u) + μ u)` for the linear flow.
    pub fn step_shifted(&self, u: &Field<T>, dt: T, mu: T) -> Result<Field<T>> {
        let mut out = self.step(u, dt)?;
        for id in self.grid().interior_ids() {
            out.values_mut()[id] += dt * mu * u.get(id);
        }
        Ok(out)
    }

    /// Advances `state` to exactly `t_target`, with CFL-limited steps.
    pub fn advance(&self, state: &mut FlowState<T>, t_target: T) -> Result<()> {
        let mut scratch = vec![T::zero(); state.values.len()];
        while state.t < t_target {
            if state.steps >= self.config.max_steps {
                return Err(Error::NoConvergence {
                    steps: state.steps,
                    message: format!("step budget exhausted at t = {}", state.t),
                    history: Vec::new(),
                });
            }
            let mut dt = self.cfl_dt_values(&state.values);
            let last = t_target - state.t <= dt;
            if last {
                dt = t_target - state.t;
            }
            self.step_values(&state.values, dt, &mut scratch, state.t)?;
            std::mem::swap(&mut state.values, &mut scratch);
            state.t = if last { t_target } else { state.t + dt };
            state.steps += 1;
        }
        Ok(())
    }

    /// `u` from evolved values.
    pub fn u_field(&self, values: &[T]) -> Field<T> {
        let grid = self.grid().clone();
        if self.config.is_linear() {
            Field::from_raw(grid, values.to_vec())
        } else {
            let p = T::one() / self.config.m;
            Field::from_raw(grid, values.iter().map(|&w| w.powf(p)).collect())
        }
    }

    fn snapshot(&self, state: &FlowState<T>) -> Snapshot<T> {
        let u = self.u_field(&state.values);
        let w = (!self.config.is_linear())
            .then(|| Field::from_raw(self.grid().clone(), state.values.clone()));
        let slope_source = w.as_ref().unwrap_or(&u);
        let boundary_slope = hopf_slope(slope_source).ok();
        Snapshot {
            t: state.t,
            sup_norm: u.sup_norm(),
            u,
            w,
            steps: state.steps,
            boundary_slope,
        }
    }

    /// Runs from `u0` to `t_end`, recording the configured snapshots.
    pub fn evolve(&self, u0: &Field<T>) -> Result<FlowTrace<T>> {
        let mut state = self.state(u0)?;
        let mut trace = FlowTrace {
            m: self.config.m,
            snapshots: vec![self.snapshot(&state)],
        };
        if self.config.t_end < self.cfl_dt_values(&state.values) {
            return Ok(trace);
        }
        for t in self.config.schedule.times(self.config.t_end) {
            self.advance(&mut state, t)?;
            trace.snapshots.push(self.snapshot(&state));
        }
        Ok(trace)
    }
}

/// A recorded time level.
#[derive(Debug, Clone)]
pub struct Snapshot<T> {
    pub t: T,
    pub u: Field<T>,
    /// `u^m`, recorded when `m > 1`.
    pub w: Option<Field<T>>,
    pub sup_norm: T,
    pub steps: usize,
    pub boundary_slope: Option<SlopeSummary>,
}

/// Snapshots at strictly increasing times.
#[derive(Debug, Clone)]
pub struct FlowTrace<T> {
    pub m: T,
    pub snapshots: Vec<Snapshot<T>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TraceManifest {
    m: f64,
    times: Vec<f64>,
    sup_norms: Vec<f64>,
    steps: Vec<usize>,
    boundary_slopes: Vec<Option<SlopeSummary>>,
    files: Vec<String>,
    config: serde_json::Value,
}

impl<T: Real> FlowTrace<T> {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn times(&self) -> Vec<T> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn sup_norms(&self) -> Vec<T> {
        self.snapshots.iter().map(|s| s.sup_norm).collect()
    }

    pub fn last(&self) -> &Snapshot<T> {
        self.snapshots
            .last()
            .expect("a trace holds the initial snapshot")
    }

    pub fn steps(&self) -> usize {
        self.last().steps
    }

    /// Writes `snapshot_XXXX.csv` files and `trace.json` into `dir`.
    pub fn export(&self, dir: &Path, config: serde_json::Value) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (k, s) in self.snapshots.iter().enumerate() {
            let name = format!("snapshot_{k:04}.csv");
            std::fs::write(dir.join(&name), s.u.to_csv())?;
            files.push(name);
        }
        let manifest = TraceManifest {
            m: self.m.as_f64(),
            times: self.times().iter().map(|t| t.as_f64()).collect(),
            sup_norms: self.sup_norms().iter().map(|t| t.as_f64()).collect(),
            steps: self.snapshots.iter().map(|s| s.steps).collect(),
            boundary_slopes: self.snapshots.iter().map(|s| s.boundary_slope).collect(),
            files,
            config,
        };
        std::fs::write(
            dir.join("trace.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }
}

/// Outcome of evolving two ordered data with a shared step sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `max (low - high)₊` over all steps and nodes.
    pub max_violation: f64,
    pub worst_node: Option<usize>,
    pub worst_time: Option<f64>,
    pub steps: usize,
}

impl ComparisonReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// Evolves `low ≤ high` side by side with `dt = min` of both CFL steps, checking the
/// ordering after every step.
pub fn comparison_harness<T: Real>(
    flow: &Flow<T>,
    low: &Field<T>,
    high: &Field<T>,
    t_end: T,
) -> Result<ComparisonReport> {
    for (k, (a, b)) in low.values().iter().zip(high.values()).enumerate() {
        if a > b {
            return Err(Error::InputDomain(format!(
                "initial data not ordered at node {k}: {a} > {b}"
            )));
        }
    }
    let mut sa = flow.state(low)?;
    let mut sb = flow.state(high)?;
    let mut scratch = vec![T::zero(); sa.values.len()];
    let mut report = ComparisonReport {
        max_violation: 0.0,
        worst_node: None,
        worst_time: None,
        steps: 0,
    };
    while sa.t < t_end {
        let mut dt = flow
            .cfl_dt_values(&sa.values)
            .min(flow.cfl_dt_values(&sb.values));
        let last = t_end - sa.t <= dt;
        if last {
            dt = t_end - sa.t;
        }
        flow.step_values(&sa.values, dt, &mut scratch, sa.t)?;
        std::mem::swap(&mut sa.values, &mut scratch);
        flow.step_values(&sb.values, dt, &mut scratch, sb.t)?;
        std::mem::swap(&mut sb.values, &mut scratch);
        let t = if last { t_end } else { sa.t + dt };
        sa.t = t;
        sb.t = t;
        report.steps += 1;
        for (k, (a, b)) in sa.values.iter().zip(&sb.values).enumerate() {
            let v = (*a - *b).as_f64();
            if v > report.max_violation {
                report.max_violation = v;
                report.worst_node = Some(k);
                report.worst_time = Some(t.as_f64());
            }
        }
    }
    Ok(report)
}

/// Solutions at `t_end` for a ladder of boundary lifts `η`, data lifted to `max(u₀, η)`,
/// with sup distances between consecutive levels.
pub fn eta_sweep<T: Real>(
    config: &FlowConfig<T>,
    grid: &Arc<Grid<T>>,
    u0: &Field<T>,
    etas: &[T],
) -> Result<(Vec<Field<T>>, Vec<T>)> {
    let mut finals = Vec::with_capacity(etas.len());
    for &eta in etas {
        let flow = Flow::new(config.clone().with_boundary_value(eta), grid.clone())?;
        let lifted = u0.map(|v| v.max(eta));
        let mut st = flow.state(&lifted)?;
        flow.advance(&mut st, config.t_end)?;
        finals.push(flow.u_field(&st.values));
    }
    let gaps = finals
        .windows(2)
        .map(|p| p[0].sup_distance(&p[1]))
        .collect();
    Ok((finals, gaps))
}
