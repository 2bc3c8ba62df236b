//! Concavity diagnostics on grid fields.
//!
//! Midpoint tests use only triples whose midpoint is itself a lattice node, so no
//! interpolation enters. All tests are restricted to a band `dist ≥ δ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::flow::FlowTrace;
use crate::grid::{band_nodes, Field, Grid};
use crate::scalar::Real;

/// Pointwise transform applied before a concavity test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "exponent", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Log,
    Power(f64),
}

impl Transform {
    fn needs_positive(&self) -> bool {
        !matches!(self, Transform::Identity)
    }

    #[inline]
    pub fn apply<T: Real>(&self, v: T) -> T {
        match *self {
            Transform::Identity => v,
            Transform::Log => v.ln(),
            Transform::Power(q) => v.powf(T::lit(q)),
        }
    }
}

/// A midpoint triple `(x, y, (x+y)/2)` by node id with its second difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub x: usize,
    pub y: usize,
    pub mid: usize,
    pub value: f64,
}

fn triple_order(a: &Triple, b: &Triple) -> Ordering {
    // larger value first, then lexicographic ids
    b.value
        .partial_cmp(&a.value)
        .unwrap_or(Ordering::Equal)
        .then((a.x, a.y, a.mid).cmp(&(b.x, b.y, b.mid)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub transform: Transform,
    /// Band width in units of `h`.
    pub band: f64,
    /// Largest `T(u(x)) + T(u(y)) - 2T(u(mid))`; `-inf` when no triple exists.
    pub worst: f64,
    pub worst_triple: Option<Triple>,
    pub admissible: usize,
    /// `‖T(u)‖_∞` over the band.
    pub scale: f64,
    /// Largest eigenvalue of the discrete Hessian of `T(u)` over the band.
    pub max_hessian_eigenvalue: f64,
    /// `-max_hessian_eigenvalue` when that is negative.
    pub c1: Option<f64>,
    /// Worst triples, at most 100, worst first.
    pub top: Vec<Triple>,
}

impl ConcavityReport {
    /// `worst ≤ rel_tol · ‖T(u)‖_∞`.
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.worst <= rel_tol * self.scale
    }

    /// CSV of the worst triples with node coordinates.
    pub fn top_csv<T: Real>(&self, grid: &Grid<T>) -> String {
        let mut s = String::from("x0,x1,y0,y1,mid0,mid1,value\n");
        for t in &self.top {
            let (a, b, c) = (grid.node(t.x).pos, grid.node(t.y).pos, grid.node(t.mid).pos);
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                a[0], a[1], b[0], b[1], c[0], c[1], t.value
            ));
        }
        s
    }
}

/// Transformed values on the band plus a membership lookup.
struct BandData<T> {
    ids: Vec<usize>,
    in_band: Vec<bool>,
    values: Vec<T>,
}

fn band_data<T: Real>(u: &Field<T>, transform: Transform, band: T) -> Result<BandData<T>> {
    let grid = u.grid();
    let ids = band_nodes(grid, band * grid.h());
    let mut in_band = vec![false; grid.len()];
    let mut values = vec![T::nan(); grid.len()];
    for &id in &ids {
        let v = u.get(id);
        if transform.needs_positive() && !(v > T::zero()) {
            return Err(Error::InputDomain(format!(
                "{transform:?} transform needs positive values; node {id} at {:?} has {v}",
                grid.node(id).pos
            )));
        }
        in_band[id] = true;
        values[id] = transform.apply(v);
    }
    Ok(BandData {
        ids,
        in_band,
        values,
    })
}

const TOP: usize = 100;

/// Worst midpoint second difference of `T(u)` over all admissible triples in the band.
pub fn midpoint_concavity<T: Real>(
    u: &Field<T>,
    transform: Transform,
    band: T,
) -> Result<ConcavityReport> {
    let grid = u.grid();
    let data = band_data(u, transform, band)?;
    let lattice: Vec<[i64; 2]> = data
        .ids
        .iter()
        .map(|&id| grid.node(id).lattice.unwrap())
        .collect();
    let two = T::lit(2.0);
    let per_x: Vec<(usize, Vec<Triple>)> = (0..data.ids.len())
        .into_par_iter()
        .map(|a| {
            let x = data.ids[a];
            let la = lattice[a];
            let mut count = 0usize;
            let mut top: Vec<Triple> = Vec::new();
            let mut floor = f64::NEG_INFINITY;
            for b in a + 1..data.ids.len() {
                let lb = lattice[b];
                if (la[0] + lb[0]) % 2 != 0 || (la[1] + lb[1]) % 2 != 0 {
                    continue;
                }
                let Some(mid) = grid.lattice_node([(la[0] + lb[0]) / 2, (la[1] + lb[1]) / 2])
                else {
                    continue;
                };
                if !data.in_band[mid] {
                    continue;
                }
                count += 1;
                let y = data.ids[b];
                let v = (data.values[x] + data.values[y] - two * data.values[mid]).as_f64();
                if top.len() < TOP || v > floor {
                    top.push(Triple {
                        x,
                        y,
                        mid,
                        value: v,
                    });
                    if top.len() > 2 * TOP {
                        top.sort_by(triple_order);
                        top.truncate(TOP);
                        floor = top[TOP - 1].value;
                    }
                }
            }
            top.sort_by(triple_order);
            top.truncate(TOP);
            (count, top)
        })
        .collect();
    let admissible = per_x.iter().map(|p| p.0).sum();
    let mut top: Vec<Triple> = per_x.into_iter().flat_map(|p| p.1).collect();
    top.sort_by(triple_order);
    top.truncate(TOP);
    let scale = data
        .ids
        .iter()
        .map(|&id| data.values[id].abs().as_f64())
        .fold(0.0, f64::max);
    let (max_eig, c1) = hessian_from(u, transform, &data)?;
    Ok(ConcavityReport {
        transform,
        band: band.as_f64(),
        worst: top.first().map_or(f64::NEG_INFINITY, |t| t.value),
        worst_triple: top.first().copied(),
        admissible,
        scale,
        max_hessian_eigenvalue: max_eig,
        c1,
        top,
    })
}

fn hessian_from<T: Real>(
    u: &Field<T>,
    transform: Transform,
    data: &BandData<T>,
) -> Result<(f64, Option<f64>)> {
    let grid = u.grid();
    let h2 = grid.h() * grid.h();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let dim = grid.dim();
    let eigs: Vec<f64> = data
        .ids
        .par_iter()
        .map(|&id| {
            let li = grid.node(id).lattice.unwrap();
            // a stencil reaching a boundary node gives NaN under Log and is skipped
            let get = |d: [i64; 2]| -> T {
                grid.lattice_node([li[0] + d[0], li[1] + d[1]])
                    .map_or(T::nan(), |nb| transform.apply(u.get(nb)))
            };
            let c = data.values[id];
            let second = |d: [i64; 2]| (get(d) - two * c + get([-d[0], -d[1]])) / h2;
            let h11 = second([1, 0]);
            if dim == 1 {
                return h11.as_f64();
            }
            let h22 = second([0, 1]);
            let h12 = (second([1, 1]) - second([1, -1])) / four;
            let mean = (h11 + h22) / two;
            let rad = (((h11 - h22) / two).powi(2) + h12 * h12).sqrt();
            (mean + rad).as_f64()
        })
        .collect();
    let max_eig = eigs
        .into_iter()
        .filter(|e| e.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((max_eig, (max_eig < 0.0).then_some(-max_eig)))
}

/// Largest discrete-Hessian eigenvalue of `T(u)` over the band and `c₁ = -` that value
/// when negative. Nodes whose stencil touches a boundary node are skipped.
pub fn hessian_bound<T: Real>(
    u: &Field<T>,
    transform: Transform,
    band: T,
) -> Result<(f64, Option<f64>)> {
    let data = band_data(u, transform, band)?;
    hessian_from(u, transform, &data)
}

/// Worst violation per audited snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSeries {
    pub times: Vec<f64>,
    pub worst: Vec<f64>,
    pub tolerance: Vec<f64>,
    pub passed: bool,
}

/// Runs [`midpoint_concavity`] on every `every`-th snapshot (always the first and last).
/// Refuses when the initial datum fails the same check.
pub fn preservation_audit<T: Real>(
    trace: &FlowTrace<T>,
    transform: Transform,
    band: T,
    every: usize,
) -> Result<AuditSeries> {
    const REL: f64 = 1e-8;
    let n = trace.len();
    let first = midpoint_concavity(&trace.snapshots[0].u, transform, band)?;
    if !first.passes(REL) {
        return Err(Error::InputDomain(format!(
            "initial datum fails the {transform:?} midpoint test (worst {} at {:?}); the audit needs a concave start",
            first.worst, first.worst_triple
        )));
    }
    let every = every.max(1);
    let picks: Vec<usize> = (0..n).filter(|k| k % every == 0 || *k == n - 1).collect();
    let reports: Vec<Result<ConcavityReport>> = picks
        .par_iter()
        .map(|&k| midpoint_concavity(&trace.snapshots[k].u, transform, band))
        .collect();
    let mut out = AuditSeries {
        times: Vec::new(),
        worst: Vec::new(),
        tolerance: Vec::new(),
        passed: true,
    };
    for (k, r) in picks.into_iter().zip(reports) {
        let r = r?;
        out.times.push(trace.snapshots[k].t.as_f64());
        out.worst.push(r.worst);
        out.tolerance.push(REL * r.scale);
        out.passed &= r.passes(REL);
    }
    Ok(out)
}

/// Quantity whose Hessian is probed for eventual strong concavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProbeQuantity {
    /// `log u`.
    Log,
    /// `√(t v)` with the pressure `v = m/(m-1) u^{m-1}`.
    SqrtPressure { m: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventualConcavity {
    /// First snapshot from which `max eig D²Q ≤ -(c₁ - ε)` through the end.
    pub index: Option<usize>,
    pub t0: Option<f64>,
    /// `max eig + (c₁ - ε)` at every snapshot; nonpositive means the bound holds.
    pub margins: Vec<f64>,
    /// Smallest margin seen when the bound is never reached for good.
    pub closest_margin: f64,
}

/// Scans the trace for the time after which `D²Q ≤ -(c₁ - ε) I` on the band.
pub fn eventual_concavity_probe<T: Real>(
    trace: &FlowTrace<T>,
    quantity: ProbeQuantity,
    c1: f64,
    eps: f64,
    band: T,
) -> Result<EventualConcavity> {
    let margins: Vec<f64> = trace
        .snapshots
        .par_iter()
        .map(|s| {
            let (max_eig, _) = match quantity {
                ProbeQuantity::Log => hessian_bound(&s.u, Transform::Log, band)?,
                ProbeQuantity::SqrtPressure { m } => {
                    let (e, c) = hessian_bound(&s.u, Transform::Power((m - 1.0) / 2.0), band)?;
                    let k = (s.t.as_f64() * m / (m - 1.0)).sqrt();
                    (e * k, c.map(|c| c * k))
                }
            };
            Ok(max_eig + (c1 - eps))
        })
        .collect::<Result<_>>()?;
    let mut index = None;
    for k in (0..margins.len()).rev() {
        if margins[k] <= 0.0 {
            index = Some(k);
        } else {
            break;
        }
    }
    Ok(EventualConcavity {
        index,
        t0: index.map(|k| trace.snapshots[k].t.as_f64()),
        closest_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{distance_field, Domain};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn interval(a: f64, h: f64) -> Arc<Grid<f64>> {
        Grid::build(Domain::interval(a).unwrap(), h).unwrap()
    }

    #[test]
    fn examples() {
        let g = interval(PI, PI / 64.0);
        let tent = distance_field(&g);
        // affine pieces cancel only up to rounding
        assert!(midpoint_concavity(&tent, Transform::Identity, 4.0)
            .unwrap()
            .passes(1e-8));
        let sin = Field::from_fn(g.clone(), |p| p[0].sin());
        let r = midpoint_concavity(&sin, Transform::Log, 4.0).unwrap();
        assert!(r.worst <= 0.0);
        assert!(r.max_hessian_eigenvalue <= -1.0);

        // exp(x²) on [-1, 1], shifted onto [0, 2]
        let g = interval(2.0, 1.0 / 32.0);
        let e = Field::from_fn(g.clone(), |p| ((p[0] - 1.0).powi(2)).exp());
        assert!(midpoint_concavity(&e, Transform::Log, 4.0).unwrap().worst > 0.0);
    }

    #[test]
    fn log_rejects_nonpositive() {
        let g = interval(1.0, 1.0 / 16.0);
        let f = Field::from_fn(g.clone(), |p| p[0] - 0.5);
        assert!(matches!(
            midpoint_concavity(&f, Transform::Log, 2.0),
            Err(Error::InputDomain(_))
        ));
    }

    #[test]
    fn gaussian_on_disk_has_unit_c1() {
        let g = Grid::build(Domain::<f64>::disk(1.0).unwrap(), 0.05).unwrap();
        let u = Field::from_fn(g.clone(), |p| (-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp());
        let (eig, c1) = hessian_bound(&u, Transform::Log, 4.0).unwrap();
        assert!((eig + 1.0).abs() < 1e-9, "{eig}");
        assert!((c1.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn affine_log_hessian() {
        let g = interval(1.0, 1.0 / 64.0);
        let (a, b) = (2.0f64, 0.5);
        let u = Field::from_fn(g.clone(), |p| a * p[0] + b);
        let (eig, _) = hessian_bound(&u, Transform::Log, 4.0).unwrap();
        // sup of -(a/(ax+b))² is reached at the right end of the band
        let x = 1.0 - 4.0 / 64.0;
        let want = -(a / (a * x + b)).powi(2);
        assert!((eig - want).abs() < 1e-3 * want.abs(), "{eig} vs {want}");
        assert!(eig < 0.0);
    }

    #[test]
    fn power_one_is_identity_and_scale_invariance() {
        let g = Grid::build(Domain::<f64>::rectangle(1.0, 1.0).unwrap(), 1.0 / 16.0).unwrap();
        let u = Field::from_fn(g.clone(), |p| 1.0 + (3.0 * p[0]).sin() * p[1]);
        let a = midpoint_concavity(&u, Transform::Identity, 2.0).unwrap();
        let b = midpoint_concavity(&u, Transform::Power(1.0), 2.0).unwrap();
        assert_eq!(a.worst, b.worst);
        assert_eq!(a.admissible, b.admissible);
        let l1 = midpoint_concavity(&u, Transform::Log, 2.0).unwrap();
        let l2 = midpoint_concavity(&u.scale(8.0), Transform::Log, 2.0).unwrap();
        assert!((l1.worst - l2.worst).abs() < 1e-12);
    }

    #[test]
    fn band_monotonicity() {
        let g = Grid::build(Domain::<f64>::disk(1.0).unwrap(), 0.05).unwrap();
        let u = Field::from_fn(g.clone(), |p| 2.0 + (4.0 * p[0]).cos() * p[1]);
        let mut prev = f64::INFINITY;
        for band in [1.0, 2.0, 4.0, 8.0] {
            let r = midpoint_concavity(&u, Transform::Identity, band).unwrap();
            assert!(r.worst <= prev);
            prev = r.worst;
        }
    }

    #[test]
    fn quadratic_triples_match_hessian() {
        let g = Grid::build(Domain::<f64>::rectangle(1.0, 1.0).unwrap(), 1.0 / 16.0).unwrap();
        // Hessian diag(-2, -3): every midpoint difference is -vᵀHv/4 with v = y - x
        let u = Field::from_fn(g.clone(), |p| -(p[0] * p[0]) - 1.5 * p[1] * p[1]);
        let r = midpoint_concavity(&u, Transform::Identity, 2.0).unwrap();
        for t in &r.top {
            let (x, y) = (g.node(t.x).pos, g.node(t.y).pos);
            let (dx, dy) = (y[0] - x[0], y[1] - x[1]);
            let want = -(2.0 * dx * dx + 3.0 * dy * dy) / 4.0;
            assert!((t.value - want).abs() < 1e-12);
            assert!(t.value <= -2.0 * (dx * dx + dy * dy) / 4.0 + 1e-12);
        }
    }

    #[test]
    fn top_csv_has_rows() {
        let g = interval(1.0, 1.0 / 16.0);
        let u = Field::from_fn(g.clone(), |p| p[0] * (1.0 - p[0]));
        let r = midpoint_concavity(&u, Transform::Identity, 1.0).unwrap();
        assert_eq!(r.top_csv(&g).lines().count(), r.top.len() + 1);
        assert!(r.admissible > 0);
    }
}
