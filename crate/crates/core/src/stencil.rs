//! Monotone finite differences for `F(D²u)`.
//!
//! In 2D the Pucci operators are evaluated on a wide stencil: a set of orthonormal
//! frames realized by integer lattice vectors, each frame giving two directional
//! second differences. The axis frame uses unequal (Shortley–Weller) arms at cut
//! cells and is available everywhere; wider frames are used only where all four
//! endpoints are grid nodes.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Arm, Field, Grid};
use crate::matrix::{OperatorKind, OperatorVariant, SymMatrix};
use crate::scalar::Real;

/// An orthonormal pair of lattice directions, `v2` being `v1` turned by a right angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub v1: [i64; 2],
    pub v2: [i64; 2],
}

impl Frame {
    pub fn from_vector(v: [i64; 2]) -> Self {
        Self {
            v1: v,
            v2: [-v[1], v[0]],
        }
    }

    pub fn is_axis(&self) -> bool {
        self.v1 == [1, 0]
    }

    /// Squared length of either lattice vector.
    pub fn norm2(&self) -> i64 {
        self.v1[0] * self.v1[0] + self.v1[1] * self.v1[1]
    }

    /// Angle of `v1` in `[0, π/2)`.
    pub fn angle(&self) -> f64 {
        (self.v1[1] as f64).atan2(self.v1[0] as f64)
    }
}

/// Frames of a wide stencil.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StencilSet {
    dim: usize,
    requested: usize,
    reach: i64,
    frames: Vec<Frame>,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Distance between two frame angles, frames being defined modulo a right angle.
fn frame_angle_gap(a: f64, b: f64) -> f64 {
    let q = std::f64::consts::FRAC_PI_2;
    let d = (a - b).rem_euclid(q);
    d.min(q - d)
}

impl StencilSet {
    /// `k` target frames rotated by `iπ/(2k)`, each snapped to the closest lattice
    /// direction with entries of size at most `reach`; duplicates are dropped.
    pub fn new(dim: usize, k: usize, reach: i64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Stencil(format!(
                "stencils exist for 1D and 2D grids, not {dim}D"
            )));
        }
        if k == 0 || reach < 1 {
            return Err(Error::Stencil(format!(
                "need at least one frame and reach >= 1 (got k = {k}, reach = {reach})"
            )));
        }
        if dim == 1 {
            return Ok(Self {
                dim,
                requested: 1,
                reach: 1,
                frames: vec![Frame::from_vector([1, 0])],
            });
        }
        let mut candidates = Vec::new();
        for p in 0..=reach {
            for q in 0..=reach {
                // angle in [0, π/2): p > 0, q ≥ 0
                if p > 0 && gcd(p, q) == 1 {
                    candidates.push(Frame::from_vector([p, q]));
                }
            }
        }
        let mut frames: Vec<Frame> = Vec::new();
        for i in 0..k {
            let target = i as f64 * std::f64::consts::PI / (2.0 * k as f64);
            let best = candidates
                .iter()
                .min_by(|a, b| {
                    let ga = frame_angle_gap(a.angle(), target);
                    let gb = frame_angle_gap(b.angle(), target);
                    ga.partial_cmp(&gb).unwrap().then(a.norm2().cmp(&b.norm2()))
                })
                .copied()
                .unwrap();
            if !frames.contains(&best) {
                frames.push(best);
            }
        }
        Ok(Self {
            dim,
            requested: k,
            reach,
            frames,
        })
    }

    /// Eight target frames, directions up to knight moves.
    pub fn standard(dim: usize) -> Self {
        Self::new(dim, 8, 2).expect("standard stencil")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn requested(&self) -> usize {
        self.requested
    }

    pub fn reach(&self) -> i64 {
        self.reach
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    /// Largest angular gap between a target angle and its frame.
    pub fn angular_resolution(&self) -> f64 {
        if self.dim == 1 {
            return 0.0;
        }
        (0..self.requested)
            .map(|i| {
                let t = i as f64 * std::f64::consts::PI / (2.0 * self.requested as f64);
                self.frames
                    .iter()
                    .map(|f| frame_angle_gap(f.angle(), t))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
}

/// Shortley–Weller second difference with arms `a` (forward) and `b` (backward).
#[inline]
pub fn unequal_second_difference<T: Real>(up: T, u0: T, um: T, a: T, b: T) -> T {
    let two = T::lit(2.0);
    two * (up / (a * (a + b)) - u0 / (a * b) + um / (b * (a + b)))
}

#[derive(Debug, Clone)]
struct BellmanData<T> {
    matrix: SymMatrix<T>,
    /// `(A11 - |A12|, A22 - |A12|, |A12|, sign A12 ≥ 0)` when diagonally dominant.
    dominant: Option<(T, T, T, bool)>,
    /// Principal angle of the matrix, for frame projection.
    angle: f64,
    /// `(v1ᵀAv1, v2ᵀAv2) / |v|²` per frame.
    projected: Vec<(T, T)>,
}

/// `F_h`: an operator bound to a grid and a stencil set.
#[derive(Debug, Clone)]
pub struct DiscreteOperator<T> {
    kind: OperatorKind<T>,
    stencils: StencilSet,
    grid: Arc<Grid<T>>,
    /// Endpoint ids `[+v1, -v1, +v2, -v2]` per interior node and wide frame.
    wide: Vec<Option<[usize; 4]>>,
    /// `[+(1,1), -(1,1), +(1,-1), -(1,-1)]` per interior node, Bellman only.
    diag: Vec<Option<[usize; 4]>>,
    bellman: Vec<BellmanData<T>>,
    inv_len2: Vec<T>,
}

/// Ids `[+v1, -v1, +v2, -v2]` around an interior node when all exist.
fn frame_ids<T: Real>(grid: &Grid<T>, li: [i64; 2], f: &Frame) -> Option<[usize; 4]> {
    let at = |v: [i64; 2], s: i64| grid.lattice_node([li[0] + s * v[0], li[1] + s * v[1]]);
    Some([at(f.v1, 1)?, at(f.v1, -1)?, at(f.v2, 1)?, at(f.v2, -1)?])
}

impl<T: Real> DiscreteOperator<T> {
    pub fn new(kind: OperatorKind<T>, stencils: StencilSet, grid: Arc<Grid<T>>) -> Result<Self> {
        let dim = grid.dim();
        if stencils.dim() != dim {
            return Err(Error::Stencil(format!(
                "{}D stencil set on a {dim}D grid",
                stencils.dim()
            )));
        }
        let nf = stencils.frames().len();
        let ni = grid.n_interior();
        let mut wide = Vec::new();
        if dim == 2 && nf > 1 {
            wide = Vec::with_capacity(ni * (nf - 1));
            for id in grid.interior_ids() {
                let li = grid
                    .node(id)
                    .lattice
                    .expect("interior nodes are lattice points");
                for f in &stencils.frames()[1..] {
                    wide.push(frame_ids(&grid, li, f));
                }
            }
        }
        let mut diag = Vec::new();
        let mut bellman = Vec::new();
        if let OperatorVariant::BellmanInf(list) = kind.variant() {
            if list[0].dim() != dim {
                return Err(Error::Stencil(format!(
                    "Bellman matrices are {}x{} but the grid is {dim}D",
                    list[0].dim(),
                    list[0].dim()
                )));
            }
            if dim == 2 {
                let f = Frame::from_vector([1, 1]);
                diag = grid
                    .interior_ids()
                    .map(|id| frame_ids(&grid, grid.node(id).lattice.unwrap(), &f))
                    .collect();
            }
            for a in list {
                let dominant = if dim == 2 {
                    let (a11, a12, a22) = (a.get(0, 0), a.get(0, 1), a.get(1, 1));
                    let g = a12.abs();
                    (g <= a11 && g <= a22).then_some((a11 - g, a22 - g, g, a12 >= T::zero()))
                } else {
                    None
                };
                let projected = stencils
                    .frames()
                    .iter()
                    .map(|f| {
                        let n2 = T::lit(f.norm2() as f64);
                        let q = |v: [i64; 2]| {
                            let v = [T::lit(v[0] as f64), T::lit(v[1] as f64)];
                            if dim == 1 {
                                a.get(0, 0) * v[0] * v[0]
                            } else {
                                a.quad_form(&v[..]) / n2
                            }
                        };
                        (q(f.v1), q(f.v2))
                    })
                    .collect();
                let angle = if dim == 2 {
                    a.principal_angle().as_f64()
                } else {
                    0.0
                };
                bellman.push(BellmanData {
                    matrix: *a,
                    dominant,
                    angle,
                    projected,
                });
            }
        }
        let h2 = grid.h() * grid.h();
        let inv_len2 = stencils
            .frames()
            .iter()
            .map(|f| T::one() / (h2 * T::lit(f.norm2() as f64)))
            .collect();
        Ok(Self {
            kind,
            stencils,
            grid,
            wide,
            diag,
            bellman,
            inv_len2,
        })
    }

    /// Standard wide stencil.
    pub fn standard(kind: OperatorKind<T>, grid: Arc<Grid<T>>) -> Result<Self> {
        let dim = grid.dim();
        Self::new(kind, StencilSet::standard(dim), grid)
    }

    pub fn kind(&self) -> &OperatorKind<T> {
        &self.kind
    }

    pub fn stencils(&self) -> &StencilSet {
        &self.stencils
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    fn wide_ids(&self, id: usize, frame: usize) -> Option<[usize; 4]> {
        let nf = self.stencils.frames().len();
        self.wide[id * (nf - 1) + frame - 1]
    }

    /// Whether frame `frame` is usable at interior node `id`.
    pub fn frame_usable(&self, id: usize, frame: usize) -> bool {
        frame == 0 || self.wide_ids(id, frame).is_some()
    }

    /// Directional second differences `(δ₁, δ₂)` of frame `frame` at interior node `id`.
    /// In 1D `δ₂` is zero.
    pub fn frame_deltas(&self, u: &[T], id: usize, frame: usize) -> Option<[T; 2]> {
        let u0 = u[id];
        if frame == 0 {
            let arms = self.grid.arms(id);
            let sw = |p: &Arm<T>, m: &Arm<T>| {
                unequal_second_difference(u[p.node], u0, u[m.node], p.length, m.length)
            };
            let d1 = sw(&arms[0], &arms[1]);
            let d2 = if self.grid.dim() == 2 {
                sw(&arms[2], &arms[3])
            } else {
                T::zero()
            };
            return Some([d1, d2]);
        }
        let ids = self.wide_ids(id, frame)?;
        let two = T::lit(2.0);
        let s = self.inv_len2[frame];
        Some([
            (u[ids[0]] - two * u0 + u[ids[1]]) * s,
            (u[ids[2]] - two * u0 + u[ids[3]]) * s,
        ])
    }

    fn usable_frames(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.stencils.frames().len()).filter(move |&f| self.frame_usable(id, f))
    }

    /// Pucci frame extremes `(min_f M⁻_f, max_f M⁺_f)` over usable frames at a node.
    pub fn pucci_frame_bounds(&self, u: &[T], id: usize) -> (T, T) {
        let spec = self.kind.spec();
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for f in self.usable_frames(id) {
            let d = self.frame_deltas(u, id, f).unwrap();
            let minus: T = d.iter().map(|&x| spec.minus_coefficient(x) * x).sum();
            let plus: T = d.iter().map(|&x| spec.plus_coefficient(x) * x).sum();
            lo = lo.min(minus);
            hi = hi.max(plus);
        }
        (lo, hi)
    }

    /// `F_h(u)` at interior node `id`, with the index of the frame that realized it
    /// (for Bellman operators, the index of the minimizing matrix).
    pub fn eval_node_selected(&self, u: &[T], id: usize) -> (T, usize) {
        let spec = self.kind.spec();
        match self.kind.variant() {
            OperatorVariant::Laplacian => {
                let d = self.frame_deltas(u, id, 0).unwrap();
                (d[0] + d[1], 0)
            }
            OperatorVariant::PucciMinus | OperatorVariant::PucciPlus => {
                let minus = matches!(self.kind.variant(), OperatorVariant::PucciMinus);
                let mut best = if minus {
                    T::infinity()
                } else {
                    T::neg_infinity()
                };
                let mut arg = 0;
                for f in self.usable_frames(id) {
                    let d = self.frame_deltas(u, id, f).unwrap();
                    let v: T = if minus {
                        d.iter().map(|&x| spec.minus_coefficient(x) * x).sum()
                    } else {
                        d.iter().map(|&x| spec.plus_coefficient(x) * x).sum()
                    };
                    if (minus && v < best) || (!minus && v > best) {
                        best = v;
                        arg = f;
                    }
                }
                (best, arg)
            }
            OperatorVariant::BellmanInf(_) => {
                let mut best = T::infinity();
                let mut arg = 0;
                for (k, b) in self.bellman.iter().enumerate() {
                    let v = self.bellman_value(u, id, b);
                    if v < best {
                        best = v;
                        arg = k;
                    }
                }
                (best, arg)
            }
        }
    }

    fn bellman_value(&self, u: &[T], id: usize, b: &BellmanData<T>) -> T {
        let u0 = u[id];
        if self.grid.dim() == 1 {
            let d = self.frame_deltas(u, id, 0).unwrap();
            return b.matrix.get(0, 0) * d[0];
        }
        if let (Some((cx, cy, g, positive)), Some(ids)) = (b.dominant, self.diag[id]) {
            let d = self.frame_deltas(u, id, 0).unwrap();
            let two = T::lit(2.0);
            let h2 = self.grid.h() * self.grid.h();
            let (p, m) = if positive {
                (ids[0], ids[1])
            } else {
                (ids[2], ids[3])
            };
            let dd = (u[p] - two * u0 + u[m]) / h2;
            return cx * d[0] + cy * d[1] + g * dd;
        }
        let mut frame = 0;
        let mut gap = f64::INFINITY;
        for f in self.usable_frames(id) {
            let g = frame_angle_gap(self.stencils.frames()[f].angle(), b.angle);
            if g < gap - 1e-12 {
                gap = g;
                frame = f;
            }
        }
        let d = self.frame_deltas(u, id, frame).unwrap();
        let (c1, c2) = b.projected[frame];
        c1 * d[0] + c2 * d[1]
    }

    #[inline]
    pub fn eval_node(&self, u: &[T], id: usize) -> T {
        self.eval_node_selected(u, id).0
    }

    /// Writes `F_h(u)` at interior nodes of `out`; boundary entries are left untouched.
    pub fn apply_into(&self, u: &[T], out: &mut [T]) {
        let ni = self.grid.n_interior();
        out[..ni]
            .par_iter_mut()
            .with_min_len(256)
            .enumerate()
            .for_each(|(id, o)| *o = self.eval_node(u, id));
    }

    /// `F_h(u)` at interior nodes, zero at boundary nodes.
    pub fn apply(&self, u: &Field<T>) -> Result<Field<T>> {
        self.check_grid(u)?;
        let mut out = vec![T::zero(); self.grid.len()];
        self.apply_into(u.values(), &mut out);
        Ok(Field::from_raw(self.grid.clone(), out))
    }

    /// Frame (or Bellman matrix) index selected at each interior node.
    pub fn selected(&self, u: &Field<T>) -> Result<Vec<usize>> {
        self.check_grid(u)?;
        Ok((0..self.grid.n_interior())
            .into_par_iter()
            .map(|id| self.eval_node_selected(u.values(), id).1)
            .collect())
    }

    pub(crate) fn check_grid(&self, u: &Field<T>) -> Result<()> {
        if Arc::ptr_eq(u.grid(), &self.grid) {
            Ok(())
        } else {
            Err(Error::InputDomain(
                "field lives on a different grid than the operator".into(),
            ))
        }
    }

    /// Every node that can enter the update at interior node `id`.
    pub fn neighbours(&self, id: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.grid.arms(id)[..2 * self.grid.dim()]
            .iter()
            .map(|a| a.node)
            .collect();
        for f in 1..self.stencils.frames().len() {
            if let Some(ids) = self.wide_ids(id, f) {
                out.extend_from_slice(&ids);
            }
        }
        if let Some(Some(ids)) = self.diag.get(id) {
            out.extend_from_slice(ids);
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Upper bound on the centre weight `-∂F_h/∂u(x)` over all nodes, in units of
    /// `2 n Λ / h²`; the CFL factor `W`.
    pub fn cfl_weight(&self) -> T {
        self.grid.cut_cell_weight()
    }
}

/// `(u(x+v) - 2u(x) + u(x-v)) / |v|²` along lattice vector `direction` scaled by `h`.
/// Axis directions use the cut-cell arms.
pub fn directional_second_difference<T: Real>(
    u: &Field<T>,
    node: usize,
    direction: [i64; 2],
) -> Result<T> {
    let grid = u.grid();
    if node >= grid.n_interior() {
        return Err(Error::InputDomain(format!("node {node} is not interior")));
    }
    let v = u.values();
    let axis = match direction {
        [1, 0] | [-1, 0] => Some(0),
        [0, 1] | [0, -1] => Some(1),
        _ => None,
    };
    if let Some(k) = axis {
        if k >= grid.dim() {
            return Err(Error::Stencil("direction leaves a 1D lattice".into()));
        }
        let arms = grid.arms(node);
        let (p, m) = (arms[2 * k], arms[2 * k + 1]);
        return Ok(unequal_second_difference(
            v[p.node], v[node], v[m.node], p.length, m.length,
        ));
    }
    if grid.dim() == 1 {
        return Err(Error::Stencil("direction leaves a 1D lattice".into()));
    }
    let li = grid.node(node).lattice.unwrap();
    let at = |s: i64| grid.lattice_node([li[0] + s * direction[0], li[1] + s * direction[1]]);
    let (Some(p), Some(m)) = (at(1), at(-1)) else {
        return Err(Error::Stencil(format!(
            "offset {direction:?} from node {node} leaves the grid"
        )));
    };
    let n2 = T::lit((direction[0] * direction[0] + direction[1] * direction[1]) as f64);
    let h = grid.h();
    Ok((v[p] - T::lit(2.0) * v[node] + v[m]) / (h * h * n2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    pub node: usize,
    pub neighbour: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub trials: usize,
    pub violations: Vec<MonotonicityViolation>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Randomized check that raising one neighbour value never lowers `F_h` at a node.
pub fn monotonicity_audit<T: Real>(
    op: &DiscreteOperator<T>,
    trials: usize,
    seed: u64,
) -> MonotonicityReport {
    let grid = op.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = T::lit(1e-6);
    let mut violations = Vec::new();
    let mut u: Vec<T> = vec![T::zero(); grid.len()];
    for trial in 0..trials {
        if trial % 50 == 0 {
            for x in u.iter_mut() {
                *x = T::lit(rng.gen_range(-1.0..1.0));
            }
        }
        let node = rng.gen_range(0..grid.n_interior());
        let nbrs = op.neighbours(node);
        let nb = nbrs[rng.gen_range(0..nbrs.len())];
        let before = op.eval_node(&u, node);
        let saved = u[nb];
        u[nb] = saved + eps;
        let after = op.eval_node(&u, node);
        u[nb] = saved;
        if after < before {
            violations.push(MonotonicityViolation {
                node,
                neighbour: nb,
                before: before.as_f64(),
                after: after.as_f64(),
            });
        }
    }
    MonotonicityReport { trials, violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::matrix::EllipticitySpec;
    use std::f64::consts::PI;

    fn square(h: f64) -> Arc<Grid<f64>> {
        Grid::build(Domain::rectangle(1.0, 1.0).unwrap(), h).unwrap()
    }

    #[test]
    fn standard_frames() {
        let s = StencilSet::standard(2);
        let v: Vec<[i64; 2]> = s.frames().iter().map(|f| f.v1).collect();
        assert_eq!(v, vec![[1, 0], [2, 1], [1, 1], [1, 2]]);
        assert_eq!(StencilSet::standard(1).frames().len(), 1);
        let k4 = StencilSet::new(2, 4, 2).unwrap();
        for f in k4.frames() {
            assert!(s.frames().contains(f));
        }
        assert!(StencilSet::new(3, 8, 2).is_err());
        assert!(StencilSet::new(2, 0, 2).is_err());
    }

    #[test]
    fn frames_are_orthogonal() {
        for f in StencilSet::new(2, 32, 5).unwrap().frames() {
            assert_eq!(f.v1[0] * f.v2[0] + f.v1[1] * f.v2[1], 0);
            assert_eq!(f.norm2(), f.v2[0] * f.v2[0] + f.v2[1] * f.v2[1]);
        }
    }

    #[test]
    fn directional_examples() {
        let g = Grid::build(Domain::interval(PI).unwrap(), PI / 32.0).unwrap();
        let u = Field::from_fn(g.clone(), |p| p[0] * p[0]);
        for id in g.interior_ids() {
            let d = directional_second_difference(&u, id, [1, 0]).unwrap();
            assert!((d - 2.0).abs() < 1e-11);
        }
        let c = Field::from_fn(g.clone(), |_| 3.0);
        assert_eq!(directional_second_difference(&c, 3, [1, 0]).unwrap(), 0.0);
        assert!(directional_second_difference(&c, 3, [1, 1]).is_err());

        let g = square(0.125);
        let u = Field::from_fn(g.clone(), |p| p[0] * p[1]);
        let id = g.lattice_node([3, 4]).unwrap();
        let d = directional_second_difference(&u, id, [1, 1]).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        let corner = g.lattice_node([1, 1]).unwrap();
        assert!(directional_second_difference(&u, corner, [2, 1]).is_err());
    }

    #[test]
    fn shortley_weller_exact_on_quadratics() {
        let g = Grid::build(Domain::disk(1.0).unwrap(), 0.1).unwrap();
        let u = Field::from_fn(g.clone(), |p| 3.0 * p[0] * p[0] - p[1] * p[1] + p[0]);
        for id in g.interior_ids() {
            let dx: f64 = directional_second_difference(&u, id, [1, 0]).unwrap();
            let dy: f64 = directional_second_difference(&u, id, [0, 1]).unwrap();
            assert!((dx - 6.0).abs() < 1e-9 && (dy + 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn apply_examples() {
        let g = square(1.0 / 16.0);
        let unit = OperatorKind::pucci_minus(EllipticitySpec::unit());
        let op = DiscreteOperator::standard(unit, g.clone()).unwrap();
        let u = Field::from_fn(g.clone(), |p| p[0] * p[0] + p[1] * p[1]);
        let f = op.apply(&u).unwrap();
        for id in g.interior_ids() {
            assert!((f.get(id) - 4.0).abs() < 1e-10);
        }

        let op = DiscreteOperator::standard(
            OperatorKind::pucci_minus(EllipticitySpec::new(1.0, 2.0).unwrap()),
            g.clone(),
        )
        .unwrap();
        let u = Field::from_fn(g.clone(), |p| p[0] * p[0] - p[1] * p[1]);
        let f = op.apply(&u).unwrap();
        let sel = op.selected(&u).unwrap();
        for id in g.interior_ids() {
            assert!((f.get(id) + 2.0).abs() < 1e-10);
            assert_eq!(sel[id], 0);
        }

        let g = Grid::build(Domain::interval(PI).unwrap(), PI / 128.0).unwrap();
        let op = DiscreteOperator::standard(
            OperatorKind::pucci_minus(EllipticitySpec::new(1.0, 2.0).unwrap()),
            g.clone(),
        )
        .unwrap();
        let u = Field::from_fn(g.clone(), |p| p[0].sin());
        let f = op.apply(&u).unwrap();
        let h = g.h();
        for id in g.interior_ids() {
            let x = g.node(id).pos[0];
            assert!((f.get(id) + 2.0 * x.sin()).abs() <= 2.0 * x.sin() * h * h / 12.0 * 1.01);
        }
    }

    #[test]
    fn consistency_order() {
        let spec = EllipticitySpec::new(1.0, 2.0).unwrap();
        for kind in [
            OperatorKind::pucci_plus(spec),
            OperatorKind::pucci_minus(spec),
        ] {
            let mut prev: Option<f64> = None;
            for (h, k) in [(1.0 / 16.0, 8), (1.0 / 32.0, 16), (1.0 / 64.0, 32)] {
                let g = square(h);
                let op = DiscreteOperator::new(
                    kind.clone(),
                    StencilSet::new(2, k, 2).unwrap(),
                    g.clone(),
                )
                .unwrap();
                let u = Field::from_fn(g.clone(), |p| (p[0] + p[1]).exp());
                let f = op.apply(&u).unwrap();
                // D²u = e^{x+y} [[1,1],[1,1]] is positive semidefinite
                let c = if kind == OperatorKind::pucci_plus(spec) {
                    2.0
                } else {
                    1.0
                };
                let err = g
                    .interior_ids()
                    .map(|id| {
                        let p = g.node(id).pos;
                        (f.get(id) - c * 2.0 * (p[0] + p[1]).exp()).abs()
                    })
                    .fold(0.0, f64::max);
                if let Some(e) = prev {
                    assert!(e / err >= 3.5, "ratio {}", e / err);
                }
                prev = Some(err);
            }
        }
    }

    #[test]
    fn audits_pass() {
        let spec = EllipticitySpec::new(0.5, 2.5).unwrap();
        let a = SymMatrix::new2(1.5, 0.5, 1.5);
        let b = SymMatrix::new2(1.2, -0.7, 1.5);
        let kinds = vec![
            OperatorKind::pucci_minus(spec),
            OperatorKind::pucci_plus(spec),
            OperatorKind::laplacian(spec),
            OperatorKind::new(OperatorVariant::BellmanInf(vec![a, b]), spec).unwrap(),
        ];
        let g = Grid::build(Domain::disk(1.0).unwrap(), 0.1).unwrap();
        for k in kinds {
            let op = DiscreteOperator::standard(k, g.clone()).unwrap();
            let r = monotonicity_audit(&op, 500, 7);
            assert!(r.passed(), "{:?}", r.violations);
        }
    }

    #[test]
    fn bellman_diagonal_form_is_exact_on_quadratics() {
        let spec = EllipticitySpec::new(0.5, 3.0).unwrap();
        let a = SymMatrix::new2(1.5, -0.5, 1.2);
        let g = square(0.125);
        let op = DiscreteOperator::standard(
            OperatorKind::new(OperatorVariant::BellmanInf(vec![a]), spec).unwrap(),
            g.clone(),
        )
        .unwrap();
        let hess = SymMatrix::new2(2.0, 0.7, -1.0);
        let u = Field::from_fn(g.clone(), |p| 0.5 * hess.quad_form(&p[..]));
        let f = op.apply(&u).unwrap();
        let want = a.trace_product(&hess);
        for id in g.interior_ids() {
            assert!((f.get(id) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn frame_count_monotone_for_pucci_minus() {
        let spec = EllipticitySpec::new(1.0, 3.0).unwrap();
        let g = square(1.0 / 16.0);
        let u = Field::from_fn(g.clone(), |p| (3.0 * p[0] * p[1]).sin() + p[0].powi(3));
        let mut prev: Option<Field<f64>> = None;
        for k in [1, 2, 4, 8, 16] {
            let op = DiscreteOperator::new(
                OperatorKind::pucci_minus(spec),
                StencilSet::new(2, k, 2).unwrap(),
                g.clone(),
            )
            .unwrap();
            let f = op.apply(&u).unwrap();
            if let Some(p) = &prev {
                for id in g.interior_ids() {
                    assert!(f.get(id) <= p.get(id));
                }
            }
            prev = Some(f);
        }
    }

    #[test]
    fn foreign_field_rejected() {
        let g1 = square(0.125);
        let g2 = square(0.125);
        let op = DiscreteOperator::standard(OperatorKind::laplacian(EllipticitySpec::unit()), g1)
            .unwrap();
        assert!(op.apply(&Field::zeros(g2)).is_err());
    }
}
