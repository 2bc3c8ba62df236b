//! Uniform lattices over convex domains with cut-cell boundary nodes.
//!
//! The lattice is anchored at the origin: lattice point `(i, j)` sits at `(i h, j h)`.
//! Lattice points strictly inside the domain are interior nodes. Where a grid line
//! leaves the domain between an interior node and an exterior lattice point, a
//! boundary node is placed on the exact intersection with the boundary, so Dirichlet
//! data lives on the boundary itself and not on the nearest lattice point.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Shape of a convex domain.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape<T> {
    /// `[0, length]`.
    Interval { length: T },
    /// `[0, lx] × [0, ly]`.
    Rectangle { lx: T, ly: T },
    /// Disk of the given radius centred at the origin.
    Disk { radius: T },
    /// Convex polygon, vertices in counterclockwise order.
    Polygon { vertices: Vec<[T; 2]> },
}

/// A bounded convex domain in one or two dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain<T> {
    shape: Shape<T>,
    /// Only documents whether diagnostics relying on strict convexity apply; never verified.
    strictly_convex: bool,
}

/// Serializable descriptor of a [`Domain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainDescriptor {
    Interval { length: f64 },
    Rectangle { lx: f64, ly: f64 },
    Disk { radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

fn positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v.is_finite() && v > T::zero() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl<T: Real> Domain<T> {
    pub fn interval(length: T) -> Result<Self> {
        positive("interval length", length)?;
        Ok(Self {
            shape: Shape::Interval { length },
            strictly_convex: true,
        })
    }

    pub fn rectangle(lx: T, ly: T) -> Result<Self> {
        positive("rectangle width", lx)?;
        positive("rectangle height", ly)?;
        Ok(Self {
            shape: Shape::Rectangle { lx, ly },
            strictly_convex: false,
        })
    }

    pub fn disk(radius: T) -> Result<Self> {
        positive("disk radius", radius)?;
        Ok(Self {
            shape: Shape::Disk { radius },
            strictly_convex: true,
        })
    }

    pub fn polygon(vertices: Vec<[T; 2]>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::Config(
                "polygon needs at least three vertices".into(),
            ));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("polygon vertices must be finite".into()));
        }
        for k in 0..n {
            let a = vertices[k];
            let b = vertices[(k + 1) % n];
            let c = vertices[(k + 2) % n];
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if cross <= T::zero() {
                return Err(Error::Config(format!(
                    "polygon is not strictly convex counterclockwise at vertex {}",
                    (k + 1) % n
                )));
            }
        }
        Ok(Self {
            shape: Shape::Polygon { vertices },
            strictly_convex: false,
        })
    }

    pub fn from_descriptor(d: &DomainDescriptor) -> Result<Self> {
        match d {
            DomainDescriptor::Interval { length } => Self::interval(T::lit(*length)),
            DomainDescriptor::Rectangle { lx, ly } => Self::rectangle(T::lit(*lx), T::lit(*ly)),
            DomainDescriptor::Disk { radius } => Self::disk(T::lit(*radius)),
            DomainDescriptor::Polygon { vertices } => Self::polygon(
                vertices
                    .iter()
                    .map(|v| [T::lit(v[0]), T::lit(v[1])])
                    .collect(),
            ),
        }
    }

    pub fn descriptor(&self) -> DomainDescriptor {
        match &self.shape {
            Shape::Interval { length } => DomainDescriptor::Interval {
                length: length.as_f64(),
            },
            Shape::Rectangle { lx, ly } => DomainDescriptor::Rectangle {
                lx: lx.as_f64(),
                ly: ly.as_f64(),
            },
            Shape::Disk { radius } => DomainDescriptor::Disk {
                radius: radius.as_f64(),
            },
            Shape::Polygon { vertices } => DomainDescriptor::Polygon {
                vertices: vertices
                    .iter()
                    .map(|v| [v[0].as_f64(), v[1].as_f64()])
                    .collect(),
            },
        }
    }

    pub fn shape(&self) -> &Shape<T> {
        &self.shape
    }

    pub fn is_strictly_convex(&self) -> bool {
        self.strictly_convex
    }

    pub fn dim(&self) -> usize {
        match self.shape {
            Shape::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Smallest width of the bounding box.
    pub fn min_extent(&self) -> T {
        let (lo, hi) = self.bbox();
        if self.dim() == 1 {
            hi[0] - lo[0]
        } else {
            (hi[0] - lo[0]).min(hi[1] - lo[1])
        }
    }

    pub fn bbox(&self) -> ([T; 2], [T; 2]) {
        let z = T::zero();
        match &self.shape {
            Shape::Interval { length } => ([z, z], [*length, z]),
            Shape::Rectangle { lx, ly } => ([z, z], [*lx, *ly]),
            Shape::Disk { radius } => ([-*radius, -*radius], [*radius, *radius]),
            Shape::Polygon { vertices } => {
                let mut lo = [T::infinity(); 2];
                let mut hi = [T::neg_infinity(); 2];
                for v in vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    fn scale(&self) -> T {
        let (lo, hi) = self.bbox();
        (hi[0] - lo[0])
            .abs()
            .max((hi[1] - lo[1]).abs())
            .max(T::one())
    }

    /// Tolerance below which a point counts as lying on the boundary.
    pub fn boundary_eps(&self) -> T {
        T::lit(64.0) * T::epsilon() * self.scale()
    }

    /// Polygon edges as `(outward unit normal, offset)` with `n·x ≤ offset` inside.
    fn half_planes(vertices: &[[T; 2]]) -> Vec<([T; 2], T)> {
        let n = vertices.len();
        (0..n)
            .map(|k| {
                let a = vertices[k];
                let b = vertices[(k + 1) % n];
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let len = dx.hypot(dy);
                let normal = [dy / len, -dx / len];
                (normal, normal[0] * a[0] + normal[1] * a[1])
            })
            .collect()
    }

    /// Signed distance to the boundary, positive inside. Exact for points inside.
    pub fn signed_distance(&self, p: [T; 2]) -> T {
        match &self.shape {
            Shape::Interval { length } => p[0].min(*length - p[0]),
            Shape::Rectangle { lx, ly } => p[0].min(*lx - p[0]).min(p[1]).min(*ly - p[1]),
            Shape::Disk { radius } => *radius - p[0].hypot(p[1]),
            Shape::Polygon { vertices } => Self::half_planes(vertices)
                .iter()
                .map(|(nrm, c)| *c - (nrm[0] * p[0] + nrm[1] * p[1]))
                .fold(T::infinity(), T::min),
        }
    }

    /// Distance from an interior point to the boundary along the unit direction `d`.
    pub fn ray_exit(&self, p: [T; 2], d: [T; 2]) -> T {
        let z = T::zero();
        match &self.shape {
            Shape::Interval { length } => {
                if d[0] > z {
                    *length - p[0]
                } else {
                    p[0]
                }
            }
            Shape::Rectangle { lx, ly } => {
                let mut s = T::infinity();
                if d[0] > z {
                    s = s.min((*lx - p[0]) / d[0]);
                } else if d[0] < z {
                    s = s.min(-p[0] / d[0]);
                }
                if d[1] > z {
                    s = s.min((*ly - p[1]) / d[1]);
                } else if d[1] < z {
                    s = s.min(-p[1] / d[1]);
                }
                s
            }
            Shape::Disk { radius } => {
                let pd = p[0] * d[0] + p[1] * d[1];
                let pp = p[0] * p[0] + p[1] * p[1];
                -pd + (pd * pd - pp + *radius * *radius).max(z).sqrt()
            }
            Shape::Polygon { vertices } => {
                let mut s = T::infinity();
                for (nrm, c) in Self::half_planes(vertices) {
                    let nd = nrm[0] * d[0] + nrm[1] * d[1];
                    if nd > z {
                        s = s.min((c - (nrm[0] * p[0] + nrm[1] * p[1])) / nd);
                    }
                }
                s
            }
        }
    }

    /// Inward unit normal at a boundary point, and whether the point is a corner
    /// (where the normal is not unique).
    pub fn inward_normal(&self, p: [T; 2]) -> ([T; 2], bool) {
        let z = T::zero();
        let one = T::one();
        let eps = T::lit(1e3) * self.boundary_eps();
        match &self.shape {
            Shape::Interval { length } => {
                if p[0] < *length / T::lit(2.0) {
                    ([one, z], false)
                } else {
                    ([-one, z], false)
                }
            }
            Shape::Rectangle { lx, ly } => {
                let cands = [
                    (p[0], [one, z]),
                    (*lx - p[0], [-one, z]),
                    (p[1], [z, one]),
                    (*ly - p[1], [z, -one]),
                ];
                let touching: Vec<_> = cands.iter().filter(|(d, _)| d.abs() <= eps).collect();
                let best = cands
                    .iter()
                    .min_by(|a, b| a.0.abs().partial_cmp(&b.0.abs()).unwrap())
                    .unwrap();
                (best.1, touching.len() > 1)
            }
            Shape::Disk { .. } => {
                let r = p[0].hypot(p[1]);
                ([-p[0] / r, -p[1] / r], false)
            }
            Shape::Polygon { vertices } => {
                let planes = Self::half_planes(vertices);
                let gaps: Vec<T> = planes
                    .iter()
                    .map(|(nrm, c)| (*c - (nrm[0] * p[0] + nrm[1] * p[1])).abs())
                    .collect();
                let (k, _) = gaps
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap();
                let corner = gaps.iter().filter(|g| **g <= eps).count() > 1;
                ([-planes[k].0[0], -planes[k].0[1]], corner)
            }
        }
    }
}

/// Classification of a lattice point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeClass {
    Interior,
    Boundary,
    Exterior,
}

/// A grid node; interior nodes are lattice points, boundary nodes may be cut-cell points.
#[derive(Debug, Clone, PartialEq)]
pub struct Node<T> {
    pub pos: [T; 2],
    pub class: NodeClass,
    pub lattice: Option<[i64; 2]>,
}

/// Neighbour of an interior node along a grid line, at distance `length ≤ h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arm<T> {
    pub node: usize,
    pub length: T,
}

/// How to read an inward slope at a boundary node: two samples along a grid line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe<T> {
    pub first: Arm<T>,
    pub second: Arm<T>,
    /// Cosine between the probe line and the inward normal.
    pub normal_cos: T,
    /// Boundary corner or polygon vertex: Hopf-type statements may fail here.
    pub corner: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub interior: usize,
    pub boundary: usize,
    pub exterior: usize,
}

/// Uniform lattice over a domain with node classification.
#[derive(Debug)]
pub struct Grid<T> {
    domain: Domain<T>,
    h: T,
    lo: [i64; 2],
    extent: [usize; 2],
    /// node id per lattice point, or -1 (exterior) / -2 (not a node).
    lattice: Vec<i64>,
    nodes: Vec<Node<T>>,
    n_interior: usize,
    /// Per interior node: +x, -x, +y, -y.
    arms: Vec<[Arm<T>; 4]>,
    probes: Vec<Option<Probe<T>>>,
    exterior: usize,
}

const EXTERIOR: i64 = -1;

impl<T: Real> Grid<T> {
    /// Builds the lattice. Requires `h ≤ min extent / 4` so that every axis has at
    /// least three interior lattice lines.
    pub fn build(domain: Domain<T>, h: T) -> Result<Arc<Self>> {
        if !(h.is_finite() && h > T::zero()) {
            return Err(Error::Config(format!(
                "grid spacing must be positive, got {h}"
            )));
        }
        let extent = domain.min_extent();
        if h > extent / T::lit(4.0) * (T::one() + T::lit(1e-12)) {
            return Err(Error::Config(format!(
                "grid spacing {h} too large for domain extent {extent} (need h <= extent/4)"
            )));
        }
        let dim = domain.dim();
        let (bmin, bmax) = domain.bbox();
        let mut lo = [0i64; 2];
        let mut size = [1usize; 2];
        for k in 0..dim {
            let a = (bmin[k] / h).floor().to_i64().unwrap() - 1;
            let b = (bmax[k] / h).ceil().to_i64().unwrap() + 1;
            lo[k] = a;
            size[k] = (b - a + 1) as usize;
        }
        let eps = domain.boundary_eps();
        let pos_of = |i: i64, j: i64| -> [T; 2] {
            let x = T::from_i64(i).unwrap() * h;
            let y = if dim == 2 {
                T::from_i64(j).unwrap() * h
            } else {
                T::zero()
            };
            [x, y]
        };

        let mut class = vec![NodeClass::Exterior; size[0] * size[1]];
        for jj in 0..size[1] {
            for ii in 0..size[0] {
                let p = pos_of(lo[0] + ii as i64, lo[1] + jj as i64);
                let d = domain.signed_distance(p);
                class[jj * size[0] + ii] = if d > eps {
                    NodeClass::Interior
                } else if d >= -eps {
                    NodeClass::Boundary
                } else {
                    NodeClass::Exterior
                };
            }
        }

        let mut nodes = Vec::new();
        let mut lattice = vec![EXTERIOR; size[0] * size[1]];
        for wanted in [NodeClass::Interior, NodeClass::Boundary] {
            for jj in 0..size[1] {
                for ii in 0..size[0] {
                    let idx = jj * size[0] + ii;
                    if class[idx] == wanted {
                        let li = [lo[0] + ii as i64, lo[1] + jj as i64];
                        let mut pos = pos_of(li[0], li[1]);
                        if wanted == NodeClass::Boundary {
                            pos = snap_to_boundary(&domain, pos);
                        }
                        lattice[idx] = nodes.len() as i64;
                        nodes.push(Node {
                            pos,
                            class: wanted,
                            lattice: Some(li),
                        });
                    }
                }
            }
        }
        let n_interior = nodes
            .iter()
            .filter(|n| n.class == NodeClass::Interior)
            .count();
        let exterior = class.iter().filter(|c| **c == NodeClass::Exterior).count();

        let mut grid = Self {
            domain,
            h,
            lo,
            extent: size,
            lattice,
            nodes,
            n_interior,
            arms: Vec::new(),
            probes: Vec::new(),
            exterior,
        };
        grid.attach_arms();
        grid.attach_probes();
        Ok(Arc::new(grid))
    }

    fn attach_arms(&mut self) {
        let dim = self.dim();
        let h = self.h;
        let one = T::one();
        let z = T::zero();
        // (cut-cell node, interior node it hangs off, outward grid direction)
        let mut cut_nodes: Vec<(usize, usize, [T; 2])> = Vec::new();
        let mut arms = Vec::with_capacity(self.n_interior);
        for id in 0..self.n_interior {
            let li = self.nodes[id].lattice.unwrap();
            let p = self.nodes[id].pos;
            let dirs: [([i64; 2], [T; 2]); 4] = [
                ([1, 0], [one, z]),
                ([-1, 0], [-one, z]),
                ([0, 1], [z, one]),
                ([0, -1], [z, -one]),
            ];
            let mut a = [Arm {
                node: id,
                length: h,
            }; 4];
            for (k, (off, d)) in dirs.iter().enumerate() {
                if k >= 2 * dim {
                    break;
                }
                let q = [li[0] + off[0], li[1] + off[1]];
                match self.lattice_node(q) {
                    Some(nb) => {
                        a[k] = Arm {
                            node: nb,
                            length: h,
                        }
                    }
                    None => {
                        let s = self.domain.ray_exit(p, *d).min(h).max(T::epsilon() * h);
                        let pos = [p[0] + s * d[0], p[1] + s * d[1]];
                        let nid = self.nodes.len();
                        self.nodes.push(Node {
                            pos,
                            class: NodeClass::Boundary,
                            lattice: None,
                        });
                        cut_nodes.push((nid, id, *d));
                        a[k] = Arm {
                            node: nid,
                            length: s,
                        };
                    }
                }
            }
            arms.push(a);
        }
        self.arms = arms;
        // probes for cut-cell nodes are known right away
        self.probes = vec![None; self.nodes.len()];
        for (nid, owner, d) in cut_nodes {
            let back = [-d[0], -d[1]];
            let k = axis_slot(back);
            let first = Arm {
                node: owner,
                length: self.arms[owner][k ^ 1].length,
            };
            let next = self.arms[owner][k];
            if self.nodes[next.node].class == NodeClass::Interior {
                let (nrm, corner) = self.domain.inward_normal(self.nodes[nid].pos);
                let second = Arm {
                    node: next.node,
                    length: first.length + next.length,
                };
                self.probes[nid] = Some(Probe {
                    first,
                    second,
                    normal_cos: nrm[0] * back[0] + nrm[1] * back[1],
                    corner,
                });
            }
        }
    }

    fn attach_probes(&mut self) {
        let h = self.h;
        let one = T::one();
        let z = T::zero();
        for id in self.n_interior..self.nodes.len() {
            let Some(li) = self.nodes[id].lattice else {
                continue;
            };
            let (nrm, corner) = self.domain.inward_normal(self.nodes[id].pos);
            let mut best: Option<(T, [i64; 2], [T; 2])> = None;
            let dirs: [([i64; 2], [T; 2]); 4] = [
                ([1, 0], [one, z]),
                ([-1, 0], [-one, z]),
                ([0, 1], [z, one]),
                ([0, -1], [z, -one]),
            ];
            for (off, d) in dirs.iter().take(2 * self.dim()) {
                let c = nrm[0] * d[0] + nrm[1] * d[1];
                if c <= T::lit(1e-9) {
                    continue;
                }
                if best.is_none_or(|b| c > b.0) {
                    best = Some((c, *off, *d));
                }
            }
            let Some((c, off, _)) = best else { continue };
            let q1 = [li[0] + off[0], li[1] + off[1]];
            let q2 = [li[0] + 2 * off[0], li[1] + 2 * off[1]];
            if let (Some(a), Some(b)) = (self.lattice_node(q1), self.lattice_node(q2)) {
                if self.nodes[a].class == NodeClass::Interior
                    && self.nodes[b].class == NodeClass::Interior
                {
                    self.probes[id] = Some(Probe {
                        first: Arm { node: a, length: h },
                        second: Arm {
                            node: b,
                            length: h + h,
                        },
                        normal_cos: c,
                        corner,
                    });
                }
            }
        }
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.domain
    }

    #[inline]
    pub fn h(&self) -> T {
        self.h
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    #[inline]
    pub fn node(&self, id: usize) -> &Node<T> {
        &self.nodes[id]
    }

    pub fn interior_ids(&self) -> std::ops::Range<usize> {
        0..self.n_interior
    }

    pub fn boundary_ids(&self) -> std::ops::Range<usize> {
        self.n_interior..self.nodes.len()
    }

    /// Axis arms of an interior node: `+x, -x, +y, -y` (only the first two in 1D).
    #[inline]
    pub fn arms(&self, interior: usize) -> &[Arm<T>; 4] {
        &self.arms[interior]
    }

    pub fn probe(&self, boundary: usize) -> Option<&Probe<T>> {
        self.probes.get(boundary).and_then(|p| p.as_ref())
    }

    /// Node id of a lattice point, if it is an interior or lattice boundary node.
    #[inline]
    pub fn lattice_node(&self, li: [i64; 2]) -> Option<usize> {
        let ii = li[0] - self.lo[0];
        let jj = li[1] - self.lo[1];
        if ii < 0 || jj < 0 || ii as usize >= self.extent[0] || jj as usize >= self.extent[1] {
            return None;
        }
        let v = self.lattice[jj as usize * self.extent[0] + ii as usize];
        if v >= 0 {
            Some(v as usize)
        } else {
            None
        }
    }

    pub fn classify_lattice(&self, li: [i64; 2]) -> NodeClass {
        match self.lattice_node(li) {
            Some(id) => self.nodes[id].class,
            None => NodeClass::Exterior,
        }
    }

    pub fn counts(&self) -> ClassCounts {
        ClassCounts {
            interior: self.n_interior,
            boundary: self.nodes.len() - self.n_interior,
            exterior: self.exterior,
        }
    }

    /// Largest value of `(h²/n) Σ_axes 1/(a_k b_k)` over interior nodes, where `a_k, b_k`
    /// are the axis arms. Equals one on a grid without cut cells.
    pub fn cut_cell_weight(&self) -> T {
        let n = self.dim();
        let h2 = self.h * self.h;
        let nn = T::from_usize_lossy(n);
        self.arms
            .iter()
            .map(|a| {
                (0..n)
                    .map(|k| h2 / (a[2 * k].length * a[2 * k + 1].length))
                    .sum::<T>()
                    / nn
            })
            .fold(T::one(), T::max)
    }
}

fn axis_slot<T: Real>(d: [T; 2]) -> usize {
    if d[0] > T::zero() {
        0
    } else if d[0] < T::zero() {
        1
    } else if d[1] > T::zero() {
        2
    } else {
        3
    }
}

fn snap_to_boundary<T: Real>(domain: &Domain<T>, p: [T; 2]) -> [T; 2] {
    match domain.shape() {
        Shape::Disk { radius } => {
            let r = p[0].hypot(p[1]);
            [p[0] / r * *radius, p[1] / r * *radius]
        }
        _ => p,
    }
}

/// One value per interior and boundary node of a grid.
#[derive(Debug, Clone)]
pub struct Field<T> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
}

impl<T: Real> PartialEq for Field<T> {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) && self.values == other.values
    }
}

impl<T: Real> Field<T> {
    pub fn new(grid: Arc<Grid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InputDomain(format!(
                "field has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InputDomain(format!("non-finite value at node {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid<T>>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![T::zero(); n],
        }
    }

    pub fn from_fn(grid: Arc<Grid<T>>, f: impl Fn([T; 2]) -> T) -> Self {
        let values = grid.nodes().iter().map(|n| f(n.pos)).collect();
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: Arc<Grid<T>>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, id: usize) -> T {
        self.values[id]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    /// `max |value|` over all nodes.
    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `max |self - other|` over all nodes.
    pub fn sup_distance(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    pub fn min_value(&self) -> T {
        self.values.iter().fold(T::infinity(), |m, v| m.min(*v))
    }

    /// Writes `value` at every boundary node.
    pub fn set_boundary(&mut self, value: T) {
        let range = self.grid.boundary_ids();
        for v in &mut self.values[range] {
            *v = value;
        }
    }

    pub fn boundary_max_deviation(&self, value: T) -> T {
        self.values[self.grid.boundary_ids()]
            .iter()
            .fold(T::zero(), |m, v| m.max((*v - value).abs()))
    }

    /// CSV with header `x,value` (1D) or `x,y,value` (2D), one row per node in node order.
    pub fn to_csv(&self) -> String {
        let dim = self.grid.dim();
        let mut s = String::with_capacity(self.values.len() * 48);
        s.push_str(if dim == 1 { "x,value\n" } else { "x,y,value\n" });
        for (n, v) in self.grid.nodes().iter().zip(&self.values) {
            if dim == 1 {
                s.push_str(&format!("{},{}\n", n.pos[0], v));
            } else {
                s.push_str(&format!("{},{},{}\n", n.pos[0], n.pos[1], v));
            }
        }
        s
    }

    /// Reads a CSV written by [`Field::to_csv`] back onto `grid`; coordinates must match exactly.
    pub fn from_csv(grid: Arc<Grid<T>>, text: &str) -> Result<Self> {
        let dim = grid.dim();
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let want = if dim == 1 { "x,value" } else { "x,y,value" };
        if header.trim() != want {
            return Err(Error::Format(format!(
                "expected header `{want}`, got `{header}`"
            )));
        }
        let parse = |s: &str, line: usize| -> Result<T> {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::Format(format!("line {line}: cannot parse `{s}`")))
        };
        let mut values = Vec::with_capacity(grid.len());
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = k + 2;
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != dim + 1 {
                return Err(Error::Format(format!(
                    "line {lineno}: expected {} columns",
                    dim + 1
                )));
            }
            let id = values.len();
            if id >= grid.len() {
                return Err(Error::Format(format!(
                    "line {lineno}: more rows than nodes"
                )));
            }
            let pos = grid.node(id).pos;
            for c in 0..dim {
                if parse(cols[c], lineno)? != pos[c] {
                    return Err(Error::Format(format!(
                        "line {lineno}: coordinates do not match node {id}"
                    )));
                }
            }
            values.push(parse(cols[dim], lineno)?);
        }
        Self::new(grid, values)
    }

    /// JSON document with the grid metadata and the node values.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "domain": self.grid.domain().descriptor(),
            "h": self.grid.h().as_f64(),
            "counts": self.grid.counts(),
            "values": self.values.iter().map(|v| v.as_f64()).collect::<Vec<f64>>(),
        })
    }

    /// Rebuilds both grid and field from [`Field::to_json`] output.
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let domain: DomainDescriptor = serde_json::from_value(v["domain"].clone())?;
        let h = v["h"]
            .as_f64()
            .ok_or_else(|| Error::Format("missing `h`".into()))?;
        let grid = Grid::build(Domain::from_descriptor(&domain)?, T::lit(h))?;
        let counts: ClassCounts = serde_json::from_value(v["counts"].clone())?;
        if counts != grid.counts() {
            return Err(Error::Format(format!(
                "classification counts {counts:?} do not match rebuilt grid {:?}",
                grid.counts()
            )));
        }
        let values: Vec<f64> = serde_json::from_value(v["values"].clone())?;
        Self::new(grid, values.into_iter().map(T::lit).collect())
    }
}

/// Exact Euclidean distance to the boundary at every node (zero on boundary nodes).
pub fn distance_field<T: Real>(grid: &Arc<Grid<T>>) -> Field<T> {
    let values = grid
        .nodes()
        .iter()
        .map(|n| match n.class {
            NodeClass::Interior => grid.domain().signed_distance(n.pos).max(T::zero()),
            _ => T::zero(),
        })
        .collect();
    Field::from_raw(grid.clone(), values)
}

/// Canonical initial data families.
#[derive(Debug, Clone)]
pub enum InitialKind<T> {
    Distance,
    DistancePower(T),
    /// Principal Dirichlet eigenfunction of the Laplacian, sup-normalized.
    EigenOfLaplacian,
    Custom(Field<T>),
}

/// Whether `u₀^m` is comparable to the distance function, from a boundary-layer fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbReport {
    /// `min u₀^m / dist` over interior nodes.
    pub lower: f64,
    /// `max u₀^m / dist` over interior nodes.
    pub upper: f64,
    /// Least-squares slope of `log u₀^m` against `log dist` within `4h` of the boundary.
    pub boundary_exponent: f64,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct InitialData<T> {
    pub field: Field<T>,
    pub cb: CbReport,
}

fn bessel_j0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..40 {
        term *= -q / (k as f64 * k as f64);
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    sum
}

const BESSEL_J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// Builds canonical initial data and records the `C_b` diagnostic for `u₀^m`.
pub fn canonical_initial_data<T: Real>(
    grid: &Arc<Grid<T>>,
    kind: &InitialKind<T>,
    m: T,
) -> Result<InitialData<T>> {
    if !(m >= T::one()) {
        return Err(Error::InputDomain(format!(
            "diffusion exponent m = {m} must be >= 1"
        )));
    }
    let dist = distance_field(grid);
    let field = match kind {
        InitialKind::Distance => dist.clone(),
        InitialKind::DistancePower(q) => {
            if !(*q > T::zero()) {
                return Err(Error::InputDomain(format!(
                    "distance power {q} must be positive"
                )));
            }
            dist.map(|d| d.powf(*q))
        }
        InitialKind::EigenOfLaplacian => {
            let pi = T::PI();
            let mut f = match grid.domain().shape() {
                Shape::Interval { length } => {
                    Field::from_fn(grid.clone(), |p| (pi * p[0] / *length).sin())
                }
                Shape::Rectangle { lx, ly } => Field::from_fn(grid.clone(), |p| {
                    (pi * p[0] / *lx).sin() * (pi * p[1] / *ly).sin()
                }),
                Shape::Disk { radius } => {
                    let r0 = radius.as_f64();
                    Field::from_fn(grid.clone(), |p| {
                        let r = p[0].hypot(p[1]).as_f64();
                        T::lit(bessel_j0(BESSEL_J0_FIRST_ZERO * r / r0))
                    })
                }
                Shape::Polygon { .. } => {
                    return Err(Error::InputDomain(
                        "no closed-form Laplacian eigenfunction for polygons".into(),
                    ))
                }
            };
            f.set_boundary(T::zero());
            for v in f.values_mut() {
                *v = v.max(T::zero());
            }
            let s = f.sup_norm();
            f.scale(T::one() / s)
        }
        InitialKind::Custom(f) => {
            if !Arc::ptr_eq(f.grid(), grid) {
                return Err(Error::InputDomain(
                    "custom field lives on another grid".into(),
                ));
            }
            if let Some(k) = f.values().iter().position(|v| *v < T::zero()) {
                return Err(Error::InputDomain(format!(
                    "custom initial data negative at node {k} ({})",
                    f.get(k)
                )));
            }
            f.clone()
        }
    };
    let cb = cb_report(&field, &dist, m);
    Ok(InitialData { field, cb })
}

pub(crate) fn cb_report<T: Real>(u0: &Field<T>, dist: &Field<T>, m: T) -> CbReport {
    let grid = u0.grid();
    let h = grid.h().as_f64();
    let mut lower = f64::INFINITY;
    let mut upper = 0.0f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for id in grid.interior_ids() {
        let d = dist.get(id).as_f64();
        let w = u0.get(id).powf(m).as_f64();
        if d <= 0.0 {
            continue;
        }
        lower = lower.min(w / d);
        upper = upper.max(w / d);
        if d <= 4.0 * h + 1e-12 && w > 0.0 {
            xs.push(d.ln());
            ys.push(w.ln());
        }
    }
    let exponent = least_squares_slope(&xs, &ys).unwrap_or(f64::NAN);
    let holds =
        lower > 0.0 && upper.is_finite() && (exponent.is_nan() || (exponent - 1.0).abs() <= 0.25);
    CbReport {
        lower,
        upper,
        boundary_exponent: exponent,
        holds,
    }
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 1e-300 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Interior nodes at distance at least `width` from the boundary.
pub fn band_nodes<T: Real>(grid: &Grid<T>, width: T) -> Vec<usize> {
    let slack = T::lit(1e-9) * grid.h();
    grid.interior_ids()
        .filter(|&id| grid.domain().signed_distance(grid.node(id).pos) >= width - slack)
        .collect()
}

/// Lookup from lattice index to node id for nodes that are lattice points.
pub fn lattice_index<T: Real>(grid: &Grid<T>) -> HashMap<[i64; 2], usize> {
    grid.nodes()
        .iter()
        .enumerate()
        .filter_map(|(id, n)| n.lattice.map(|l| (l, id)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn interval_counts() {
        let g = Grid::build(Domain::<f64>::interval(PI).unwrap(), PI / 4.0).unwrap();
        assert_eq!(g.counts().interior, 3);
        assert_eq!(g.counts().boundary, 2);
        assert_eq!(g.cut_cell_weight(), 1.0);
    }

    #[test]
    fn unit_square_counts() {
        let g = Grid::build(Domain::<f64>::rectangle(1.0, 1.0).unwrap(), 0.25).unwrap();
        assert_eq!(g.counts().interior, 9);
        assert_eq!(g.counts().boundary, 16);
    }

    #[test]
    fn disk_membership() {
        let g = Grid::build(Domain::<f64>::disk(1.0).unwrap(), 0.5).unwrap();
        let mut count = 0;
        for i in -3..=3i64 {
            for j in -3..=3i64 {
                let (x, y) = (i as f64 * 0.5, j as f64 * 0.5);
                let inside = x.hypot(y) < 1.0;
                let class = g.classify_lattice([i, j]);
                if inside {
                    count += 1;
                    assert_eq!(class, NodeClass::Interior, "({x},{y})");
                } else {
                    assert_ne!(class, NodeClass::Interior);
                }
            }
        }
        assert_eq!(g.n_interior(), count);
        for id in g.boundary_ids() {
            let p = g.node(id).pos;
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spacing_too_large() {
        assert!(matches!(
            Grid::build(Domain::<f64>::interval(1.0).unwrap(), 0.3),
            Err(Error::Config(_))
        ));
        assert!(Grid::build(Domain::<f64>::interval(1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn polygon_must_be_ccw_convex() {
        assert!(Domain::<f64>::polygon(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).is_ok());
        assert!(Domain::<f64>::polygon(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).is_err());
        assert!(Domain::<f64>::polygon(vec![
            [0.0, 0.0],
            [2.0, 0.0],
            [1.0, 0.2],
            [2.0, 2.0],
            [0.0, 2.0]
        ])
        .is_err());
    }

    #[test]
    fn interior_neighbours_are_nodes() {
        let domains = vec![
            Domain::<f64>::disk(1.0).unwrap(),
            Domain::<f64>::rectangle(1.0, 0.7).unwrap(),
            Domain::<f64>::polygon(vec![[0.0, 0.0], [1.3, 0.1], [0.9, 1.0], [-0.2, 0.8]]).unwrap(),
        ];
        for d in domains {
            let g = Grid::build(d, 0.07).unwrap();
            for id in g.interior_ids() {
                for a in g.arms(id) {
                    assert_ne!(g.node(a.node).class, NodeClass::Exterior);
                    assert!(a.length > 0.0 && a.length <= g.h());
                    let p = g.node(a.node).pos;
                    if g.node(a.node).class == NodeClass::Boundary {
                        assert!(g.domain().signed_distance(p).abs() < 1e-12, "{p:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn refinement_keeps_coarse_classification() {
        for d in [
            Domain::<f64>::disk(1.0).unwrap(),
            Domain::<f64>::polygon(vec![[0.0, 0.0], [1.3, 0.1], [0.9, 1.0], [-0.2, 0.8]]).unwrap(),
        ] {
            let coarse = Grid::build(d.clone(), 0.1).unwrap();
            let fine = Grid::build(d, 0.05).unwrap();
            for n in coarse.nodes() {
                if let Some(l) = n.lattice {
                    assert_eq!(
                        coarse.classify_lattice(l),
                        fine.classify_lattice([2 * l[0], 2 * l[1]])
                    );
                }
            }
        }
    }

    #[test]
    fn distance_examples() {
        let g = Grid::build(Domain::<f64>::interval(PI).unwrap(), PI / 16.0).unwrap();
        let d = distance_field(&g);
        for id in g.interior_ids() {
            let x = g.node(id).pos[0];
            assert!((d.get(id) - x.min(PI - x)).abs() < 1e-15);
        }
        let g = Grid::build(Domain::<f64>::disk(1.0).unwrap(), 0.125).unwrap();
        let d = distance_field(&g);
        for id in g.interior_ids() {
            let p = g.node(id).pos;
            assert!((d.get(id) - (1.0 - p[0].hypot(p[1]))).abs() < 1e-15);
        }
        let g = Grid::build(Domain::<f64>::rectangle(1.0, 1.0).unwrap(), 0.125).unwrap();
        let d = distance_field(&g);
        let c = g.lattice_node([4, 4]).unwrap();
        assert_eq!(d.get(c), 0.5);
        for id in g.boundary_ids() {
            assert_eq!(d.get(id), 0.0);
        }
    }

    #[test]
    fn distance_is_midpoint_concave() {
        for d in [
            Domain::<f64>::disk(1.0).unwrap(),
            Domain::<f64>::polygon(vec![[0.0, 0.0], [1.3, 0.1], [0.9, 1.0], [-0.2, 0.8]]).unwrap(),
        ] {
            let g = Grid::build(d, 0.1).unwrap();
            let dist = distance_field(&g);
            let idx = lattice_index(&g);
            for a in g.interior_ids() {
                for b in g.interior_ids() {
                    let (la, lb) = (g.node(a).lattice.unwrap(), g.node(b).lattice.unwrap());
                    if (la[0] + lb[0]) % 2 != 0 || (la[1] + lb[1]) % 2 != 0 {
                        continue;
                    }
                    let mid = [(la[0] + lb[0]) / 2, (la[1] + lb[1]) / 2];
                    let m = idx[&mid];
                    assert!(dist.get(a) + dist.get(b) - 2.0 * dist.get(m) <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn initial_data_examples() {
        let g = Grid::build(Domain::<f64>::interval(PI).unwrap(), PI / 64.0).unwrap();
        let tent = canonical_initial_data(&g, &InitialKind::Distance, 1.0).unwrap();
        assert!((tent.field.sup_norm() - PI / 2.0).abs() < 1e-15);
        assert!(tent.cb.holds);

        let sq = canonical_initial_data(&g, &InitialKind::DistancePower(0.5), 2.0).unwrap();
        for id in g.interior_ids() {
            let x = g.node(id).pos[0];
            assert!((sq.field.get(id).powi(2) - x.min(PI - x)).abs() < 1e-14);
        }
        assert!(sq.cb.holds);
        assert!((sq.cb.boundary_exponent - 1.0).abs() < 1e-9);

        let bad = canonical_initial_data(&g, &InitialKind::Distance, 2.0).unwrap();
        assert!(!bad.cb.holds);

        let eig = canonical_initial_data(&g, &InitialKind::EigenOfLaplacian, 1.0).unwrap();
        for id in g.interior_ids() {
            let x = g.node(id).pos[0];
            assert!((eig.field.get(id) - x.sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn disk_eigenfunction_vanishes_on_boundary() {
        assert!(bessel_j0(BESSEL_J0_FIRST_ZERO).abs() < 1e-14);
        let g = Grid::build(Domain::<f64>::disk(1.0).unwrap(), 0.1).unwrap();
        let e = canonical_initial_data(&g, &InitialKind::EigenOfLaplacian, 1.0).unwrap();
        assert!(e.field.boundary_max_deviation(0.0) == 0.0);
        assert!((e.field.sup_norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_custom_rejected() {
        let g = Grid::build(Domain::<f64>::interval(1.0).unwrap(), 0.125).unwrap();
        let f = Field::from_fn(g.clone(), |p| p[0] - 0.5);
        assert!(matches!(
            canonical_initial_data(&g, &InitialKind::Custom(f), 1.0),
            Err(Error::InputDomain(_))
        ));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let g = Grid::build(Domain::<f64>::disk(1.0).unwrap(), 0.1).unwrap();
        let f = Field::from_fn(g.clone(), |p| (p[0] * 3.1).sin() / 7.0 + p[1].exp());
        let back = Field::from_csv(g.clone(), &f.to_csv()).unwrap();
        assert_eq!(back.values(), f.values());
        let text = serde_json::to_string(&f.to_json()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let back = Field::<f64>::from_json(&v).unwrap();
        assert_eq!(back.values(), f.values());
        assert!(Field::from_csv(g, "x,value\n").is_err());
    }

    #[test]
    fn hopf_probes_on_rectangle() {
        let g = Grid::build(Domain::<f64>::rectangle(1.0, 1.0).unwrap(), 0.125).unwrap();
        let mut corners = 0;
        for id in g.boundary_ids() {
            let (_, corner) = g.domain().inward_normal(g.node(id).pos);
            if corner {
                corners += 1;
            } else {
                let p = g.probe(id).expect("edge nodes have probes");
                assert_eq!(p.normal_cos, 1.0);
            }
        }
        assert_eq!(corners, 4);
    }
}
