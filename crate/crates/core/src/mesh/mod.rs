//! Cartesian triangular and rectangular meshes with local quadrisection.
//!
//! Node positions are kept on an integer lattice fine enough for
//! [`MAX_LEVEL`] levels of refinement below the base grid, so coincident
//! nodes and overlapping element sides are detected exactly. Edges are the
//! maximal segments shared by a pair of elements; across a hanging node a
//! coarse side is therefore split into several edges.

mod classify;
mod dump;

pub use classify::{classify, validate_hypotheses, CutInfo, ElementClassification, ElementCut, Hypothesis};
pub use dump::write_mesh;

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::geometry::{polygon_area, Point2, Vector2};

/// Refinement levels supported below the base grid.
pub const MAX_LEVEL: u32 = 40;
const LATTICE_CELL: i64 = 1 << MAX_LEVEL;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("element {element} violates hypothesis {reason}: {detail}")]
    HypothesisViolation {
        element: usize,
        reason: Hypothesis,
        detail: String,
    },
    #[error("element {element} is already at the maximum refinement level {MAX_LEVEL}")]
    MaxLevel { element: usize },
    #[error("element id {0} is out of range")]
    UnknownElement(usize),
    #[error("invalid mesh parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Triangle,
    Rectangle,
}

impl ElementKind {
    /// Number of vertices `d_K`.
    pub fn vertex_count(self) -> usize {
        match self {
            ElementKind::Triangle => 3,
            ElementKind::Rectangle => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Triangle => "triangle",
            ElementKind::Rectangle => "rectangle",
        }
    }
}

/// Axis-aligned rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Domain {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, MeshError> {
        if !(x1 > x0 && y1 > y0) {
            return Err(MeshError::InvalidParameters(format!(
                "empty domain ({x0}, {y0}) x ({x1}, {y1})"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// The square `(-1, 1)^2`.
    pub fn unit_square() -> Self {
        Self {
            x0: -1.0,
            y0: -1.0,
            x1: 1.0,
            y1: 1.0,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub kind: ElementKind,
    /// Vertex node ids in counterclockwise order.
    pub vertices: Vec<usize>,
    pub level: u32,
}

/// A mesh edge `B`. For interior edges `k1 < k2` and `normal` points out of `k1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub nodes: [usize; 2],
    pub p0: Point2,
    pub p1: Point2,
    pub k1: usize,
    pub k2: Option<usize>,
    pub normal: Vector2,
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.k2.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct CartesianMesh {
    domain: Domain,
    base_n: usize,
    kind: ElementKind,
    nodes: Vec<Point2>,
    lattice: Vec<[i64; 2]>,
    elements: Vec<Element>,
    edges: Vec<Edge>,
}

impl CartesianMesh {
    /// Uniform `n x n` grid of squares, optionally split into two triangles
    /// along the lower-left to upper-right diagonal.
    pub fn build_uniform(n: usize, kind: ElementKind, domain: Domain) -> Result<Self, MeshError> {
        if n == 0 {
            return Err(MeshError::InvalidParameters("N must be at least 1".into()));
        }
        let mut mesh = Self {
            domain,
            base_n: n,
            kind,
            nodes: Vec::with_capacity((n + 1) * (n + 1)),
            lattice: Vec::with_capacity((n + 1) * (n + 1)),
            elements: Vec::new(),
            edges: Vec::new(),
        };
        for j in 0..=n {
            for i in 0..=n {
                let l = [i as i64 * LATTICE_CELL, j as i64 * LATTICE_CELL];
                mesh.nodes.push(mesh.lattice_to_point(l));
                mesh.lattice.push(l);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                match kind {
                    ElementKind::Rectangle => mesh.elements.push(Element {
                        kind,
                        vertices: vec![a, b, c, d],
                        level: 0,
                    }),
                    ElementKind::Triangle => {
                        mesh.elements.push(Element {
                            kind,
                            vertices: vec![a, b, c],
                            level: 0,
                        });
                        mesh.elements.push(Element {
                            kind,
                            vertices: vec![a, c, d],
                            level: 0,
                        });
                    }
                }
            }
        }
        mesh.edges = mesh.build_edges();
        Ok(mesh)
    }

    /// Replaces every marked element by its four congruent children
    /// (midpoint subdivision). Unmarked elements keep their relative order.
    pub fn refine(&self, marked: &[usize]) -> Result<Self, MeshError> {
        let mut flags = vec![false; self.elements.len()];
        for &m in marked {
            *flags.get_mut(m).ok_or(MeshError::UnknownElement(m))? = true;
        }
        let mut next = Self {
            domain: self.domain,
            base_n: self.base_n,
            kind: self.kind,
            nodes: self.nodes.clone(),
            lattice: self.lattice.clone(),
            elements: Vec::with_capacity(self.elements.len() + 3 * marked.len()),
            edges: Vec::new(),
        };
        let mut index: HashMap<[i64; 2], usize> = self.lattice.iter().enumerate().map(|(i, &l)| (l, i)).collect();

        for (k, element) in self.elements.iter().enumerate() {
            if !flags[k] {
                next.elements.push(element.clone());
                continue;
            }
            if element.level >= MAX_LEVEL {
                return Err(MeshError::MaxLevel { element: k });
            }
            let level = element.level + 1;
            let v = &element.vertices;
            let mut mid = |a: usize, b: usize| -> usize {
                let la = next.lattice[a];
                let lb = next.lattice[b];
                let lm = [(la[0] + lb[0]) / 2, (la[1] + lb[1]) / 2];
                *index.entry(lm).or_insert_with(|| {
                    next.lattice.push(lm);
                    next.nodes.push(Self::lattice_point(&next.domain, next.base_n, lm));
                    next.lattice.len() - 1
                })
            };
            let children: Vec<Vec<usize>> = match element.kind {
                ElementKind::Rectangle => {
                    let (a, b, c, d) = (v[0], v[1], v[2], v[3]);
                    let ab = mid(a, b);
                    let bc = mid(b, c);
                    let cd = mid(c, d);
                    let da = mid(d, a);
                    let center = mid(a, c);
                    vec![
                        vec![a, ab, center, da],
                        vec![ab, b, bc, center],
                        vec![center, bc, c, cd],
                        vec![da, center, cd, d],
                    ]
                }
                ElementKind::Triangle => {
                    let (a, b, c) = (v[0], v[1], v[2]);
                    let ab = mid(a, b);
                    let bc = mid(b, c);
                    let ca = mid(c, a);
                    vec![vec![a, ab, ca], vec![ab, b, bc], vec![ca, bc, c], vec![ab, bc, ca]]
                }
            };
            next.elements.extend(children.into_iter().map(|vertices| Element {
                kind: element.kind,
                vertices,
                level,
            }));
        }
        next.edges = next.build_edges();
        Ok(next)
    }

    fn lattice_point(domain: &Domain, base_n: usize, l: [i64; 2]) -> Point2 {
        let scale = (base_n as i64 * LATTICE_CELL) as f64;
        let tx = l[0] as f64 / scale;
        let ty = l[1] as f64 / scale;
        Point2::new(
            domain.x0 + tx * (domain.x1 - domain.x0),
            domain.y0 + ty * (domain.y1 - domain.y0),
        )
    }

    fn lattice_to_point(&self, l: [i64; 2]) -> Point2 {
        Self::lattice_point(&self.domain, self.base_n, l)
    }

    fn build_edges(&self) -> Vec<Edge> {
        // Sides grouped by supporting line: (direction, offset) -> intervals.
        #[derive(Clone, Copy)]
        struct Side {
            lo: i64,
            hi: i64,
            element: usize,
            along_reference: bool,
        }
        let mut lines: BTreeMap<(u8, i64), Vec<Side>> = BTreeMap::new();
        for (k, element) in self.elements.iter().enumerate() {
            let v = &element.vertices;
            for i in 0..v.len() {
                let p = self.lattice[v[i]];
                let q = self.lattice[v[(i + 1) % v.len()]];
                let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
                // Outward normal of a counterclockwise side is (dy, -dx).
                let (dir, offset, s0, s1, reference) = if dy == 0 {
                    (0u8, p[1], p[0], q[0], (0, 1))
                } else if dx == 0 {
                    (1u8, p[0], p[1], q[1], (1, 0))
                } else {
                    debug_assert_eq!(dx, dy, "sides are axis-aligned or along (1, 1)");
                    (2u8, p[1] - p[0], p[0], q[0], (-1, 1))
                };
                let outward_dot = dy * reference.0 - dx * reference.1;
                lines.entry((dir, offset)).or_default().push(Side {
                    lo: s0.min(s1),
                    hi: s0.max(s1),
                    element: k,
                    along_reference: outward_dot > 0,
                });
            }
        }

        let node_index: HashMap<[i64; 2], usize> = self.lattice.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let sqrt_half = std::f64::consts::FRAC_1_SQRT_2;
        let mut edges = Vec::new();
        for ((dir, offset), sides) in lines {
            let reference = match dir {
                0 => Point2::new(0.0, 1.0),
                1 => Point2::new(1.0, 0.0),
                _ => Point2::new(-sqrt_half, sqrt_half),
            };
            let to_lattice = |s: i64| -> [i64; 2] {
                match dir {
                    0 => [s, offset],
                    1 => [offset, s],
                    _ => [s, s + offset],
                }
            };
            let mut pos: Vec<Side> = sides.iter().copied().filter(|s| s.along_reference).collect();
            let mut neg: Vec<Side> = sides.iter().copied().filter(|s| !s.along_reference).collect();
            pos.sort_by_key(|s| s.lo);
            neg.sort_by_key(|s| s.lo);
            let mut breaks: Vec<i64> = sides.iter().flat_map(|s| [s.lo, s.hi]).collect();
            breaks.sort_unstable();
            breaks.dedup();

            // Pieces between consecutive breakpoints, then merged by owner pair.
            let (mut ip, mut ineg) = (0, 0);
            let mut pieces: Vec<(i64, i64, Option<usize>, Option<usize>)> = Vec::new();
            for w in breaks.windows(2) {
                let (s, t) = (w[0], w[1]);
                while ip < pos.len() && pos[ip].hi <= s {
                    ip += 1;
                }
                while ineg < neg.len() && neg[ineg].hi <= s {
                    ineg += 1;
                }
                let owner = |list: &[Side], i: usize| list.get(i).filter(|x| x.lo <= s && x.hi >= t).map(|x| x.element);
                let a = owner(&pos, ip);
                let b = owner(&neg, ineg);
                if a.is_none() && b.is_none() {
                    continue;
                }
                match pieces.last_mut() {
                    Some(last) if last.1 == s && last.2 == a && last.3 == b => last.1 = t,
                    _ => pieces.push((s, t, a, b)),
                }
            }

            for (s, t, a, b) in pieces {
                let l0 = to_lattice(s);
                let l1 = to_lattice(t);
                let nodes = [node_index[&l0], node_index[&l1]];
                let p0 = self.nodes[nodes[0]];
                let p1 = self.nodes[nodes[1]];
                let (k1, k2, normal) = match (a, b) {
                    (Some(a), Some(b)) if a < b => (a, Some(b), reference),
                    (Some(a), Some(b)) => (b, Some(a), -reference),
                    (Some(a), None) => (a, None, reference),
                    (None, Some(b)) => (b, None, -reference),
                    (None, None) => unreachable!(),
                };
                edges.push(Edge {
                    nodes,
                    p0,
                    p1,
                    k1,
                    k2,
                    normal,
                    length: p0.distance(p1),
                });
            }
        }
        edges.sort_by_key(|e| (e.k1, e.k2.unwrap_or(usize::MAX), e.nodes));
        edges
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn base_n(&self) -> usize {
        self.base_n
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn nodes(&self) -> &[Point2] {
        &self.nodes
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    /// Coarse grid size `h = width / N`.
    pub fn base_h(&self) -> f64 {
        (self.domain.x1 - self.domain.x0) / self.base_n as f64
    }

    pub fn element_points(&self, k: usize) -> Vec<Point2> {
        self.elements[k].vertices.iter().map(|&v| self.nodes[v]).collect()
    }

    pub fn element_area(&self, k: usize) -> f64 {
        polygon_area(&self.element_points(k))
    }

    /// Diameter `h_K`.
    pub fn element_diameter(&self, k: usize) -> f64 {
        let pts = self.element_points(k);
        let mut d: f64 = 0.0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                d = d.max(pts[i].distance(pts[j]));
            }
        }
        d
    }

    pub fn total_area(&self) -> f64 {
        (0..self.elements.len()).map(|k| self.element_area(k)).sum()
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let l = self.lattice[node];
        let max = self.base_n as i64 * LATTICE_CELL;
        l[0] == 0 || l[1] == 0 || l[0] == max || l[1] == max
    }

    /// Largest ratio `h_K / |B|` over all edges and their owner elements.
    pub fn shape_regularity(&self) -> f64 {
        self.edges
            .iter()
            .flat_map(|e| [Some(e.k1), e.k2].into_iter().flatten().map(move |k| (k, e.length)))
            .map(|(k, len)| self.element_diameter(k) / len)
            .fold(0.0, f64::max)
    }

    pub fn interior_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| !e.is_boundary()).count()
    }

    /// Index for point location.
    pub fn locator(&self) -> PointLocator<'_> {
        PointLocator::new(self)
    }
}

/// Locates the element containing a point by bucketing elements per base cell.
pub struct PointLocator<'a> {
    mesh: &'a CartesianMesh,
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    fn new(mesh: &'a CartesianMesh) -> Self {
        let n = mesh.base_n;
        let mut buckets = vec![Vec::new(); n * n];
        for (k, e) in mesh.elements.iter().enumerate() {
            let (mut sx, mut sy) = (0i64, 0i64);
            for &v in &e.vertices {
                sx += mesh.lattice[v][0];
                sy += mesh.lattice[v][1];
            }
            let c = e.vertices.len() as i64;
            let i = ((sx / c) / LATTICE_CELL).clamp(0, n as i64 - 1) as usize;
            let j = ((sy / c) / LATTICE_CELL).clamp(0, n as i64 - 1) as usize;
            buckets[j * n + i].push(k);
        }
        Self { mesh, buckets }
    }

    pub fn locate(&self, p: Point2) -> Option<usize> {
        let d = self.mesh.domain;
        let n = self.mesh.base_n;
        let fx = (p.x - d.x0) / (d.x1 - d.x0) * n as f64;
        let fy = (p.y - d.y0) / (d.y1 - d.y0) * n as f64;
        if !(fx >= -1e-12 && fy >= -1e-12 && fx <= n as f64 + 1e-12 && fy <= n as f64 + 1e-12) {
            return None;
        }
        let ci = (fx.floor() as i64).clamp(0, n as i64 - 1);
        let cj = (fy.floor() as i64).clamp(0, n as i64 - 1);
        // Points on a base-cell boundary may belong to the neighboring cell.
        for dj in [0i64, -1, 1] {
            for di in [0i64, -1, 1] {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i >= n as i64 || j >= n as i64 {
                    continue;
                }
                for &k in &self.buckets[j as usize * n + i as usize] {
                    if self.contains(k, p) {
                        return Some(k);
                    }
                }
            }
        }
        None
    }

    fn contains(&self, k: usize, p: Point2) -> bool {
        let pts = self.mesh.element_points(k);
        let scale = pts[0].distance(pts[1]);
        let tol = 1e-12 * scale;
        (0..pts.len()).all(|i| {
            let a = pts[i];
            let b = pts[(i + 1) % pts.len()];
            (b - a).cross(p - a) / (b - a).norm() >= -tol
        })
    }
}
