//! Element and edge classification against the interface.

use std::fmt;

use rayon::prelude::*;

use super::{CartesianMesh, MeshError};
use crate::geometry::{polygon_area, GeometryError, InterfaceCurve, Point2, Side, Vector2};

/// Mesh resolution hypotheses required of every element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// An edge meeting the interface more than once must be part of it.
    H1,
    /// Two crossing points of an element boundary lie on different edges.
    H2,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::H1 => f.write_str("H1"),
            Hypothesis::H2 => f.write_str("H2"),
        }
    }
}

/// Geometry of an interface element split by the chord `DE`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutInfo {
    pub d: Point2,
    pub e: Point2,
    pub minus_polygon: Vec<Point2>,
    pub plus_polygon: Vec<Point2>,
    /// Chord side of each element vertex; vertices on the chord are minus.
    pub vertex_sides: Vec<Side>,
    orientation: f64,
    scale: f64,
}

impl CutInfo {
    /// Splits the convex polygon `vertices` by the line through `d` and `e`.
    /// `minus_probe` is any point strictly on the minus side of the chord.
    pub fn from_chord(vertices: &[Point2], d: Point2, e: Point2, minus_probe: Point2) -> Self {
        let t = e - d;
        let scale = t.norm().max(f64::MIN_POSITIVE);
        let raw = t.cross(minus_probe - d);
        let orientation = if raw > 0.0 { -1.0 } else { 1.0 };
        let mut cut = Self {
            d,
            e,
            minus_polygon: Vec::new(),
            plus_polygon: Vec::new(),
            vertex_sides: Vec::new(),
            orientation,
            scale,
        };
        let tol = 1e-13 * scale * scale;
        let s: Vec<f64> = vertices
            .iter()
            .map(|&p| {
                let v = cut.signed(p);
                if v.abs() <= tol {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        cut.vertex_sides = s
            .iter()
            .map(|&v| if v <= 0.0 { Side::Minus } else { Side::Plus })
            .collect();
        cut.minus_polygon = clip(vertices, &s, -1.0, d, e);
        cut.plus_polygon = clip(vertices, &s, 1.0, d, e);
        cut
    }

    /// Positive on the plus side of the chord, scaled like a squared length.
    fn signed(&self, p: Point2) -> f64 {
        self.orientation * (self.e - self.d).cross(p - self.d)
    }

    /// Side of the chord a point lies on; the chord itself counts as minus.
    pub fn chord_side(&self, p: Point2) -> Side {
        if self.signed(p) <= 0.0 {
            Side::Minus
        } else {
            Side::Plus
        }
    }

    /// Unit normal of the chord pointing from the minus into the plus piece.
    pub fn chord_normal(&self) -> Vector2 {
        let t = self.e - self.d;
        Point2::new(-t.y, t.x) * (self.orientation / self.scale)
    }

    pub fn chord_length(&self) -> f64 {
        self.scale
    }

    pub fn minus_area(&self) -> f64 {
        polygon_area(&self.minus_polygon)
    }

    pub fn plus_area(&self) -> f64 {
        polygon_area(&self.plus_polygon)
    }
}

/// Sutherland-Hodgman clip of a convex polygon against `sign * s >= 0`,
/// inserting the exact chord endpoints where a side is crossed.
fn clip(vertices: &[Point2], s: &[f64], sign: f64, d: Point2, e: Point2) -> Vec<Point2> {
    let n = vertices.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let j = (i + 1) % n;
        let (si, sj) = (sign * s[i], sign * s[j]);
        if si >= 0.0 {
            out.push(vertices[i]);
        }
        if (si > 0.0 && sj < 0.0) || (si < 0.0 && sj > 0.0) {
            let t = s[i] / (s[i] - s[j]);
            let x = vertices[i].lerp(vertices[j], t);
            out.push(if x.distance(d) <= x.distance(e) { d } else { e });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementCut {
    NonInterface(Side),
    Interface(CutInfo),
}

impl ElementCut {
    pub fn is_interface(&self) -> bool {
        matches!(self, ElementCut::Interface(_))
    }

    pub fn cut(&self) -> Option<&CutInfo> {
        match self {
            ElementCut::Interface(c) => Some(c),
            ElementCut::NonInterface(_) => None,
        }
    }
}

/// Per-element cut data and per-edge interface crossings.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementClassification {
    pub elements: Vec<ElementCut>,
    /// Crossing of each mesh edge's interior with the interface, if any.
    pub edge_crossings: Vec<Option<Point2>>,
}

impl ElementClassification {
    pub fn interface_elements(&self) -> Vec<usize> {
        self.elements
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_interface())
            .map(|(k, _)| k)
            .collect()
    }

    pub fn is_interface_edge(&self, edge: usize) -> bool {
        self.edge_crossings[edge].is_some()
    }
}

/// Sub-polygons smaller than this fraction of the element are dropped.
const SLIVER_FRACTION: f64 = 1e-12;

/// An edge whose endpoints lie strictly on one side may still be crossed twice
/// by a shallow excursion of the curve. Excursions no deeper than this
/// fraction of the edge length are ignored and the edge counts as uncut.
pub const DIP_FRACTION: f64 = 1e-2;

fn violation(element: usize, reason: Hypothesis, detail: impl Into<String>) -> MeshError {
    MeshError::HypothesisViolation {
        element,
        reason,
        detail: detail.into(),
    }
}

fn from_geometry(element: usize, err: GeometryError) -> MeshError {
    violation(element, Hypothesis::H1, err.to_string())
}

/// Largest distance, estimated by `|phi| / |grad phi|`, that the curve
/// reaches into the opposite side along the segment.
fn dip_depth(curve: &InterfaceCurve, p0: Point2, p1: Point2, side: Side) -> f64 {
    let m = 256;
    (0..=m)
        .map(|i| p0.lerp(p1, i as f64 / m as f64))
        .filter(|&p| {
            let s = curve.side_of(p);
            s != side && s != Side::On
        })
        .map(|p| curve.phi(p).abs() / curve.gradient(p).norm())
        .fold(0.0, f64::max)
}

/// Interior crossing of a segment, tolerating shallow double crossings.
fn segment_crossing(curve: &InterfaceCurve, k: usize, p0: Point2, p1: Point2) -> Result<Option<Point2>, MeshError> {
    match curve.segment_intersection(p0, p1) {
        Ok(c) => Ok(c.map(|c| c.point)),
        Err(err @ GeometryError::MultipleRoots { .. }) => {
            let side = curve.side_of(p0);
            let shallow = side != Side::On
                && curve.side_of(p1) == side
                && dip_depth(curve, p0, p1, side) <= DIP_FRACTION * p0.distance(p1);
            if shallow {
                log::debug!("ignoring shallow double crossing of segment {p0} -> {p1}");
                Ok(None)
            } else {
                Err(from_geometry(k, err))
            }
        }
        Err(err) => Err(from_geometry(k, err)),
    }
}

fn classify_element(curve: &InterfaceCurve, k: usize, pts: &[Point2]) -> Result<ElementCut, MeshError> {
    let n = pts.len();
    let signs: Vec<Side> = pts.iter().map(|&p| curve.side_of(p)).collect();
    let has_minus = signs.contains(&Side::Minus);
    let has_plus = signs.contains(&Side::Plus);

    let mut crossings = Vec::with_capacity(2);
    for i in 0..n {
        if signs[i] == Side::On {
            crossings.push(pts[i]);
        }
    }
    for i in 0..n {
        let j = (i + 1) % n;
        if let Some(c) = segment_crossing(curve, k, pts[i], pts[j])? {
            crossings.push(c);
        }
    }

    if !(has_minus && has_plus) {
        return match (has_minus, has_plus) {
            (true, false) => Ok(ElementCut::NonInterface(Side::Minus)),
            (false, true) => Ok(ElementCut::NonInterface(Side::Plus)),
            _ => Err(violation(k, Hypothesis::H1, "every vertex lies on the interface")),
        };
    }
    if crossings.len() != 2 {
        return Err(violation(
            k,
            Hypothesis::H2,
            format!("element boundary meets the interface at {} points", crossings.len()),
        ));
    }
    let probe = pts[signs.iter().position(|&s| s == Side::Minus).unwrap()];
    let cut = CutInfo::from_chord(pts, crossings[0], crossings[1], probe);
    let area = polygon_area(pts);
    if cut.minus_area() < SLIVER_FRACTION * area {
        return Ok(ElementCut::NonInterface(Side::Plus));
    }
    if cut.plus_area() < SLIVER_FRACTION * area {
        return Ok(ElementCut::NonInterface(Side::Minus));
    }
    Ok(ElementCut::Interface(cut))
}

/// Labels each element as interface or non-interface and records the
/// crossing point of every interface edge.
///
/// Elements touched by the curve only at a vertex, or along a tangent point
/// without a sign change, are non-interface elements on the side of their
/// remaining vertices.
pub fn classify(mesh: &CartesianMesh, curve: &InterfaceCurve) -> Result<ElementClassification, MeshError> {
    let elements = (0..mesh.element_count())
        .into_par_iter()
        .map(|k| classify_element(curve, k, &mesh.element_points(k)))
        .collect::<Result<Vec<_>, _>>()?;
    let edge_crossings = mesh
        .edges()
        .par_iter()
        .map(|e| segment_crossing(curve, e.k1, e.p0, e.p1))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ElementClassification {
        elements,
        edge_crossings,
    })
}

/// Checks the mesh resolution hypotheses: every interface element has its two
/// crossing points on different edges, and no part of the curve lies hidden
/// inside a non-interface element deeper than a shallow edge excursion.
pub fn validate_hypotheses(
    mesh: &CartesianMesh,
    classification: &ElementClassification,
    curve: &InterfaceCurve,
) -> Result<(), MeshError> {
    for (k, c) in classification.elements.iter().enumerate() {
        let Some(cut) = c.cut() else { continue };
        let pts = mesh.element_points(k);
        let h = mesh.element_diameter(k);
        let n = pts.len();
        for i in 0..n {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            let on_side = |p: Point2| {
                let t = b - a;
                let along = (p - a).dot(t) / t.dot(t);
                (t.cross(p - a) / t.norm()).abs() <= 1e-12 * h && (-1e-12..=1.0 + 1e-12).contains(&along)
            };
            if on_side(cut.d) && on_side(cut.e) {
                return Err(violation(k, Hypothesis::H2, format!("both crossings lie on side {i}")));
            }
        }
    }

    let samples = curve.level_set().sample_curve(64 * mesh.base_n().max(4));
    let locator = mesh.locator();
    for p in samples {
        let Some(k) = locator.locate(p) else { continue };
        if classification.elements[k].is_interface() {
            continue;
        }
        let pts = mesh.element_points(k);
        let h = mesh.element_diameter(k);
        let n = pts.len();
        let depth = (0..n)
            .map(|i| {
                let (a, b) = (pts[i], pts[(i + 1) % n]);
                (b - a).cross(p - a) / (b - a).norm()
            })
            .fold(f64::INFINITY, f64::min);
        if depth > DIP_FRACTION * h {
            return Err(violation(
                k,
                Hypothesis::H2,
                format!("interface passes through the interior of a non-interface element at {p}"),
            ));
        }
    }
    Ok(())
}
