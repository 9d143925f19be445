//! Gauss rules on segments, triangles and parallelograms, and composite rules
//! on elements and edges split by the interface.

use thiserror::Error;

use crate::geometry::{polygon_area, InterfaceCurve, Point2, Side};
use crate::mesh::CutInfo;

pub const MAX_ORDER: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("sub-polygon triangulation produced a triangle of area {area:e}")]
    DegenerateSubPolygon { area: f64 },
}

/// Points and weights in physical coordinates. Split rules carry a side
/// label per point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Point2>,
    pub weights: Vec<f64>,
    pub sides: Option<Vec<Side>>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Side label of point `i`, if the rule is split.
    pub fn side(&self, i: usize) -> Option<Side> {
        self.sides.as_ref().map(|s| s[i])
    }

    pub fn with_side(mut self, side: Side) -> Self {
        self.sides = Some(vec![side; self.points.len()]);
        self
    }

    pub fn integrate(&self, mut f: impl FnMut(Point2) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }

    /// Appends the points of `other`; both rules must agree on having labels.
    fn extend(&mut self, other: QuadratureRule) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
        if let Some(s) = other.sides {
            self.sides.get_or_insert_with(Vec::new).extend(s);
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` with `n` points.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// `order`-point Gauss rule on the segment `p0 p1`, exact to degree
/// `2 order - 1`.
pub fn gauss_segment(p0: Point2, p1: Point2, order: usize) -> QuadratureRule {
    let (x, w) = gauss_legendre(order);
    let half = 0.5 * p0.distance(p1);
    QuadratureRule {
        points: x.iter().map(|&t| p0.lerp(p1, 0.5 * (t + 1.0))).collect(),
        weights: w.iter().map(|&wi| wi * half).collect(),
        sides: None,
    }
}

/// Collapsed tensor rule on a triangle, exact to total degree `2 order - 1`.
pub fn gauss_triangle(a: Point2, b: Point2, c: Point2, order: usize) -> QuadratureRule {
    let (xu, wu) = gauss_legendre(order + 1);
    let (xv, wv) = gauss_legendre(order);
    let area2 = (b - a).cross(c - a).abs();
    let mut rule = QuadratureRule {
        points: Vec::with_capacity(xu.len() * xv.len()),
        weights: Vec::with_capacity(xu.len() * xv.len()),
        sides: None,
    };
    for (&su, &au) in xu.iter().zip(&wu) {
        let u = 0.5 * (su + 1.0);
        for (&sv, &av) in xv.iter().zip(&wv) {
            let v = 0.5 * (sv + 1.0);
            rule.points.push(a + ((b - a) + (c - b) * v) * u);
            rule.weights.push(0.25 * au * av * area2 * u);
        }
    }
    rule
}

/// Tensor rule on the parallelogram whose four corners are `pts` in order.
pub fn gauss_parallelogram(pts: &[Point2], order: usize) -> QuadratureRule {
    let (x, w) = gauss_legendre(order);
    let (o, eu, ev) = (pts[0], pts[1] - pts[0], pts[3] - pts[0]);
    let jac = eu.cross(ev).abs();
    let mut rule = QuadratureRule {
        points: Vec::with_capacity(x.len() * x.len()),
        weights: Vec::with_capacity(x.len() * x.len()),
        sides: None,
    };
    for (&sv, &av) in x.iter().zip(&w) {
        for (&su, &au) in x.iter().zip(&w) {
            let (u, v) = (0.5 * (su + 1.0), 0.5 * (sv + 1.0));
            rule.points.push(o + eu * u + ev * v);
            rule.weights.push(0.25 * au * av * jac);
        }
    }
    rule
}

/// Rule on a mesh cell given by its vertices (triangle or rectangle).
pub fn gauss_cell(pts: &[Point2], order: usize) -> QuadratureRule {
    match pts.len() {
        3 => gauss_triangle(pts[0], pts[1], pts[2], order),
        4 => gauss_parallelogram(pts, order),
        n => panic!("unsupported cell with {n} vertices"),
    }
}

/// Rule over a convex polygon by fanning from its vertex centroid.
fn polygon_rule(poly: &[Point2], order: usize) -> Result<QuadratureRule, QuadratureError> {
    if poly.len() == 3 {
        let area = polygon_area(poly);
        if area <= 0.0 {
            return Err(QuadratureError::DegenerateSubPolygon { area });
        }
        return Ok(gauss_triangle(poly[0], poly[1], poly[2], order));
    }
    let n = poly.len() as f64;
    let c = poly.iter().fold(Point2::new(0.0, 0.0), |s, &p| s + p) * (1.0 / n);
    let total = polygon_area(poly);
    let mut rule = QuadratureRule::default();
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let area = 0.5 * (p - c).cross(q - c);
        if area <= 1e-15 * total {
            if area < -1e-14 * total || total <= 0.0 {
                return Err(QuadratureError::DegenerateSubPolygon { area });
            }
            continue;
        }
        rule.extend(gauss_triangle(c, p, q, order));
    }
    Ok(rule)
}

/// Composite rule over an interface element: each chord sub-polygon is
/// triangulated and its points labelled with that side.
pub fn split_cell_quadrature(cut: &CutInfo, order: usize) -> Result<QuadratureRule, QuadratureError> {
    let mut rule = polygon_rule(&cut.minus_polygon, order)?.with_side(Side::Minus);
    rule.extend(polygon_rule(&cut.plus_polygon, order)?.with_side(Side::Plus));
    Ok(rule)
}

fn segment_side(curve: &InterfaceCurve, p0: Point2, p1: Point2) -> Side {
    match curve.side_of(p0.midpoint(p1)) {
        Side::On => Side::Minus,
        s => s,
    }
}

/// Rule along an edge, split at its interface crossing when there is one.
pub fn split_edge_quadrature(
    p0: Point2,
    p1: Point2,
    crossing: Option<Point2>,
    curve: &InterfaceCurve,
    order: usize,
) -> QuadratureRule {
    match crossing {
        None => gauss_segment(p0, p1, order).with_side(segment_side(curve, p0, p1)),
        Some(x) => {
            let mut rule = gauss_segment(p0, x, order).with_side(segment_side(curve, p0, x));
            rule.extend(gauss_segment(x, p1, order).with_side(segment_side(curve, x, p1)));
            rule
        }
    }
}
