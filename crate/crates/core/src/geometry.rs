//! Interface curve, coefficient field and basic planar vector algebra.
//!
//! The interface is an implicit curve `{phi = 0}` of a level-set function
//! that is negative inside the minus subdomain and positive inside the plus
//! subdomain.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

/// A point (or vector) in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

pub type Vector2 = Point2;

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the cross product.
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn lerp(self, other: Self, t: f64) -> Self {
        Self::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
    }

    pub fn midpoint(self, other: Self) -> Self {
        self.lerp(other, 0.5)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Point2 {
    fn add_assign(&mut self, rhs: Self) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Point2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Point2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<Point2> for f64 {
    type Output = Point2;
    fn mul(self, rhs: Point2) -> Point2 {
        rhs * self
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Signed area of a polygon given in order (positive for counterclockwise).
pub fn polygon_area(points: &[Point2]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..n {
        twice += points[i].cross(points[(i + 1) % n]);
    }
    0.5 * twice
}

/// Which subdomain a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Minus,
    Plus,
    On,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Side::Minus => "minus",
            Side::Plus => "plus",
            Side::On => "on",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("segment {p0} -> {p1} meets the interface more than once ({sign_changes} sign changes)")]
    MultipleRoots {
        p0: Point2,
        p1: Point2,
        sign_changes: usize,
    },
    #[error("level-set gradient vanishes at {0}")]
    DegenerateGradient(Point2),
    #[error("invalid curve parameters: {0}")]
    InvalidCurve(String),
}

/// A smooth level-set function describing the interface.
pub trait LevelSet: Send + Sync + fmt::Debug {
    fn value(&self, p: Point2) -> f64;
    fn gradient(&self, p: Point2) -> Vector2;

    /// Points on the zero level set, if the curve admits a parametrization.
    ///
    /// Used to detect closed curve components hidden inside a single element.
    fn sample_curve(&self, _count: usize) -> Vec<Point2> {
        Vec::new()
    }
}

/// Axis-aligned ellipse, `phi = r^2 - 1` with
/// `r^2 = (x - x0)^2 / a^2 + (y - y0)^2 / b^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: Point2,
    pub a: f64,
    pub b: f64,
}

impl Ellipse {
    pub fn new(center: Point2, a: f64, b: f64) -> Result<Self, GeometryError> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() && center.is_finite()) {
            return Err(GeometryError::InvalidCurve(format!(
                "ellipse semi-axes must be positive and finite (a = {a}, b = {b})"
            )));
        }
        Ok(Self { center, a, b })
    }

    /// The interface used throughout the numerical examples: centered at
    /// (-0.2, 0.1) with `a = pi / 6.28` and `b = 3a / 2`.
    #[allow(clippy::approx_constant)]
    pub fn reference() -> Self {
        let a = std::f64::consts::PI / 6.28;
        Self {
            center: Point2::new(-0.2, 0.1),
            a,
            b: 1.5 * a,
        }
    }

    /// Elliptic radius `r(x, y)`; equals one exactly on the curve.
    pub fn radius(&self, p: Point2) -> f64 {
        self.radius_squared(p).sqrt()
    }

    pub fn radius_squared(&self, p: Point2) -> f64 {
        let dx = (p.x - self.center.x) / self.a;
        let dy = (p.y - self.center.y) / self.b;
        dx * dx + dy * dy
    }

    /// Point at parameter angle `theta`.
    pub fn point_at(&self, theta: f64) -> Point2 {
        Point2::new(
            self.center.x + self.a * theta.cos(),
            self.center.y + self.b * theta.sin(),
        )
    }
}

impl LevelSet for Ellipse {
    fn value(&self, p: Point2) -> f64 {
        self.radius_squared(p) - 1.0
    }

    fn gradient(&self, p: Point2) -> Vector2 {
        Point2::new(
            2.0 * (p.x - self.center.x) / (self.a * self.a),
            2.0 * (p.y - self.center.y) / (self.b * self.b),
        )
    }

    fn sample_curve(&self, count: usize) -> Vec<Point2> {
        (0..count)
            .map(|k| self.point_at(2.0 * std::f64::consts::PI * k as f64 / count as f64))
            .collect()
    }
}

/// Straight line `phi = n . (p - p0)`; minus side is where `n . (p - p0) < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub origin: Point2,
    pub normal: Vector2,
}

impl LevelSet for Line {
    fn value(&self, p: Point2) -> f64 {
        self.normal.dot(p - self.origin)
    }

    fn gradient(&self, _p: Point2) -> Vector2 {
        self.normal
    }
}

/// Tolerances used by interface queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Absolute tolerance on `|phi|` for a point to count as on the curve.
    pub on: f64,
    /// Tolerance on the segment parameter during root bracketing.
    pub root: f64,
    /// Smallest admissible `|grad phi|`.
    pub grad: f64,
    /// Sub-intervals sampled per segment when checking for repeated crossings.
    pub samples: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            on: 1e-12,
            root: 1e-12,
            grad: 1e-10,
            samples: 32,
        }
    }
}

/// A crossing of a segment with the interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub point: Point2,
    /// Parameter in `(0, 1)` along the segment.
    pub t: f64,
}

/// The interface Γ together with the tolerances used to query it.
#[derive(Debug, Clone)]
pub struct InterfaceCurve {
    level_set: Arc<dyn LevelSet>,
    pub tol: Tolerances,
}

impl InterfaceCurve {
    pub fn new(level_set: impl LevelSet + 'static) -> Self {
        Self {
            level_set: Arc::new(level_set),
            tol: Tolerances::default(),
        }
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn level_set(&self) -> &dyn LevelSet {
        self.level_set.as_ref()
    }

    pub fn phi(&self, p: Point2) -> f64 {
        self.level_set.value(p)
    }

    pub fn gradient(&self, p: Point2) -> Vector2 {
        self.level_set.gradient(p)
    }

    fn classify_value(&self, value: f64) -> Side {
        if value < -self.tol.on {
            Side::Minus
        } else if value > self.tol.on {
            Side::Plus
        } else {
            Side::On
        }
    }

    pub fn side_of(&self, p: Point2) -> Side {
        self.classify_value(self.phi(p))
    }

    /// Unique crossing of the open segment `p0 -> p1` with the interface.
    ///
    /// Returns `None` when the segment does not cross. A segment whose
    /// endpoint lies on the curve reports no interior crossing unless the
    /// curve enters the segment interior, which counts as a second meeting
    /// point and yields [`GeometryError::MultipleRoots`].
    pub fn segment_intersection(&self, p0: Point2, p1: Point2) -> Result<Option<Crossing>, GeometryError> {
        let m = self.tol.samples.max(1);
        let f = |t: f64| self.phi(p0.lerp(p1, t));

        let values: Vec<f64> = (0..=m).map(|k| f(k as f64 / m as f64)).collect();
        let signs: Vec<Side> = values.iter().map(|&v| self.classify_value(v)).collect();
        let start_on = signs[0] == Side::On;
        let end_on = signs[m] == Side::On;

        // Sign changes among the strictly signed samples, with the bracket of each.
        let mut brackets = Vec::new();
        let mut last: Option<(usize, Side)> = None;
        for (k, &s) in signs.iter().enumerate() {
            if s == Side::On {
                continue;
            }
            if let Some((j, prev)) = last {
                if prev != s {
                    brackets.push((j, k));
                }
            }
            last = Some((k, s));
        }

        let allowed = usize::from(!(start_on || end_on));
        if brackets.len() > allowed {
            return Err(GeometryError::MultipleRoots {
                p0,
                p1,
                sign_changes: brackets.len() + usize::from(start_on) + usize::from(end_on),
            });
        }
        let Some(&(j, k)) = brackets.first() else {
            return Ok(None);
        };

        let mut lo = j as f64 / m as f64;
        let mut hi = k as f64 / m as f64;
        let mut f_lo = values[j];
        let length = p0.distance(p1).max(f64::MIN_POSITIVE);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let f_mid = f(mid);
            if f_mid == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if (f_mid < 0.0) == (f_lo < 0.0) {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
            let converged_t = hi - lo <= self.tol.root;
            if converged_t && (f_mid.abs() <= 0.1 * self.tol.on || (hi - lo) * length <= 4.0 * f64::EPSILON) {
                break;
            }
        }
        let t = 0.5 * (lo + hi);
        Ok(Some(Crossing {
            point: p0.lerp(p1, t),
            t,
        }))
    }

    /// Unit normal of the curve at `p`, pointing from the minus into the plus
    /// subdomain.
    pub fn unit_normal(&self, p: Point2) -> Result<Vector2, GeometryError> {
        let g = self.gradient(p);
        let n = g.norm();
        if !(n >= self.tol.grad) {
            return Err(GeometryError::DegenerateGradient(p));
        }
        Ok(g * (1.0 / n))
    }
}

/// Piecewise-constant diffusion coefficient.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoefficientField {
    pub beta_minus: f64,
    pub beta_plus: f64,
}

impl CoefficientField {
    pub fn new(beta_minus: f64, beta_plus: f64) -> Result<Self, GeometryError> {
        if !(beta_minus > 0.0 && beta_plus > 0.0 && beta_minus.is_finite() && beta_plus.is_finite()) {
            return Err(GeometryError::InvalidCurve(format!(
                "diffusion coefficients must be positive (got {beta_minus}, {beta_plus})"
            )));
        }
        Ok(Self { beta_minus, beta_plus })
    }

    /// Coefficient on a side; points on the curve take the minus value.
    pub fn on_side(&self, side: Side) -> f64 {
        match side {
            Side::Plus => self.beta_plus,
            Side::Minus | Side::On => self.beta_minus,
        }
    }

    pub fn min(&self) -> f64 {
        self.beta_minus.min(self.beta_plus)
    }

    pub fn max(&self) -> f64 {
        self.beta_minus.max(self.beta_plus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_curve() -> (Ellipse, InterfaceCurve) {
        let e = Ellipse::reference();
        (e, InterfaceCurve::new(e))
    }

    #[test]
    fn side_queries_on_reference_ellipse() {
        let (e, curve) = reference_curve();
        assert_eq!(curve.side_of(Point2::new(-0.2, 0.1)), Side::Minus);
        assert_eq!(curve.side_of(Point2::new(0.9, 0.9)), Side::Plus);
        assert_eq!(curve.side_of(Point2::new(e.center.x + e.a, e.center.y)), Side::On);
    }

    #[test]
    fn crossing_along_semi_axis() {
        let (e, curve) = reference_curve();
        let p0 = e.center;
        let p1 = Point2::new(e.center.x + 2.0 * e.a, e.center.y);
        let c = curve.segment_intersection(p0, p1).unwrap().unwrap();
        assert!((c.t - 0.5).abs() < 1e-12);
        assert!((c.point.x - (e.center.x + e.a)).abs() < 1e-12);
        assert!(curve.phi(c.point).abs() <= curve.tol.on);
    }

    #[test]
    fn segment_inside_has_no_crossing() {
        let (e, curve) = reference_curve();
        let p0 = e.center;
        let p1 = Point2::new(e.center.x + 0.3 * e.a, e.center.y + 0.2 * e.b);
        assert_eq!(curve.segment_intersection(p0, p1).unwrap(), None);
    }

    #[test]
    fn chord_through_ellipse_reports_multiple_roots() {
        let (_, curve) = reference_curve();
        let p0 = Point2::new(-1.0, 0.1);
        let p1 = Point2::new(1.0, 0.1);
        // Independent check: dense sampling finds exactly two sign changes.
        let n = 10_000;
        let mut changes = 0;
        let mut prev = curve.phi(p0).signum();
        for k in 1..=n {
            let s = curve.phi(p0.lerp(p1, k as f64 / n as f64)).signum();
            if s != prev {
                changes += 1;
            }
            prev = s;
        }
        assert_eq!(changes, 2);
        assert!(matches!(
            curve.segment_intersection(p0, p1),
            Err(GeometryError::MultipleRoots { .. })
        ));
    }

    #[test]
    fn normals_at_axis_points() {
        let (e, curve) = reference_curve();
        let n = curve.unit_normal(Point2::new(e.center.x + e.a, e.center.y)).unwrap();
        assert!((n.x - 1.0).abs() < 1e-14 && n.y.abs() < 1e-14);
        let n = curve.unit_normal(Point2::new(e.center.x, e.center.y + e.b)).unwrap();
        assert!(n.x.abs() < 1e-14 && (n.y - 1.0).abs() < 1e-14);
    }

    #[test]
    fn normal_at_45_degrees_matches_finite_differences() {
        let (e, curve) = reference_curve();
        let p = e.point_at(std::f64::consts::FRAC_PI_4);
        let h = 1e-6;
        let gx = (curve.phi(p + Point2::new(h, 0.0)) - curve.phi(p - Point2::new(h, 0.0))) / (2.0 * h);
        let gy = (curve.phi(p + Point2::new(0.0, h)) - curve.phi(p - Point2::new(0.0, h))) / (2.0 * h);
        let g = Point2::new(gx, gy);
        let fd = g * (1.0 / g.norm());
        let n = curve.unit_normal(p).unwrap();
        assert!((n - fd).norm() < 1e-8);
        assert!((n.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_gradient_at_center() {
        let (e, curve) = reference_curve();
        assert!(matches!(
            curve.unit_normal(e.center),
            Err(GeometryError::DegenerateGradient(_))
        ));
    }

    #[test]
    fn coefficient_field_rejects_nonpositive() {
        assert!(CoefficientField::new(0.0, 1.0).is_err());
        let beta = CoefficientField::new(1.0, 10.0).unwrap();
        assert_eq!(beta.min(), 1.0);
        assert_eq!(beta.max(), 10.0);
        assert_eq!(beta.on_side(Side::Plus), 10.0);
    }

    #[test]
    fn polygon_area_of_unit_square() {
        let sq = [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        assert!((polygon_area(&sq) - 1.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn crossing_lies_on_curve(theta in 0.0..std::f64::consts::TAU, s in 0.05..0.95f64) {
                let (e, curve) = reference_curve();
                // Segment from the center outward through the curve crosses once.
                let on = e.point_at(theta);
                let dir = on - e.center;
                let p0 = e.center + dir * s;
                let p1 = e.center + dir * (1.0 + s);
                let c = curve.segment_intersection(p0, p1).unwrap().unwrap();
                prop_assert!(curve.phi(c.point).abs() <= curve.tol.on);
            }

            #[test]
            fn normal_agrees_with_finite_differences(theta in 0.0..std::f64::consts::TAU) {
                let (e, curve) = reference_curve();
                let p = e.point_at(theta);
                let h = 1e-6;
                let g = Point2::new(
                    (curve.phi(p + Point2::new(h, 0.0)) - curve.phi(p - Point2::new(h, 0.0))) / (2.0 * h),
                    (curve.phi(p + Point2::new(0.0, h)) - curve.phi(p - Point2::new(0.0, h))) / (2.0 * h),
                );
                let n = curve.unit_normal(p).unwrap();
                prop_assert!((n - g * (1.0 / g.norm())).norm() < 1e-6);
            }

            #[test]
            fn side_constant_on_noncrossing_segments(x0 in -1.0..1.0f64, y0 in -1.0..1.0f64,
                                                     x1 in -1.0..1.0f64, y1 in -1.0..1.0f64) {
                let (_, curve) = reference_curve();
                let p0 = Point2::new(x0, y0);
                let p1 = Point2::new(x1, y1);
                prop_assume!(p0.distance(p1) > 1e-6);
                if let Ok(None) = curve.segment_intersection(p0, p1) {
                    let s0 = curve.side_of(p0);
                    prop_assume!(s0 != Side::On && curve.side_of(p1) != Side::On);
                    for k in 0..=32 {
                        prop_assert_eq!(curve.side_of(p0.lerp(p1, k as f64 / 32.0)), s0);
                    }
                }
            }
        }
    }
}
