//! Manufactured solutions, error norms, convergence rates and point-wise
//! error fields.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{DgConfig, DgSpace};
use crate::geometry::{CoefficientField, Ellipse, Point2, Side, Vector2};
use crate::quadrature::QuadratureError;

/// Below this elliptic radius the source term is treated as singular.
pub const SINGULAR_RADIUS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolutionError {
    #[error("source term is singular at ({x}, {y})")]
    SingularPoint { x: f64, y: f64 },
}

/// `u = a^2 b^2 r^p / beta^-` inside the ellipse and
/// `u = a^2 b^2 (r^p / beta^+ + 1 / beta^- - 1 / beta^+)` outside, with `r`
/// the elliptic radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedSolution {
    pub p: f64,
    pub beta: CoefficientField,
    pub ellipse: Ellipse,
}

impl ManufacturedSolution {
    pub fn new(p: f64, beta: CoefficientField, ellipse: Ellipse) -> Self {
        Self { p, beta, ellipse }
    }

    fn scale(&self) -> f64 {
        let e = &self.ellipse;
        e.a * e.a * e.b * e.b
    }

    /// Side by the sign of `r - 1`; points on the curve count as minus.
    pub fn side(&self, pt: Point2) -> Side {
        if self.ellipse.radius_squared(pt) <= 1.0 {
            Side::Minus
        } else {
            Side::Plus
        }
    }

    pub fn value(&self, pt: Point2, side: Side) -> f64 {
        let rp = self.ellipse.radius(pt).powf(self.p);
        let s = self.scale();
        match side {
            Side::Plus => s * (rp / self.beta.beta_plus + 1.0 / self.beta.beta_minus - 1.0 / self.beta.beta_plus),
            Side::Minus | Side::On => s * rp / self.beta.beta_minus,
        }
    }

    pub fn gradient(&self, pt: Point2, side: Side) -> Vector2 {
        let e = &self.ellipse;
        let r2 = e.radius_squared(pt);
        if r2 == 0.0 {
            return Vector2::default();
        }
        let coef = self.scale() * self.p * r2.powf(0.5 * self.p - 1.0) / self.beta.on_side(side);
        Vector2::new(
            coef * (pt.x - e.center.x) / (e.a * e.a),
            coef * (pt.y - e.center.y) / (e.b * e.b),
        )
    }

    /// `f = -div(beta grad u)`, identical on both sides.
    pub fn source_term(&self, pt: Point2, _side: Side) -> Result<f64, SolutionError> {
        let e = &self.ellipse;
        let r = e.radius(pt);
        let p = self.p;
        if r < SINGULAR_RADIUS && p < 4.0 {
            return Err(SolutionError::SingularPoint { x: pt.x, y: pt.y });
        }
        let (a2, b2) = (e.a * e.a, e.b * e.b);
        let (dx, dy) = (pt.x - e.center.x, pt.y - e.center.y);
        let quad = dx * dx / (a2 * a2) + dy * dy / (b2 * b2);
        let lap = p * (p - 2.0) * r.powf(p - 4.0) * quad + p * r.powf(p - 2.0) * (1.0 / a2 + 1.0 / b2);
        Ok(-self.scale() * lap)
    }
}

/// Side on which the exact solution is evaluated at a quadrature point of
/// an interface element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExactSide {
    /// The chord side, the same piece that evaluates `u_h`.
    Chord,
    /// The side of the curved interface.
    True,
}

/// Point set over which the maximum error is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinfSampling {
    /// Element vertices.
    Vertices,
    /// Quadrature points and element vertices.
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormOptions {
    /// Gauss points per direction.
    pub order: usize,
    pub exact_side: ExactSide,
    pub linf: LinfSampling,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self {
            order: 6,
            exact_side: ExactSide::Chord,
            linf: LinfSampling::Vertices,
        }
    }
}

/// Errors of one discrete solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Norms {
    /// Maximum error over the configured sampling.
    pub linf: f64,
    pub linf_vertices: f64,
    pub linf_quadrature: f64,
    pub l2: f64,
    pub h1semi: f64,
    /// `(sum_K int_K beta |grad e|^2 + sum_B sigma0 / |B|^alpha int_B [u_h]^2)^(1/2)`.
    pub energy: f64,
    /// Local semi-H1 errors `eta_K`.
    pub indicators: Vec<f64>,
}

#[derive(Default, Clone, Copy)]
struct Local {
    vertices: f64,
    quadrature: f64,
    l2: f64,
    h1: f64,
    weighted: f64,
}

fn element_errors(
    space: &DgSpace,
    k: usize,
    uh: &[f64],
    sol: &ManufacturedSolution,
    opts: &NormOptions,
) -> Result<Local, QuadratureError> {
    let basis = &space.bases[k];
    let d = basis.len();
    let coef = &uh[space.dofs.range(k)];
    let rule = space.cell_rule(k, opts.order)?;
    let mut vals = [0.0; 4];
    let mut grads = [Vector2::default(); 4];
    let mut out = Local::default();
    let true_side = |p: Point2| match space.curve.side_of(p) {
        Side::On => Side::Minus,
        s => s,
    };
    for q in 0..rule.len() {
        let p = rule.points[q];
        let piece = rule.side(q).unwrap_or(Side::Minus);
        let side = match opts.exact_side {
            ExactSide::Chord => piece,
            ExactSide::True => true_side(p),
        };
        basis.eval_all(p, piece, &mut vals, &mut grads);
        let mut v = 0.0;
        let mut g = Vector2::default();
        for i in 0..d {
            v += coef[i] * vals[i];
            g += grads[i] * coef[i];
        }
        let e = sol.value(p, side) - v;
        let ge = sol.gradient(p, side) - g;
        let w = rule.weights[q];
        out.quadrature = out.quadrature.max(e.abs());
        out.l2 += w * e * e;
        let g2 = ge.dot(ge);
        out.h1 += w * g2;
        out.weighted += w * space.beta.on_side(side) * g2;
    }
    for p in space.mesh.element_points(k) {
        let piece = basis.piece(p);
        basis.eval_all(p, piece, &mut vals, &mut grads);
        let v: f64 = (0..d).map(|i| coef[i] * vals[i]).sum();
        out.vertices = out.vertices.max((sol.value(p, true_side(p)) - v).abs());
    }
    out.quadrature = out.quadrature.max(out.vertices);
    Ok(out)
}

fn edge_jump(space: &DgSpace, e: usize, uh: &[f64], config: &DgConfig) -> f64 {
    let edge = &space.mesh.edges()[e];
    let Some(k2) = edge.k2 else { return 0.0 };
    let rule = space.edge_rule(e, config.edge_order);
    let mut vals = [0.0; 4];
    let mut grads = [Vector2::default(); 4];
    let mut sum = 0.0;
    for q in 0..rule.len() {
        let p = rule.points[q];
        let mut trace = [0.0; 2];
        for (t, k) in [edge.k1, k2].into_iter().enumerate() {
            let basis = &space.bases[k];
            basis.eval_all(p, space.trace_side(k, p), &mut vals, &mut grads);
            let coef = &uh[space.dofs.range(k)];
            trace[t] = (0..basis.len()).map(|i| coef[i] * vals[i]).sum();
        }
        let jump = trace[0] - trace[1];
        sum += rule.weights[q] * jump * jump;
    }
    config.penalty(edge.length) * sum
}

/// Error norms of `uh` against the exact solution. Discrete values use the
/// chord side of each quadrature point, exact values the side selected in
/// `opts`.
pub fn compute_norms(
    space: &DgSpace,
    uh: &[f64],
    sol: &ManufacturedSolution,
    config: &DgConfig,
    opts: &NormOptions,
) -> Result<Norms, QuadratureError> {
    let locals: Vec<Local> = (0..space.mesh.element_count())
        .into_par_iter()
        .map(|k| element_errors(space, k, uh, sol, opts))
        .collect::<Result<_, _>>()?;
    let jumps: Vec<f64> = (0..space.mesh.edges().len())
        .into_par_iter()
        .map(|e| edge_jump(space, e, uh, config))
        .collect();
    let mut total = Local::default();
    for l in &locals {
        total.vertices = total.vertices.max(l.vertices);
        total.quadrature = total.quadrature.max(l.quadrature);
        total.l2 += l.l2;
        total.h1 += l.h1;
        total.weighted += l.weighted;
    }
    let jump: f64 = jumps.iter().sum();
    Ok(Norms {
        linf: match opts.linf {
            LinfSampling::Vertices => total.vertices,
            LinfSampling::Quadrature => total.quadrature,
        },
        linf_vertices: total.vertices,
        linf_quadrature: total.quadrature,
        l2: total.l2.sqrt(),
        h1semi: total.h1.sqrt(),
        energy: (total.weighted + jump).sqrt(),
        indicators: locals.iter().map(|l| l.h1.sqrt()).collect(),
    })
}

/// `log2(e_{k-1} / e_k)` between consecutive levels.
pub fn convergence_rates(errors: &[f64]) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(errors.len());
    for (k, &e) in errors.iter().enumerate() {
        out.push((k > 0).then(|| (errors[k - 1] / e).log2()));
    }
    out
}

/// Least-squares slope of `log e` against `log DoF`.
pub fn dof_slope(dofs: &[usize], errors: &[f64]) -> f64 {
    let x: Vec<f64> = dofs.iter().map(|&d| (d as f64).ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Samples `|u_h - u|` at the centers of a `resolution x resolution` raster
/// of the domain and writes `x y err` rows. Returns the largest sample.
pub fn export_error_field<W: Write>(
    space: &DgSpace,
    uh: &[f64],
    sol: &ManufacturedSolution,
    resolution: usize,
    mut out: W,
) -> std::io::Result<f64> {
    let dom = space.mesh.domain();
    let locator = space.mesh.locator();
    let hx = (dom.x1 - dom.x0) / resolution as f64;
    let hy = (dom.y1 - dom.y0) / resolution as f64;
    let mut max = 0.0f64;
    for j in 0..resolution {
        for i in 0..resolution {
            let p = Point2::new(dom.x0 + (i as f64 + 0.5) * hx, dom.y0 + (j as f64 + 0.5) * hy);
            let err = match locator.locate(p) {
                Some(k) => {
                    let v = space.bases[k].eval_combination(&uh[space.dofs.range(k)], p);
                    let side = match space.curve.side_of(p) {
                        Side::On => Side::Minus,
                        s => s,
                    };
                    (v - sol.value(p, side)).abs()
                }
                None => 0.0,
            };
            max = max.max(err);
            writeln!(out, "{:.10e} {:.10e} {:.10e}", p.x, p.y, err)?;
        }
    }
    Ok(max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference(p: f64) -> ManufacturedSolution {
        ManufacturedSolution::new(p, CoefficientField::new(1.0, 10.0).unwrap(), Ellipse::reference())
    }

    fn fd_source(sol: &ManufacturedSolution, pt: Point2, h: f64) -> f64 {
        let side = sol.side(pt);
        let beta = sol.beta.on_side(side);
        let u = |x: f64, y: f64| sol.value(Point2::new(x, y), side);
        let lap = (u(pt.x + h, pt.y) + u(pt.x - h, pt.y) + u(pt.x, pt.y + h) + u(pt.x, pt.y - h) - 4.0 * u(pt.x, pt.y))
            / (h * h);
        -beta * lap
    }

    #[test]
    fn laplacian_of_r_squared() {
        let sol = ManufacturedSolution::new(
            2.0,
            CoefficientField::new(1.0, 1.0).unwrap(),
            Ellipse::new(Point2::new(0.0, 0.0), 1.0, 1.0).unwrap(),
        );
        for pt in [Point2::new(0.3, -0.2), Point2::new(0.9, 0.9)] {
            assert!((sol.source_term(pt, Side::Minus).unwrap() + 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn source_matches_finite_differences() {
        let sol = reference(5.0);
        for pt in [Point2::new(0.4, 0.55), Point2::new(-0.3, 0.2), Point2::new(-0.9, -0.8)] {
            let f = sol.source_term(pt, sol.side(pt)).unwrap();
            let fd = fd_source(&sol, pt, 1e-4);
            assert!((f - fd).abs() < 1e-6 * f.abs(), "{f} vs {fd}");
        }
    }

    #[test]
    fn low_regularity_source_growth() {
        let sol = reference(0.5);
        let e = sol.ellipse;
        for r in [0.1, 0.01] {
            let pt = Point2::new(e.center.x + r * e.a, e.center.y);
            let f = sol.source_term(pt, Side::Minus).unwrap();
            let fd = fd_source(&sol, pt, r * e.a * 1e-3);
            assert!((f - fd).abs() < 1e-4 * f.abs(), "{f} vs {fd}");
        }
        assert!(matches!(
            sol.source_term(e.center, Side::Minus),
            Err(SolutionError::SingularPoint { .. })
        ));
    }

    #[test]
    fn continuity_across_curve() {
        let sol = reference(5.0);
        for k in 0..16 {
            let pt = sol.ellipse.point_at(k as f64 * 0.4);
            let (um, up) = (sol.value(pt, Side::Minus), sol.value(pt, Side::Plus));
            assert!((um - up).abs() < 1e-14);
            let fm = sol.gradient(pt, Side::Minus) * sol.beta.beta_minus;
            let fp = sol.gradient(pt, Side::Plus) * sol.beta.beta_plus;
            assert!((fm - fp).norm() < 1e-13);
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let sol = reference(5.0);
        let pt = Point2::new(0.5, -0.4);
        let s = sol.side(pt);
        let h = 1e-6;
        let gx = (sol.value(Point2::new(pt.x + h, pt.y), s) - sol.value(Point2::new(pt.x - h, pt.y), s)) / (2.0 * h);
        let gy = (sol.value(Point2::new(pt.x, pt.y + h), s) - sol.value(Point2::new(pt.x, pt.y - h), s)) / (2.0 * h);
        let g = sol.gradient(pt, s);
        assert!((g.x - gx).abs() < 1e-7 && (g.y - gy).abs() < 1e-7);
    }

    #[test]
    fn rates() {
        assert_eq!(convergence_rates(&[1.0, 0.25]), vec![None, Some(2.0)]);
        assert_eq!(convergence_rates(&[1.0, 1.0]), vec![None, Some(0.0)]);
        let reference = [3.7991e-2, 9.3605e-3, 2.3062e-3, 5.6970e-4, 1.4140e-4];
        let r = convergence_rates(&reference);
        for (got, want) in r[1..].iter().zip([2.0210, 2.0211, 2.0173, 2.0104]) {
            assert!((got.unwrap() - want).abs() < 5e-4);
        }
        let slope = dof_slope(&[100, 400, 1600], &[1.0, 0.5, 0.25]);
        assert!((slope + 0.5).abs() < 1e-12);
    }
}
