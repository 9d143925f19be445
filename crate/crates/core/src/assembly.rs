//! Interior penalty DG assembly over the IFE space.
//!
//! For trial `w` and test `v` the bilinear form is
//!
//! ```text
//! a(w, v) = sum_K int_K beta grad w . grad v
//!         - sum_B int_B {beta grad w . n_B} [v]
//!         + eps sum_B int_B {beta grad v . n_B} [w]
//!         + sum_B sigma0 / |B|^alpha int_B [w] [v]
//! ```
//!
//! over interior edges `B`, with `[v] = v|K1 - v|K2`, `{v} = (v|K1 + v|K2) / 2`
//! and `n_B` pointing out of `K1`, the owner with the smaller id.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::geometry::{CoefficientField, InterfaceCurve, Point2, Side, Vector2};
use crate::ife::{build_bases, DofMap, LocalBasis};
use crate::linalg::CsrMatrix;
use crate::mesh::{classify, validate_hypotheses, CartesianMesh, ElementClassification, ElementCut};
use crate::quadrature::{gauss_cell, split_cell_quadrature, split_edge_quadrature, QuadratureError, QuadratureRule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error("interior edge {edge} has no second owner")]
    MissingNeighbor { edge: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("invalid DG parameters: {0}")]
    InvalidConfig(String),
}

/// Scheme parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgConfig {
    /// -1 symmetric, 0 incomplete, +1 nonsymmetric.
    pub epsilon: i8,
    pub alpha: f64,
    pub sigma0: f64,
    pub volume_order: usize,
    pub edge_order: usize,
}

impl Default for DgConfig {
    fn default() -> Self {
        Self {
            epsilon: -1,
            alpha: 1.0,
            sigma0: 1000.0,
            volume_order: 5,
            edge_order: 5,
        }
    }
}

impl DgConfig {
    pub fn validate(&self) -> Result<(), AssemblyError> {
        if !matches!(self.epsilon, -1..=1) {
            return Err(AssemblyError::InvalidConfig(format!(
                "epsilon = {} not in {{-1, 0, 1}}",
                self.epsilon
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(AssemblyError::InvalidConfig(format!(
                "alpha = {} must be positive",
                self.alpha
            )));
        }
        if !(self.sigma0 >= 0.0) || (self.epsilon != 1 && self.sigma0 <= 0.0) {
            return Err(AssemblyError::InvalidConfig(format!(
                "sigma0 = {} must be positive for epsilon = {}",
                self.sigma0, self.epsilon
            )));
        }
        for (name, q) in [("volume_order", self.volume_order), ("edge_order", self.edge_order)] {
            if !(1..=crate::quadrature::MAX_ORDER).contains(&q) {
                return Err(AssemblyError::InvalidConfig(format!("{name} = {q} outside 1..=10")));
            }
        }
        if self.alpha != 1.0 {
            log::warn!(
                "alpha = {} lies outside the analysed configuration alpha = 1",
                self.alpha
            );
        }
        Ok(())
    }

    /// Penalty weight `sigma0 / |B|^alpha`.
    pub fn penalty(&self, length: f64) -> f64 {
        self.sigma0 / length.powf(self.alpha)
    }
}

/// Mesh, interface classification and local bases of one discretization.
#[derive(Debug, Clone)]
pub struct DgSpace {
    pub mesh: CartesianMesh,
    pub curve: InterfaceCurve,
    pub beta: CoefficientField,
    pub classification: ElementClassification,
    pub bases: Vec<LocalBasis>,
    pub dofs: DofMap,
}

impl DgSpace {
    /// Classifies the mesh, checks the resolution hypotheses and builds the
    /// local bases.
    pub fn new(mesh: CartesianMesh, curve: InterfaceCurve, beta: CoefficientField) -> Result<Self, Error> {
        let classification = classify(&mesh, &curve)?;
        validate_hypotheses(&mesh, &classification, &curve)?;
        let bases = build_bases(&mesh, &classification, &beta)?;
        let dofs = DofMap::new(&mesh);
        Ok(Self {
            mesh,
            curve,
            beta,
            classification,
            bases,
            dofs,
        })
    }

    pub fn dof_count(&self) -> usize {
        self.dofs.total()
    }

    /// Volume rule of element `k`; every point carries the side that selects
    /// both the coefficient and the basis piece.
    pub fn cell_rule(&self, k: usize, order: usize) -> Result<QuadratureRule, QuadratureError> {
        match &self.classification.elements[k] {
            ElementCut::NonInterface(side) => Ok(gauss_cell(&self.mesh.element_points(k), order).with_side(*side)),
            ElementCut::Interface(cut) => split_cell_quadrature(cut, order),
        }
    }

    pub fn edge_rule(&self, e: usize, order: usize) -> QuadratureRule {
        let edge = &self.mesh.edges()[e];
        split_edge_quadrature(
            edge.p0,
            edge.p1,
            self.classification.edge_crossings[e],
            &self.curve,
            order,
        )
    }

    /// Side of element `k` seen from point `p`: the chord side on interface
    /// elements, the element's side otherwise.
    pub fn trace_side(&self, k: usize, p: Point2) -> Side {
        match &self.classification.elements[k] {
            ElementCut::NonInterface(side) => *side,
            ElementCut::Interface(_) => self.bases[k].piece(p),
        }
    }

    /// Degrees of freedom located at boundary nodes.
    pub fn boundary_dofs(&self) -> Vec<bool> {
        let mut out = vec![false; self.dofs.total()];
        for (k, e) in self.mesh.elements().iter().enumerate() {
            for (i, &v) in e.vertices.iter().enumerate() {
                out[self.dofs.global(k, i)] = self.mesh.is_boundary_node(v);
            }
        }
        out
    }
}

/// `d x d` block `int_K beta grad phi_j . grad phi_i`, row-major in the test
/// index `i`.
pub fn volume_block(space: &DgSpace, k: usize, order: usize) -> Result<Vec<f64>, AssemblyError> {
    let basis = &space.bases[k];
    let d = basis.len();
    let rule = space.cell_rule(k, order)?;
    let mut block = vec![0.0; d * d];
    let mut vals = [0.0; 4];
    let mut grads = [Point2::default(); 4];
    for q in 0..rule.len() {
        let side = rule.side(q).unwrap_or(Side::Minus);
        let wb = rule.weights[q] * space.beta.on_side(side);
        basis.eval_all(rule.points[q], side, &mut vals, &mut grads);
        for i in 0..d {
            for j in 0..d {
                block[i * d + j] += wb * grads[j].dot(grads[i]);
            }
        }
    }
    Ok(block)
}

/// Coupling blocks of one interior edge: `blocks[t][s]` holds test functions
/// of owner `t` against trial functions of owner `s`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBlock {
    pub edge: usize,
    pub owners: [usize; 2],
    pub blocks: [[Vec<f64>; 2]; 2],
}

/// Edge terms of the bilinear form on interior edge `e`. With `consistency`
/// off only the penalty term is kept.
pub fn edge_block(space: &DgSpace, e: usize, config: &DgConfig, consistency: bool) -> Result<EdgeBlock, AssemblyError> {
    let edge = &space.mesh.edges()[e];
    let k2 = edge.k2.ok_or(AssemblyError::MissingNeighbor { edge: e })?;
    let owners = [edge.k1, k2];
    let n: Vector2 = edge.normal;
    let sign = [1.0, -1.0];
    let dims = [space.bases[owners[0]].len(), space.bases[owners[1]].len()];
    let mut blocks: [[Vec<f64>; 2]; 2] = std::array::from_fn(|t| std::array::from_fn(|s| vec![0.0; dims[t] * dims[s]]));
    let penalty = config.penalty(edge.length);
    let eps = f64::from(config.epsilon);
    let cons = if consistency { 1.0 } else { 0.0 };
    let rule = space.edge_rule(e, config.edge_order);
    let mut vals = [[0.0; 4]; 2];
    let mut flux = [[0.0; 4]; 2];
    let mut grads = [Point2::default(); 4];
    for q in 0..rule.len() {
        let p = rule.points[q];
        let w = rule.weights[q];
        for t in 0..2 {
            let k = owners[t];
            let side = space.trace_side(k, p);
            space.bases[k].eval_all(p, side, &mut vals[t], &mut grads);
            let b = space.beta.on_side(side);
            for i in 0..dims[t] {
                flux[t][i] = b * grads[i].dot(n);
            }
        }
        for t in 0..2 {
            for s in 0..2 {
                let ds = dims[s];
                let block = &mut blocks[t][s];
                for i in 0..dims[t] {
                    let vt = sign[t] * vals[t][i];
                    for j in 0..ds {
                        let vs = sign[s] * vals[s][j];
                        block[i * ds + j] +=
                            w * (cons * (-0.5 * flux[s][j] * vt + eps * 0.5 * flux[t][i] * vs) + penalty * vs * vt);
                    }
                }
            }
        }
    }
    Ok(EdgeBlock {
        edge: e,
        owners,
        blocks,
    })
}

/// Load vector of element `k`: `int_K f phi_i`, with `f` evaluated on the
/// true side of each quadrature point.
pub fn rhs_block<F>(space: &DgSpace, k: usize, f: &F, order: usize) -> Result<Vec<f64>, AssemblyError>
where
    F: Fn(Point2, Side) -> f64 + ?Sized,
{
    let basis = &space.bases[k];
    let d = basis.len();
    let rule = space.cell_rule(k, order)?;
    let mut out = vec![0.0; d];
    let mut vals = [0.0; 4];
    let mut grads = [Point2::default(); 4];
    for q in 0..rule.len() {
        let p = rule.points[q];
        let piece = rule.side(q).unwrap_or(Side::Minus);
        let true_side = match space.curve.side_of(p) {
            Side::On => Side::Minus,
            s => s,
        };
        let fw = rule.weights[q] * f(p, true_side);
        basis.eval_all(p, piece, &mut vals, &mut grads);
        for i in 0..d {
            out[i] += fw * vals[i];
        }
    }
    Ok(out)
}

/// Global matrix of the bilinear form (the energy-norm Gram matrix when
/// `consistency` is off). Rows are grouped per element; each row lists the
/// blocks of the element and its edge neighbours in element order.
pub fn assemble_matrix(space: &DgSpace, config: &DgConfig, consistency: bool) -> Result<CsrMatrix, AssemblyError> {
    let mesh = &space.mesh;
    let ne = mesh.element_count();
    let volume: Vec<Vec<f64>> = (0..ne)
        .into_par_iter()
        .map(|k| volume_block(space, k, config.volume_order))
        .collect::<Result<_, _>>()?;
    let interior: Vec<usize> = (0..mesh.edges().len())
        .filter(|&e| !mesh.edges()[e].is_boundary())
        .collect();
    let edges: Vec<EdgeBlock> = interior
        .par_iter()
        .map(|&e| edge_block(space, e, config, consistency))
        .collect::<Result<_, _>>()?;

    let mut row_blocks: Vec<Vec<(usize, Vec<f64>)>> =
        volume.into_iter().enumerate().map(|(k, b)| vec![(k, b)]).collect();
    for eb in &edges {
        let [a, b] = eb.owners;
        row_blocks[a].push((b, Vec::new()));
        row_blocks[b].push((a, Vec::new()));
    }
    for (k, blocks) in row_blocks.iter_mut().enumerate() {
        blocks.sort_by_key(|(l, _)| *l);
        blocks.dedup_by_key(|(l, _)| *l);
        let dk = space.bases[k].len();
        for (l, blk) in blocks.iter_mut() {
            if blk.is_empty() {
                *blk = vec![0.0; dk * space.bases[*l].len()];
            }
        }
    }
    for eb in edges {
        for t in 0..2 {
            for s in 0..2 {
                let (row, col) = (eb.owners[t], eb.owners[s]);
                let blocks = &mut row_blocks[row];
                let idx = blocks.binary_search_by_key(&col, |(l, _)| *l).expect("block allocated");
                for (acc, v) in blocks[idx].1.iter_mut().zip(&eb.blocks[t][s]) {
                    *acc += v;
                }
            }
        }
    }

    let n = space.dofs.total();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for (k, blocks) in row_blocks.iter().enumerate() {
        for i in 0..space.bases[k].len() {
            for (l, blk) in blocks {
                let dl = space.bases[*l].len();
                for j in 0..dl {
                    let v = blk[i * dl + j];
                    if v != 0.0 {
                        col_idx.push(space.dofs.global(*l, j));
                        values.push(v);
                    }
                }
            }
            row_ptr.push(col_idx.len());
        }
    }
    Ok(CsrMatrix::new(n, n, row_ptr, col_idx, values))
}

pub fn assemble_rhs<F>(space: &DgSpace, f: &F, order: usize) -> Result<Vec<f64>, AssemblyError>
where
    F: Fn(Point2, Side) -> f64 + Sync + ?Sized,
{
    let blocks: Vec<Vec<f64>> = (0..space.mesh.element_count())
        .into_par_iter()
        .map(|k| rhs_block(space, k, f, order))
        .collect::<Result<_, _>>()?;
    Ok(blocks.concat())
}

/// Assembled linear system. `constrained` marks rows replaced by Dirichlet
/// conditions.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
    pub constrained: Vec<bool>,
}

pub fn assemble_system<F>(space: &DgSpace, config: &DgConfig, f: &F) -> Result<SparseSystem, AssemblyError>
where
    F: Fn(Point2, Side) -> f64 + Sync + ?Sized,
{
    config.validate()?;
    let matrix = assemble_matrix(space, config, true)?;
    let rhs = assemble_rhs(space, f, config.volume_order)?;
    Ok(SparseSystem {
        matrix,
        rhs,
        dofs: space.dofs.clone(),
        constrained: vec![false; space.dofs.total()],
    })
}

/// Imposes `u = g` at every degree of freedom on a boundary node by
/// symmetric elimination: constrained rows and columns become identity rows
/// and columns, and the eliminated column entries move to the right side.
pub fn apply_dirichlet<G>(system: SparseSystem, g: G, space: &DgSpace) -> SparseSystem
where
    G: Fn(Point2) -> f64,
{
    let boundary = space.boundary_dofs();
    let mut values_g = vec![0.0; boundary.len()];
    for (k, e) in space.mesh.elements().iter().enumerate() {
        for (i, &v) in e.vertices.iter().enumerate() {
            let dof = space.dofs.global(k, i);
            if boundary[dof] {
                values_g[dof] = g(space.mesh.nodes()[v]);
            }
        }
    }
    let a = &system.matrix;
    let n = a.nrows();
    let mut rhs = system.rhs.clone();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(a.nnz());
    let mut values = Vec::with_capacity(a.nnz());
    row_ptr.push(0);
    for r in 0..n {
        if boundary[r] {
            col_idx.push(r);
            values.push(1.0);
            rhs[r] = values_g[r];
        } else {
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if boundary[c] {
                    rhs[r] -= v * values_g[c];
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
        }
        row_ptr.push(col_idx.len());
    }
    let constrained = boundary
        .iter()
        .zip(&system.constrained)
        .map(|(a, b)| *a || *b)
        .collect();
    SparseSystem {
        matrix: CsrMatrix::new(n, n, row_ptr, col_idx, values),
        rhs,
        dofs: system.dofs,
        constrained,
    }
}

/// Matrix of the form and energy-norm Gram matrix restricted to the degrees
/// of freedom off the boundary, with the list of those degrees of freedom.
pub fn interior_pencil(
    space: &DgSpace,
    config: &DgConfig,
) -> Result<(CsrMatrix, CsrMatrix, Vec<usize>), AssemblyError> {
    config.validate()?;
    let interior: Vec<usize> = space
        .boundary_dofs()
        .iter()
        .enumerate()
        .filter(|(_, &b)| !b)
        .map(|(i, _)| i)
        .collect();
    let a = assemble_matrix(space, config, true)?.submatrix(&interior);
    let g = assemble_matrix(space, config, false)?.submatrix(&interior);
    Ok((a, g, interior))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Ellipse, Line};
    use crate::ife::interpolate;
    use crate::linalg::{norm_inf, relative_residual, solve_direct};
    use crate::mesh::{Domain, ElementKind};

    fn space(n: usize, kind: ElementKind, beta: (f64, f64)) -> DgSpace {
        let mesh = CartesianMesh::build_uniform(n, kind, Domain::unit_square()).unwrap();
        DgSpace::new(
            mesh,
            InterfaceCurve::new(Ellipse::reference()),
            CoefficientField::new(beta.0, beta.1).unwrap(),
        )
        .unwrap()
    }

    fn unit_space(n: usize, kind: ElementKind) -> DgSpace {
        let mesh = CartesianMesh::build_uniform(n, kind, Domain::new(0.0, 0.0, n as f64, n as f64).unwrap()).unwrap();
        let far = Line {
            origin: Point2::new(-100.0, 0.0),
            normal: Point2::new(-1.0, 0.0),
        };
        DgSpace::new(mesh, InterfaceCurve::new(far), CoefficientField::new(1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn reference_triangle_stiffness() {
        let s = unit_space(1, ElementKind::Triangle);
        let lower = volume_block(&s, 0, 5).unwrap();
        // Element 0 is (0,0), (1,0), (1,1): right angle at the middle vertex.
        let want = [1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0];
        for (a, b) in lower.iter().zip(want) {
            assert!((a - 0.5 * b).abs() < 1e-14, "{lower:?}");
        }
        // Element 1 is (0,0), (1,1), (0,1): right angle at (0,1), the last vertex.
        let upper = volume_block(&s, 1, 5).unwrap();
        let want = [1.0, 0.0, -1.0, 0.0, 1.0, -1.0, -1.0, -1.0, 2.0];
        for (a, b) in upper.iter().zip(want) {
            assert!((a - 0.5 * b).abs() < 1e-14, "{upper:?}");
        }
    }

    #[test]
    fn equal_coefficients_scale_standard_block() {
        let s = space(10, ElementKind::Triangle, (4.0, 4.0));
        let k = s.classification.interface_elements()[0];
        let block = volume_block(&s, k, 5).unwrap();
        let std = crate::ife::standard_basis(k, &s.mesh.element_points(k));
        let rule = gauss_cell(&s.mesh.element_points(k), 5);
        for i in 0..3 {
            for j in 0..3 {
                let want = 4.0 * rule.integrate(|p| std.eval_grad(i, p).dot(std.eval_grad(j, p)));
                assert!((block[i * 3 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn penalty_block_between_two_squares() {
        let s = unit_space(2, ElementKind::Rectangle);
        let config = DgConfig {
            sigma0: 7.0,
            ..Default::default()
        };
        let e = s.mesh.edges().iter().position(|e| !e.is_boundary()).unwrap();
        let eb = edge_block(&s, e, &config, true).unwrap();
        // Constant functions: sum over each element's basis.
        let sum = |t: usize, u: usize| eb.blocks[t][u].iter().sum::<f64>();
        let len = s.mesh.edges()[e].length;
        assert!((sum(0, 0) - 7.0).abs() < 1e-12 * len);
        assert!((sum(0, 1) + 7.0).abs() < 1e-12);
        assert!((sum(1, 1) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_scheme_gives_symmetric_matrix() {
        for kind in [ElementKind::Triangle, ElementKind::Rectangle] {
            let s = space(10, kind, (1.0, 10.0));
            let a = assemble_matrix(&s, &DgConfig::default(), true).unwrap();
            assert!(a.asymmetry() < 1e-10 * a.max_abs());
            let ns = assemble_matrix(
                &s,
                &DgConfig {
                    epsilon: 1,
                    ..Default::default()
                },
                true,
            )
            .unwrap();
            assert!(ns.asymmetry() > 1e-3 * ns.max_abs());
        }
    }

    #[test]
    fn rhs_of_unit_source() {
        let s = unit_space(1, ElementKind::Rectangle);
        let b = assemble_rhs(&s, &|_: Point2, _: Side| 1.0, 5).unwrap();
        assert!(b.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let z = assemble_rhs(&s, &|_: Point2, _: Side| 0.0, 5).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn patch_test_linear_solution() {
        let u = |p: Point2| 0.3 + 1.2 * p.x - 0.7 * p.y;
        for kind in [ElementKind::Triangle, ElementKind::Rectangle] {
            for eps in [-1, 0, 1] {
                let s = space(8, kind, (2.0, 2.0));
                let config = DgConfig {
                    epsilon: eps,
                    ..Default::default()
                };
                let sys = assemble_system(&s, &config, &|_: Point2, _: Side| 0.0).unwrap();
                let sys = apply_dirichlet(sys, u, &s);
                let x = solve_direct(&sys.matrix, &sys.rhs).unwrap();
                assert!(relative_residual(&sys.matrix, &x, &sys.rhs) < 1e-10);
                let exact = interpolate(u, &s.mesh, &s.dofs);
                let diff: Vec<f64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
                assert!(norm_inf(&diff) < 1e-9, "{kind:?} eps={eps}: {}", norm_inf(&diff));
            }
        }
    }

    #[test]
    fn constant_solution_recovered() {
        let s = space(10, ElementKind::Triangle, (1.0, 10.0));
        let sys = assemble_system(&s, &DgConfig::default(), &|_: Point2, _: Side| 0.0).unwrap();
        let sys = apply_dirichlet(sys, |_| 2.0, &s);
        assert!(sys.matrix.asymmetry() < 1e-10 * sys.matrix.max_abs());
        let x = solve_direct(&sys.matrix, &sys.rhs).unwrap();
        assert!(x.iter().all(|v| (v - 2.0).abs() < 1e-10));
    }

    #[test]
    fn gram_matrix_is_symmetric() {
        let s = space(10, ElementKind::Rectangle, (1.0, 1000.0));
        let (a, g, interior) = interior_pencil(
            &s,
            &DgConfig {
                epsilon: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.nrows(), interior.len());
        assert!(g.asymmetry() < 1e-14 * g.max_abs());
        // For eps = +1 the consistency terms are antisymmetric.
        let diff = a.symmetric_part().linear_combination(1.0, &g, -1.0);
        assert!(diff.max_abs() < 1e-10 * g.max_abs());
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(DgConfig {
            epsilon: 2,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DgConfig {
            sigma0: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DgConfig {
            sigma0: 0.0,
            epsilon: 1,
            ..Default::default()
        }
        .validate()
        .is_ok());
        assert!(DgConfig {
            volume_order: 11,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
