//! Invariant checks of a configured discretization, run by `dgife check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adaptivity::mark_dorfler;
use crate::assembly::{apply_dirichlet, assemble_matrix, assemble_system, interior_pencil, DgSpace};
use crate::config::RunConfig;
use crate::error::Result;
use crate::geometry::{CoefficientField, Point2, Side};
use crate::ife::interpolate;
use crate::linalg::{min_generalized_eig, norm_inf, solve_direct};
use crate::mesh::CartesianMesh;
use crate::study::Problem;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Largest violation of the nodal, partition-of-unity, continuity and flux
/// conditions over all interface elements.
pub fn basis_residuals(space: &DgSpace) -> [f64; 4] {
    let mut worst = [0.0f64; 4];
    for k in space.classification.interface_elements() {
        let basis = &space.bases[k];
        let cut = space.classification.elements[k].cut().expect("interface element");
        let pts = space.mesh.element_points(k);
        let n = cut.chord_normal();
        let mid = cut.d.midpoint(cut.e);
        for i in 0..basis.len() {
            for (j, &a) in pts.iter().enumerate() {
                let side = match cut.vertex_sides[j] {
                    Side::On => basis.piece(a),
                    s => s,
                };
                let want = if i == j { 1.0 } else { 0.0 };
                worst[0] = worst[0].max((basis.eval_piece(i, a, side) - want).abs());
            }
            for p in [cut.d, cut.e] {
                let jump = basis.eval_piece(i, p, Side::Minus) - basis.eval_piece(i, p, Side::Plus);
                worst[2] = worst[2].max(jump.abs());
            }
            let flux = space.beta.beta_minus * basis.grad_piece(i, mid, Side::Minus).dot(n)
                - space.beta.beta_plus * basis.grad_piece(i, mid, Side::Plus).dot(n);
            worst[3] = worst[3].max(flux.abs() / space.beta.max() * space.mesh.element_diameter(k));
        }
        let c = pts.iter().fold(Point2::default(), |acc, &p| acc + p) * (1.0 / pts.len() as f64);
        for p in pts.iter().map(|&v| v.lerp(c, 0.5)).chain([c, mid]) {
            for side in [Side::Minus, Side::Plus] {
                let sum: f64 = (0..basis.len()).map(|i| basis.eval_piece(i, p, side)).sum();
                worst[1] = worst[1].max((sum - 1.0).abs());
            }
        }
    }
    worst
}

/// Smallest eigenvalue of the symmetric part of the form against the
/// energy Gram matrix on the degrees of freedom off the boundary.
pub fn coercivity(space: &DgSpace, problem: &Problem) -> Result<f64> {
    let (a, g, _) = interior_pencil(space, &problem.dg)?;
    Ok(min_generalized_eig(&a.symmetric_part(), &g)?.value)
}

/// Solves with a global linear exact solution and equal coefficients and
/// returns the largest nodal deviation.
pub fn patch_test(mesh: CartesianMesh, problem: &Problem) -> Result<f64> {
    let beta = CoefficientField::new(problem.solution.beta.beta_minus, problem.solution.beta.beta_minus)?;
    let space = DgSpace::new(mesh, problem.curve.clone(), beta)?;
    let u = |p: Point2| 0.25 - 0.8 * p.x + 1.3 * p.y;
    let sys = assemble_system(&space, &problem.dg, &|_: Point2, _: Side| 0.0)?;
    let sys = apply_dirichlet(sys, u, &space);
    let x = solve_direct(&sys.matrix, &sys.rhs)?;
    let exact = interpolate(u, &space.mesh, &space.dofs);
    let diff: Vec<f64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
    Ok(norm_inf(&diff))
}

fn dorfler_oracle(ind: &[f64], theta: f64) -> usize {
    let mut sq: Vec<f64> = ind.iter().map(|e| e * e).collect();
    sq.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sq.iter().sum();
    let target = theta * total * (1.0 - crate::adaptivity::DORFLER_SLACK);
    let mut sum = 0.0;
    for (m, v) in sq.iter().enumerate() {
        if sum >= target {
            return m;
        }
        sum += v;
    }
    sq.len()
}

/// Runs all checks on the first configured mesh size (or the adaptive
/// initial mesh) and on `N = 10, 20` for coercivity.
pub fn run_checks(config: &RunConfig) -> Result<Vec<Check>> {
    config.validate()?;
    let problem = Problem::from_config(config);
    let n = match config.study.mode {
        crate::config::StudyMode::Uniform => config.study.n[0],
        crate::config::StudyMode::Adaptive => config.study.initial_n,
    };
    let mut out = Vec::new();
    let space = problem.space(problem.uniform_mesh(n)?)?;

    let [nodal, pu, cont, flux] = basis_residuals(&space);
    let count = space.classification.interface_elements().len();
    out.push(Check::new(
        "ife basis",
        nodal < 1e-10 && pu < 1e-10 && cont < 1e-10 && flux < 1e-10,
        format!(
            "{count} interface elements; nodal {nodal:.1e}, unity {pu:.1e}, continuity {cont:.1e}, flux {flux:.1e}"
        ),
    ));

    let a = assemble_matrix(&space, &problem.dg, true)?;
    let asym = a.asymmetry() / a.max_abs();
    let symmetric = asym < 1e-10;
    out.push(Check::new(
        "matrix symmetry",
        symmetric == (problem.dg.epsilon == -1),
        format!("epsilon {}, relative asymmetry {asym:.1e}", problem.dg.epsilon),
    ));

    for m in [10, 20] {
        let s = problem.space(problem.uniform_mesh(m)?)?;
        let lambda = coercivity(&s, &problem)?;
        out.push(Check::new(
            format!("coercivity N = {m}"),
            lambda > 0.0,
            format!("lambda_min = {lambda:.4e}"),
        ));
    }

    let dev = patch_test(problem.uniform_mesh(n)?, &problem)?;
    out.push(Check::new(
        "patch test",
        dev < 1e-8,
        format!("max nodal deviation {dev:.1e}"),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut mismatches = 0;
    for _ in 0..100 {
        let len = rng.gen_range(1..200);
        let ind: Vec<f64> = (0..len).map(|_| rng.gen::<f64>()).collect();
        let theta = rng.gen_range(0.01..0.99);
        if mark_dorfler(&ind, theta).len() != dorfler_oracle(&ind, theta) {
            mismatches += 1;
        }
    }
    out.push(Check::new(
        "dorfler marking",
        mismatches == 0,
        format!("{mismatches} of 100 random cases differ from the prefix oracle"),
    ));
    Ok(out)
}
