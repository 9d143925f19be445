//! Solve pipeline and experiment orchestration.

use std::fmt::{self, Write as _};
use std::io::Write;

use crate::adaptivity::{adapt_loop, AdaptiveState, Strategy};
use crate::assembly::{apply_dirichlet, assemble_system, DgConfig, DgSpace};
use crate::config::{RunConfig, SolverConfig, SolverKind, StrategyKind};
use crate::error::{Error, Result};
use crate::error_analysis::{
    compute_norms, convergence_rates, ManufacturedSolution, NormOptions, Norms, SolutionError,
};
use crate::geometry::{InterfaceCurve, Point2, Side};
use crate::linalg::{relative_residual, solve_direct, solve_iterative};
use crate::mesh::{CartesianMesh, Domain, ElementKind};

/// Everything needed to solve the manufactured interface problem on a mesh.
#[derive(Debug, Clone)]
pub struct Problem {
    pub solution: ManufacturedSolution,
    pub curve: InterfaceCurve,
    pub dg: DgConfig,
    pub norms: NormOptions,
    pub solver: SolverConfig,
    pub kind: ElementKind,
    pub domain: Domain,
}

/// A solved discretization.
#[derive(Debug, Clone)]
pub struct Solved {
    pub space: DgSpace,
    pub uh: Vec<f64>,
    pub norms: Norms,
    /// Relative residual `|A u_h - b|_inf / |b|_inf` of the constrained system.
    pub residual: f64,
}

impl Problem {
    pub fn from_config(config: &RunConfig) -> Self {
        Self {
            solution: ManufacturedSolution::new(config.problem.p, config.beta(), config.ellipse()),
            curve: config.curve(),
            dg: config.dg(),
            norms: config.norm_options(),
            solver: config.solver.clone(),
            kind: config.discretization.element,
            domain: Domain::unit_square(),
        }
    }

    pub fn uniform_mesh(&self, n: usize) -> Result<CartesianMesh> {
        Ok(CartesianMesh::build_uniform(n, self.kind, self.domain)?)
    }

    pub fn space(&self, mesh: CartesianMesh) -> Result<DgSpace> {
        DgSpace::new(mesh, self.curve.clone(), self.solution.beta)
    }

    fn true_side(&self, p: Point2) -> Side {
        match self.curve.side_of(p) {
            Side::On => Side::Minus,
            s => s,
        }
    }

    /// Builds the space, assembles, imposes the exact boundary values, solves
    /// and measures the error. Stage failures carry the stage name and `level`.
    pub fn solve(&self, mesh: CartesianMesh, level: &str) -> Result<Solved> {
        let space = self.space(mesh).map_err(|e| e.at_stage("discretize", level))?;
        let sol = &self.solution;
        let f = |p: Point2, s: Side| sol.source_term(p, s).unwrap_or(f64::NAN);
        let system = assemble_system(&space, &self.dg, &f).map_err(|e| Error::from(e).at_stage("assemble", level))?;
        if let Some(i) = system.rhs.iter().position(|v| !v.is_finite()) {
            let k = (0..space.mesh.element_count())
                .find(|&k| space.dofs.range(k).contains(&i))
                .unwrap_or(0);
            let c = space.mesh.element_points(k)[0];
            log::error!("non-finite load entry {i} in element {k}");
            return Err(Error::Solution(SolutionError::SingularPoint { x: c.x, y: c.y }).at_stage("assemble", level));
        }
        let system = apply_dirichlet(system, |p| sol.value(p, self.true_side(p)), &space);
        let uh = match self.solver.kind {
            SolverKind::Direct => solve_direct(&system.matrix, &system.rhs),
            SolverKind::Iterative => {
                let opts = self.solver.iterative(space.mesh.kind().vertex_count());
                solve_iterative(&system.matrix, &system.rhs, &opts).map(|(x, rep)| {
                    log::debug!(
                        "{level}: {} Krylov steps, residual {:.3e}",
                        rep.iterations,
                        rep.residual
                    );
                    x
                })
            }
        }
        .map_err(|e| Error::from(e).at_stage("solve", level))?;
        let residual = relative_residual(&system.matrix, &uh, &system.rhs);
        let norms = compute_norms(&space, &uh, sol, &self.dg, &self.norms)
            .map_err(|e| Error::from(e).at_stage("norms", level))?;
        Ok(Solved {
            space,
            uh,
            norms,
            residual,
        })
    }
}

/// Errors on one mesh of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    /// `N` of a uniform mesh or the iteration index of an adaptive study.
    pub level: usize,
    pub elements: usize,
    pub dofs: usize,
    pub linf: f64,
    pub l2: f64,
    pub h1semi: f64,
    pub energy: f64,
}

impl ErrorRow {
    pub fn new(level: usize, solved: &Solved) -> Self {
        let n = &solved.norms;
        Self {
            level,
            elements: solved.space.mesh.element_count(),
            dofs: solved.space.dof_count(),
            linf: n.linf,
            l2: n.l2,
            h1semi: n.h1semi,
            energy: n.energy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Uniform,
    Adaptive,
}

/// Error table of a study with rates between consecutive rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub kind: StudyKind,
    pub rows: Vec<ErrorRow>,
}

pub const CSV_HEADER: &str = "N,DoF,Linf,Linf_rate,L2,L2_rate,H1semi,H1semi_rate,Energy,Energy_rate";
pub const ADAPTIVE_CSV_HEADER: &str = "Iteration,Elements,DoF,Linf,L2,H1semi,Energy";

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(String::new, |r| format!("{r:.4}"))
}

impl ErrorReport {
    pub fn column(&self, f: impl Fn(&ErrorRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn l2_rates(&self) -> Vec<Option<f64>> {
        convergence_rates(&self.column(|r| r.l2))
    }

    pub fn h1_rates(&self) -> Vec<Option<f64>> {
        convergence_rates(&self.column(|r| r.h1semi))
    }

    pub fn linf_rates(&self) -> Vec<Option<f64>> {
        convergence_rates(&self.column(|r| r.linf))
    }

    pub fn energy_rates(&self) -> Vec<Option<f64>> {
        convergence_rates(&self.column(|r| r.energy))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match self.kind {
            StudyKind::Uniform => {
                writeln!(out, "{CSV_HEADER}")?;
                let (ri, r2, r1, re) = (self.linf_rates(), self.l2_rates(), self.h1_rates(), self.energy_rates());
                for (k, row) in self.rows.iter().enumerate() {
                    writeln!(
                        out,
                        "{},{},{:.10e},{},{:.10e},{},{:.10e},{},{:.10e},{}",
                        row.level,
                        row.dofs,
                        row.linf,
                        fmt_rate(ri[k]),
                        row.l2,
                        fmt_rate(r2[k]),
                        row.h1semi,
                        fmt_rate(r1[k]),
                        row.energy,
                        fmt_rate(re[k])
                    )?;
                }
            }
            StudyKind::Adaptive => {
                writeln!(out, "{ADAPTIVE_CSV_HEADER}")?;
                for row in &self.rows {
                    writeln!(
                        out,
                        "{},{},{},{:.10e},{:.10e},{:.10e},{:.10e}",
                        row.level, row.elements, row.dofs, row.linf, row.l2, row.h1semi, row.energy
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = match self.kind {
            StudyKind::Uniform => "N",
            StudyKind::Adaptive => "iter",
        };
        let mut s = String::new();
        writeln!(
            s,
            "{head:>6} {:>9} {:>8} {:>11} {:>7} {:>11} {:>7} {:>11} {:>7} {:>11} {:>7}",
            "elements", "DoF", "Linf", "rate", "L2", "rate", "H1semi", "rate", "energy", "rate"
        )?;
        let (ri, r2, r1, re) = (self.linf_rates(), self.l2_rates(), self.h1_rates(), self.energy_rates());
        for (k, row) in self.rows.iter().enumerate() {
            writeln!(
                s,
                "{:>6} {:>9} {:>8} {:>11.4e} {:>7} {:>11.4e} {:>7} {:>11.4e} {:>7} {:>11.4e} {:>7}",
                row.level,
                row.elements,
                row.dofs,
                row.linf,
                fmt_rate(ri[k]),
                row.l2,
                fmt_rate(r2[k]),
                row.h1semi,
                fmt_rate(r1[k]),
                row.energy,
                fmt_rate(re[k])
            )?;
        }
        f.write_str(&s)
    }
}

/// Uniform refinement over the configured mesh sizes. `on_level` sees every
/// solved mesh (for dumps) before it is dropped.
pub fn run_convergence_study_with<F>(config: &RunConfig, mut on_level: F) -> Result<ErrorReport>
where
    F: FnMut(usize, &Solved) -> Result<()>,
{
    config.validate()?;
    let problem = Problem::from_config(config);
    let mut rows = Vec::with_capacity(config.study.n.len());
    for &n in &config.study.n {
        let level = format!("N = {n}");
        let mesh = problem.uniform_mesh(n).map_err(|e| e.at_stage("mesh", level.clone()))?;
        let solved = problem.solve(mesh, &level)?;
        log::info!(
            "{level}: DoF {} L2 {:.4e} H1 {:.4e} residual {:.1e}",
            solved.space.dof_count(),
            solved.norms.l2,
            solved.norms.h1semi,
            solved.residual
        );
        on_level(n, &solved)?;
        rows.push(ErrorRow::new(n, &solved));
    }
    Ok(ErrorReport {
        kind: StudyKind::Uniform,
        rows,
    })
}

pub fn run_convergence_study(config: &RunConfig) -> Result<ErrorReport> {
    run_convergence_study_with(config, |_, _| Ok(()))
}

/// Adaptive study from the configured initial mesh.
pub fn run_adaptive_study_with<F>(config: &RunConfig, on_iteration: F) -> Result<(AdaptiveState, ErrorReport)>
where
    F: FnMut(usize, &Solved) -> Result<()>,
{
    config.validate()?;
    let problem = Problem::from_config(config);
    let strategy = match config.study.strategy {
        StrategyKind::Interface => Strategy::InterfaceOnly,
        StrategyKind::Dorfler => Strategy::Dorfler(config.study.theta),
    };
    let mesh = problem
        .uniform_mesh(config.study.initial_n)
        .map_err(|e| e.at_stage("mesh", "iteration 0"))?;
    let state = adapt_loop(
        &problem,
        mesh,
        strategy,
        config.study.max_iters,
        config.study.max_level,
        on_iteration,
    )?;
    let report = ErrorReport {
        kind: StudyKind::Adaptive,
        rows: state.rows.clone(),
    };
    Ok((state, report))
}

pub fn run_adaptive_study(config: &RunConfig) -> Result<(AdaptiveState, ErrorReport)> {
    run_adaptive_study_with(config, |_, _| Ok(()))
}
