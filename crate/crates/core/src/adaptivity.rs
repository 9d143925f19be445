//! Marking strategies and the solve, mark, refine loop.

use crate::error::Result;
use crate::mesh::{CartesianMesh, ElementClassification};
use crate::study::{ErrorRow, Problem, Solved};

/// Relative slack on the bulk criterion so that exactly attained fractions
/// are not lost to rounding of the partial sums.
pub const DORFLER_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Refine every interface element.
    InterfaceOnly,
    /// Bulk marking with fraction `theta` of the squared indicators.
    Dorfler(f64),
}

/// The interface elements of a classification.
pub fn mark_interface(classification: &ElementClassification) -> Vec<usize> {
    classification.interface_elements()
}

/// Smallest set of largest indicators whose squares sum to at least
/// `theta` times the total. Equal indicators are taken in ascending element
/// order. Returned in marking order.
pub fn mark_dorfler(indicators: &[f64], theta: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..indicators.len()).filter(|&k| indicators[k] > 0.0).collect();
    order.sort_by(|&i, &j| indicators[j].total_cmp(&indicators[i]).then(i.cmp(&j)));
    let total: f64 = indicators.iter().map(|e| e * e).sum();
    if total == 0.0 {
        return Vec::new();
    }
    let target = theta * total * (1.0 - DORFLER_SLACK);
    let mut sum = 0.0;
    let mut out = Vec::new();
    for k in order {
        if sum >= target {
            break;
        }
        sum += indicators[k] * indicators[k];
        out.push(k);
    }
    out
}

/// History of an adaptive run.
#[derive(Debug, Clone)]
pub struct AdaptiveState {
    pub meshes: Vec<CartesianMesh>,
    pub rows: Vec<ErrorRow>,
    /// Local semi-H1 errors per iteration.
    pub indicators: Vec<Vec<f64>>,
    /// Number of marked elements per iteration (zero on the last one).
    pub marked: Vec<usize>,
}

impl AdaptiveState {
    pub fn dofs(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.dofs).collect()
    }

    pub fn h1_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.h1semi).collect()
    }
}

/// Solves, marks and refines up to `max_iters` times. Elements at
/// `max_level` are never marked. Stops early when nothing is marked.
pub fn adapt_loop<F>(
    problem: &Problem,
    initial: CartesianMesh,
    strategy: Strategy,
    max_iters: usize,
    max_level: Option<u32>,
    mut on_iteration: F,
) -> Result<AdaptiveState>
where
    F: FnMut(usize, &Solved) -> Result<()>,
{
    let mut state = AdaptiveState {
        meshes: Vec::new(),
        rows: Vec::new(),
        indicators: Vec::new(),
        marked: Vec::new(),
    };
    let mut mesh = initial;
    for it in 0..=max_iters {
        let level = format!("iteration {it}");
        let solved = problem.solve(mesh.clone(), &level)?;
        log::info!(
            "{level}: elements {} DoF {} H1 {:.4e}",
            solved.space.mesh.element_count(),
            solved.space.dof_count(),
            solved.norms.h1semi
        );
        on_iteration(it, &solved)?;
        let mut marked = if it == max_iters {
            Vec::new()
        } else {
            match strategy {
                Strategy::InterfaceOnly => mark_interface(&solved.space.classification),
                Strategy::Dorfler(theta) => mark_dorfler(&solved.norms.indicators, theta),
            }
        };
        if let Some(cap) = max_level {
            marked.retain(|&k| mesh.elements()[k].level < cap);
        }
        marked.sort_unstable();
        state.rows.push(ErrorRow::new(it, &solved));
        state.indicators.push(solved.norms.indicators.clone());
        state.marked.push(marked.len());
        let next = if marked.is_empty() {
            None
        } else {
            Some(
                mesh.refine(&marked)
                    .map_err(|e| crate::Error::from(e).at_stage("refine", level))?,
            )
        };
        state.meshes.push(mesh);
        match next {
            Some(m) => mesh = m,
            None => break,
        }
    }
    Ok(state)
}
