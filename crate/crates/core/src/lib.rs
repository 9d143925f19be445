//! Interior penalty discontinuous Galerkin solver over immersed finite
//! element spaces for elliptic interface problems on Cartesian meshes.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptivity;
pub mod assembly;
pub mod checks;
pub mod config;
pub mod error;
pub mod error_analysis;
pub mod geometry;
pub mod ife;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod study;

pub use adaptivity::{adapt_loop, mark_dorfler, mark_interface, AdaptiveState, Strategy};
pub use assembly::{
    apply_dirichlet, assemble_matrix, assemble_rhs, assemble_system, edge_block, interior_pencil, rhs_block,
    volume_block, AssemblyError, DgConfig, DgSpace, EdgeBlock, SparseSystem,
};
pub use config::{parse_config, parse_config_str, ConfigError, RunConfig, SolverKind, StrategyKind, StudyMode};
pub use error::{Error, Result};
pub use error_analysis::{
    compute_norms, convergence_rates, dof_slope, export_error_field, ExactSide, LinfSampling, ManufacturedSolution,
    NormOptions, Norms, SolutionError,
};
pub use geometry::{CoefficientField, Ellipse, InterfaceCurve, Line, Point2, Side, Vector2};
pub use ife::{build_bases, interpolate, DofMap, LocalBasis};
pub use linalg::{min_generalized_eig, solve_direct, solve_iterative, CsrMatrix, IterativeOptions};
pub use mesh::{classify, validate_hypotheses, CartesianMesh, Domain, ElementClassification, ElementCut, ElementKind};
pub use study::{
    run_adaptive_study, run_adaptive_study_with, run_convergence_study, run_convergence_study_with, ErrorReport,
    ErrorRow, Problem, Solved, StudyKind,
};
