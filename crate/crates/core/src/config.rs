//! Run configuration: a TOML file with `[problem]`, `[discretization]`,
//! `[study]`, `[solver]` and `[output]` sections. Missing keys take the
//! defaults of the symmetric scheme on triangles; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::DgConfig;
use crate::error_analysis::{ExactSide, LinfSampling, NormOptions};
use crate::geometry::{CoefficientField, Ellipse, InterfaceCurve, Point2, Tolerances};
use crate::linalg::{IterativeOptions, Preconditioner};
use crate::mesh::ElementKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("invalid value for `{field}`: {message}")]
    Validation { field: &'static str, message: String },
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub beta_minus: f64,
    pub beta_plus: f64,
    pub center: [f64; 2],
    pub a: f64,
    pub b: f64,
    /// Exponent of the manufactured solution.
    pub p: f64,
    /// Absolute tolerance on `|phi|` for points on the interface.
    pub tol_on: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let e = Ellipse::reference();
        Self {
            beta_minus: 1.0,
            beta_plus: 10.0,
            center: [e.center.x, e.center.y],
            a: e.a,
            b: e.b,
            p: 5.0,
            tol_on: Tolerances::default().on,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub element: ElementKind,
    pub epsilon: i8,
    pub alpha: f64,
    pub sigma0: f64,
    /// Gauss points per direction for element integrals.
    pub volume_order: usize,
    /// Gauss points per edge piece.
    pub edge_order: usize,
    /// Gauss points per direction for error norms.
    pub norm_order: usize,
    /// Side of the exact solution at points between chord and curve.
    pub exact_side: ExactSide,
    pub linf_sampling: LinfSampling,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        let dg = DgConfig::default();
        Self {
            element: ElementKind::Triangle,
            epsilon: dg.epsilon,
            alpha: dg.alpha,
            sigma0: dg.sigma0,
            volume_order: dg.volume_order,
            edge_order: dg.edge_order,
            norm_order: NormOptions::default().order,
            exact_side: NormOptions::default().exact_side,
            linf_sampling: NormOptions::default().linf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyMode {
    Uniform,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// Refine every interface element.
    Interface,
    /// Bulk marking with the exact local error as indicator.
    Dorfler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub mode: StudyMode,
    /// Uniform meshes `N x N` for a convergence study.
    pub n: Vec<usize>,
    /// Initial mesh of an adaptive study.
    pub initial_n: usize,
    pub strategy: StrategyKind,
    pub theta: f64,
    /// Number of refinement steps of an adaptive study.
    pub max_iters: usize,
    /// Optional cap on the refinement level of any element.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_level: Option<u32>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            mode: StudyMode::Uniform,
            n: vec![10, 20, 40, 80, 160],
            initial_n: 10,
            strategy: StrategyKind::Dorfler,
            theta: 0.2,
            max_iters: 25,
            max_level: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreconditionerKind {
    None,
    Jacobi,
    Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    pub preconditioner: PreconditionerKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let it = IterativeOptions::default();
        Self {
            kind: SolverKind::Direct,
            tol: it.tol,
            max_iter: it.max_iter,
            restart: it.restart,
            preconditioner: PreconditionerKind::Block,
        }
    }
}

impl SolverConfig {
    /// Iterative options for a space with `block` degrees of freedom per
    /// element.
    pub fn iterative(&self, block: usize) -> IterativeOptions {
        IterativeOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            restart: self.restart,
            preconditioner: match self.preconditioner {
                PreconditionerKind::None => Preconditioner::None,
                PreconditionerKind::Jacobi => Preconditioner::Jacobi,
                PreconditionerKind::Block => Preconditioner::BlockJacobi(block),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write a mesh file per level or iteration.
    pub mesh_dumps: bool,
    /// Raster resolution of the point-wise error field (0 disables it).
    pub field_resolution: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            mesh_dumps: false,
            field_resolution: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for randomized checks; the solver itself is deterministic.
    pub seed: u64,
    pub problem: ProblemConfig,
    pub discretization: DiscretizationConfig,
    pub study: StudyConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates configuration text. `origin` names the source in
/// error messages.
pub fn parse_config_str(text: &str, origin: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: origin.to_string(),
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text, &path.display().to_string())
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} must be positive and finite")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        positive("problem.beta_minus", p.beta_minus)?;
        positive("problem.beta_plus", p.beta_plus)?;
        positive("problem.a", p.a)?;
        positive("problem.b", p.b)?;
        positive("problem.p", p.p)?;
        positive("problem.tol_on", p.tol_on)?;
        if !p.center.iter().all(|c| c.is_finite()) {
            return Err(invalid("problem.center", "coordinates must be finite"));
        }
        let d = &self.discretization;
        if !matches!(d.epsilon, -1..=1) {
            return Err(invalid(
                "discretization.epsilon",
                format!("{} not in {{-1, 0, 1}}", d.epsilon),
            ));
        }
        positive("discretization.alpha", d.alpha)?;
        if !(d.sigma0 >= 0.0 && d.sigma0.is_finite()) {
            return Err(invalid(
                "discretization.sigma0",
                format!("{} must be non-negative", d.sigma0),
            ));
        }
        if d.epsilon != 1 && d.sigma0 <= 0.0 {
            return Err(invalid("discretization.sigma0", "must be positive unless epsilon = 1"));
        }
        for (field, q) in [
            ("discretization.volume_order", d.volume_order),
            ("discretization.edge_order", d.edge_order),
            ("discretization.norm_order", d.norm_order),
        ] {
            if !(1..=crate::quadrature::MAX_ORDER).contains(&q) {
                return Err(invalid(
                    field,
                    format!("{q} outside 1..={}", crate::quadrature::MAX_ORDER),
                ));
            }
        }
        let s = &self.study;
        if s.mode == StudyMode::Uniform && s.n.is_empty() {
            return Err(invalid("study.n", "at least one mesh size required"));
        }
        if s.n.contains(&0) {
            return Err(invalid("study.n", "mesh sizes must be positive"));
        }
        if s.initial_n == 0 {
            return Err(invalid("study.initial_n", "must be positive"));
        }
        if !(s.theta > 0.0 && s.theta < 1.0) {
            return Err(invalid("study.theta", format!("{} not in (0, 1)", s.theta)));
        }
        positive("solver.tol", self.solver.tol)?;
        if self.solver.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be positive"));
        }
        if self.solver.restart == 0 {
            return Err(invalid("solver.restart", "must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn ellipse(&self) -> Ellipse {
        let p = &self.problem;
        Ellipse {
            center: Point2::new(p.center[0], p.center[1]),
            a: p.a,
            b: p.b,
        }
    }

    pub fn curve(&self) -> InterfaceCurve {
        InterfaceCurve::new(self.ellipse()).with_tolerances(Tolerances {
            on: self.problem.tol_on,
            ..Tolerances::default()
        })
    }

    pub fn beta(&self) -> CoefficientField {
        CoefficientField {
            beta_minus: self.problem.beta_minus,
            beta_plus: self.problem.beta_plus,
        }
    }

    pub fn norm_options(&self) -> NormOptions {
        let d = &self.discretization;
        NormOptions {
            order: d.norm_order,
            exact_side: d.exact_side,
            linf: d.linf_sampling,
        }
    }

    pub fn dg(&self) -> DgConfig {
        let d = &self.discretization;
        DgConfig {
            epsilon: d.epsilon,
            alpha: d.alpha,
            sigma0: d.sigma0,
            volume_order: d.volume_order,
            edge_order: d.edge_order,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config_str("", "empty").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.discretization.element, ElementKind::Triangle);
        assert_eq!(c.discretization.epsilon, -1);
        assert_eq!(c.discretization.sigma0, 1000.0);
        assert_eq!((c.problem.beta_minus, c.problem.beta_plus), (1.0, 10.0));
        assert_eq!(c.problem.p, 5.0);
    }

    #[test]
    fn bad_epsilon_names_field() {
        match parse_config_str("[discretization]\nepsilon = 2\n", "t") {
            Err(ConfigError::Validation { field, .. }) => assert_eq!(field, "discretization.epsilon"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "seed = 1\n\n[problem]\nbeta_minus = 1.0\nbeta_pluss = 3.0\n";
        match parse_config_str(text, "t") {
            Err(ConfigError::Parse { line, message, .. }) => {
                assert_eq!(line, 5, "{message}");
                assert!(message.contains("beta_pluss"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_line() {
        match parse_config_str("[study]\nn = [10, 20\n", "t") {
            Err(ConfigError::Parse { line, .. }) => assert!(line >= 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn theta_range() {
        assert!(parse_config_str("[study]\ntheta = 1.0\n", "t").is_err());
        assert!(parse_config_str("[study]\ntheta = 0.5\n", "t").is_ok());
    }

    #[test]
    fn round_trip() {
        let text = "[discretization]\nelement = \"rectangle\"\nepsilon = 1\nsigma0 = 100.0\n\
                    [study]\nmode = \"adaptive\"\nstrategy = \"interface\"\nmax_iters = 6\nmax_level = 8\n";
        let c = parse_config_str(text, "t").unwrap();
        let again = parse_config_str(&c.to_toml(), "t").unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_toml(), again.to_toml());
    }

    #[test]
    fn file_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            parse_config(&dir.path().join("missing.toml")),
            Err(ConfigError::Read { .. })
        ));
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[problem]\np = 0.5\n").unwrap();
        assert_eq!(parse_config(&path).unwrap().problem.p, 0.5);
    }
}
