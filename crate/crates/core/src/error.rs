use thiserror::Error;

use crate::assembly::AssemblyError;
use crate::config::ConfigError;
use crate::error_analysis::SolutionError;
use crate::geometry::GeometryError;
use crate::ife::IfeError;
use crate::linalg::LinalgError;
use crate::mesh::MeshError;
use crate::quadrature::QuadratureError;

/// Any failure of a solver pipeline stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Ife(#[from] IfeError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Solution(#[from] SolutionError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("stage `{stage}` failed at {level}: {source}")]
    Stage {
        stage: &'static str,
        level: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_stage(self, stage: &'static str, level: impl Into<String>) -> Self {
        Error::Stage {
            stage,
            level: level.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
