//! Crate-wide error type and stable error names.

use thiserror::Error;

use crate::bench::BenchError;
use crate::cloud_io::CloudIoError;
use crate::config::ConfigError;
use crate::geometry::GeometryError;
use crate::imu::CalibrationError;
use crate::merge::MergeError;
use crate::planner::PlannerError;
use crate::rotation::RotationError;
use crate::simulator::SceneError;
use crate::translation::TranslationError;

/// Machine-readable, stable identifier of an error variant.
///
/// The CLI prints it on stderr and the selection service returns it in
/// 400 bodies, so renaming a variant's name is a breaking change.
pub trait ErrorName {
    fn name(&self) -> &'static str;
}

#[derive(Debug, Error)]
pub enum ElidError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    CloudIo(#[from] CloudIoError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error(transparent)]
    Translation(#[from] TranslationError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl ErrorName for ElidError {
    fn name(&self) -> &'static str {
        match self {
            Self::Geometry(e) => e.name(),
            Self::CloudIo(e) => e.name(),
            Self::Calibration(e) => e.name(),
            Self::Rotation(e) => e.name(),
            Self::Translation(e) => e.name(),
            Self::Merge(e) => e.name(),
            Self::Scene(e) => e.name(),
            Self::Planner(e) => e.name(),
            Self::Bench(e) => e.name(),
            Self::Config(e) => e.name(),
        }
    }
}

pub type Result<T, E = ElidError> = std::result::Result<T, E>;
