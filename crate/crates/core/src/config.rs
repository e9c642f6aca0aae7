//! JSON tool configuration.
//!
//! Every field is optional; missing ones take the library defaults.
//!
//! ```json
//! {
//!   "registration": {"ransac": {"iterations": 100, "inlier_threshold": 0.02, "seed": 0},
//!                    "icp": {"max_iterations": 50, "convergence_tol": 1e-6},
//!                    "tilt_model": "per_axis"},
//!   "voxel": {"voxel_size": 0.1, "z_band": [-1.85, 0.35], "inflation_radius": 0.25,
//!             "min_points_per_voxel": 1, "flatten": true},
//!   "connectivity": "planar4",
//!   "linear_speed": 0.2,
//!   "angular_speed": 45.0
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorName;
use crate::merge::RegistrationConfig;
use crate::planner::{Connectivity, VoxelizeParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ErrorName for ConfigError {
    fn name(&self) -> &'static str {
        match self {
            Self::Unreadable { .. } => "ConfigUnreadable",
            Self::Invalid(_) => "InvalidConfig",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub registration: RegistrationConfig,
    pub voxel: VoxelizeParams,
    pub connectivity: Connectivity,
    /// Robot speed in m/s, used to time MOVE commands during replay.
    pub linear_speed: f64,
    /// Robot turn rate in deg/s.
    pub angular_speed: f64,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            registration: RegistrationConfig::default(),
            voxel: VoxelizeParams::default(),
            connectivity: Connectivity::default(),
            linear_speed: 0.2,
            angular_speed: 45.0,
        }
    }
}

impl ToolConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let r = &self.registration;
        let checks = [
            (r.ransac.iterations > 0, "ransac.iterations must be positive"),
            (positive(r.ransac.inlier_threshold), "ransac.inlier_threshold must be positive"),
            (r.icp.max_iterations > 0, "icp.max_iterations must be positive"),
            (r.icp.convergence_tol >= 0.0, "icp.convergence_tol must be non-negative"),
            (positive(self.voxel.voxel_size), "voxel.voxel_size must be positive"),
            (self.voxel.z_band.0 < self.voxel.z_band.1, "voxel.z_band must be increasing"),
            (self.voxel.inflation_radius >= 0.0, "voxel.inflation_radius must be non-negative"),
            (positive(self.linear_speed), "linear_speed must be positive"),
            (positive(self.angular_speed), "angular_speed must be positive"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(ConfigError::Invalid((*msg).to_owned())),
            None => Ok(()),
        }
    }
}
