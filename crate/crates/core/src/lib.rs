//! Registration of several fixed LiDARs into one map, and path planning on it.
//!
//! The pipeline per non-reference sensor:
//!
//! 1. roll and pitch from calibrated accelerometer readings ([`imu`], [`rotation`]);
//! 2. yaw from a pair of wall segments on each sensor's middle ring ([`rotation`]);
//! 3. translation from one planar point pair per axis, refined by ICP ([`translation`]);
//! 4. transform, concatenate and measure ([`merge`]).
//!
//! [`planner`] voxelizes the merged map and plans grid paths for a ground
//! robot. [`simulator`] and [`scenario`] produce synthetic sessions with known
//! ground truth.

pub mod bench;
pub mod cloud_io;
pub mod config;
pub mod error;
pub mod geometry;
pub mod imu;
pub mod merge;
pub mod par;
pub mod planner;
pub mod rotation;
pub mod scenario;
pub mod session;
pub mod simulator;
pub mod translation;

pub use error::{ElidError, ErrorName, Result};
pub use geometry::{Axis, EulerAngles, Point, PointCloud, RigidTransform};
pub use merge::{ElidMap, RegistrationConfig, RegistrationSession};
pub use session::SessionDir;
