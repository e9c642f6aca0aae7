//! Synthetic LiDAR and IMU data for box-shaped rooms with box obstacles.
//!
//! Rays are intersected analytically, so noiseless returns lie exactly on
//! the scene surfaces. Every random stream is derived from the caller's seed,
//! the sensor index and the ring, so output does not depend on how rings
//! are scheduled across threads.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorName;
use crate::geometry::{build_rotation_matrix, compose_transform, Axis, EulerAngles, Point, PointCloud, RigidTransform};
use crate::imu::{ImuSample, STANDARD_GRAVITY};
use crate::par;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("room dimensions must be positive and finite")]
    InvalidRoom,
    #[error("obstacle {0} has non-positive extent")]
    DegenerateObstacle(usize),
    #[error("obstacle {0} extends outside the room")]
    ObstacleOutsideRoom(usize),
    #[error("sensor {0} is not strictly inside the room")]
    SensorOutsideRoom(usize),
    #[error("sensor {sensor} is inside obstacle {obstacle}")]
    SensorInsideObstacle { sensor: usize, obstacle: usize },
    #[error("sensor {index}: {reason}")]
    InvalidSensor { index: usize, reason: &'static str },
    #[error("no sensor with index {0}")]
    SensorIndexOutOfRange(usize),
    #[error("no sensor with id {0}")]
    UnknownSensor(String),
    #[error("noise sigma must be finite and non-negative")]
    InvalidNoise,
    #[error("at least one sample is required")]
    ZeroSamples,
    #[error("scene file: {0}")]
    Json(String),
}

impl ErrorName for SceneError {
    fn name(&self) -> &'static str {
        match self {
            Self::InvalidRoom => "InvalidRoom",
            Self::DegenerateObstacle(_) => "DegenerateObstacle",
            Self::ObstacleOutsideRoom(_) => "ObstacleOutsideRoom",
            Self::SensorOutsideRoom(_) => "SensorOutsideRoom",
            Self::SensorInsideObstacle { .. } => "SensorInsideObstacle",
            Self::InvalidSensor { .. } => "InvalidSensor",
            Self::SensorIndexOutOfRange(_) => "SensorIndexOutOfRange",
            Self::UnknownSensor(_) => "UnknownSensor",
            Self::InvalidNoise => "InvalidNoise",
            Self::ZeroSamples => "ZeroSamples",
            Self::Json(_) => "InvalidScene",
        }
    }
}

/// Room spanning `[0, length] × [0, width] × [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    /// Extent along y, m.
    pub width: f64,
    /// Extent along x, m.
    pub length: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxObstacle {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoxObstacle {
    fn contains_strictly(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] > self.min[i] && p[i] < self.max[i])
    }
}

fn default_rings() -> u32 {
    16
}
fn default_azimuth() -> u32 {
    1024
}
fn default_fov() -> f64 {
    33.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorPose {
    pub id: String,
    pub position: [f64; 3],
    #[serde(default)]
    pub roll_deg: f64,
    #[serde(default)]
    pub pitch_deg: f64,
    #[serde(default)]
    pub yaw_deg: f64,
    #[serde(default = "default_rings")]
    pub ring_count: u32,
    #[serde(default = "default_azimuth")]
    pub azimuth_steps: u32,
    /// Full vertical field of view, symmetric about the sensor's xy-plane.
    #[serde(default = "default_fov")]
    pub vertical_fov_deg: f64,
}

impl SensorPose {
    pub fn new(id: impl Into<String>, position: [f64; 3], rpy_deg: [f64; 3]) -> Self {
        Self {
            id: id.into(),
            position,
            roll_deg: rpy_deg[0],
            pitch_deg: rpy_deg[1],
            yaw_deg: rpy_deg[2],
            ring_count: default_rings(),
            azimuth_steps: default_azimuth(),
            vertical_fov_deg: default_fov(),
        }
    }

    pub fn orientation(&self) -> EulerAngles {
        EulerAngles::from_degrees(self.roll_deg, self.pitch_deg, self.yaw_deg).unwrap_or_default()
    }

    /// Sensor-to-world rotation.
    pub fn rotation(&self) -> Matrix3<f64> {
        build_rotation_matrix(&self.orientation())
    }

    pub fn origin(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    /// Sensor-to-world transform.
    pub fn to_world(&self) -> RigidTransform {
        compose_transform(self.rotation(), self.origin()).expect("Euler rotation is orthonormal")
    }

    /// Elevation of `ring`, radians; rings are evenly spread over the FoV.
    pub fn ring_elevation(&self, ring: u32) -> f64 {
        let fov = self.vertical_fov_deg.to_radians();
        fov * (ring as f64 / (self.ring_count - 1) as f64 - 0.5)
    }

    pub fn azimuth(&self, step: u32) -> f64 {
        2.0 * std::f64::consts::PI * step as f64 / self.azimuth_steps as f64
    }

    /// Unit beam direction in the sensor frame.
    pub fn beam(&self, ring: u32, step: u32) -> Vector3<f64> {
        let (el, az) = (self.ring_elevation(ring), self.azimuth(step));
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }

    /// Storage index of a beam in a rendered frame (ring-major).
    pub fn beam_index(&self, ring: u32, step: u32) -> usize {
        ring as usize * self.azimuth_steps as usize + step as usize
    }

    fn validate(&self, index: usize) -> Result<(), SceneError> {
        let bad = |reason| SceneError::InvalidSensor { index, reason };
        if self.ring_count < 3 {
            return Err(bad("ring_count must be at least 3"));
        }
        if self.azimuth_steps < 8 {
            return Err(bad("azimuth_steps must be at least 8"));
        }
        if !(self.vertical_fov_deg > 0.0 && self.vertical_fov_deg < 180.0) {
            return Err(bad("vertical_fov_deg must be in (0, 180)"));
        }
        if !self.position.iter().all(|v| v.is_finite())
            || ![self.roll_deg, self.pitch_deg, self.yaw_deg].iter().all(|v| v.is_finite())
        {
            return Err(bad("pose must be finite"));
        }
        if self.id.is_empty() || self.id.chars().any(|c| c.is_whitespace() || c == '/') {
            return Err(bad("id must be a non-empty token without '/'"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub room: Room,
    #[serde(default)]
    pub obstacles: Vec<BoxObstacle>,
    pub sensors: Vec<SensorPose>,
}

/// Which surface a ray hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    /// Room wall, floor or ceiling: axis and `false` for the low side.
    Room { axis: Axis, high: bool },
    Obstacle { index: usize, axis: Axis, high: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub surface: Surface,
    /// |cos| of the incidence angle.
    pub incidence: f64,
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let scene: SceneSpec = serde_json::from_str(text).map_err(|e| SceneError::Json(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn room_max(&self) -> Vector3<f64> {
        Vector3::new(self.room.length, self.room.width, self.room.height)
    }

    /// Obstacles may touch the room boundary (a cupboard stands on the floor
    /// against a wall) but not cross it.
    pub fn validate(&self) -> Result<(), SceneError> {
        let hi = self.room_max();
        if !hi.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(SceneError::InvalidRoom);
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(0..3).all(|k| o.min[k].is_finite() && o.max[k].is_finite() && o.min[k] < o.max[k]) {
                return Err(SceneError::DegenerateObstacle(i));
            }
            if !(0..3).all(|k| o.min[k] >= 0.0 && o.max[k] <= hi[k]) {
                return Err(SceneError::ObstacleOutsideRoom(i));
            }
        }
        for (i, s) in self.sensors.iter().enumerate() {
            s.validate(i)?;
            let p = s.origin();
            if !(0..3).all(|k| p[k] > 0.0 && p[k] < hi[k]) {
                return Err(SceneError::SensorOutsideRoom(i));
            }
            if let Some(o) = self.obstacles.iter().position(|o| o.contains_strictly(&p)) {
                return Err(SceneError::SensorInsideObstacle { sensor: i, obstacle: o });
            }
        }
        Ok(())
    }

    pub fn sensor(&self, index: usize) -> Result<&SensorPose, SceneError> {
        self.sensors.get(index).ok_or(SceneError::SensorIndexOutOfRange(index))
    }

    pub fn sensor_index(&self, id: &str) -> Result<usize, SceneError> {
        self.sensors
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| SceneError::UnknownSensor(id.to_owned()))
    }

    /// First surface hit by the ray `origin + t·dir`, `t > 0`.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let hi = self.room_max();
        let mut best: Option<(f64, Surface, f64)> = None;
        for k in 0..3 {
            if dir[k] == 0.0 {
                continue;
            }
            let high = dir[k] > 0.0;
            let t = ((if high { hi[k] } else { 0.0 }) - origin[k]) / dir[k];
            if t > 0.0 && best.is_none_or(|b| t < b.0) {
                best = Some((t, Surface::Room { axis: Axis::ALL[k], high }, dir[k].abs()));
            }
        }
        for (index, o) in self.obstacles.iter().enumerate() {
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            let mut near_axis = (0, false, 0.0);
            for k in 0..3 {
                if dir[k] == 0.0 {
                    if origin[k] < o.min[k] || origin[k] > o.max[k] {
                        t_near = f64::INFINITY;
                    }
                    continue;
                }
                let (a, b) = ((o.min[k] - origin[k]) / dir[k], (o.max[k] - origin[k]) / dir[k]);
                let (lo, hi_t) = if a < b { (a, b) } else { (b, a) };
                if lo > t_near {
                    t_near = lo;
                    near_axis = (k, dir[k] < 0.0, dir[k].abs());
                }
                t_far = t_far.min(hi_t);
            }
            if t_near <= t_far && t_near > 0.0 && best.is_none_or(|b| t_near < b.0) {
                let (k, high, inc) = near_axis;
                best = Some((t_near, Surface::Obstacle { index, axis: Axis::ALL[k], high }, inc));
            }
        }
        best.map(|(distance, surface, incidence)| Hit {
            distance,
            surface,
            incidence,
        })
    }

    /// Whether a world point lies on `surface` within `tol`.
    pub fn on_surface(&self, p: &Vector3<f64>, surface: Surface, tol: f64) -> bool {
        let (plane, axis, lo, hi) = match surface {
            Surface::Room { axis, high } => {
                let k = axis.index();
                (if high { self.room_max()[k] } else { 0.0 }, axis, Vector3::zeros(), self.room_max())
            }
            Surface::Obstacle { index, axis, high } => {
                let o = &self.obstacles[index];
                let k = axis.index();
                (if high { o.max[k] } else { o.min[k] }, axis, Vector3::from(o.min), Vector3::from(o.max))
            }
        };
        let k = axis.index();
        (p[k] - plane).abs() <= tol && (0..3).filter(|&j| j != k).all(|j| p[j] >= lo[j] - tol && p[j] <= hi[j] + tol)
    }
}

/// Renders one revolution of `sensor_index` in its own frame.
///
/// Points are stored ring by ring, in azimuth order. Range noise is drawn
/// along the beam. Rays that escape the scene produce no point.
pub fn render_frame(
    scene: &SceneSpec,
    sensor_index: usize,
    range_noise_sigma: f64,
    seed: u64,
) -> Result<PointCloud, SceneError> {
    let pose = scene.sensor(sensor_index)?;
    if !(range_noise_sigma >= 0.0 && range_noise_sigma.is_finite()) {
        return Err(SceneError::InvalidNoise);
    }
    let rot = pose.rotation();
    let origin = pose.origin();
    let normal = Normal::new(0.0, range_noise_sigma).map_err(|_| SceneError::InvalidNoise)?;
    let rings = par::map_range(pose.ring_count as usize, |ring| {
        let ring = ring as u32;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((sensor_index as u64) << 32) | ring as u64);
        let mut out = Vec::with_capacity(pose.azimuth_steps as usize);
        for step in 0..pose.azimuth_steps {
            let d = pose.beam(ring, step);
            let noise = if range_noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            if let Some(hit) = scene.cast(&origin, &(rot * d)) {
                let r = hit.distance + noise;
                out.push(Point::new(r * d.x, r * d.y, r * d.z, hit.incidence, ring));
            }
        }
        out
    });
    let points = rings.into_iter().flatten().collect();
    Ok(PointCloud::new(points, pose.ring_count, pose.id.clone(), 0).expect("rendered points are finite"))
}

/// Per-axis affine distortion `raw = offset + scale·true`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuBias {
    pub offset: [f64; 3],
    pub scale: [f64; 3],
}

impl Default for ImuBias {
    fn default() -> Self {
        Self {
            offset: [0.0; 3],
            scale: [1.0; 3],
        }
    }
}

impl ImuBias {
    pub fn distort(&self, v: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.offset[i] + self.scale[i] * v[i])
    }
}

/// Specific force felt by a stationary sensor with the given orientation:
/// `+g` along the sensor axis that points up.
pub fn gravity_reading(orientation: &EulerAngles) -> Vector3<f64> {
    build_rotation_matrix(orientation).transpose() * Vector3::new(0.0, 0.0, STANDARD_GRAVITY)
}

/// Stationary accelerometer samples at 100 Hz.
pub fn render_imu(
    orientation: &EulerAngles,
    noise_sigma: f64,
    bias: &ImuBias,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<ImuSample>, SceneError> {
    if n_samples == 0 {
        return Err(SceneError::ZeroSamples);
    }
    let normal = Normal::new(0.0, noise_sigma).map_err(|_| SceneError::InvalidNoise)?;
    if !noise_sigma.is_finite() {
        return Err(SceneError::InvalidNoise);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = bias.distort(&gravity_reading(orientation));
    Ok((0..n_samples)
        .map(|i| {
            let mut n = [0.0; 3];
            if noise_sigma > 0.0 {
                n = [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)];
            }
            ImuSample::new(raw.x + n[0], raw.y + n[1], raw.z + n[2], i as u64 * 10_000_000)
        })
        .collect())
}

/// Orientation that points `axis` straight up (`up`) or down.
pub fn calibration_pose(axis: Axis, up: bool) -> EulerAngles {
    let (r, p) = match (axis, up) {
        (Axis::X, true) => (0.0, -90.0),
        (Axis::X, false) => (0.0, 90.0),
        (Axis::Y, true) => (90.0, 0.0),
        (Axis::Y, false) => (-90.0, 0.0),
        (Axis::Z, true) => (0.0, 0.0),
        (Axis::Z, false) => (180.0, 0.0),
    };
    EulerAngles::from_degrees(r, p, 0.0).expect("finite")
}

/// Transform taking points in `sensor_b`'s frame into `sensor_a`'s frame.
pub fn ground_truth_transform(scene: &SceneSpec, sensor_a: usize, sensor_b: usize) -> Result<RigidTransform, SceneError> {
    let a = scene.sensor(sensor_a)?.to_world();
    let b = scene.sensor(sensor_b)?.to_world();
    Ok(b.then(&a.inverse()))
}
