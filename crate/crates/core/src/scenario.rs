//! Ready-made synthetic sessions.
//!
//! [`canonical_scene`] is a 5.00 m × 3.12 m room with a cupboard and two
//! sensors two metres apart. [`oracle_selections`] plays the operator: it
//! picks the same beams a person would click, using the noiseless geometry
//! to make sure each pick lies on the intended surface.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cloud_io::{self, Selection, SelectionSet};
use crate::error::{ElidError, Result};
use crate::geometry::{Axis, PointCloud};
use crate::imu::{build_axis_calibration, CalibrationProfile, ImuSample};
use crate::merge::RegistrationConfig;
use crate::rotation::middle_ring_of;
use crate::session::{SessionDir, SessionManifest};
use crate::simulator::{
    calibration_pose, render_frame, render_imu, BoxObstacle, ImuBias, Room, SceneError, SceneSpec,
    SensorPose, Surface,
};
use crate::translation::filter_neighbors;

/// Sensor height above the floor in the canonical scene.
pub const SENSOR_HEIGHT: f64 = 1.9;

pub fn canonical_scene() -> SceneSpec {
    SceneSpec {
        room: Room {
            width: 3.12,
            length: 5.0,
            height: 2.4,
        },
        obstacles: vec![BoxObstacle {
            min: [2.035, 2.52, 0.0],
            max: [2.965, 3.12, 2.0],
        }],
        sensors: vec![
            SensorPose::new("s", [1.5, 1.56, SENSOR_HEIGHT], [0.0, 0.0, 0.0]),
            SensorPose::new("m", [3.5, 1.56, SENSOR_HEIGHT], [3.0, -2.0, 25.0]),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSettings {
    pub range_noise_sigma: f64,
    /// Frames per sensor; all are used for yaw averaging.
    pub frames: usize,
    pub imu_noise_sigma: f64,
    pub imu_samples: usize,
    /// Samples per calibration window.
    pub calibration_samples: usize,
    /// Consecutive points per yaw segment.
    pub segment_length: usize,
    pub seed: u64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            range_noise_sigma: 0.01,
            frames: 50,
            imu_noise_sigma: 0.05,
            imu_samples: 300,
            calibration_samples: 300,
            segment_length: 61,
            seed: 7,
        }
    }
}

/// Deterministic per-sensor accelerometer distortion.
pub fn sensor_bias(sensor_index: usize) -> ImuBias {
    let k = sensor_index as f64 + 1.0;
    ImuBias {
        offset: [0.04 * k, -0.03 * k, 0.06],
        scale: [1.0 + 0.01 * k, 0.99, 1.0 + 0.005 * k],
    }
}

fn sub_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(tag)
}

/// All data one sensor produces during setup.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorCapture {
    pub id: String,
    pub frames: Vec<PointCloud>,
    pub imu: Vec<ImuSample>,
    /// `(window name, samples)` for `x_min`, `x_max`, … `z_max`.
    pub calibration_windows: Vec<(String, Vec<ImuSample>)>,
}

impl SensorCapture {
    pub fn profile(&self) -> Result<CalibrationProfile> {
        let window = |name: String| {
            self.calibration_windows
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, s)| s.as_slice())
                .unwrap_or(&[])
        };
        let cals = Axis::ALL
            .iter()
            .map(|&a| build_axis_calibration(window(format!("{a}_min")), window(format!("{a}_max")), a))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(CalibrationProfile::new(&cals)?)
    }
}

/// Renders frames, the stationary IMU log and the six calibration windows.
pub fn capture_sensor(scene: &SceneSpec, index: usize, settings: &SimulationSettings) -> Result<SensorCapture> {
    let pose = scene.sensor(index)?;
    let bias = sensor_bias(index);
    let frames = (0..settings.frames.max(1))
        .map(|k| {
            let mut f = render_frame(scene, index, settings.range_noise_sigma, sub_seed(settings.seed, k as u64))?;
            f.timestamp_ns = k as u64 * 50_000_000;
            Ok(f)
        })
        .collect::<std::result::Result<Vec<_>, SceneError>>()?;
    let tag = 1_000_000 + 100 * index as u64;
    let imu = render_imu(
        &pose.orientation(),
        settings.imu_noise_sigma,
        &bias,
        settings.imu_samples,
        sub_seed(settings.seed, tag),
    )?;
    let mut calibration_windows = Vec::new();
    for (i, axis) in Axis::ALL.iter().enumerate() {
        for (j, (up, label)) in [(false, "min"), (true, "max")].into_iter().enumerate() {
            let samples = render_imu(
                &calibration_pose(*axis, up),
                settings.imu_noise_sigma,
                &bias,
                settings.calibration_samples,
                sub_seed(settings.seed, tag + 1 + 2 * i as u64 + j as u64),
            )?;
            calibration_windows.push((format!("{axis}_{label}"), samples));
        }
    }
    Ok(SensorCapture {
        id: pose.id.clone(),
        frames,
        imu,
        calibration_windows,
    })
}

/// Writes a complete session directory for every sensor of `scene`
/// (without calibration profiles, which `calibrate_session` derives).
pub fn write_session(
    scene: &SceneSpec,
    settings: &SimulationSettings,
    reference: &str,
    config: &RegistrationConfig,
    dir: &SessionDir,
) -> Result<Vec<SensorCapture>> {
    scene.validate()?;
    scene.sensor_index(reference)?;
    dir.write_manifest(&SessionManifest {
        reference: reference.to_owned(),
        config: *config,
    })?;
    let captures = (0..scene.sensors.len())
        .map(|i| capture_sensor(scene, i, settings))
        .collect::<Result<Vec<_>>>()?;
    for c in &captures {
        cloud_io::write_cloud(&c.frames[0], &dir.cloud_path(&c.id))?;
        for (k, f) in c.frames.iter().enumerate().skip(1) {
            cloud_io::write_cloud(f, &dir.frame_path(&c.id, k))?;
        }
        cloud_io::write_imu_log(&c.imu, &dir.imu_path(&c.id))?;
        for (name, samples) in &c.calibration_windows {
            cloud_io::write_imu_log(samples, &dir.calibration_window_path(&c.id, name))?;
        }
        let gt = crate::simulator::ground_truth_transform(scene, scene.sensor_index(reference)?, scene.sensor_index(&c.id)?)?;
        cloud_io::write_transform(&gt, &dir.root().join("gt").join(format!("{}.tf", c.id)))?;
    }
    fs_write_scene(scene, dir)?;
    Ok(captures)
}

fn fs_write_scene(scene: &SceneSpec, dir: &SessionDir) -> Result<()> {
    Ok(cloud_io::write_atomic(&dir.root().join("scene.json"), &(scene.to_json() + "\n"))?)
}

/// Builds `calibration/<id>.cal` from the six windows under `calib/<id>/`.
pub fn calibrate_session(dir: &SessionDir) -> Result<Vec<String>> {
    dir.calibrate()
}

/// Noiseless frame of `sensor` with a helper to map indices to world points.
struct Truth<'a> {
    scene: &'a SceneSpec,
    pose: &'a SensorPose,
    cloud: PointCloud,
}

impl<'a> Truth<'a> {
    fn new(scene: &'a SceneSpec, index: usize) -> Result<Self> {
        Ok(Self {
            scene,
            pose: scene.sensor(index)?,
            cloud: render_frame(scene, index, 0.0, 0)?,
        })
    }

    fn world(&self, i: usize) -> Vector3<f64> {
        self.pose.to_world().apply_vector(&self.cloud.points()[i].position())
    }

    fn on(&self, i: usize, surface: Surface) -> bool {
        self.scene.on_surface(&self.world(i), surface, 1e-6)
    }

    /// Beam of `ring` on `surface` closest to `target`, optionally with a
    /// full neighbourhood on the same surface.
    fn pick(&self, ring: u32, target: Vector3<f64>, surface: Surface, neighbourhood: bool) -> Option<usize> {
        let mut cands: Vec<usize> = self.cloud.ring_indices(ring).into_iter().filter(|&i| self.on(i, surface)).collect();
        cands.sort_by(|&a, &b| (self.world(a) - target).norm().total_cmp(&(self.world(b) - target).norm()));
        cands.into_iter().take(64).find(|&i| {
            !neighbourhood
                || filter_neighbors(&self.cloud, i).is_ok_and(|n| n.indices.iter().all(|&j| self.on(j, surface)))
        })
    }

    fn segment(&self, target: Vector3<f64>, surface: Surface, len: usize) -> Option<Vec<usize>> {
        let ring = middle_ring_of(self.cloud.ring_count()).ok()?;
        let centre = self.pick(ring, target, surface, false)?;
        let ring_idx = self.cloud.ring_indices(ring);
        let pos = ring_idx.iter().position(|&i| i == centre)?;
        let start = pos.checked_sub(len / 2)?;
        let run = ring_idx.get(start..start + len)?;
        let consecutive = run.windows(2).all(|w| w[1] == w[0] + 1);
        (consecutive && run.iter().all(|&i| self.on(i, surface))).then(|| run.to_vec())
    }
}

fn no_pick(what: &str) -> ElidError {
    SceneError::Json(format!("no beam of the scene satisfies the {what} selection")).into()
}

const WALL_Y0: Surface = Surface::Room { axis: Axis::Y, high: false };
const WALL_Y1: Surface = Surface::Room { axis: Axis::Y, high: true };
const WALL_X0: Surface = Surface::Room { axis: Axis::X, high: false };
const WALL_X1: Surface = Surface::Room { axis: Axis::X, high: true };
const CEILING: Surface = Surface::Room { axis: Axis::Z, high: true };
const CUPBOARD_FRONT: Surface = Surface::Obstacle { index: 0, axis: Axis::Y, high: false };

/// Selections for registering `other` onto `reference` in the canonical
/// scene: one yaw segment pair on the y = 0 wall, and point pairs on the
/// x = 0 wall, the y = width wall and the ceiling.
pub fn oracle_selections(
    scene: &SceneSpec,
    reference: usize,
    other: usize,
    segment_length: usize,
) -> Result<SelectionSet> {
    let s = Truth::new(scene, reference)?;
    let m = Truth::new(scene, other)?;
    let h = SENSOR_HEIGHT;
    let (len, wid, ht) = (scene.room.length, scene.room.width, scene.room.height);
    let mut records = Vec::new();
    let seg_target = Vector3::new(len / 2.0, 0.0, h);
    for t in [&m, &s] {
        records.push(Selection::Segment {
            cloud_id: t.pose.id.clone(),
            indices: t.segment(seg_target, WALL_Y0, segment_length).ok_or_else(|| no_pick("yaw segment"))?,
        });
    }
    let mid = |t: &Truth| middle_ring_of(t.pose.ring_count).unwrap_or(1);
    let pairs = [
        (Axis::X, WALL_X0, Vector3::new(0.0, 1.0, h), None),
        (Axis::Y, WALL_Y1, Vector3::new(1.0, wid, h), None),
        (Axis::Z, CEILING, Vector3::new(len / 2.0, wid / 2.0, ht), Some(2u32)),
    ];
    for (axis, surface, target, from_top) in pairs {
        let ring = |t: &Truth| from_top.map_or(mid(t), |k| t.pose.ring_count - k);
        let mi = m.pick(ring(&m), target, surface, true).ok_or_else(|| no_pick("point pair"))?;
        let si = s.pick(ring(&s), target, surface, true).ok_or_else(|| no_pick("point pair"))?;
        records.push(Selection::PointPair {
            axis,
            cloud_id: m.pose.id.clone(),
            index: mi,
            ref_cloud_id: s.pose.id.clone(),
            ref_index: si,
        });
    }
    Ok(SelectionSet { records })
}

/// A distance an operator would measure in the merged map.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub label: &'static str,
    pub a: (String, usize),
    pub b: (String, usize),
    /// Distance between the noiseless returns of the same two beams.
    pub truth: f64,
}

/// Room width, room length and cupboard width, each measured between a
/// point of `other` and a point of `reference`.
pub fn canonical_measurements(scene: &SceneSpec, reference: usize, other: usize) -> Result<Vec<Measurement>> {
    let s = Truth::new(scene, reference)?;
    let m = Truth::new(scene, other)?;
    let h = SENSOR_HEIGHT;
    let (len, wid) = (scene.room.length, scene.room.width);
    let cup = &scene.obstacles[0];
    let specs = [
        ("room width", WALL_Y0, Vector3::new(1.8, 0.0, h), WALL_Y1, Vector3::new(1.8, wid, h)),
        ("room length", WALL_X1, Vector3::new(len, wid / 2.0, h), WALL_X0, Vector3::new(0.0, wid / 2.0, h)),
        (
            "cupboard width",
            CUPBOARD_FRONT,
            Vector3::new(cup.max[0] - 0.03, cup.min[1], h),
            CUPBOARD_FRONT,
            Vector3::new(cup.min[0] + 0.03, cup.min[1], h),
        ),
    ];
    specs
        .into_iter()
        .map(|(label, ms, mt, ss, st)| {
            let mi = m.pick(mid_ring(&m), mt, ms, false).ok_or_else(|| no_pick(label))?;
            let si = s.pick(mid_ring(&s), st, ss, false).ok_or_else(|| no_pick(label))?;
            Ok(Measurement {
                label,
                a: (m.pose.id.clone(), mi),
                b: (s.pose.id.clone(), si),
                truth: (m.world(mi) - s.world(si)).norm(),
            })
        })
        .collect()
}

fn mid_ring(t: &Truth) -> u32 {
    middle_ring_of(t.pose.ring_count).unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_scene_is_valid() {
        let scene = canonical_scene();
        scene.validate().unwrap();
        let sel = oracle_selections(&scene, 0, 1, 61).unwrap();
        assert_eq!(sel.records.len(), 5);
        let ms = canonical_measurements(&scene, 0, 1).unwrap();
        assert!((ms[0].truth - 3.12).abs() < 0.05, "{}", ms[0].truth);
        assert!((ms[1].truth - 5.0).abs() < 0.05, "{}", ms[1].truth);
        assert!((ms[2].truth - 0.87).abs() < 0.05, "{}", ms[2].truth);
    }

    #[test]
    fn capture_is_deterministic() {
        let scene = canonical_scene();
        let settings = SimulationSettings {
            frames: 2,
            imu_samples: 5,
            calibration_samples: 5,
            ..SimulationSettings::default()
        };
        let a = capture_sensor(&scene, 1, &settings).unwrap();
        let b = capture_sensor(&scene, 1, &settings).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.frames[0], a.frames[1]);
        assert!(a.profile().is_ok());
    }
}
