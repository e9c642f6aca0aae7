//! Registration of each non-reference cloud onto the reference, and
//! concatenation of all registered clouds into one map.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud_io::{Selection, SelectionSet};
use crate::error::{ElidError, ErrorName, Result};
use crate::geometry::{
    apply_transform, build_rotation_matrix, compose_transform, Axis, EulerAngles, PointCloud,
    RigidTransform,
};
use crate::imu::{average_corrected, CalibrationProfile, ImuSample};
use crate::par;
use crate::rotation::{
    average_yaw, check_consecutive, estimate_pitch, estimate_roll, estimate_yaw,
    gravity_aligned_tilt, RansacParams, RingSegment,
};
use crate::translation::{
    assemble_translation, estimate_axis_offset, filter_neighbors, AxisOffsetEstimate, IcpParams,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MergeError {
    #[error("cloud {cloud_id} is missing: {}", .missing.join(", "))]
    IncompleteSelections { cloud_id: String, missing: Vec<String> },
    #[error("unknown cloud {0}")]
    UnknownCloud(String),
    #[error("{clouds} clouds but {transforms} transforms")]
    ArityMismatch { clouds: usize, transforms: usize },
    #[error("index {index} is outside a map of {size} points")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("point pair must reference the reference cloud, not {0}")]
    PairNotOnReference(String),
    #[error("frame set at {timestamp_ns} ns arrived after {previous_ns} ns")]
    OutOfOrderFrameSet { timestamp_ns: u64, previous_ns: u64 },
}

impl ErrorName for MergeError {
    fn name(&self) -> &'static str {
        match self {
            Self::IncompleteSelections { .. } => "IncompleteSelections",
            Self::UnknownCloud(_) => "UnknownCloud",
            Self::ArityMismatch { .. } => "ArityMismatch",
            Self::IndexOutOfRange { .. } => "IndexOutOfRange",
            Self::PairNotOnReference(_) => "PairNotOnReference",
            Self::OutOfOrderFrameSet { .. } => "OutOfOrderFrameSet",
        }
    }
}

/// How relative roll and pitch are obtained from the two gravity vectors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltModel {
    /// Closed-form per-axis differences ([`estimate_roll`], [`estimate_pitch`]).
    /// Exact for single-axis tilts.
    #[default]
    PerAxis,
    /// Solves `Ry(θ)·Rx(φ)·ĝ_M = ĝ_S` ([`gravity_aligned_tilt`]); exact for
    /// combined tilts against a level reference.
    GravityAligned,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    pub ransac: RansacParams,
    pub icp: IcpParams,
    pub tilt_model: TiltModel,
}

/// Everything recorded for one sensor during setup.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudRecord {
    /// Frames in capture order; the first one is used for translation.
    pub frames: Vec<PointCloud>,
    pub imu: Vec<ImuSample>,
    pub profile: CalibrationProfile,
}

impl CloudRecord {
    pub fn primary(&self) -> Option<&PointCloud> {
        self.frames.first()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationSession {
    pub reference_id: String,
    pub clouds: BTreeMap<String, CloudRecord>,
    pub selections: SelectionSet,
    pub config: RegistrationConfig,
}

/// Result of registering one cloud, with the intermediate readouts.
#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub cloud_id: String,
    pub transform: RigidTransform,
    pub angles: EulerAngles,
    pub yaw_readings: Vec<f64>,
    pub offsets: Vec<AxisOffsetEstimate>,
}

fn wrap_half_turn(a: f64) -> f64 {
    use std::f64::consts::PI;
    let r = a.rem_euclid(PI);
    if r > PI / 2.0 {
        r - PI
    } else {
        r
    }
}

impl RegistrationSession {
    fn record(&self, id: &str) -> Result<&CloudRecord> {
        self.clouds
            .get(id)
            .ok_or_else(|| MergeError::UnknownCloud(id.to_owned()).into())
    }

    /// Yaw segments of `cloud_id`, each paired with the reference segment of
    /// the same rank in file order.
    pub fn segment_pairs(&self, cloud_id: &str) -> Vec<(&[usize], &[usize])> {
        let segs = |id: &str| -> Vec<&[usize]> {
            self.selections
                .records
                .iter()
                .filter_map(|r| match r {
                    Selection::Segment { cloud_id, indices } if cloud_id == id => Some(indices.as_slice()),
                    _ => None,
                })
                .collect()
        };
        segs(cloud_id).into_iter().zip(segs(&self.reference_id)).collect()
    }

    /// Last point pair recorded for `cloud_id` along `axis`.
    pub fn point_pair(&self, cloud_id: &str, axis: Axis) -> Option<(usize, &str, usize)> {
        self.selections.records.iter().rev().find_map(|r| match r {
            Selection::PointPair {
                axis: a,
                cloud_id: c,
                index,
                ref_cloud_id,
                ref_index,
            } if *a == axis && c == cloud_id => Some((*index, ref_cloud_id.as_str(), *ref_index)),
            _ => None,
        })
    }

    /// Ids of every cloud except the reference, sorted.
    pub fn targets(&self) -> Vec<&str> {
        self.clouds
            .keys()
            .filter(|k| **k != self.reference_id)
            .map(String::as_str)
            .collect()
    }

    pub fn missing_selections(&self, cloud_id: &str) -> Vec<String> {
        let mut missing = Vec::new();
        if self.segment_pairs(cloud_id).is_empty() {
            missing.push("yaw segment pair".to_owned());
        }
        for axis in Axis::ALL {
            if self.point_pair(cloud_id, axis).is_none() {
                missing.push(format!("{axis} point pair"));
            }
        }
        missing
    }
}

fn projected(cloud: &PointCloud, indices: &[usize], tilt: &RigidTransform) -> Result<Vec<Vector2<f64>>> {
    indices
        .iter()
        .map(|&i| {
            let p = cloud.get(i).ok_or(MergeError::IndexOutOfRange {
                index: i,
                size: cloud.len(),
            })?;
            let q = tilt.apply_vector(&p.position());
            Ok(Vector2::new(q.x, q.y))
        })
        .collect()
}

/// Two-step registration of `cloud_id` onto the session reference.
pub fn estimate_transform(session: &RegistrationSession, cloud_id: &str) -> Result<Registration> {
    let m = session.record(cloud_id)?;
    let s = session.record(&session.reference_id)?;
    if cloud_id == session.reference_id {
        return Ok(Registration {
            cloud_id: cloud_id.to_owned(),
            transform: RigidTransform::identity(),
            angles: EulerAngles::default(),
            yaw_readings: Vec::new(),
            offsets: Vec::new(),
        });
    }
    let missing = session.missing_selections(cloud_id);
    let (m_cloud, s_cloud) = match (m.primary(), s.primary()) {
        (Some(a), Some(b)) if missing.is_empty() => (a, b),
        _ => {
            let mut missing = missing;
            if m.frames.is_empty() || s.frames.is_empty() {
                missing.push("frames".to_owned());
            }
            return Err(MergeError::IncompleteSelections {
                cloud_id: cloud_id.to_owned(),
                missing,
            }
            .into());
        }
    };
    let cfg = &session.config;

    // Rotation: tilt from gravity, yaw from the segment pairs of every frame.
    let g_m = average_corrected(&m.imu, &m.profile)?;
    let g_s = average_corrected(&s.imu, &s.profile)?;
    let (roll, pitch) = match cfg.tilt_model {
        TiltModel::PerAxis => (estimate_roll(&g_m, &g_s)?, estimate_pitch(&g_m, &g_s)?),
        TiltModel::GravityAligned => gravity_aligned_tilt(&g_m, &g_s)?,
    };
    let tilt = RigidTransform::from_rotation(build_rotation_matrix(&EulerAngles::new(roll, pitch, 0.0)?))?;
    let pairs = session.segment_pairs(cloud_id);
    for (a, b) in &pairs {
        check_consecutive(a)?;
        check_consecutive(b)?;
    }
    let frames = m.frames.len().min(s.frames.len());
    let jobs: Vec<(usize, usize)> = (0..frames)
        .flat_map(|k| (0..pairs.len()).map(move |j| (k, j)))
        .collect();
    let identity = RigidTransform::identity();
    let readings = par::map_collect(&jobs, |&(k, j)| -> Result<f64> {
        let (mi, si) = pairs[j];
        let seg_m = RingSegment::new(cloud_id, mi.to_vec(), projected(&m.frames[k], mi, &tilt)?)?;
        let seg_s = RingSegment::new(&session.reference_id, si.to_vec(), projected(&s.frames[k], si, &identity)?)?;
        let params = cfg.ransac.with_seed(cfg.ransac.seed.wrapping_add((k * pairs.len() + j) as u64));
        // estimate_yaw reports how the view of M is turned relative to S,
        // the opposite of the sensor's own heading.
        Ok(wrap_half_turn(-estimate_yaw(&seg_m, &seg_s, &params)?))
    });
    let yaw_readings = readings.into_iter().collect::<Result<Vec<_>>>()?;
    let yaw = average_yaw(&yaw_readings)?;
    let angles = EulerAngles::new(roll, pitch, yaw)?;
    let rotation = build_rotation_matrix(&angles);

    // Translation on the intermediate cloud.
    let intermediate = apply_transform(m_cloud, &RigidTransform::from_rotation(rotation)?);
    let offsets = Axis::ALL
        .iter()
        .map(|&axis| {
            let (idx, ref_id, ref_idx) = session.point_pair(cloud_id, axis).expect("checked above");
            if ref_id != session.reference_id {
                return Err(MergeError::PairNotOnReference(ref_id.to_owned()).into());
            }
            let m_set = filter_neighbors(&intermediate, idx)?;
            let s_set = filter_neighbors(s_cloud, ref_idx)?;
            Ok(estimate_axis_offset(&m_set, &s_set, axis, &cfg.icp)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let t = assemble_translation(&offsets)?;
    Ok(Registration {
        cloud_id: cloud_id.to_owned(),
        transform: compose_transform(rotation, t)?,
        angles,
        yaw_readings,
        offsets,
    })
}

/// Registers every non-reference cloud, in id order.
pub fn estimate_all(session: &RegistrationSession) -> Result<Vec<Registration>> {
    session
        .targets()
        .into_iter()
        .map(|id| estimate_transform(session, id))
        .collect()
}

/// Concatenated map with the source id of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct ElidMap {
    cloud: PointCloud,
    provenance: Vec<String>,
    created_at: u64,
}

impl ElidMap {
    /// `provenance` must have one entry per point.
    pub fn from_parts(cloud: PointCloud, provenance: Vec<String>, created_at: u64) -> Self {
        assert_eq!(cloud.len(), provenance.len(), "provenance must cover every point");
        Self {
            cloud,
            provenance,
            created_at,
        }
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    pub fn created_at(&self) -> u64 {
        self.created_at
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    /// Map index of point `local` of source cloud `cloud_id`.
    pub fn index_of(&self, cloud_id: &str, local: usize) -> Option<usize> {
        let start = self.provenance.iter().position(|p| p == cloud_id)?;
        let i = start + local;
        (self.provenance.get(i).map(String::as_str) == Some(cloud_id)).then_some(i)
    }
}

/// Merges the primary frames of a session using `registrations`
/// (one per non-reference cloud, in any order).
pub fn merge_session(session: &RegistrationSession, registrations: &[Registration]) -> Result<ElidMap> {
    let reference = session
        .record(&session.reference_id)?
        .primary()
        .ok_or_else(|| MergeError::UnknownCloud(session.reference_id.clone()))?;
    let mut clouds = Vec::new();
    let mut transforms = Vec::new();
    for r in registrations.iter().filter(|r| r.cloud_id != session.reference_id) {
        let c = session
            .record(&r.cloud_id)?
            .primary()
            .ok_or_else(|| MergeError::UnknownCloud(r.cloud_id.clone()))?;
        clouds.push(c.clone());
        transforms.push(r.transform);
    }
    Ok(build_map(&clouds, &transforms, reference)?)
}

/// Applies each transform to its cloud, then concatenates the results in
/// input order followed by the unchanged reference.
pub fn build_map(
    clouds: &[PointCloud],
    transforms: &[RigidTransform],
    reference: &PointCloud,
) -> std::result::Result<ElidMap, MergeError> {
    if clouds.len() != transforms.len() {
        return Err(MergeError::ArityMismatch {
            clouds: clouds.len(),
            transforms: transforms.len(),
        });
    }
    let moved = par::map_range(clouds.len(), |i| apply_transform(&clouds[i], &transforms[i]));
    Ok(concatenate(&moved, reference))
}

/// Single-writer concatenation of already registered clouds.
pub fn concatenate(moved: &[PointCloud], reference: &PointCloud) -> ElidMap {
    let total = moved.iter().map(PointCloud::len).sum::<usize>() + reference.len();
    let mut points = Vec::with_capacity(total);
    let mut provenance = Vec::with_capacity(total);
    let mut ring_count = reference.ring_count();
    let mut created_at = reference.timestamp_ns;
    for c in moved.iter().chain(std::iter::once(reference)) {
        points.extend_from_slice(c.points());
        provenance.extend(std::iter::repeat_n(c.frame_id.clone(), c.len()));
        ring_count = ring_count.max(c.ring_count());
        created_at = created_at.max(c.timestamp_ns);
    }
    let cloud = PointCloud::new(points, ring_count, "map", created_at)
        .expect("points come from valid clouds with at most ring_count rings");
    ElidMap::from_parts(cloud, provenance, created_at)
}

pub fn measure_distance(map: &ElidMap, index_a: usize, index_b: usize) -> std::result::Result<f64, MergeError> {
    let get = |i: usize| {
        map.cloud.get(i).ok_or(MergeError::IndexOutOfRange {
            index: i,
            size: map.len(),
        })
    };
    Ok(get(index_a)?.distance(get(index_b)?))
}

/// Re-applies fixed transforms to successive frame sets.
#[derive(Debug, Clone)]
pub struct ContinuousMerger {
    reference_id: String,
    transforms: BTreeMap<String, RigidTransform>,
    last_timestamp: Option<u64>,
}

impl ContinuousMerger {
    pub fn new(reference_id: impl Into<String>, transforms: BTreeMap<String, RigidTransform>) -> Self {
        Self {
            reference_id: reference_id.into(),
            transforms,
            last_timestamp: None,
        }
    }

    /// Merges one frame set. Frames are matched to transforms by `frame_id`;
    /// sets must arrive in non-decreasing order of their latest timestamp.
    pub fn merge(&mut self, frames: &[PointCloud]) -> Result<ElidMap> {
        let reference = frames
            .iter()
            .find(|f| f.frame_id == self.reference_id)
            .ok_or_else(|| ElidError::from(MergeError::UnknownCloud(self.reference_id.clone())))?;
        let stamp = frames.iter().map(|f| f.timestamp_ns).max().unwrap_or(0);
        if let Some(prev) = self.last_timestamp.filter(|&p| p > stamp) {
            return Err(MergeError::OutOfOrderFrameSet {
                timestamp_ns: stamp,
                previous_ns: prev,
            }
            .into());
        }
        let mut clouds = Vec::new();
        let mut transforms = Vec::new();
        for f in frames.iter().filter(|f| f.frame_id != self.reference_id) {
            let t = self
                .transforms
                .get(&f.frame_id)
                .ok_or_else(|| MergeError::UnknownCloud(f.frame_id.clone()))?;
            clouds.push(f.clone());
            transforms.push(*t);
        }
        let map = build_map(&clouds, &transforms, reference)?;
        self.last_timestamp = Some(stamp);
        Ok(map)
    }
}
