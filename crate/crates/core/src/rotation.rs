//! Relative roll and pitch from averaged gravity vectors, relative yaw from
//! straight middle-ring segments fitted with RANSAC.
//!
//! All arctangents are four-quadrant: numerator and denominator are passed
//! to `atan2` separately.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorName;
use crate::geometry::{normalize_angle, PointCloud};
use crate::imu::STANDARD_GRAVITY;

/// Below this x-spread (m) a segment is treated as vertical in the xy-plane.
pub const MIN_X_SPREAD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RotationError {
    #[error("gravity magnitude {magnitude:.4} m/s² is outside [0.5 g, 1.5 g]")]
    NonGravitationalReading { magnitude: f64 },
    #[error("orientation is degenerate: both arctangent arguments vanish")]
    DegenerateOrientation,
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("no line model reached 3 inliers")]
    NoConsensus,
    #[error("inlier x-spread {spread:.3e} m is too small for a y = mx + c model")]
    VerticalLine { spread: f64 },
    #[error("invalid RANSAC parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("yaw list is empty")]
    EmptyList,
    #[error("circular mean is undefined (resultant length {0:.3e})")]
    UndefinedMean(f64),
    #[error("cloud has {0} rings, need at least 3")]
    TooFewRings(u32),
    #[error("segment indices are not consecutive at position {0}")]
    NonConsecutiveIndices(usize),
    #[error("segment mixes rings {first} and {other}")]
    MixedRings { first: u32, other: u32 },
    #[error("segment lies on ring {ring}, the middle ring is {middle}")]
    NotMiddleRing { ring: u32, middle: u32 },
    #[error("index {index} is outside a cloud of {size} points")]
    DanglingIndex { index: usize, size: usize },
}

impl ErrorName for RotationError {
    fn name(&self) -> &'static str {
        match self {
            Self::NonGravitationalReading { .. } => "NonGravitationalReading",
            Self::DegenerateOrientation => "DegenerateOrientation",
            Self::TooFewPoints(_) => "TooFewPoints",
            Self::NoConsensus => "NoConsensus",
            Self::VerticalLine { .. } => "VerticalLine",
            Self::InvalidParameter(_) => "InvalidParameter",
            Self::EmptyList => "EmptyList",
            Self::UndefinedMean(_) => "UndefinedMean",
            Self::TooFewRings(_) => "TooFewRings",
            Self::NonConsecutiveIndices(_) => "NonConsecutiveIndices",
            Self::MixedRings { .. } => "MixedRings",
            Self::NotMiddleRing { .. } => "NotMiddleRing",
            Self::DanglingIndex { .. } => "DanglingIndex",
        }
    }
}

fn check_gravity(g: &Vector3<f64>) -> Result<(), RotationError> {
    let magnitude = g.norm();
    if !(0.5 * STANDARD_GRAVITY..=1.5 * STANDARD_GRAVITY).contains(&magnitude) {
        return Err(RotationError::NonGravitationalReading { magnitude });
    }
    Ok(())
}

fn guarded_atan2(num: f64, den: f64) -> Result<f64, RotationError> {
    let scale = STANDARD_GRAVITY * STANDARD_GRAVITY * 1e-12;
    if num.abs() <= scale && den.abs() <= scale {
        return Err(RotationError::DegenerateOrientation);
    }
    Ok(num.atan2(den))
}

/// Relative roll of the sensor that measured `g_m` with respect to the one
/// that measured `g_s`.
pub fn estimate_roll(g_m: &Vector3<f64>, g_s: &Vector3<f64>) -> Result<f64, RotationError> {
    check_gravity(g_m)?;
    check_gravity(g_s)?;
    let xz_m = (g_m.x * g_m.x + g_m.z * g_m.z).sqrt();
    let xz_s = (g_s.x * g_s.x + g_s.z * g_s.z).sqrt();
    let num = g_m.y * xz_s - g_s.y * xz_m;
    let den = g_m.y * g_s.y + xz_m * xz_s;
    guarded_atan2(num, den)
}

/// Relative pitch, same conventions as [`estimate_roll`].
pub fn estimate_pitch(g_m: &Vector3<f64>, g_s: &Vector3<f64>) -> Result<f64, RotationError> {
    check_gravity(g_m)?;
    check_gravity(g_s)?;
    let num = g_s.x * g_m.z - g_m.x * g_s.z;
    let den = g_m.z * g_s.z + g_m.x * g_s.x;
    guarded_atan2(num, den)
}

/// Roll and pitch `(φ, θ)` such that `Ry(θ)·Rx(φ)` maps the direction of
/// `g_m` exactly onto the direction of `g_s`.
///
/// Agrees with [`estimate_roll`]/[`estimate_pitch`] for a single-axis tilt
/// against a level reference, and stays exact when roll and pitch combine.
pub fn gravity_aligned_tilt(
    g_m: &Vector3<f64>,
    g_s: &Vector3<f64>,
) -> Result<(f64, f64), RotationError> {
    check_gravity(g_m)?;
    check_gravity(g_s)?;
    let u = g_m.normalize();
    let v = g_s.normalize();
    // x-row of Ry(θ)ᵀ·v must equal u.x:  v.x cosθ − v.z sinθ = u.x
    let r = v.x.hypot(v.z);
    if r < 1e-12 {
        return Err(RotationError::DegenerateOrientation);
    }
    let alpha = v.z.atan2(v.x);
    let c = (u.x / r).clamp(-1.0, 1.0).acos();
    let pitch = [c - alpha, -c - alpha]
        .into_iter()
        .map(normalize_angle)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    let w = pitch.sin() * v.x + pitch.cos() * v.z;
    if u.y.abs() < 1e-12 && u.z.abs() < 1e-12 {
        return Err(RotationError::DegenerateOrientation);
    }
    let roll = normalize_angle(w.atan2(v.y) - u.z.atan2(u.y));
    Ok((roll, pitch))
}

/// RANSAC settings; the seed makes every fit reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub iterations: usize,
    /// Perpendicular distance (m) under which a point counts as an inlier.
    pub inlier_threshold: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 100,
            inlier_threshold: 0.02,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// `y = gradient·x + intercept`, refit on the consensus set.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFit {
    pub gradient: f64,
    pub intercept: f64,
    pub inlier_indices: Vec<usize>,
}

impl LineFit {
    pub fn inlier_count(&self) -> usize {
        self.inlier_indices.len()
    }
}

fn least_squares_line(points: &[Vector2<f64>]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(sxy, sxx), p| {
        let dx = p.x - mx;
        (sxy + dx * (p.y - my), sxx + dx * dx)
    });
    let m = sxy / sxx;
    (m, my - m * mx)
}

fn consensus(points: &[Vector2<f64>], a: &Vector2<f64>, b: &Vector2<f64>, thr: f64) -> Vec<usize> {
    let d = b - a;
    let len = d.norm();
    if len < 1e-12 {
        return Vec::new();
    }
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| (d.x * (p.y - a.y) - d.y * (p.x - a.x)).abs() / len <= thr)
        .map(|(i, _)| i)
        .collect()
}

/// Robust first-order polynomial fit with two-point minimal samples.
pub fn ransac_line_fit(
    points: &[Vector2<f64>],
    params: &RansacParams,
) -> Result<LineFit, RotationError> {
    if points.len() < 3 {
        return Err(RotationError::TooFewPoints(points.len()));
    }
    if !(params.inlier_threshold > 0.0) {
        return Err(RotationError::InvalidParameter("inlier_threshold must be positive"));
    }
    if params.iterations == 0 {
        return Err(RotationError::InvalidParameter("iterations must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = points.len();
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..params.iterations {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let inliers = consensus(points, &points[i], &points[j], params.inlier_threshold);
        if inliers.len() > best.len() {
            best = inliers;
            if best.len() == n {
                break;
            }
        }
    }
    if best.len() < 3 {
        return Err(RotationError::NoConsensus);
    }
    let chosen: Vec<Vector2<f64>> = best.iter().map(|&i| points[i]).collect();
    let (lo, hi) = chosen
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x), hi.max(p.x)));
    if hi - lo < MIN_X_SPREAD {
        return Err(RotationError::VerticalLine { spread: hi - lo });
    }
    let (gradient, intercept) = least_squares_line(&chosen);
    Ok(LineFit {
        gradient,
        intercept,
        inlier_indices: best,
    })
}

/// A run of at least three consecutive same-ring points, projected to xy.
#[derive(Debug, Clone, PartialEq)]
pub struct RingSegment {
    pub cloud_id: String,
    pub point_indices: Vec<usize>,
    pub points: Vec<Vector2<f64>>,
}

pub(crate) fn check_consecutive(indices: &[usize]) -> Result<(), RotationError> {
    if indices.len() < 3 {
        return Err(RotationError::TooFewPoints(indices.len()));
    }
    for (k, w) in indices.windows(2).enumerate() {
        if w[1] != w[0] + 1 {
            return Err(RotationError::NonConsecutiveIndices(k + 1));
        }
    }
    Ok(())
}

impl RingSegment {
    /// Segment from explicit xy coordinates; only the index rules are checked.
    pub fn new(
        cloud_id: impl Into<String>,
        point_indices: Vec<usize>,
        points: Vec<Vector2<f64>>,
    ) -> Result<Self, RotationError> {
        check_consecutive(&point_indices)?;
        if points.len() != point_indices.len() {
            return Err(RotationError::TooFewPoints(points.len()));
        }
        Ok(Self {
            cloud_id: cloud_id.into(),
            point_indices,
            points,
        })
    }

    /// Resolves `indices` against `cloud`, enforcing that they are
    /// consecutive and all lie on the cloud's middle ring.
    pub fn from_cloud(
        cloud_id: impl Into<String>,
        cloud: &PointCloud,
        indices: &[usize],
    ) -> Result<Self, RotationError> {
        check_consecutive(indices)?;
        let middle = extract_middle_ring(cloud)?;
        let mut points = Vec::with_capacity(indices.len());
        let mut first_ring = None;
        for &index in indices {
            let p = cloud.get(index).ok_or(RotationError::DanglingIndex {
                index,
                size: cloud.len(),
            })?;
            match first_ring {
                None => first_ring = Some(p.ring),
                Some(first) if first != p.ring => {
                    return Err(RotationError::MixedRings {
                        first,
                        other: p.ring,
                    })
                }
                _ => {}
            }
            points.push(Vector2::new(p.x, p.y));
        }
        let ring = first_ring.unwrap_or(middle);
        if ring != middle {
            return Err(RotationError::NotMiddleRing { ring, middle });
        }
        Ok(Self {
            cloud_id: cloud_id.into(),
            point_indices: indices.to_vec(),
            points,
        })
    }
}

/// Instantaneous relative yaw `atan(m_M) − atan(m_S)`, wrapped into `(-π, π]`.
pub fn estimate_yaw(
    segment_m: &RingSegment,
    segment_s: &RingSegment,
    params: &RansacParams,
) -> Result<f64, RotationError> {
    let fit_m = ransac_line_fit(&segment_m.points, params)?;
    let fit_s = ransac_line_fit(&segment_s.points, params)?;
    Ok(normalize_angle(fit_m.gradient.atan() - fit_s.gradient.atan()))
}

/// Circular mean of angle estimates, wrapped into `(-π, π]`.
pub fn average_yaw(estimates: &[f64]) -> Result<f64, RotationError> {
    if estimates.is_empty() {
        return Err(RotationError::EmptyList);
    }
    let (s, c) = estimates
        .iter()
        .fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    let n = estimates.len() as f64;
    let resultant = (s / n).hypot(c / n);
    if resultant < 1e-9 {
        return Err(RotationError::UndefinedMean(resultant));
    }
    Ok(normalize_angle(s.atan2(c)))
}

/// Ring closest to the sensor's horizontal plane: `floor(ring_count / 2)`.
pub fn extract_middle_ring(cloud: &PointCloud) -> Result<u32, RotationError> {
    middle_ring_of(cloud.ring_count())
}

pub fn middle_ring_of(ring_count: u32) -> Result<u32, RotationError> {
    if ring_count < 3 {
        return Err(RotationError::TooFewRings(ring_count));
    }
    Ok(ring_count / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rot_x, rot_y, rot_z, Point};
    use proptest::prelude::*;

    const G: f64 = STANDARD_GRAVITY;

    fn level() -> Vector3<f64> {
        Vector3::new(0.0, 0.0, G)
    }

    #[test]
    fn identical_orientation_gives_zero() {
        assert_eq!(estimate_roll(&level(), &level()).unwrap(), 0.0);
        assert_eq!(estimate_pitch(&level(), &level()).unwrap(), 0.0);
    }

    #[test]
    fn single_axis_tilts_are_recovered() {
        for deg in [5.0f64, -5.0, 30.0, -30.0, 60.0, -60.0] {
            let a = deg.to_radians();
            let rolled = rot_x(a).transpose() * level();
            assert!((estimate_roll(&rolled, &level()).unwrap() - a).abs() < 1e-12);
            let pitched = rot_y(a).transpose() * level();
            assert!((estimate_pitch(&pitched, &level()).unwrap() - a).abs() < 1e-12);
        }
    }

    #[test]
    fn swapped_vectors_negate_pitch() {
        let g_m = rot_y(0.3).transpose() * level();
        let g_s = rot_y(-0.1).transpose() * level();
        let fwd = estimate_pitch(&g_m, &g_s).unwrap();
        let back = estimate_pitch(&g_s, &g_m).unwrap();
        assert!((fwd + back).abs() < 1e-12);
    }

    #[test]
    fn gravity_gate() {
        let weak = Vector3::new(0.0, 0.0, 2.0);
        assert!(matches!(
            estimate_roll(&weak, &level()),
            Err(RotationError::NonGravitationalReading { .. })
        ));
        assert!(estimate_pitch(&level(), &(level() * 2.0)).is_err());
    }

    #[test]
    fn sideways_sensor_makes_pitch_degenerate() {
        // y axis vertical on both: x and z components vanish
        let g = Vector3::new(0.0, G, 0.0);
        assert_eq!(estimate_pitch(&g, &g), Err(RotationError::DegenerateOrientation));
    }

    #[test]
    fn gravity_aligned_tilt_inverts_combined_tilt() {
        for (r, p) in [(30.0f64, 30.0f64), (-30.0, 25.0), (5.0, -30.0), (0.0, 0.0)] {
            let (r, p) = (r.to_radians(), p.to_radians());
            let g_m = (rot_y(p) * rot_x(r)).transpose() * level();
            let (er, ep) = gravity_aligned_tilt(&g_m, &level()).unwrap();
            assert!((er - r).abs() < 1e-12, "{er} vs {r}");
            assert!((ep - p).abs() < 1e-12);
        }
    }

    #[test]
    fn gravity_aligned_tilt_maps_direction_for_tilted_reference() {
        let g_m = (rot_y(0.2) * rot_x(-0.3)).transpose() * level();
        let g_s = (rot_y(-0.1) * rot_x(0.15)).transpose() * level();
        let (r, p) = gravity_aligned_tilt(&g_m, &g_s).unwrap();
        let mapped = rot_y(p) * rot_x(r) * g_m.normalize();
        assert!((mapped - g_s.normalize()).amax() < 1e-12);
    }

    fn line_points() -> Vec<Vector2<f64>> {
        (0..8)
            .map(|i| {
                let x = i as f64 * 0.5 - 1.0;
                Vector2::new(x, 2.0 * x + 1.0)
            })
            .collect()
    }

    #[test]
    fn collinear_points_fit_exactly() {
        let fit = ransac_line_fit(&line_points(), &RansacParams::default()).unwrap();
        assert!((fit.gradient - 2.0).abs() < 1e-9);
        assert!((fit.intercept - 1.0).abs() < 1e-9);
        assert_eq!(fit.inlier_count(), 8);
    }

    /// Exhaustive two-point model enumeration: the largest consensus set.
    fn exhaustive_consensus(points: &[Vector2<f64>], thr: f64) -> Vec<usize> {
        let mut best = Vec::new();
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let (a, b) = (points[i], points[j]);
                let d = b - a;
                let set: Vec<usize> = (0..points.len())
                    .filter(|&k| {
                        let p = points[k];
                        (d.x * (p.y - a.y) - d.y * (p.x - a.x)).abs() / d.norm() <= thr
                    })
                    .collect();
                if set.len() > best.len() {
                    best = set;
                }
            }
        }
        best
    }

    #[test]
    fn outliers_are_rejected() {
        let mut pts = line_points();
        // one metre off the line along its normal
        let n = Vector2::new(-2.0, 1.0).normalize();
        pts.push(Vector2::new(0.3, 1.6) + n);
        pts.push(Vector2::new(1.1, 3.2) - n);
        let params = RansacParams {
            inlier_threshold: 0.05,
            ..RansacParams::default()
        };
        let oracle = exhaustive_consensus(&pts, 0.05);
        assert_eq!(oracle, (0..8).collect::<Vec<_>>());
        let fit = ransac_line_fit(&pts, &params).unwrap();
        assert_eq!(fit.inlier_indices, oracle);
        assert!((fit.gradient - 2.0).abs() < 1e-9);
        assert!((fit.intercept - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ransac_errors() {
        let vertical = vec![
            Vector2::new(1.0, 0.0),
            Vector2::new(1.0, 1.0),
            Vector2::new(1.0, 2.0),
        ];
        assert!(matches!(
            ransac_line_fit(&vertical, &RansacParams::default()),
            Err(RotationError::VerticalLine { .. })
        ));
        assert_eq!(
            ransac_line_fit(&vertical[..2], &RansacParams::default()),
            Err(RotationError::TooFewPoints(2))
        );
        let scattered = vec![
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 5.0),
            Vector2::new(2.0, -3.0),
            Vector2::new(3.0, 9.0),
        ];
        let tight = RansacParams {
            inlier_threshold: 1e-3,
            ..RansacParams::default()
        };
        assert_eq!(ransac_line_fit(&scattered, &tight), Err(RotationError::NoConsensus));
        let bad = RansacParams {
            inlier_threshold: 0.0,
            ..RansacParams::default()
        };
        assert!(matches!(
            ransac_line_fit(&scattered, &bad),
            Err(RotationError::InvalidParameter(_))
        ));
    }

    fn segment_at_angle(deg: f64, n: usize) -> RingSegment {
        let a = deg.to_radians();
        let pts = (0..n)
            .map(|i| {
                let s = i as f64 * 0.05;
                Vector2::new(1.0 + s * a.cos(), 2.0 + s * a.sin())
            })
            .collect();
        RingSegment::new("c", (10..10 + n).collect(), pts).unwrap()
    }

    fn rotate_segment(seg: &RingSegment, deg: f64) -> RingSegment {
        let r = rot_z(deg.to_radians());
        let pts = seg
            .points
            .iter()
            .map(|p| {
                let q = r * Vector3::new(p.x, p.y, 0.0);
                Vector2::new(q.x, q.y)
            })
            .collect();
        RingSegment::new("m", seg.point_indices.clone(), pts).unwrap()
    }

    #[test]
    fn yaw_of_identical_segments_is_zero() {
        let s = segment_at_angle(12.0, 8);
        assert_eq!(estimate_yaw(&s, &s, &RansacParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn yaw_of_rotated_segment() {
        let s = segment_at_angle(-7.0, 8);
        let m = rotate_segment(&s, 20.0);
        let yaw = estimate_yaw(&m, &s, &RansacParams::default()).unwrap();
        assert!((yaw - 20f64.to_radians()).abs() < 1e-9);
    }

    #[test]
    fn yaw_is_arctangent_difference() {
        let m = segment_at_angle(10.0, 5);
        let s = segment_at_angle(30.0, 5);
        let yaw = estimate_yaw(&m, &s, &RansacParams::default()).unwrap();
        assert!((yaw + 20f64.to_radians()).abs() < 1e-9);
    }

    #[test]
    fn circular_mean() {
        assert!((average_yaw(&[0.1, 0.1, 0.1]).unwrap() - 0.1).abs() < 1e-15);
        assert!(average_yaw(&[1e-3, -1e-3]).unwrap().abs() < 1e-15);
        // oracle: summed unit vectors of ±179° point along −x
        let a = average_yaw(&[179f64.to_radians(), -179f64.to_radians()]).unwrap();
        assert!((a.abs() - std::f64::consts::PI).abs() < 1e-12);
        assert!(a > 0.0);
        assert_eq!(average_yaw(&[]), Err(RotationError::EmptyList));
        assert!(matches!(
            average_yaw(&[0.0, std::f64::consts::PI]),
            Err(RotationError::UndefinedMean(_))
        ));
    }

    #[test]
    fn middle_ring() {
        assert_eq!(middle_ring_of(16), Ok(8));
        assert_eq!(middle_ring_of(3), Ok(1));
        assert_eq!(middle_ring_of(2), Err(RotationError::TooFewRings(2)));
    }

    #[test]
    fn segment_from_cloud_validates() {
        let pts = (0..12)
            .map(|i| Point::new(i as f64, 1.0, 0.0, 0.5, if i < 6 { 1 } else { 2 }))
            .collect();
        let cloud = PointCloud::new(pts, 3, "c", 0).unwrap();
        assert!(RingSegment::from_cloud("c", &cloud, &[1, 2, 3]).is_ok());
        assert_eq!(
            RingSegment::from_cloud("c", &cloud, &[1, 2]),
            Err(RotationError::TooFewPoints(2))
        );
        assert_eq!(
            RingSegment::from_cloud("c", &cloud, &[1, 2, 4]),
            Err(RotationError::NonConsecutiveIndices(2))
        );
        assert_eq!(
            RingSegment::from_cloud("c", &cloud, &[4, 5, 6]),
            Err(RotationError::MixedRings { first: 1, other: 2 })
        );
        assert_eq!(
            RingSegment::from_cloud("c", &cloud, &[7, 8, 9]),
            Err(RotationError::NotMiddleRing { ring: 2, middle: 1 })
        );
        assert!(matches!(
            RingSegment::from_cloud("c", &cloud, &[11, 12, 13]),
            Err(RotationError::DanglingIndex { .. })
        ));
    }

    fn gravity() -> impl Strategy<Value = Vector3<f64>> {
        (-1.2..1.2f64, -1.2..1.2f64).prop_map(|(r, p)| (rot_y(p) * rot_x(r)).transpose() * level())
    }

    proptest! {
        #[test]
        fn roll_and_pitch_are_antisymmetric(a in gravity(), b in gravity()) {
            let r1 = estimate_roll(&a, &b).unwrap();
            let r2 = estimate_roll(&b, &a).unwrap();
            prop_assert!((r1 + r2).abs() < 1e-12);
            let p1 = estimate_pitch(&a, &b).unwrap();
            let p2 = estimate_pitch(&b, &a).unwrap();
            prop_assert!((p1 + p2).abs() < 1e-12);
        }

        #[test]
        fn yaw_is_invariant_under_common_rotation(
            base in -30.0..30.0f64, rel in -30.0..30.0f64, common in -40.0..40.0f64, n in 3usize..20
        ) {
            let s = segment_at_angle(base, n);
            let m = rotate_segment(&s, rel);
            let p = RansacParams::default();
            let before = estimate_yaw(&m, &s, &p).unwrap();
            let after = estimate_yaw(&rotate_segment(&m, common), &rotate_segment(&s, common), &p).unwrap();
            prop_assert!((before - after).abs() < 1e-9);
        }

        #[test]
        fn noiseless_fit_is_seed_independent(
            m in -5.0..5.0f64, c in -3.0..3.0f64, n in 3usize..30, seed in any::<u64>()
        ) {
            let pts: Vec<_> = (0..n).map(|i| {
                let x = i as f64 * 0.1 - 1.0;
                Vector2::new(x, m * x + c)
            }).collect();
            let fit = ransac_line_fit(&pts, &RansacParams::default().with_seed(seed)).unwrap();
            prop_assert_eq!(fit.inlier_count(), n);
            prop_assert!((fit.gradient - m).abs() < 1e-9);
            prop_assert!((fit.intercept - c).abs() < 1e-9);
        }
    }
}
