//! Ring-structured point clouds, Euler angles and rigid transforms.
//!
//! Positions transform as column vectors, `p' = R·p + t`. The 4×4
//! homogeneous matrix is only a serialization view of a [`RigidTransform`];
//! intensity is a per-point attribute and never enters the matrix product.

use nalgebra::{Matrix3, Matrix4, Vector3};
use std::f64::consts::PI;
use thiserror::Error;

use crate::error::ErrorName;
use crate::par;

/// Tolerance on `RᵀR = I` and `det R = 1` accepted by [`compose_transform`].
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point {index} has a non-finite coordinate")]
    NonFiniteCoordinate { index: usize },
    #[error("point {index} has ring {ring}, cloud declares {ring_count} rings")]
    RingIndexOutOfRange {
        index: usize,
        ring: u32,
        ring_count: u32,
    },
    #[error("ring count must be positive")]
    ZeroRingCount,
    #[error("rotation is not orthonormal (max deviation {deviation:.3e})")]
    NonOrthonormalRotation { deviation: f64 },
    #[error("angle is not finite")]
    NonFiniteAngle,
    #[error("homogeneous matrix fourth row must be (0, 0, 0, 1)")]
    BadHomogeneousRow,
}

impl ErrorName for GeometryError {
    fn name(&self) -> &'static str {
        match self {
            Self::NonFiniteCoordinate { .. } => "NonFiniteCoordinate",
            Self::RingIndexOutOfRange { .. } => "RingIndexOutOfRange",
            Self::ZeroRingCount => "ZeroRingCount",
            Self::NonOrthonormalRotation { .. } => "NonOrthonormalRotation",
            Self::NonFiniteAngle => "NonFiniteAngle",
            Self::BadHomogeneousRow => "BadHomogeneousRow",
        }
    }
}

/// One of the sensor frame's coordinate axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    pub fn unit(self) -> Vector3<f64> {
        let mut v = Vector3::zeros();
        v[self.index()] = 1.0;
        v
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Axis {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            _ => Err(()),
        }
    }
}

/// One LiDAR return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Reflectance in `[0, 1]`.
    pub intensity: f64,
    pub ring: u32,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64, ring: u32) -> Self {
        Self {
            x,
            y,
            z,
            intensity,
            ring,
        }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn with_position(&self, p: &Vector3<f64>) -> Self {
        Self {
            x: p.x,
            y: p.y,
            z: p.z,
            ..*self
        }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.position() - other.position()).norm()
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

/// A ring-structured scan. Points of one ring are kept in azimuth order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    ring_count: u32,
    pub frame_id: String,
    pub timestamp_ns: u64,
}

impl PointCloud {
    pub fn new(
        points: Vec<Point>,
        ring_count: u32,
        frame_id: impl Into<String>,
        timestamp_ns: u64,
    ) -> Result<Self, GeometryError> {
        if ring_count == 0 {
            return Err(GeometryError::ZeroRingCount);
        }
        for (index, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(GeometryError::NonFiniteCoordinate { index });
            }
            if p.ring >= ring_count {
                return Err(GeometryError::RingIndexOutOfRange {
                    index,
                    ring: p.ring,
                    ring_count,
                });
            }
        }
        Ok(Self {
            points,
            ring_count,
            frame_id: frame_id.into(),
            timestamp_ns,
        })
    }

    pub fn empty(ring_count: u32, frame_id: impl Into<String>) -> Result<Self, GeometryError> {
        Self::new(Vec::new(), ring_count, frame_id, 0)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn ring_count(&self) -> u32 {
        self.ring_count
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Point> {
        self.points.get(index)
    }

    /// Cloud indices of every point on `ring`, in storage (azimuth) order.
    pub fn ring_indices(&self, ring: u32) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.ring == ring)
            .map(|(i, _)| i)
            .collect()
    }

    /// Same cloud with every position replaced; used by transforms.
    fn with_points(&self, points: Vec<Point>) -> Self {
        Self {
            points,
            ring_count: self.ring_count,
            frame_id: self.frame_id.clone(),
            timestamp_ns: self.timestamp_ns,
        }
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Roll about x, pitch about y, yaw about z, all in radians within `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Result<Self, GeometryError> {
        if !(roll.is_finite() && pitch.is_finite() && yaw.is_finite()) {
            return Err(GeometryError::NonFiniteAngle);
        }
        Ok(Self {
            roll: normalize_angle(roll),
            pitch: normalize_angle(pitch),
            yaw: normalize_angle(yaw),
        })
    }

    pub fn from_degrees(roll: f64, pitch: f64, yaw: f64) -> Result<Self, GeometryError> {
        Self::new(roll.to_radians(), pitch.to_radians(), yaw.to_radians())
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        build_rotation_matrix(self)
    }
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `Rz(yaw) · Ry(pitch) · Rx(roll)`.
pub fn build_rotation_matrix(angles: &EulerAngles) -> Matrix3<f64> {
    rot_z(angles.yaw) * rot_y(angles.pitch) * rot_x(angles.roll)
}

/// Largest entry of `|RᵀR − I|` together with `|det R − 1|`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r - Matrix3::identity();
    let worst = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    worst.max((r.determinant() - 1.0).abs())
}

/// Recovers `(roll, pitch, yaw)` such that `build_rotation_matrix` reproduces `r`.
pub fn euler_from_rotation(r: &Matrix3<f64>) -> EulerAngles {
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let (roll, yaw) = if r[(2, 0)].abs() < 1.0 - 1e-12 {
        (r[(2, 1)].atan2(r[(2, 2)]), r[(1, 0)].atan2(r[(0, 0)]))
    } else {
        // gimbal lock: fold everything into yaw
        (0.0, (-r[(0, 1)]).atan2(r[(1, 1)]))
    };
    EulerAngles {
        roll: normalize_angle(roll),
        pitch: normalize_angle(pitch),
        yaw: normalize_angle(yaw),
    }
}

/// Rotation followed by translation: `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Pure rotation; `r` must already be a proper rotation.
    pub fn from_rotation(r: Matrix3<f64>) -> Result<Self, GeometryError> {
        compose_transform(r, Vector3::zeros())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// The 4×4 view: rotation top-left, translation in the last column.
    pub fn homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self, GeometryError> {
        if m[(3, 0)] != 0.0 || m[(3, 1)] != 0.0 || m[(3, 2)] != 0.0 || m[(3, 3)] != 1.0 {
            return Err(GeometryError::BadHomogeneousRow);
        }
        compose_transform(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn apply_vector(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_point(&self, p: &Point) -> Point {
        p.with_position(&self.apply_vector(&p.position()))
    }

    /// `self` followed by `next`, i.e. `next ∘ self`.
    pub fn then(&self, next: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: next.rotation * self.rotation,
            translation: next.rotation * self.translation + next.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        invert_transform(self)
    }

    /// Rotation angle of `Rᵀ_self · R_other`, in radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

pub fn compose_transform(
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
) -> Result<RigidTransform, GeometryError> {
    let deviation = orthonormality_error(&rotation);
    if !(deviation <= ORTHONORMAL_TOLERANCE) || !translation.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonOrthonormalRotation { deviation });
    }
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

/// Applies `t` to every point; intensity, ring and ordering are preserved.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    cloud.with_points(par::map_collect(cloud.points(), |p| t.apply_point(p)))
}

pub fn invert_transform(t: &RigidTransform) -> RigidTransform {
    let rt = t.rotation.transpose();
    RigidTransform {
        rotation: rt,
        translation: -(rt * t.translation),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn max_abs_diff(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn zero_angles_give_identity() {
        let r = build_rotation_matrix(&EulerAngles::default());
        assert_eq!(r, Matrix3::identity());
    }

    #[test]
    fn quarter_yaw() {
        let r = build_rotation_matrix(&EulerAngles::new(0.0, 0.0, FRAC_PI_2).unwrap());
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(max_abs_diff(&r, &expected) < 1e-15);
    }

    #[test]
    fn factor_order_matches_explicit_product() {
        // Independent oracle: plain nested-loop multiplication of the three
        // factor matrices written out element by element.
        fn mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
            let mut out = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        out[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            out
        }
        let (phi, theta, psi) = (0.1f64, 0.2f64, 0.3f64);
        let z = [
            [psi.cos(), -psi.sin(), 0.0],
            [psi.sin(), psi.cos(), 0.0],
            [0.0, 0.0, 1.0],
        ];
        let y = [
            [theta.cos(), 0.0, theta.sin()],
            [0.0, 1.0, 0.0],
            [-theta.sin(), 0.0, theta.cos()],
        ];
        let x = [
            [1.0, 0.0, 0.0],
            [0.0, phi.cos(), -phi.sin()],
            [0.0, phi.sin(), phi.cos()],
        ];
        let oracle = mul(mul(z, y), x);
        let r = build_rotation_matrix(&EulerAngles::new(phi, theta, psi).unwrap());
        for i in 0..3 {
            for j in 0..3 {
                assert!((r[(i, j)] - oracle[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn angles_normalize_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-15);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.5 + 4.0 * PI) - 0.5).abs() < 1e-12);
        assert!(EulerAngles::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn compose_identity_and_translation() {
        let t = compose_transform(Matrix3::identity(), Vector3::zeros()).unwrap();
        assert_eq!(t.homogeneous(), Matrix4::identity());
        let t = compose_transform(Matrix3::identity(), Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let h = t.homogeneous();
        assert_eq!(h.column(3).into_owned(), nalgebra::Vector4::new(1.0, 2.0, 3.0, 1.0));
        assert_eq!(h.row(3).into_owned(), nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn compose_applies_rotation_then_translation() {
        let t = compose_transform(rot_z(FRAC_PI_2), Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let p = t.apply_vector(&Vector3::new(1.0, 0.0, 0.0));
        assert!((p - Vector3::new(1.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn compose_rejects_non_rotations() {
        let scaled = Matrix3::identity() * 1.01;
        assert!(matches!(
            compose_transform(scaled, Vector3::zeros()),
            Err(GeometryError::NonOrthonormalRotation { .. })
        ));
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(compose_transform(reflection, Vector3::zeros()).is_err());
    }

    #[test]
    fn quarter_turn_of_single_point() {
        let cloud = PointCloud::new(vec![Point::new(1.0, 0.0, 0.0, 0.3, 2)], 4, "m", 5).unwrap();
        let t = RigidTransform::from_rotation(rot_z(FRAC_PI_2)).unwrap();
        let out = apply_transform(&cloud, &t);
        let p = out.points()[0];
        assert!((p.x - 0.0).abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12 && p.z.abs() < 1e-12);
        assert_eq!(p.intensity, 0.3);
        assert_eq!(p.ring, 2);
        assert_eq!(out.frame_id, "m");
        assert_eq!(out.timestamp_ns, 5);
    }

    #[test]
    fn identity_leaves_cloud_unchanged() {
        let pts = (0..20)
            .map(|i| Point::new(i as f64 * 0.1, -(i as f64), 0.5, 0.1, i % 3))
            .collect();
        let cloud = PointCloud::new(pts, 3, "s", 0).unwrap();
        assert_eq!(apply_transform(&cloud, &RigidTransform::identity()), cloud);
    }

    #[test]
    fn inverse_of_simple_transforms() {
        assert_eq!(invert_transform(&RigidTransform::identity()), RigidTransform::identity());
        let t = RigidTransform::from_translation(Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(*t.inverse().translation(), Vector3::new(-1.0, -2.0, -3.0));
    }

    #[test]
    fn cloud_validation() {
        let bad_ring = vec![Point::new(0.0, 0.0, 0.0, 0.0, 16)];
        assert!(matches!(
            PointCloud::new(bad_ring, 16, "x", 0),
            Err(GeometryError::RingIndexOutOfRange { .. })
        ));
        let nan = vec![Point::new(f64::NAN, 0.0, 0.0, 0.0, 0)];
        assert!(matches!(
            PointCloud::new(nan, 16, "x", 0),
            Err(GeometryError::NonFiniteCoordinate { index: 0 })
        ));
        assert!(PointCloud::new(vec![], 0, "x", 0).is_err());
    }

    #[test]
    fn homogeneous_round_trip_is_bit_exact() {
        let r = build_rotation_matrix(&EulerAngles::new(0.3, -0.2, 2.0).unwrap());
        let t = compose_transform(r, Vector3::new(0.1, -7.0, 3.3)).unwrap();
        let back = RigidTransform::from_homogeneous(&t.homogeneous()).unwrap();
        assert_eq!(back, t);
        let mut bad = t.homogeneous();
        bad[(3, 0)] = 0.5;
        assert_eq!(
            RigidTransform::from_homogeneous(&bad),
            Err(GeometryError::BadHomogeneousRow)
        );
    }

    fn angle() -> impl Strategy<Value = f64> {
        -PI..PI
    }

    fn transform() -> impl Strategy<Value = RigidTransform> {
        (angle(), angle(), angle(), -10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(
            |(r, p, y, tx, ty, tz)| {
                let rot = build_rotation_matrix(&EulerAngles::new(r, p, y).unwrap());
                compose_transform(rot, Vector3::new(tx, ty, tz)).unwrap()
            },
        )
    }

    fn cloud(n: usize) -> impl Strategy<Value = PointCloud> {
        proptest::collection::vec(
            (-20.0..20.0f64, -20.0..20.0f64, -5.0..5.0f64, 0u32..16),
            n,
        )
        .prop_map(|v| {
            let pts = v
                .into_iter()
                .map(|(x, y, z, r)| Point::new(x, y, z, 0.5, r))
                .collect();
            PointCloud::new(pts, 16, "p", 0).unwrap()
        })
    }

    proptest! {
        #[test]
        fn rotation_matrix_is_proper(r in angle(), p in angle(), y in angle()) {
            let m = build_rotation_matrix(&EulerAngles::new(r, p, y).unwrap());
            prop_assert!(orthonormality_error(&m) < 1e-9);
        }

        #[test]
        fn euler_round_trip(r in -3.0..3.0f64, p in -1.5..1.5f64, y in -3.0..3.0f64) {
            let a = EulerAngles::new(r, p, y).unwrap();
            let back = euler_from_rotation(&build_rotation_matrix(&a));
            let m1 = build_rotation_matrix(&a);
            let m2 = build_rotation_matrix(&back);
            prop_assert!(max_abs_diff(&m1, &m2) < 1e-9);
        }

        #[test]
        fn rigid_motion_preserves_distances(c in cloud(100), t in transform()) {
            let out = apply_transform(&c, &t);
            for i in 0..c.len() {
                for j in (i + 1)..c.len() {
                    let before = c.points()[i].distance(&c.points()[j]);
                    let after = out.points()[i].distance(&out.points()[j]);
                    prop_assert!((before - after).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn inverse_round_trips(c in cloud(30), t in transform()) {
            let back = apply_transform(&apply_transform(&c, &t), &invert_transform(&t));
            for (a, b) in c.points().iter().zip(back.points()) {
                prop_assert!((a.position() - b.position()).amax() < 1e-9);
                prop_assert_eq!(a.ring, b.ring);
            }
        }

        #[test]
        fn application_is_associative_with_composition(
            c in cloud(30), t1 in transform(), t2 in transform()
        ) {
            let stepwise = apply_transform(&apply_transform(&c, &t1), &t2);
            let composed = apply_transform(&c, &t1.then(&t2));
            for (a, b) in stepwise.points().iter().zip(composed.points()) {
                prop_assert!((a.position() - b.position()).amax() < 1e-9);
            }
        }
    }
}
