//! Per-axis translation from selected planar point pairs.
//!
//! A selected point is widened to a five-point neighbourhood, the two
//! neighbourhoods are aligned with a small point-to-point ICP, and only the
//! translation component along the queried axis is kept.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorName;
use crate::geometry::{compose_transform, Axis, Point, PointCloud, RigidTransform};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TranslationError {
    #[error("point {index} lies on edge ring {ring}; rings above and below are required")]
    EdgeRing { index: usize, ring: u32 },
    #[error("ring {ring} has too few points for a neighbourhood")]
    SparseRing { ring: u32 },
    #[error("index {index} is outside a cloud of {size} points")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("source points are collinear; rotation is underdetermined")]
    DegenerateConfiguration,
    #[error("ICP did not converge within {} iterations (rms {:.3e} m)", .0.iterations, .0.final_rms)]
    NoConvergence(Box<IcpOutcome>),
    #[error("invalid ICP parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("axis {0} appears more than once")]
    DuplicateAxis(Axis),
    #[error("expected one estimate per axis, got {0}")]
    MissingAxis(usize),
}

impl ErrorName for TranslationError {
    fn name(&self) -> &'static str {
        match self {
            Self::EdgeRing { .. } => "EdgeRing",
            Self::SparseRing { .. } => "SparseRing",
            Self::IndexOutOfRange { .. } => "IndexOutOfRange",
            Self::TooFewPoints(_) => "TooFewPoints",
            Self::DegenerateConfiguration => "DegenerateConfiguration",
            Self::NoConvergence(_) => "NoConvergence",
            Self::InvalidParameter(_) => "InvalidParameter",
            Self::DuplicateAxis(_) => "DuplicateAxis",
            Self::MissingAxis(_) => "MissingAxis",
        }
    }
}

/// Selected point plus its four neighbours, in the order
/// `[selected, previous, next, below, above]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub indices: [usize; 5],
    pub points: [Point; 5],
}

impl NeighborSet {
    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(Point::position).collect()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.points.iter().map(Point::position).sum::<Vector3<f64>>() / 5.0
    }
}

fn nearest_on_ring(cloud: &PointCloud, ring: u32, target: &Point) -> Option<usize> {
    cloud
        .ring_indices(ring)
        .into_iter()
        .min_by(|&a, &b| {
            let da = cloud.points()[a].distance(target);
            let db = cloud.points()[b].distance(target);
            da.total_cmp(&db)
        })
}

/// Builds the five-point neighbourhood of `point_index`.
///
/// Same-ring neighbours are the adjacent entries in azimuth order (wrapping
/// around the revolution); the other two are the Euclidean-nearest points
/// of the rings directly below and above.
pub fn filter_neighbors(cloud: &PointCloud, point_index: usize) -> Result<NeighborSet, TranslationError> {
    let selected = *cloud.get(point_index).ok_or(TranslationError::IndexOutOfRange {
        index: point_index,
        size: cloud.len(),
    })?;
    let ring = selected.ring;
    if ring == 0 || ring + 1 >= cloud.ring_count() {
        return Err(TranslationError::EdgeRing {
            index: point_index,
            ring,
        });
    }
    let same = cloud.ring_indices(ring);
    if same.len() < 3 {
        return Err(TranslationError::SparseRing { ring });
    }
    let pos = same
        .iter()
        .position(|&i| i == point_index)
        .expect("selected point is on its own ring");
    let prev = same[(pos + same.len() - 1) % same.len()];
    let next = same[(pos + 1) % same.len()];
    let below = nearest_on_ring(cloud, ring - 1, &selected)
        .ok_or(TranslationError::SparseRing { ring: ring - 1 })?;
    let above = nearest_on_ring(cloud, ring + 1, &selected)
        .ok_or(TranslationError::SparseRing { ring: ring + 1 })?;
    let indices = [point_index, prev, next, below, above];
    Ok(NeighborSet {
        indices,
        points: indices.map(|i| cloud.points()[i]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the RMS error changes by less than this (m).
    pub convergence_tol: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpOutcome {
    pub transform: RigidTransform,
    pub final_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

fn is_collinear(points: &[Vector3<f64>]) -> bool {
    let c = centroid(points);
    let cov = points
        .iter()
        .fold(Matrix3::zeros(), |acc, p| acc + (p - c) * (p - c).transpose());
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[1] <= 1e-12 * ev[0].max(1e-300)
}

/// Closed-form rigid motion minimising `Σ |R·src + t − dst|²`.
pub fn kabsch(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> RigidTransform {
    let cs = centroid(src);
    let cd = centroid(dst);
    let h = src
        .iter()
        .zip(dst)
        .fold(Matrix3::zeros(), |acc, (s, d)| acc + (s - cs) * (d - cd).transpose());
    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return RigidTransform::from_translation(cd - cs),
    };
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[1] <= 1e-12 * sv[0].max(1e-300) {
        return RigidTransform::from_translation(cd - cs);
    }
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let t = cd - r * cs;
    compose_transform(r, t).unwrap_or_else(|_| RigidTransform::from_translation(cd - cs))
}

fn nearest(target: &[Vector3<f64>], p: &Vector3<f64>) -> Vector3<f64> {
    *target
        .iter()
        .min_by(|a, b| (*a - p).norm_squared().total_cmp(&(*b - p).norm_squared()))
        .expect("target is non-empty")
}

/// Point-to-point ICP from `source` onto `target`, starting from centroid
/// alignment. On non-convergence the best transform seen is carried inside
/// the error.
pub fn icp_rigid(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    params: &IcpParams,
) -> Result<IcpOutcome, TranslationError> {
    if source.len() < 3 {
        return Err(TranslationError::TooFewPoints(source.len()));
    }
    if target.len() < 3 {
        return Err(TranslationError::TooFewPoints(target.len()));
    }
    if params.max_iterations == 0 {
        return Err(TranslationError::InvalidParameter("max_iterations must be positive"));
    }
    if !(params.convergence_tol >= 0.0) {
        return Err(TranslationError::InvalidParameter("convergence_tol must be non-negative"));
    }
    if is_collinear(source) {
        return Err(TranslationError::DegenerateConfiguration);
    }
    let mut current = RigidTransform::from_translation(centroid(target) - centroid(source));
    let mut best = IcpOutcome {
        transform: current,
        final_rms: f64::INFINITY,
        iterations: 0,
        converged: false,
    };
    let mut previous_rms: Option<f64> = None;
    for iteration in 1..=params.max_iterations {
        let matches: Vec<Vector3<f64>> = source
            .iter()
            .map(|s| nearest(target, &current.apply_vector(s)))
            .collect();
        let rms = (source
            .iter()
            .zip(&matches)
            .map(|(s, m)| (current.apply_vector(s) - m).norm_squared())
            .sum::<f64>()
            / source.len() as f64)
            .sqrt();
        if rms < best.final_rms {
            best = IcpOutcome {
                transform: current,
                final_rms: rms,
                iterations: iteration,
                converged: false,
            };
        }
        if previous_rms.is_some_and(|p| (p - rms).abs() < params.convergence_tol) || rms == 0.0 {
            return Ok(IcpOutcome {
                transform: current,
                final_rms: rms,
                iterations: iteration,
                converged: true,
            });
        }
        previous_rms = Some(rms);
        current = kabsch(source, &matches);
    }
    best.iterations = params.max_iterations;
    Err(TranslationError::NoConvergence(Box::new(best)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisOffsetEstimate {
    pub axis: Axis,
    pub offset: f64,
    pub icp_iterations_used: usize,
    pub final_rms: f64,
}

/// ICP of the two neighbourhoods, both expressed relative to the centroid
/// of `m_set`; returns the `axis` component of the translation that carries
/// `m_set` onto `s_set`.
///
/// Anchoring at the `m_set` centroid keeps a spurious ICP rotation from
/// leaking a lever-arm term into the offset.
pub fn estimate_axis_offset(
    m_set: &NeighborSet,
    s_set: &NeighborSet,
    axis: Axis,
    params: &IcpParams,
) -> Result<AxisOffsetEstimate, TranslationError> {
    let anchor = m_set.centroid();
    let src: Vec<_> = m_set.positions().iter().map(|p| p - anchor).collect();
    let dst: Vec<_> = s_set.positions().iter().map(|p| p - anchor).collect();
    let outcome = match icp_rigid(&src, &dst, params) {
        Ok(o) => o,
        Err(TranslationError::NoConvergence(best)) => {
            log::warn!(
                "ICP on axis {axis} did not converge; using best rms {:.3e} m",
                best.final_rms
            );
            *best
        }
        Err(e) => return Err(e),
    };
    Ok(AxisOffsetEstimate {
        axis,
        offset: outcome.transform.translation()[axis.index()],
        icp_iterations_used: outcome.iterations,
        final_rms: outcome.final_rms,
    })
}

/// Collects one estimate per axis, in any order, into a translation vector.
pub fn assemble_translation(estimates: &[AxisOffsetEstimate]) -> Result<Vector3<f64>, TranslationError> {
    let mut t = Vector3::zeros();
    let mut seen = [false; 3];
    for e in estimates {
        let i = e.axis.index();
        if seen[i] {
            return Err(TranslationError::DuplicateAxis(e.axis));
        }
        seen[i] = true;
        t[i] = e.offset;
    }
    if estimates.len() != 3 {
        return Err(TranslationError::MissingAxis(estimates.len()));
    }
    Ok(t)
}
