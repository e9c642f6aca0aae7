//! Text file formats.
//!
//! Every format is line oriented and space separated. Blank lines and lines
//! starting with `#` are ignored by every reader. Positions and accelerations
//! are written with 6 decimals; transforms use the shortest representation
//! that round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::Matrix4;
use thiserror::Error;

use crate::error::ErrorName;
use crate::geometry::{Axis, Point, PointCloud, RigidTransform};
use crate::imu::{AxisCalibration, CalibrationProfile, ImuSample};
use crate::merge::ElidMap;
use crate::planner::NavCommand;

pub const CLOUD_MAGIC: &str = "ELIDPC1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CloudIoError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: ring {ring} is not below ring count {ring_count}")]
    RingIndexOutOfRange { line: usize, ring: u32, ring_count: u32 },
    #[error("IMU log has no samples")]
    EmptyLog,
    #[error("selection refers to point {index} of {cloud_id}, which has {size} points")]
    DanglingIndex { cloud_id: String, index: usize, size: usize },
    #[error("selection refers to unknown cloud {0}")]
    UnknownCloud(String),
}

impl ErrorName for CloudIoError {
    fn name(&self) -> &'static str {
        match self {
            Self::FileNotFound(_) => "FileNotFound",
            Self::Io { .. } => "IoError",
            Self::NotUtf8 => "NotUtf8",
            Self::MalformedHeader(_) => "MalformedHeader",
            Self::MalformedRow { .. } => "MalformedRow",
            Self::RingIndexOutOfRange { .. } => "RingIndexOutOfRange",
            Self::EmptyLog => "EmptyLog",
            Self::DanglingIndex { .. } => "DanglingIndex",
            Self::UnknownCloud(_) => "UnknownCloud",
        }
    }
}

type Result<T> = std::result::Result<T, CloudIoError>;

fn row_err(line: usize, reason: impl Into<String>) -> CloudIoError {
    CloudIoError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

/// Non-blank, non-comment lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            None
        } else {
            Some((i + 1, l.split_whitespace().collect()))
        }
    })
}

fn real(line: usize, field: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(row_err(line, format!("expected a finite number, got {field:?}"))),
    }
}

fn uint<T: std::str::FromStr>(line: usize, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| row_err(line, format!("expected a non-negative integer, got {field:?}")))
}

fn arity(line: usize, fields: &[&str], n: usize) -> Result<()> {
    if fields.len() != n {
        return Err(row_err(line, format!("expected {n} fields, got {}", fields.len())));
    }
    Ok(())
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace) && !s.starts_with('#')
}

pub fn decode(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|_| CloudIoError::NotUtf8)
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CloudIoError::FileNotFound(path.display().to_string()),
        _ => CloudIoError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        },
    })?;
    decode(&bytes).map(str::to_owned)
}

/// Writes through a sibling temporary file and renames it into place, so a
/// reader never observes a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io = |e: std::io::Error| CloudIoError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

struct Header {
    count: usize,
    ring_count: u32,
    frame_id: String,
    timestamp_ns: u64,
}

fn parse_header(fields: Option<&(usize, Vec<&str>)>) -> Result<Header> {
    let bad = |m: &str| CloudIoError::MalformedHeader(m.to_owned());
    let (_, f) = fields.ok_or_else(|| bad("missing header line"))?;
    if f.first() != Some(&CLOUD_MAGIC) {
        return Err(bad("magic must be ELIDPC1"));
    }
    if f.len() != 5 {
        return Err(bad("expected: ELIDPC1 <point_count> <ring_count> <frame_id> <timestamp_ns>"));
    }
    let count = f[1].parse().map_err(|_| bad("point_count is not an integer"))?;
    let ring_count: u32 = f[2].parse().map_err(|_| bad("ring_count is not an integer"))?;
    if ring_count == 0 {
        return Err(bad("ring_count must be positive"));
    }
    let timestamp_ns = f[4].parse().map_err(|_| bad("timestamp is not an integer"))?;
    Ok(Header {
        count,
        ring_count,
        frame_id: f[3].to_owned(),
        timestamp_ns,
    })
}

fn parse_point(line: usize, f: &[&str], ring_count: u32) -> Result<Point> {
    let ring: u32 = uint(line, f[4])?;
    if ring >= ring_count {
        return Err(CloudIoError::RingIndexOutOfRange {
            line,
            ring,
            ring_count,
        });
    }
    Ok(Point::new(
        real(line, f[0])?,
        real(line, f[1])?,
        real(line, f[2])?,
        real(line, f[3])?,
        ring,
    ))
}

fn parse_points(text: &str, extra: usize) -> Result<(Header, Vec<(Point, Vec<String>)>)> {
    let mut recs = records(text);
    let first = recs.next();
    let header = parse_header(first.as_ref())?;
    let mut rows = Vec::with_capacity(header.count.min(1 << 20));
    for (line, f) in recs {
        arity(line, &f, 5 + extra)?;
        let p = parse_point(line, &f, header.ring_count)?;
        rows.push((p, f[5..].iter().map(|s| s.to_string()).collect()));
    }
    if rows.len() != header.count {
        return Err(CloudIoError::MalformedHeader(format!(
            "header declares {} points, found {}",
            header.count,
            rows.len()
        )));
    }
    Ok((header, rows))
}

fn build_cloud(header: Header, points: Vec<Point>) -> Result<PointCloud> {
    PointCloud::new(points, header.ring_count, header.frame_id, header.timestamp_ns)
        .map_err(|e| CloudIoError::MalformedHeader(e.to_string()))
}

pub fn parse_cloud(text: &str) -> Result<PointCloud> {
    let (header, rows) = parse_points(text, 0)?;
    build_cloud(header, rows.into_iter().map(|(p, _)| p).collect())
}

fn format_header(out: &mut String, cloud: &PointCloud) -> Result<()> {
    if !is_token(&cloud.frame_id) {
        return Err(CloudIoError::MalformedHeader(format!(
            "frame id {:?} must be a single non-empty token",
            cloud.frame_id
        )));
    }
    let _ = writeln!(
        out,
        "{CLOUD_MAGIC} {} {} {} {}",
        cloud.len(),
        cloud.ring_count(),
        cloud.frame_id,
        cloud.timestamp_ns
    );
    Ok(())
}

fn format_point(out: &mut String, p: &Point) {
    let _ = write!(out, "{:.6} {:.6} {:.6} {:.6} {}", p.x, p.y, p.z, p.intensity, p.ring);
}

pub fn format_cloud(cloud: &PointCloud) -> Result<String> {
    let mut out = String::with_capacity(48 * (cloud.len() + 1));
    format_header(&mut out, cloud)?;
    for p in cloud.points() {
        format_point(&mut out, p);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    parse_cloud(&read_text(path)?)
}

pub fn write_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    write_atomic(path, &format_cloud(cloud)?)
}

/// Map files are cloud files with a trailing `src` column.
pub fn parse_map(text: &str) -> Result<ElidMap> {
    let (header, rows) = parse_points(text, 1)?;
    let (points, sources): (Vec<_>, Vec<_>) = rows
        .into_iter()
        .map(|(p, mut extra)| (p, extra.remove(0)))
        .unzip();
    let ts = header.timestamp_ns;
    Ok(ElidMap::from_parts(build_cloud(header, points)?, sources, ts))
}

pub fn format_map(map: &ElidMap) -> Result<String> {
    let cloud = map.cloud();
    let mut out = String::with_capacity(56 * (cloud.len() + 1));
    format_header(&mut out, cloud)?;
    for (p, src) in cloud.points().iter().zip(map.provenance()) {
        if !is_token(src) {
            return Err(CloudIoError::MalformedHeader(format!("source id {src:?} is not a token")));
        }
        format_point(&mut out, p);
        let _ = writeln!(out, " {src}");
    }
    Ok(out)
}

pub fn read_map(path: &Path) -> Result<ElidMap> {
    parse_map(&read_text(path)?)
}

pub fn write_map(map: &ElidMap, path: &Path) -> Result<()> {
    write_atomic(path, &format_map(map)?)
}

/// Rows `gx gy gz timestamp_ns`; timestamps must not decrease.
pub fn parse_imu_log(text: &str) -> Result<Vec<ImuSample>> {
    let mut out: Vec<ImuSample> = Vec::new();
    for (line, f) in records(text) {
        arity(line, &f, 4)?;
        let s = ImuSample::new(real(line, f[0])?, real(line, f[1])?, real(line, f[2])?, uint(line, f[3])?);
        if out.last().is_some_and(|prev| prev.timestamp_ns > s.timestamp_ns) {
            return Err(row_err(line, "timestamps must be non-decreasing"));
        }
        out.push(s);
    }
    if out.is_empty() {
        return Err(CloudIoError::EmptyLog);
    }
    Ok(out)
}

pub fn format_imu_log(samples: &[ImuSample]) -> String {
    let mut out = String::with_capacity(48 * samples.len());
    for s in samples {
        let _ = writeln!(out, "{:.6} {:.6} {:.6} {}", s.gx, s.gy, s.gz, s.timestamp_ns);
    }
    out
}

pub fn read_imu_log(path: &Path) -> Result<Vec<ImuSample>> {
    parse_imu_log(&read_text(path)?)
}

pub fn write_imu_log(samples: &[ImuSample], path: &Path) -> Result<()> {
    write_atomic(path, &format_imu_log(samples))
}

/// Rows `axis g_min g_max`, one per axis.
pub fn parse_profile(text: &str) -> Result<CalibrationProfile> {
    let mut cals = Vec::new();
    let mut last_line = 0;
    for (line, f) in records(text) {
        arity(line, &f, 3)?;
        let axis: Axis = f[0]
            .parse()
            .map_err(|_| row_err(line, format!("unknown axis {:?}", f[0])))?;
        let cal = AxisCalibration::new(axis, real(line, f[1])?, real(line, f[2])?)
            .map_err(|e| row_err(line, e.to_string()))?;
        cals.push(cal);
        last_line = line;
    }
    CalibrationProfile::new(&cals).map_err(|e| row_err(last_line, e.to_string()))
}

pub fn format_profile(profile: &CalibrationProfile) -> String {
    profile
        .axes()
        .iter()
        .map(|c| format!("{} {} {}\n", c.axis(), c.g_min(), c.g_max()))
        .collect()
}

pub fn read_profile(path: &Path) -> Result<CalibrationProfile> {
    parse_profile(&read_text(path)?)
}

pub fn write_profile(profile: &CalibrationProfile, path: &Path) -> Result<()> {
    write_atomic(path, &format_profile(profile))
}

/// 4×4 homogeneous matrix, row-major, one row per line.
pub fn parse_transform(text: &str) -> Result<RigidTransform> {
    let rows: Vec<_> = records(text).collect();
    if rows.len() != 4 {
        return Err(row_err(rows.last().map_or(0, |r| r.0), format!("expected 4 rows, got {}", rows.len())));
    }
    let mut m = Matrix4::zeros();
    for (r, (line, f)) in rows.iter().enumerate() {
        arity(*line, f, 4)?;
        for c in 0..4 {
            m[(r, c)] = real(*line, f[c])?;
        }
    }
    RigidTransform::from_homogeneous(&m).map_err(|e| row_err(rows[3].0, e.to_string()))
}

pub fn format_transform(t: &RigidTransform) -> String {
    let m = t.homogeneous();
    (0..4)
        .map(|r| format!("{} {} {} {}\n", m[(r, 0)], m[(r, 1)], m[(r, 2)], m[(r, 3)]))
        .collect()
}

pub fn read_transform(path: &Path) -> Result<RigidTransform> {
    parse_transform(&read_text(path)?)
}

pub fn write_transform(t: &RigidTransform, path: &Path) -> Result<()> {
    write_atomic(path, &format_transform(t))
}

/// Rows `TURN <degrees>` / `MOVE <seconds>`.
pub fn parse_commands(text: &str) -> Result<Vec<NavCommand>> {
    let mut out = Vec::new();
    for (line, f) in records(text) {
        arity(line, &f, 2)?;
        let v = real(line, f[1])?;
        let cmd = match f[0] {
            "TURN" if v > -180.0 && v <= 180.0 => NavCommand::Turn(v),
            "MOVE" if v > 0.0 => NavCommand::Move(v),
            "TURN" | "MOVE" => return Err(row_err(line, format!("{} value {v} is out of range", f[0]))),
            other => return Err(row_err(line, format!("unknown command {other:?}"))),
        };
        out.push(cmd);
    }
    Ok(out)
}

pub fn format_commands(commands: &[NavCommand]) -> String {
    commands
        .iter()
        .map(|c| match c {
            NavCommand::Turn(d) => format!("TURN {d:.6}\n"),
            NavCommand::Move(s) => format!("MOVE {s:.6}\n"),
        })
        .collect()
}

pub fn read_commands(path: &Path) -> Result<Vec<NavCommand>> {
    parse_commands(&read_text(path)?)
}

pub fn write_commands(commands: &[NavCommand], path: &Path) -> Result<()> {
    write_atomic(path, &format_commands(commands))
}

/// One human selection.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Selection {
    /// Consecutive middle-ring points used for yaw.
    Segment { cloud_id: String, indices: Vec<usize> },
    /// A point of `cloud_id` and a point of the reference cloud on the same
    /// planar surface, used for the offset along `axis`.
    #[serde(rename = "pointpair")]
    PointPair {
        axis: Axis,
        cloud_id: String,
        index: usize,
        ref_cloud_id: String,
        ref_index: usize,
    },
}

impl Selection {
    /// Every `(cloud_id, index)` the record refers to.
    pub fn references(&self) -> Vec<(&str, usize)> {
        match self {
            Selection::Segment { cloud_id, indices } => indices.iter().map(|&i| (cloud_id.as_str(), i)).collect(),
            Selection::PointPair {
                cloud_id,
                index,
                ref_cloud_id,
                ref_index,
                ..
            } => vec![(cloud_id.as_str(), *index), (ref_cloud_id.as_str(), *ref_index)],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SelectionSet {
    pub records: Vec<Selection>,
}

impl SelectionSet {
    /// Checks every index against `cloud_size(id)`.
    pub fn validate(&self, cloud_size: impl Fn(&str) -> Option<usize>) -> Result<()> {
        for rec in &self.records {
            for (id, index) in rec.references() {
                let size = cloud_size(id).ok_or_else(|| CloudIoError::UnknownCloud(id.to_owned()))?;
                if index >= size {
                    return Err(CloudIoError::DanglingIndex {
                        cloud_id: id.to_owned(),
                        index,
                        size,
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn parse_selection(text: &str) -> Result<SelectionSet> {
    let mut records_out = Vec::new();
    for (line, f) in records(text) {
        let id = |s: &str| -> Result<String> {
            if is_token(s) {
                Ok(s.to_owned())
            } else {
                Err(row_err(line, "bad cloud id"))
            }
        };
        let rec = match f[0] {
            "SEGMENT" => {
                if f.len() < 5 {
                    return Err(row_err(line, "SEGMENT needs a cloud id and at least 3 indices"));
                }
                Selection::Segment {
                    cloud_id: id(f[1])?,
                    indices: f[2..].iter().map(|s| uint(line, s)).collect::<Result<_>>()?,
                }
            }
            "POINTPAIR" => {
                arity(line, &f, 6)?;
                Selection::PointPair {
                    axis: f[1]
                        .parse()
                        .map_err(|_| row_err(line, format!("unknown axis {:?}", f[1])))?,
                    cloud_id: id(f[2])?,
                    index: uint(line, f[3])?,
                    ref_cloud_id: id(f[4])?,
                    ref_index: uint(line, f[5])?,
                }
            }
            other => return Err(row_err(line, format!("unknown record {other:?}"))),
        };
        records_out.push(rec);
    }
    Ok(SelectionSet { records: records_out })
}

pub fn format_selection(set: &SelectionSet) -> Result<String> {
    let mut out = String::new();
    for rec in &set.records {
        for (id, _) in rec.references() {
            if !is_token(id) {
                return Err(CloudIoError::UnknownCloud(id.to_owned()));
            }
        }
        match rec {
            Selection::Segment { cloud_id, indices } => {
                if indices.len() < 3 {
                    return Err(row_err(0, "SEGMENT needs at least 3 indices"));
                }
                out.push_str("SEGMENT ");
                out.push_str(cloud_id);
                for i in indices {
                    let _ = write!(out, " {i}");
                }
                out.push('\n');
            }
            Selection::PointPair {
                axis,
                cloud_id,
                index,
                ref_cloud_id,
                ref_index,
            } => {
                let _ = writeln!(out, "POINTPAIR {axis} {cloud_id} {index} {ref_cloud_id} {ref_index}");
            }
        }
    }
    Ok(out)
}

pub fn read_selection(path: &Path) -> Result<SelectionSet> {
    parse_selection(&read_text(path)?)
}

pub fn write_selection(set: &SelectionSet, path: &Path) -> Result<()> {
    write_atomic(path, &format_selection(set)?)
}
