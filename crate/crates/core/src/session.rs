//! On-disk registration session.
//!
//! ```text
//! <dir>/session.json             {"reference": "<id>", "config": {...}}
//! <dir>/clouds/<id>.cloud        primary frame of each sensor
//! <dir>/frames/<id>/<k>.cloud    optional extra frames for yaw averaging
//! <dir>/imu/<id>.imu             stationary accelerometer log
//! <dir>/calib/<id>/<axis>_<min|max>.imu  raw calibration windows
//! <dir>/calibration/<id>.cal     calibration profile (identity if absent)
//! <dir>/selections.sel           human selections
//! <dir>/transforms/<id>.tf       registration output
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cloud_io::{self, CloudIoError, SelectionSet};
use crate::error::Result;
use crate::geometry::{Axis, PointCloud, RigidTransform};
use crate::imu::{build_axis_calibration, CalibrationProfile};
use crate::merge::{CloudRecord, RegistrationConfig, RegistrationSession};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub reference: String,
    #[serde(default)]
    pub config: RegistrationConfig,
}

/// Paths inside a session directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionDir {
    root: PathBuf,
}

impl SessionDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("session.json")
    }

    pub fn cloud_path(&self, id: &str) -> PathBuf {
        self.root.join("clouds").join(format!("{id}.cloud"))
    }

    pub fn frame_path(&self, id: &str, k: usize) -> PathBuf {
        self.root.join("frames").join(id).join(format!("{k}.cloud"))
    }

    pub fn imu_path(&self, id: &str) -> PathBuf {
        self.root.join("imu").join(format!("{id}.imu"))
    }

    pub fn calibration_path(&self, id: &str) -> PathBuf {
        self.root.join("calibration").join(format!("{id}.cal"))
    }

    /// Raw calibration window, e.g. `calib/<id>/x_max.imu`.
    pub fn calibration_window_path(&self, id: &str, window: &str) -> PathBuf {
        self.root.join("calib").join(id).join(format!("{window}.imu"))
    }

    pub fn selection_path(&self) -> PathBuf {
        self.root.join("selections.sel")
    }

    pub fn transform_path(&self, id: &str) -> PathBuf {
        self.root.join("transforms").join(format!("{id}.tf"))
    }

    pub fn manifest(&self) -> Result<SessionManifest> {
        let path = self.manifest_path();
        let text = fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            CloudIoError::MalformedHeader(format!("{}: {e}", path.display())).into()
        })
    }

    pub fn write_manifest(&self, manifest: &SessionManifest) -> Result<()> {
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        Ok(cloud_io::write_atomic(&self.manifest_path(), &(text + "\n"))?)
    }

    /// Ids of every `clouds/*.cloud`, sorted.
    pub fn cloud_ids(&self) -> Result<Vec<String>> {
        let dir = self.root.join("clouds");
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_error(&dir, e)),
        };
        let mut ids: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".cloud").map(str::to_owned)
            })
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn read_cloud(&self, id: &str) -> Result<PointCloud> {
        Ok(cloud_io::read_cloud(&self.cloud_path(id))?)
    }

    /// Primary cloud followed by `frames/<id>/1.cloud`, `2.cloud`, … while
    /// they exist.
    pub fn read_frames(&self, id: &str) -> Result<Vec<PointCloud>> {
        let mut frames = vec![self.read_cloud(id)?];
        for k in 1.. {
            let path = self.frame_path(id, k);
            if !path.exists() {
                break;
            }
            frames.push(cloud_io::read_cloud(&path)?);
        }
        Ok(frames)
    }

    pub fn read_profile(&self, id: &str) -> Result<CalibrationProfile> {
        let path = self.calibration_path(id);
        if !path.exists() {
            log::warn!("no calibration profile for {id}; using raw readings");
            return Ok(CalibrationProfile::identity());
        }
        Ok(cloud_io::read_profile(&path)?)
    }

    pub fn read_selections(&self) -> Result<SelectionSet> {
        let path = self.selection_path();
        if !path.exists() {
            return Ok(SelectionSet::default());
        }
        Ok(cloud_io::read_selection(&path)?)
    }

    /// Loads everything and validates selection indices against the clouds.
    pub fn load(&self) -> Result<RegistrationSession> {
        let manifest = self.manifest()?;
        let mut clouds = BTreeMap::new();
        for id in self.cloud_ids()? {
            let imu_path = self.imu_path(&id);
            let imu = if imu_path.exists() {
                cloud_io::read_imu_log(&imu_path)?
            } else {
                Vec::new()
            };
            clouds.insert(
                id.clone(),
                CloudRecord {
                    frames: self.read_frames(&id)?,
                    imu,
                    profile: self.read_profile(&id)?,
                },
            );
        }
        if !clouds.contains_key(&manifest.reference) {
            return Err(CloudIoError::UnknownCloud(manifest.reference).into());
        }
        let selections = self.read_selections()?;
        selections.validate(|id| clouds.get(id).and_then(|c| c.primary()).map(PointCloud::len))?;
        Ok(RegistrationSession {
            reference_id: manifest.reference,
            clouds,
            selections,
            config: manifest.config,
        })
    }

    /// Builds and writes `calibration/<id>.cal` for every cloud from its six
    /// windows under `calib/<id>/`.
    pub fn calibrate(&self) -> Result<Vec<String>> {
        let ids = self.cloud_ids()?;
        for id in &ids {
            let profile = profile_from_windows(&self.root.join("calib").join(id))?;
            cloud_io::write_profile(&profile, &self.calibration_path(id))?;
        }
        Ok(ids)
    }

    pub fn write_transform(&self, id: &str, t: &RigidTransform) -> Result<()> {
        Ok(cloud_io::write_transform(t, &self.transform_path(id))?)
    }

    pub fn read_transform(&self, id: &str) -> Result<RigidTransform> {
        Ok(cloud_io::read_transform(&self.transform_path(id))?)
    }
}

/// Calibration profile from `x_min.imu`, `x_max.imu`, … `z_max.imu` in `dir`.
pub fn profile_from_windows(dir: &Path) -> Result<CalibrationProfile> {
    let mut cals = Vec::new();
    for axis in Axis::ALL {
        let lo = cloud_io::read_imu_log(&dir.join(format!("{axis}_min.imu")))?;
        let hi = cloud_io::read_imu_log(&dir.join(format!("{axis}_max.imu")))?;
        cals.push(build_axis_calibration(&lo, &hi, axis)?);
    }
    Ok(CalibrationProfile::new(&cals)?)
}

fn io_error(path: &Path, e: std::io::Error) -> crate::error::ElidError {
    match e.kind() {
        std::io::ErrorKind::NotFound => CloudIoError::FileNotFound(path.display().to_string()),
        _ => CloudIoError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        },
    }
    .into()
}
