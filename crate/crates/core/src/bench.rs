//! Timing of transform application versus concatenation.
//!
//! For each sensor count `n` the harness renders `n` clouds of a shared
//! room, then repeatedly times (a) moving the `n − 1` non-reference clouds
//! into the reference frame and (b) concatenating all `n` into a map, until
//! the per-count time budget is spent.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorName;
use crate::geometry::{apply_transform, PointCloud, RigidTransform};
use crate::merge::concatenate;
use crate::par;
use crate::simulator::{ground_truth_transform, render_frame, BoxObstacle, Room, SceneSpec, SensorPose};

/// One frame period at 20 Hz.
pub const FRAME_BUDGET_MS: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("invalid benchmark parameter: {0}")]
    InvalidParameter(String),
}

impl ErrorName for BenchError {
    fn name(&self) -> &'static str {
        match self {
            Self::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub lidar_counts: Vec<usize>,
    pub points_per_cloud: usize,
    /// Wall-clock budget per sensor count.
    pub duration: Duration,
    pub seed: u64,
    /// Worker threads; 1 is the baseline.
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            lidar_counts: vec![1, 2, 3, 4, 5],
            points_per_cloud: 16 * 1024,
            duration: Duration::from_secs(30),
            seed: 7,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean_ms: f64,
    pub std_ms: f64,
}

impl Stat {
    fn of(samples: &[f64]) -> Self {
        let n = samples.len().max(1) as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean_ms: mean,
            std_ms: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_lidars: usize,
    pub transform: Stat,
    pub concat: Stat,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub points_per_cloud: usize,
    pub mode: String,
    pub threads: usize,
    pub host: String,
}

impl BenchReport {
    pub fn lidar_counts(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.n_lidars).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_lidars,transform_ms_mean,transform_ms_std,concat_ms_mean,concat_ms_std\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                r.n_lidars, r.transform.mean_ms, r.transform.std_ms, r.concat.mean_ms, r.concat.std_ms
            );
        }
        out
    }

    /// Least-squares slopes (ms per sensor) of the transform and
    /// concatenation means against `n`.
    pub fn slopes(&self) -> (f64, f64) {
        let xs: Vec<f64> = self.rows.iter().map(|r| r.n_lidars as f64).collect();
        let t: Vec<f64> = self.rows.iter().map(|r| r.transform.mean_ms).collect();
        let c: Vec<f64> = self.rows.iter().map(|r| r.concat.mean_ms).collect();
        (slope(&xs, &t), slope(&xs, &c))
    }

    pub fn concat_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].concat.mean_ms >= w[0].concat.mean_ms)
    }

    pub fn summary(&self) -> String {
        let (ts, cs) = self.slopes();
        let mut s = format!(
            "{} points/cloud, {} mode, {} thread(s), host {}\n",
            self.points_per_cloud, self.mode, self.threads, self.host
        );
        for r in &self.rows {
            let total = r.transform.mean_ms + r.concat.mean_ms;
            let _ = writeln!(
                s,
                "n={}: transform {:.3} ms, concat {:.3} ms, total {:.3} ms ({} the {FRAME_BUDGET_MS} ms frame budget, {} samples)",
                r.n_lidars,
                r.transform.mean_ms,
                r.concat.mean_ms,
                total,
                if total <= FRAME_BUDGET_MS { "within" } else { "over" },
                r.samples
            );
        }
        let _ = writeln!(s, "slope: transform {ts:.4} ms/sensor, concat {cs:.4} ms/sensor");
        s
    }
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Room with `n` sensors spread along its long axis, each rendering
/// `points_per_cloud` beams (16 rings when there are enough points).
pub fn bench_scene(n: usize, points_per_cloud: usize) -> SceneSpec {
    let rings = points_per_cloud.clamp(1, 16) as u32;
    let azimuth = points_per_cloud.div_ceil(rings as usize) as u32;
    let sensors = (0..n)
        .map(|i| {
            let x = 1.0 + 8.0 * (i as f64 + 0.5) / n as f64;
            let mut s = SensorPose::new(format!("l{i}"), [x, 2.0 + 0.2 * i as f64, 2.5], [0.0, 0.0, 15.0 * i as f64]);
            s.ring_count = rings;
            s.azimuth_steps = azimuth;
            s
        })
        .collect();
    SceneSpec {
        room: Room {
            width: 6.0,
            length: 10.0,
            height: 3.0,
        },
        obstacles: vec![BoxObstacle {
            min: [4.6, 4.5, 0.0],
            max: [5.4, 6.0, 1.8],
        }],
        sensors,
    }
}

fn synthesize(n: usize, points_per_cloud: usize, seed: u64) -> (Vec<PointCloud>, Vec<RigidTransform>, PointCloud) {
    let scene = bench_scene(n, points_per_cloud);
    let mut clouds: Vec<PointCloud> = (0..n)
        .map(|i| {
            let c = render_frame(&scene, i, 0.01, seed.wrapping_add(i as u64)).expect("bench scene is valid");
            let pts: Vec<_> = c.points().iter().take(points_per_cloud).copied().collect();
            PointCloud::new(pts, c.ring_count(), c.frame_id.clone(), 0).expect("subset of a valid cloud")
        })
        .collect();
    let transforms = (1..n)
        .map(|i| ground_truth_transform(&scene, 0, i).expect("bench scene is valid"))
        .collect();
    let reference = clouds.remove(0);
    (clouds, transforms, reference)
}

fn millis(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

pub fn run_bench(config: &BenchConfig) -> Result<BenchReport, BenchError> {
    if config.lidar_counts.is_empty() {
        return Err(BenchError::InvalidParameter("lidar_counts is empty".into()));
    }
    if config.lidar_counts.contains(&0) {
        return Err(BenchError::InvalidParameter("lidar counts must be positive".into()));
    }
    if config.points_per_cloud == 0 {
        return Err(BenchError::InvalidParameter("points_per_cloud must be positive".into()));
    }
    if config.threads == 0 {
        return Err(BenchError::InvalidParameter("threads must be positive".into()));
    }
    let (rows, threads) = par::with_degree(config.threads, || {
        let rows = config
            .lidar_counts
            .iter()
            .map(|&n| {
                let (clouds, transforms, reference) = synthesize(n, config.points_per_cloud, config.seed);
                let mut t_samples = Vec::new();
                let mut c_samples = Vec::new();
                let started = Instant::now();
                while t_samples.is_empty() || started.elapsed() < config.duration {
                    let t0 = Instant::now();
                    let moved: Vec<PointCloud> = clouds
                        .iter()
                        .zip(&transforms)
                        .map(|(c, t)| apply_transform(c, t))
                        .collect();
                    let t1 = Instant::now();
                    let map = concatenate(&moved, &reference);
                    let t2 = Instant::now();
                    std::hint::black_box(&map);
                    t_samples.push(millis(t1 - t0));
                    c_samples.push(millis(t2 - t1));
                }
                BenchRow {
                    n_lidars: n,
                    transform: Stat::of(&t_samples),
                    concat: Stat::of(&c_samples),
                    samples: t_samples.len(),
                }
            })
            .collect();
        (rows, par::degree())
    });
    Ok(BenchReport {
        rows,
        points_per_cloud: config.points_per_cloud,
        mode: par::MODE.to_owned(),
        threads,
        host: host_descriptor(),
    })
}

pub fn host_descriptor() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{}-{} ({cpus} cpus)", std::env::consts::ARCH, std::env::consts::OS)
}
