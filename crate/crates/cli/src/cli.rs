//! `elid` subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use elid_core::bench::{run_bench, BenchConfig};
use elid_core::cloud_io::{self, SelectionSet};
use elid_core::config::ToolConfig;
use elid_core::merge::{build_map, estimate_all, measure_distance, ElidMap};
use elid_core::planner::{path_to_commands, shortest_path, voxelize, Connectivity, NavPath, VoxelGrid};
use elid_core::scenario::{canonical_scene, oracle_selections, write_session, SimulationSettings};
use elid_core::session::{profile_from_windows, SessionDir};
use elid_core::simulator::SceneSpec;
use elid_core::{ElidError, ErrorName};

/// Error printed as `error: <Name>: <message>`.
#[derive(Debug)]
pub struct CliError {
    pub name: &'static str,
    pub message: String,
}

impl<E: Into<ElidError>> From<E> for CliError {
    fn from(e: E) -> Self {
        let e = e.into();
        Self {
            name: e.name(),
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        name: "InvalidArgument",
        message: message.into(),
    }
}

fn io(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        name: if e.kind() == std::io::ErrorKind::NotFound { "FileNotFound" } else { "IoError" },
        message: format!("{}: {e}", path.display()),
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "elid", version, about = "Register fixed LiDARs into one map and plan robot paths on it")]
pub struct Cli {
    /// JSON file with RANSAC, ICP, voxel and planner settings.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct SessionArg {
    /// Session directory.
    #[arg(long, env = "ELID_SESSION_DIR", value_name = "DIR")]
    pub session: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ConnectivityArg {
    Planar4,
    Planar8,
    Spatial6,
    Spatial26,
}

impl From<ConnectivityArg> for Connectivity {
    fn from(c: ConnectivityArg) -> Self {
        match c {
            ConnectivityArg::Planar4 => Connectivity::Planar4,
            ConnectivityArg::Planar8 => Connectivity::Planar8,
            ConnectivityArg::Spatial6 => Connectivity::Spatial6,
            ConnectivityArg::Spatial26 => Connectivity::Spatial26,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene into a session directory (clouds, frames, IMU logs,
    /// calibration windows and ground-truth transforms).
    Simulate {
        #[command(flatten)]
        session: SessionArg,
        /// Scene JSON; the built-in 5.00 m × 3.12 m room if omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Range noise standard deviation in metres.
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        /// Frames per sensor.
        #[arg(long, default_value_t = 50)]
        frames: usize,
        /// Accelerometer noise standard deviation in m/s².
        #[arg(long, default_value_t = 0.05)]
        imu_noise: f64,
        /// Reference sensor id; the first sensor if omitted.
        #[arg(long)]
        reference: Option<String>,
        /// Also write the selections an operator would make (needs the
        /// built-in room layout).
        #[arg(long)]
        oracle_selections: bool,
    },
    /// Build calibration profiles from the six stationary IMU windows.
    Calibrate {
        /// Session directory: writes `calibration/<id>.cal` for every cloud.
        #[arg(long, env = "ELID_SESSION_DIR", conflicts_with = "windows")]
        session: Option<PathBuf>,
        /// Directory holding `x_min.imu` … `z_max.imu`; needs `--out`.
        #[arg(long, requires = "out")]
        windows: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate a transform for every non-reference cloud of a session.
    Register {
        #[command(flatten)]
        session: SessionArg,
    },
    /// Apply the session's transforms and concatenate all clouds into a map.
    Merge {
        #[command(flatten)]
        session: SessionArg,
        /// Map file; `<session>/map.map` if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distance between two map points, given as map indices or `cloud:index`.
    Measure {
        #[arg(long)]
        map: PathBuf,
        a: String,
        b: String,
    },
    /// Quantize a map into an inflated occupancy grid.
    Voxelize {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured voxel size (m).
        #[arg(long)]
        voxel_size: Option<f64>,
    },
    /// Shortest grid path plus robot commands.
    Plan {
        #[arg(long)]
        grid: PathBuf,
        /// Start cell `i,j,k`.
        #[arg(long, allow_hyphen_values = true)]
        start: String,
        /// Goal cell `i,j,k`.
        #[arg(long, allow_hyphen_values = true)]
        goal: String,
        #[arg(long, value_enum)]
        connectivity: Option<ConnectivityArg>,
        /// Path file (cell indices and centres).
        #[arg(long)]
        out_path: Option<PathBuf>,
        /// Command file for the robot.
        #[arg(long)]
        out_commands: Option<PathBuf>,
    },
    /// Time transform application against concatenation.
    Bench {
        /// Comma-separated sensor counts.
        #[arg(long, default_value = "1,2,3,4,5", value_delimiter = ',')]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 16384)]
        points: usize,
        /// Seconds per sensor count.
        #[arg(long, default_value_t = 30.0)]
        seconds: f64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// CSV output; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// HTTP service for the selection UI.
    Serve {
        #[command(flatten)]
        session: SessionArg,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn load_config(path: Option<&Path>) -> CliResult<ToolConfig> {
    match path {
        Some(p) => Ok(ToolConfig::load(p)?),
        None => Ok(ToolConfig::default()),
    }
}

fn parse_cell(s: &str) -> CliResult<[i64; 3]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let nums: Vec<i64> = parts
        .iter()
        .map(|p| p.parse::<i64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("cell {s:?} is not i,j,k")))?;
    <[i64; 3]>::try_from(nums).map_err(|_| usage(format!("cell {s:?} is not i,j,k")))
}

fn map_index(map: &ElidMap, s: &str) -> CliResult<usize> {
    let idx = match s.split_once(':') {
        Some((id, i)) => {
            let local: usize = i.parse().map_err(|_| usage(format!("bad point index {i:?}")))?;
            map.index_of(id, local)
                .ok_or_else(|| usage(format!("point {local} of cloud {id} is not in the map")))?
        }
        None => s.parse().map_err(|_| usage(format!("bad map index {s:?}")))?,
    };
    Ok(idx)
}

fn write_text(path: &Path, text: &str) -> CliResult {
    Ok(cloud_io::write_atomic(path, text)?)
}

fn simulate(
    dir: &SessionDir,
    scene_path: Option<&Path>,
    settings: SimulationSettings,
    reference: Option<String>,
    oracle: bool,
    config: &ToolConfig,
) -> CliResult {
    let scene = match scene_path {
        Some(p) => SceneSpec::from_json(&fs::read_to_string(p).map_err(|e| io(p, e))?)?,
        None => canonical_scene(),
    };
    let reference = match reference {
        Some(r) => r,
        None => scene
            .sensors
            .first()
            .map(|s| s.id.clone())
            .ok_or_else(|| usage("scene has no sensors"))?,
    };
    let captures = write_session(&scene, &settings, &reference, &config.registration, dir)?;
    if oracle {
        let ref_index = scene.sensor_index(&reference)?;
        let mut all = SelectionSet::default();
        for i in (0..scene.sensors.len()).filter(|&i| i != ref_index) {
            let sel = oracle_selections(&scene, ref_index, i, settings.segment_length)?;
            let first = all.records.is_empty();
            // The reference segment only needs to be stored once.
            all.records.extend(sel.records.into_iter().filter(|r| {
                first || !matches!(r, cloud_io::Selection::Segment { cloud_id, .. } if *cloud_id == reference)
            }));
        }
        cloud_io::write_selection(&all, &dir.selection_path())?;
    }
    for c in &captures {
        println!("{}: {} frames of {} points", c.id, c.frames.len(), c.frames[0].len());
    }
    Ok(())
}

fn register(dir: &SessionDir, config: Option<&ToolConfig>) -> CliResult {
    let mut session = dir.load()?;
    if let Some(cfg) = config {
        session.config = cfg.registration;
    }
    let regs = estimate_all(&session)?;
    dir.write_transform(&session.reference_id, &elid_core::RigidTransform::identity())?;
    for r in &regs {
        dir.write_transform(&r.cloud_id, &r.transform)?;
        let t = r.transform.translation();
        println!(
            "{}: roll {:.3} deg, pitch {:.3} deg, yaw {:.3} deg, translation ({:.4}, {:.4}, {:.4}) m",
            r.cloud_id,
            r.angles.roll.to_degrees(),
            r.angles.pitch.to_degrees(),
            r.angles.yaw.to_degrees(),
            t.x,
            t.y,
            t.z
        );
    }
    Ok(())
}

fn merge(dir: &SessionDir, out: Option<PathBuf>) -> CliResult {
    let reference = dir.manifest()?.reference;
    let mut clouds = Vec::new();
    let mut transforms = Vec::new();
    for id in dir.cloud_ids()?.into_iter().filter(|id| *id != reference) {
        clouds.push(dir.read_cloud(&id)?);
        transforms.push(dir.read_transform(&id)?);
    }
    let map = build_map(&clouds, &transforms, &dir.read_cloud(&reference)?)?;
    let out = out.unwrap_or_else(|| dir.root().join("map.map"));
    cloud_io::write_map(&map, &out)?;
    println!("{} points from {} clouds -> {}", map.len(), clouds.len() + 1, out.display());
    Ok(())
}

fn format_path(grid: &VoxelGrid, path: &NavPath) -> String {
    let mut s = format!("# {} cells, {:.6} m\n# i j k x y z\n", path.cells.len(), path.total_cost);
    for c in &path.cells {
        let p = grid.cell_center(*c);
        s.push_str(&format!("{} {} {} {:.6} {:.6} {:.6}\n", c[0], c[1], c[2], p.x, p.y, p.z));
    }
    s
}

pub fn run(cli: Cli) -> CliResult {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate {
            session,
            scene,
            seed,
            noise,
            frames,
            imu_noise,
            reference,
            oracle_selections,
        } => {
            let settings = SimulationSettings {
                range_noise_sigma: noise,
                frames,
                imu_noise_sigma: imu_noise,
                seed,
                ..SimulationSettings::default()
            };
            simulate(
                &SessionDir::new(session.session),
                scene.as_deref(),
                settings,
                reference,
                oracle_selections,
                &config,
            )
        }
        Command::Calibrate { session, windows, out } => match (session, windows, out) {
            (_, Some(w), Some(out)) => {
                cloud_io::write_profile(&profile_from_windows(&w)?, &out)?;
                println!("profile -> {}", out.display());
                Ok(())
            }
            (Some(s), None, _) => {
                let dir = SessionDir::new(s);
                for id in dir.calibrate()? {
                    println!("{id} -> {}", dir.calibration_path(&id).display());
                }
                Ok(())
            }
            _ => Err(usage("give --session, or --windows with --out")),
        },
        Command::Register { session } => {
            register(&SessionDir::new(session.session), cli.config.is_some().then_some(&config))
        }
        Command::Merge { session, out } => merge(&SessionDir::new(session.session), out),
        Command::Measure { map, a, b } => {
            let map = cloud_io::read_map(&map)?;
            let d = measure_distance(&map, map_index(&map, &a)?, map_index(&map, &b)?)?;
            println!("{d:.6}");
            Ok(())
        }
        Command::Voxelize { map, out, voxel_size } => {
            let mut params = config.voxel;
            if let Some(v) = voxel_size {
                params.inflation_radius += (v - params.voxel_size) / 2.0;
                params.voxel_size = v;
            }
            let grid = voxelize(&cloud_io::read_map(&map)?, &params)?;
            write_text(&out, &grid.to_dump())?;
            println!(
                "{}x{}x{} cells, {} occupied -> {}",
                grid.dims[0],
                grid.dims[1],
                grid.dims[2],
                grid.occupied_count(),
                out.display()
            );
            Ok(())
        }
        Command::Plan {
            grid,
            start,
            goal,
            connectivity,
            out_path,
            out_commands,
        } => {
            let text = fs::read_to_string(&grid).map_err(|e| io(&grid, e))?;
            let grid = VoxelGrid::parse_dump(&text)?;
            let conn = connectivity.map_or(config.connectivity, Connectivity::from);
            let path = shortest_path(&grid, parse_cell(&start)?, parse_cell(&goal)?, conn)?;
            if let Some(p) = out_path {
                write_text(&p, &format_path(&grid, &path))?;
            }
            let commands = match conn {
                Connectivity::Planar4 | Connectivity::Planar8 => {
                    path_to_commands(&path, config.linear_speed, config.angular_speed)?
                }
                _ => Vec::new(),
            };
            if let Some(p) = out_commands {
                cloud_io::write_commands(&commands, &p)?;
            }
            println!("{} cells, {:.3} m, {} commands", path.cells.len(), path.total_cost, commands.len());
            Ok(())
        }
        Command::Bench {
            counts,
            points,
            seconds,
            threads,
            seed,
            out,
        } => {
            if !(seconds >= 0.0 && seconds.is_finite()) {
                return Err(usage("--seconds must be a non-negative number"));
            }
            let report = run_bench(&BenchConfig {
                lidar_counts: counts,
                points_per_cloud: points,
                duration: Duration::from_secs_f64(seconds),
                seed,
                threads,
            })?;
            eprint!("{}", report.summary());
            match out {
                Some(p) => write_text(&p, &report.to_csv())?,
                None => print!("{}", report.to_csv()),
            }
            Ok(())
        }
        Command::Serve { session, host, port } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| usage(e.to_string()))?;
            let dir = SessionDir::new(session.session);
            rt.block_on(crate::service::serve(dir, (host, port).into()))
                .map_err(|e| CliError {
                    name: if e.kind() == std::io::ErrorKind::NotFound { "FileNotFound" } else { "IoError" },
                    message: e.to_string(),
                })
        }
    }
}
