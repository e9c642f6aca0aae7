//! Occupancy grids over a merged map, shortest paths on them, and
//! translation of a planar path into timed drive commands.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt::Write as _;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorName;
use crate::geometry::Point;
use crate::merge::ElidMap;

pub const GRID_MAGIC: &str = "ELIDGRID1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlannerError {
    #[error("map has no points inside the z band")]
    EmptyMap,
    #[error("z band [{0}, {1}] is empty")]
    DegenerateBand(f64, f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("start cell {0:?} is occupied or inflated")]
    StartBlocked([usize; 3]),
    #[error("goal cell {0:?} is occupied or inflated")]
    GoalBlocked([usize; 3]),
    #[error("cell {0:?} is outside the grid")]
    OutOfGrid([i64; 3]),
    #[error("no path between start and goal")]
    NoPath,
    #[error("path leaves the start layer")]
    NonPlanarPath,
    #[error("grid dump line {line}: {reason}")]
    MalformedGrid { line: usize, reason: String },
}

impl ErrorName for PlannerError {
    fn name(&self) -> &'static str {
        match self {
            Self::EmptyMap => "EmptyMap",
            Self::DegenerateBand(..) => "DegenerateBand",
            Self::InvalidParameter(_) => "InvalidParameter",
            Self::StartBlocked(_) => "StartBlocked",
            Self::GoalBlocked(_) => "GoalBlocked",
            Self::OutOfGrid(_) => "OutOfGrid",
            Self::NoPath => "NoPath",
            Self::NonPlanarPath => "NonPlanarPath",
            Self::MalformedGrid { .. } => "MalformedGrid",
        }
    }
}

type Result<T> = std::result::Result<T, PlannerError>;
pub type Cell = [usize; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoxelizeParams {
    pub voxel_size: f64,
    /// Only points with `z_band.0 <= z < z_band.1` are voxelized.
    pub z_band: (f64, f64),
    pub inflation_radius: f64,
    pub min_points_per_voxel: usize,
    /// Collapse the band into a single layer, so anything between its
    /// bounds blocks a ground robot.
    pub flatten: bool,
}

impl Default for VoxelizeParams {
    /// 10 cm voxels, a band from 5 cm above the floor to 15 cm below a
    /// 2.4 m ceiling for sensors mounted 1.9 m up, 0.2 m robot radius.
    fn default() -> Self {
        Self::for_robot(0.1, (-1.85, 0.35), 0.2)
    }
}

impl VoxelizeParams {
    /// Inflation of robot radius plus half a voxel, enough clearance for a
    /// point robot following cell centres.
    pub fn for_robot(voxel_size: f64, z_band: (f64, f64), robot_radius: f64) -> Self {
        Self {
            voxel_size,
            z_band,
            inflation_radius: robot_radius + voxel_size / 2.0,
            min_points_per_voxel: 1,
            flatten: true,
        }
    }
}

/// Regular grid; cell `(i, j, k)` spans
/// `[(origin_index + (i, j, k)) · voxel_size, … + voxel_size)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin_index: [i64; 3],
    pub voxel_size: f64,
    pub dims: [usize; 3],
    pub inflation_radius: f64,
    occupied: Vec<bool>,
    inflated: Vec<bool>,
}

impl VoxelGrid {
    /// Empty grid with no occupancy.
    pub fn new(origin_index: [i64; 3], voxel_size: f64, dims: [usize; 3], inflation_radius: f64) -> Self {
        let n = dims.iter().product();
        Self {
            origin_index,
            voxel_size,
            dims,
            inflation_radius,
            occupied: vec![false; n],
            inflated: vec![false; n],
        }
    }

    /// Builds a grid from an occupancy predicate and inflates it.
    pub fn from_occupancy(
        origin_index: [i64; 3],
        voxel_size: f64,
        dims: [usize; 3],
        inflation_radius: f64,
        occupied: impl Fn(Cell) -> bool,
    ) -> Self {
        let mut g = Self::new(origin_index, voxel_size, dims, inflation_radius);
        let cells: Vec<Cell> = g.cells().collect();
        for c in cells {
            let i = g.linear(c);
            g.occupied[i] = occupied(c);
        }
        g.inflate();
        g
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn origin(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.origin_index[i] as f64 * self.voxel_size)
    }

    fn linear(&self, c: Cell) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    pub fn contains(&self, c: [i64; 3]) -> Option<Cell> {
        (0..3)
            .all(|k| c[k] >= 0 && (c[k] as usize) < self.dims[k])
            .then(|| [c[0] as usize, c[1] as usize, c[2] as usize])
    }

    /// All cells in lexicographic `(x, y, z)` order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let [nx, ny, nz] = self.dims;
        (0..nx).flat_map(move |x| (0..ny).flat_map(move |y| (0..nz).map(move |z| [x, y, z])))
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.occupied[self.linear(c)]
    }

    /// Occupied or within the inflation radius of an occupied cell.
    pub fn is_inflated(&self, c: Cell) -> bool {
        self.inflated[self.linear(c)]
    }

    pub fn is_free(&self, c: Cell) -> bool {
        !self.is_inflated(c)
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn cell_center(&self, c: Cell) -> Vector3<f64> {
        Vector3::from_fn(|i, _| (self.origin_index[i] + c[i] as i64) as f64 * self.voxel_size + self.voxel_size / 2.0)
    }

    /// Grid cell (possibly outside the grid) containing a world point.
    pub fn cell_of(&self, p: &Vector3<f64>) -> [i64; 3] {
        [0, 1, 2].map(|i| (p[i] / self.voxel_size).floor() as i64 - self.origin_index[i])
    }

    fn inflate(&mut self) {
        let reach = (self.inflation_radius / self.voxel_size).floor() as i64;
        let r2 = (self.inflation_radius / self.voxel_size).powi(2) + 1e-9;
        let mut offsets = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if ((dx * dx + dy * dy + dz * dz) as f64) <= r2 {
                        offsets.push([dx, dy, dz]);
                    }
                }
            }
        }
        self.inflated = self.occupied.clone();
        let occupied: Vec<Cell> = self.cells().filter(|&c| self.is_occupied(c)).collect();
        for c in occupied {
            for o in &offsets {
                let n = [0, 1, 2].map(|k| c[k] as i64 + o[k]);
                if let Some(n) = self.contains(n) {
                    let i = self.linear(n);
                    self.inflated[i] = true;
                }
            }
        }
    }

    /// Collapses all layers into one: a cell is occupied (inflated) if any
    /// cell of its column is.
    pub fn flatten(&self) -> VoxelGrid {
        let [nx, ny, nz] = self.dims;
        let mut g = VoxelGrid::new(self.origin_index, self.voxel_size, [nx, ny, 1], self.inflation_radius);
        for x in 0..nx {
            for y in 0..ny {
                let i = g.linear([x, y, 0]);
                g.occupied[i] = (0..nz).any(|z| self.is_occupied([x, y, z]));
                g.inflated[i] = (0..nz).any(|z| self.is_inflated([x, y, z]));
            }
        }
        g
    }

    /// Text dump: header, then one `SLICE k` block per layer with rows from
    /// high y to low y. `#` occupied, `+` inflated only, `.` free.
    pub fn to_dump(&self) -> String {
        let [nx, ny, nz] = self.dims;
        let o = self.origin_index;
        let mut out = format!(
            "{GRID_MAGIC} {nx} {ny} {nz} {} {} {} {} {}\n",
            self.voxel_size, o[0], o[1], o[2], self.inflation_radius
        );
        for z in 0..nz {
            let _ = writeln!(out, "SLICE {z}");
            for y in (0..ny).rev() {
                for x in 0..nx {
                    out.push(match (self.is_occupied([x, y, z]), self.is_inflated([x, y, z])) {
                        (true, _) => '#',
                        (false, true) => '+',
                        _ => '.',
                    });
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<VoxelGrid> {
        let bad = |line: usize, reason: &str| PlannerError::MalformedGrid {
            line,
            reason: reason.to_owned(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (n, header) = lines.next().ok_or_else(|| bad(0, "missing header"))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 9 || f[0] != GRID_MAGIC {
            return Err(bad(n, "expected ELIDGRID1 nx ny nz voxel ox oy oz inflation"));
        }
        let dim = |s: &str| s.parse::<usize>().map_err(|_| bad(n, "bad dimension"));
        let idx = |s: &str| s.parse::<i64>().map_err(|_| bad(n, "bad origin index"));
        let real = |s: &str| match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
            _ => Err(bad(n, "bad real")),
        };
        let dims = [dim(f[1])?, dim(f[2])?, dim(f[3])?];
        let voxel = real(f[4])?;
        if voxel <= 0.0 {
            return Err(bad(n, "voxel size must be positive"));
        }
        let cells = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&c| c <= 1 << 26)
            .ok_or_else(|| bad(n, "grid too large"))?;
        let mut g = VoxelGrid::new([idx(f[5])?, idx(f[6])?, idx(f[7])?], voxel, dims, real(f[8])?);
        debug_assert_eq!(g.len(), cells);
        for z in 0..dims[2] {
            let (n, l) = lines.next().ok_or_else(|| bad(0, "missing slice"))?;
            if l != format!("SLICE {z}") {
                return Err(bad(n, "expected SLICE header"));
            }
            for y in (0..dims[1]).rev() {
                let (n, row) = lines.next().ok_or_else(|| bad(0, "missing row"))?;
                if row.chars().count() != dims[0] {
                    return Err(bad(n, "row length does not match nx"));
                }
                for (x, ch) in row.chars().enumerate() {
                    let i = g.linear([x, y, z]);
                    match ch {
                        '#' => {
                            g.occupied[i] = true;
                            g.inflated[i] = true;
                        }
                        '+' => g.inflated[i] = true,
                        '.' => {}
                        _ => return Err(bad(n, "unexpected character")),
                    }
                }
            }
        }
        if let Some((n, _)) = lines.next() {
            return Err(bad(n, "trailing content"));
        }
        Ok(g)
    }
}

/// Occupancy grid of map points inside the z band, inflated.
pub fn voxelize(map: &ElidMap, params: &VoxelizeParams) -> Result<VoxelGrid> {
    voxelize_points(map.cloud().points(), params)
}

pub fn voxelize_points(points: &[Point], params: &VoxelizeParams) -> Result<VoxelGrid> {
    let v = params.voxel_size;
    if !(v > 0.0 && v.is_finite()) {
        return Err(PlannerError::InvalidParameter("voxel_size must be positive"));
    }
    if !(params.inflation_radius >= 0.0 && params.inflation_radius.is_finite()) {
        return Err(PlannerError::InvalidParameter("inflation_radius must be non-negative"));
    }
    let (lo, hi) = params.z_band;
    if !(lo < hi) {
        return Err(PlannerError::DegenerateBand(lo, hi));
    }
    let cells: Vec<[i64; 3]> = points
        .iter()
        .filter(|p| p.z >= lo && p.z < hi)
        .map(|p| [p.x, p.y, p.z].map(|c| (c / v).floor() as i64))
        .collect();
    if cells.is_empty() {
        return Err(PlannerError::EmptyMap);
    }
    let pad = (params.inflation_radius / v).ceil() as i64;
    let mut min = [i64::MAX; 3];
    let mut max = [i64::MIN; 3];
    for c in &cells {
        for k in 0..3 {
            min[k] = min[k].min(c[k]);
            max[k] = max[k].max(c[k]);
        }
    }
    let origin = [min[0] - pad, min[1] - pad, min[2]];
    let dims = [
        (max[0] - min[0] + 1 + 2 * pad) as usize,
        (max[1] - min[1] + 1 + 2 * pad) as usize,
        (max[2] - min[2] + 1) as usize,
    ];
    if dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).is_none_or(|n| n > 1 << 28) {
        return Err(PlannerError::InvalidParameter("grid would be too large for this voxel size"));
    }
    let mut counts = vec![0usize; dims.iter().product()];
    let mut g = VoxelGrid::new(origin, v, dims, params.inflation_radius);
    for c in cells {
        let local = [0, 1, 2].map(|k| (c[k] - origin[k]) as usize);
        counts[g.linear(local)] += 1;
    }
    let threshold = params.min_points_per_voxel.max(1);
    for (o, n) in g.occupied.iter_mut().zip(&counts) {
        *o = *n >= threshold;
    }
    g.inflate();
    Ok(if params.flatten { g.flatten() } else { g })
}

/// Neighbourhood used by the search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    /// In-layer 4-neighbourhood, uniform cost (BFS).
    #[default]
    Planar4,
    /// In-layer 8-neighbourhood with √2 diagonals (Dijkstra).
    Planar8,
    /// Face neighbours in 3D, uniform cost (BFS).
    Spatial6,
    /// Full 3D neighbourhood with √2/√3 diagonals (Dijkstra).
    Spatial26,
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[i64; 3]> {
        let planar = matches!(self, Self::Planar4 | Self::Planar8);
        let diagonal = matches!(self, Self::Planar8 | Self::Spatial26);
        let zr: &[i64] = if planar { &[0] } else { &[-1, 0, 1] };
        let mut out = Vec::new();
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                for &dz in zr {
                    let n = dx.abs() + dy.abs() + dz.abs();
                    if n == 1 || (diagonal && n > 1) {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    pub fn uniform_cost(self) -> bool {
        matches!(self, Self::Planar4 | Self::Spatial6)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavPath {
    pub cells: Vec<Cell>,
    pub start: Cell,
    pub goal: Cell,
    /// Metres.
    pub total_cost: f64,
    pub voxel_size: f64,
}

fn step_cost(o: &[i64; 3]) -> f64 {
    ((o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64).sqrt()
}

/// Diagonal steps may not cut past a blocked cell: every axis-aligned
/// partial step must be free too.
fn move_allowed(grid: &VoxelGrid, from: Cell, o: &[i64; 3]) -> Option<Cell> {
    let to = grid.contains([0, 1, 2].map(|k| from[k] as i64 + o[k]))?;
    if !grid.is_free(to) {
        return None;
    }
    let axes: Vec<usize> = (0..3).filter(|&k| o[k] != 0).collect();
    if axes.len() > 1 {
        for mask in 1..(1u32 << axes.len()) - 1 {
            let mut c = from.map(|v| v as i64);
            for (bit, &k) in axes.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    c[k] += o[k];
                }
            }
            if !grid.contains(c).is_some_and(|c| grid.is_free(c)) {
                return None;
            }
        }
    }
    Some(to)
}

/// Successors of `c` in lexicographic cell order.
pub fn neighbors(grid: &VoxelGrid, c: Cell, conn: Connectivity) -> Vec<(Cell, f64)> {
    let mut out: Vec<(Cell, f64)> = conn
        .offsets()
        .iter()
        .filter_map(|o| move_allowed(grid, c, o).map(|n| (n, step_cost(o))))
        .collect();
    out.sort_by_key(|a| a.0);
    out
}

fn check_endpoints(grid: &VoxelGrid, start: [i64; 3], goal: [i64; 3]) -> Result<(Cell, Cell)> {
    let s = grid.contains(start).ok_or(PlannerError::OutOfGrid(start))?;
    let g = grid.contains(goal).ok_or(PlannerError::OutOfGrid(goal))?;
    if !grid.is_free(s) {
        return Err(PlannerError::StartBlocked(s));
    }
    if !grid.is_free(g) {
        return Err(PlannerError::GoalBlocked(g));
    }
    Ok((s, g))
}

/// Minimum-cost path. Uniform-cost neighbourhoods use BFS, the others
/// Dijkstra; equal-cost alternatives resolve to the lexicographically
/// smaller cell.
pub fn shortest_path(grid: &VoxelGrid, start: [i64; 3], goal: [i64; 3], conn: Connectivity) -> Result<NavPath> {
    let (s, g) = check_endpoints(grid, start, goal)?;
    let n = grid.len();
    let mut prev = vec![usize::MAX; n];
    let mut dist = vec![f64::INFINITY; n];
    let si = grid.linear(s);
    dist[si] = 0.0;
    let planar = matches!(conn, Connectivity::Planar4 | Connectivity::Planar8);
    let in_layer = |c: &Cell| !planar || c[2] == s[2];
    let mut found = s == g;
    if conn.uniform_cost() {
        let mut queue = VecDeque::from([s]);
        while let Some(c) = queue.pop_front() {
            if c == g {
                found = true;
                break;
            }
            let d = dist[grid.linear(c)];
            for (nb, _) in neighbors(grid, c, conn).into_iter().filter(|(nb, _)| in_layer(nb)) {
                let i = grid.linear(nb);
                if dist[i].is_infinite() {
                    dist[i] = d + 1.0;
                    prev[i] = grid.linear(c);
                    queue.push_back(nb);
                }
            }
        }
    } else {
        let mut heap = BinaryHeap::from([Reverse((Cost(0.0), s))]);
        let mut done = vec![false; n];
        while let Some(Reverse((Cost(d), c))) = heap.pop() {
            let ci = grid.linear(c);
            if done[ci] {
                continue;
            }
            done[ci] = true;
            if c == g {
                found = true;
                break;
            }
            for (nb, w) in neighbors(grid, c, conn).into_iter().filter(|(nb, _)| in_layer(nb)) {
                let i = grid.linear(nb);
                let nd = d + w;
                if nd < dist[i] - 1e-12 {
                    dist[i] = nd;
                    prev[i] = ci;
                    heap.push(Reverse((Cost(nd), nb)));
                }
            }
        }
    }
    if !found {
        return Err(PlannerError::NoPath);
    }
    let mut cells = vec![g];
    let mut i = grid.linear(g);
    while i != si {
        i = prev[i];
        let x = i % grid.dims[0];
        let y = (i / grid.dims[0]) % grid.dims[1];
        let z = i / (grid.dims[0] * grid.dims[1]);
        cells.push([x, y, z]);
    }
    cells.reverse();
    let total_cost = cells
        .windows(2)
        .map(|w| step_cost(&[0, 1, 2].map(|k| w[1][k] as i64 - w[0][k] as i64)))
        .sum::<f64>()
        * grid.voxel_size;
    Ok(NavPath {
        cells,
        start: s,
        goal: g,
        total_cost,
        voxel_size: grid.voxel_size,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NavCommand {
    /// Turn in place by a signed angle in degrees, counter-clockwise positive.
    Turn(f64),
    /// Drive straight ahead for this many seconds.
    Move(f64),
}

/// Commands for a robot starting on the first cell facing +x.
pub fn path_to_commands(path: &NavPath, linear_speed: f64, angular_speed: f64) -> Result<Vec<NavCommand>> {
    if !(linear_speed > 0.0 && linear_speed.is_finite() && angular_speed > 0.0 && angular_speed.is_finite()) {
        return Err(PlannerError::InvalidParameter("speeds must be positive"));
    }
    if path.cells.iter().any(|c| c[2] != path.start[2]) {
        return Err(PlannerError::NonPlanarPath);
    }
    let mut out = Vec::new();
    let mut heading = 0.0f64;
    let mut run: Option<([i64; 2], usize)> = None;
    let flush = |run: Option<([i64; 2], usize)>, out: &mut Vec<NavCommand>, heading: &mut f64| {
        if let Some((d, n)) = run {
            let target = (d[1] as f64).atan2(d[0] as f64).to_degrees();
            let turn = crate::geometry::normalize_angle((target - *heading).to_radians()).to_degrees();
            if turn.abs() > 1e-9 {
                out.push(NavCommand::Turn(turn));
                *heading = target;
            }
            let len = n as f64 * ((d[0] * d[0] + d[1] * d[1]) as f64).sqrt() * path.voxel_size;
            out.push(NavCommand::Move(len / linear_speed));
        }
    };
    for w in path.cells.windows(2) {
        let d = [w[1][0] as i64 - w[0][0] as i64, w[1][1] as i64 - w[0][1] as i64];
        run = match run {
            Some((rd, n)) if rd == d => Some((rd, n + 1)),
            other => {
                flush(other, &mut out, &mut heading);
                Some((d, 1))
            }
        };
    }
    flush(run, &mut out, &mut heading);
    Ok(out)
}

/// Planar robot pose: position (m) and heading (rad, from +x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    pub position: Vector2<f64>,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collision {
    pub sample_index: usize,
    pub cell: Cell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub trajectory: Vec<Pose2>,
    pub collision: Option<Collision>,
}

impl Replay {
    pub fn final_pose(&self) -> Pose2 {
        *self.trajectory.last().expect("trajectory holds the start pose")
    }
}

/// Integrates an ideal differential-drive point robot on `layer` of `grid`
/// and reports the first sample inside an occupied (not merely inflated)
/// cell. Samples are spaced at most a tenth of a voxel apart.
pub fn replay_commands(
    commands: &[NavCommand],
    start: Pose2,
    grid: &VoxelGrid,
    layer: usize,
    linear_speed: f64,
) -> Replay {
    let mut trajectory = vec![start];
    let mut pose = start;
    let mut collision = None;
    let step = grid.voxel_size / 10.0;
    let z = grid.origin()[2] + (layer as f64 + 0.5) * grid.voxel_size;
    let check = |p: &Pose2, index: usize, collision: &mut Option<Collision>| {
        if collision.is_some() {
            return;
        }
        let c = grid.cell_of(&Vector3::new(p.position.x, p.position.y, z));
        if let Some(c) = grid.contains(c) {
            if grid.is_occupied(c) {
                *collision = Some(Collision { sample_index: index, cell: c });
            }
        }
    };
    check(&pose, 0, &mut collision);
    for cmd in commands {
        match *cmd {
            NavCommand::Turn(deg) => {
                pose.heading = crate::geometry::normalize_angle(pose.heading + deg.to_radians());
                trajectory.push(pose);
            }
            NavCommand::Move(secs) => {
                let dist = secs * linear_speed;
                let n = (dist / step).ceil().max(1.0) as usize;
                let dir = Vector2::new(pose.heading.cos(), pose.heading.sin());
                let from = pose.position;
                for i in 1..=n {
                    pose.position = from + dir * (dist * i as f64 / n as f64);
                    trajectory.push(pose);
                    check(&pose, trajectory.len() - 1, &mut collision);
                }
            }
        }
    }
    Replay { trajectory, collision }
}

/// Pose at the centre of `cell`, facing +x.
pub fn start_pose(grid: &VoxelGrid, cell: Cell) -> Pose2 {
    let c = grid.cell_center(cell);
    Pose2 {
        position: Vector2::new(c.x, c.y),
        heading: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_from(rows: &[&str]) -> VoxelGrid {
        let ny = rows.len();
        let nx = rows[0].len();
        VoxelGrid::from_occupancy([0, 0, 0], 1.0, [nx, ny, 1], 0.0, |c| {
            rows[ny - 1 - c[1]].as_bytes()[c[0]] == b'#'
        })
    }

    #[test]
    fn single_point_single_cell() {
        let p = [Point::new(0.0, 0.0, 0.0, 1.0, 0)];
        let params = VoxelizeParams {
            voxel_size: 0.1,
            z_band: (-1.0, 1.0),
            inflation_radius: 0.0,
            min_points_per_voxel: 1,
            flatten: false,
        };
        let g = voxelize_points(&p, &params).unwrap();
        assert_eq!(g.occupied_count(), 1);
        let two = [Point::new(0.01, 0.01, 0.0, 1.0, 0), Point::new(0.06, 0.01, 0.0, 1.0, 0)];
        assert_eq!(voxelize_points(&two, &params).unwrap().occupied_count(), 1);
        let bad = VoxelizeParams { z_band: (1.0, 1.0), ..params };
        assert_eq!(voxelize_points(&p, &bad), Err(PlannerError::DegenerateBand(1.0, 1.0)));
        assert_eq!(voxelize_points(&[], &params), Err(PlannerError::EmptyMap));
    }

    #[test]
    fn inflation_covers_occupied() {
        let pts: Vec<_> = (0..20).map(|i| Point::new(i as f64 * 0.05, 0.5, 0.0, 1.0, 0)).collect();
        let g = voxelize_points(&pts, &VoxelizeParams::for_robot(0.1, (-1.0, 1.0), 0.2)).unwrap();
        assert!(g.cells().all(|c| !g.is_occupied(c) || g.is_inflated(c)));
        assert!(g.cells().filter(|&c| g.is_inflated(c)).count() > g.occupied_count());
    }

    #[test]
    fn trivial_paths() {
        let g = grid_from(&[".....", ".....", ".....", ".....", "....."]);
        let p = shortest_path(&g, [2, 2, 0], [2, 2, 0], Connectivity::Planar4).unwrap();
        assert_eq!(p.cells, vec![[2, 2, 0]]);
        assert_eq!(p.total_cost, 0.0);
        let p = shortest_path(&g, [0, 0, 0], [4, 4, 0], Connectivity::Planar4).unwrap();
        assert_eq!(p.total_cost, 8.0);
        assert_eq!(p.cells.len(), 9);
        let p = shortest_path(&g, [0, 0, 0], [4, 4, 0], Connectivity::Planar8).unwrap();
        assert!((p.total_cost - 4.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn blocked_endpoints() {
        let g = grid_from(&["..#", "...", "#.."]);
        assert_eq!(
            shortest_path(&g, [0, 0, 0], [1, 1, 0], Connectivity::Planar4),
            Err(PlannerError::StartBlocked([0, 0, 0]))
        );
        assert_eq!(
            shortest_path(&g, [1, 1, 0], [2, 2, 0], Connectivity::Planar4),
            Err(PlannerError::GoalBlocked([2, 2, 0]))
        );
        let walled = grid_from(&["..#..", "..#..", "..#.."]);
        assert_eq!(
            shortest_path(&walled, [0, 0, 0], [4, 0, 0], Connectivity::Planar8),
            Err(PlannerError::NoPath)
        );
    }

    #[test]
    fn no_corner_cutting() {
        let g = grid_from(&[".#", "#."]);
        assert_eq!(
            shortest_path(&g, [0, 1, 0], [1, 0, 0], Connectivity::Planar8),
            Err(PlannerError::NoPath)
        );
    }

    #[test]
    fn wall_with_gap() {
        let g = grid_from(&["......", "......", "###.##", "......", "......", "......"]);
        let p = shortest_path(&g, [0, 0, 0], [0, 5, 0], Connectivity::Planar4).unwrap();
        // down the gap at x = 3: 3 across, 5 up, 3 back
        assert_eq!(p.total_cost, 11.0);
    }

    fn path_of(cells: &[[usize; 2]], voxel: f64) -> NavPath {
        let cells: Vec<Cell> = cells.iter().map(|c| [c[0], c[1], 0]).collect();
        NavPath {
            start: cells[0],
            goal: *cells.last().unwrap(),
            total_cost: 0.0,
            cells,
            voxel_size: voxel,
        }
    }

    #[test]
    fn straight_run_is_one_move() {
        let p = path_of(&[[0, 0], [1, 0], [2, 0], [3, 0]], 0.25);
        assert_eq!(path_to_commands(&p, 0.5, 90.0).unwrap(), vec![NavCommand::Move(1.5)]);
    }

    #[test]
    fn left_turn() {
        let p = path_of(&[[0, 0], [1, 0], [1, 1], [1, 2]], 1.0);
        let c = path_to_commands(&p, 1.0, 90.0).unwrap();
        assert_eq!(c, vec![NavCommand::Move(1.0), NavCommand::Turn(90.0), NavCommand::Move(2.0)]);
    }

    #[test]
    fn replay_l_path_ends_at_goal() {
        let g = grid_from(&["....", "....", "....", "...."]);
        let p = path_of(&[[0, 0], [1, 0], [2, 0], [2, 1], [2, 2], [2, 3]], 1.0);
        let cmds = path_to_commands(&p, 0.5, 90.0).unwrap();
        let r = replay_commands(&cmds, start_pose(&g, p.start), &g, 0, 0.5);
        let goal = g.cell_center(p.goal);
        assert!((r.final_pose().position - Vector2::new(goal.x, goal.y)).norm() <= 0.5);
        assert!(r.collision.is_none());
    }

    #[test]
    fn replay_reports_wall() {
        let g = grid_from(&["..#.."]);
        let r = replay_commands(&[], start_pose(&g, [0, 0, 0]), &g, 0, 1.0);
        assert_eq!(r.trajectory.len(), 1);
        assert!(r.collision.is_none());
        let r = replay_commands(&[NavCommand::Move(4.0)], start_pose(&g, [0, 0, 0]), &g, 0, 1.0);
        let c = r.collision.unwrap();
        assert_eq!(c.cell, [2, 0, 0]);
        let first = r.trajectory[c.sample_index].position.x;
        assert!((2.0..2.1).contains(&first));
        assert!(r.trajectory[c.sample_index - 1].position.x < 2.0);
    }

    #[test]
    fn dump_round_trip() {
        let pts: Vec<_> = (0..10).map(|i| Point::new(i as f64 * 0.1, 0.3 * (i % 3) as f64, 0.05 * (i % 2) as f64, 1.0, 0)).collect();
        let g = voxelize_points(&pts, &VoxelizeParams::for_robot(0.1, (-1.0, 1.0), 0.1)).unwrap();
        let d = g.to_dump();
        assert!(d.starts_with("ELIDGRID1 "));
        assert_eq!(VoxelGrid::parse_dump(&d).unwrap(), g);
        assert!(VoxelGrid::parse_dump("ELIDGRID1 1 1 1 0.1 0 0 0 0\nSLICE 0\nx\n").is_err());
    }

    proptest! {
        #[test]
        fn voxelization_shifts_with_the_map(
            raw in prop::collection::vec((0i32..40, 0i32..40, 0i32..5, 0.1..0.9f64), 1..40),
            axis in 0usize..3,
        ) {
            let v = 0.1;
            let pts: Vec<Point> = raw.iter().map(|&(x, y, z, f)| {
                Point::new((x as f64 + f) * v, (y as f64 + f) * v, (z as f64 + f) * v, 1.0, 0)
            }).collect();
            let params = VoxelizeParams { voxel_size: v, z_band: (-10.0, 10.0), inflation_radius: 0.0, min_points_per_voxel: 1, flatten: false };
            let a = voxelize_points(&pts, &params).unwrap();
            let shifted: Vec<Point> = pts.iter().map(|p| {
                let mut q = *p;
                match axis { 0 => q.x += v, 1 => q.y += v, _ => q.z += v }
                q
            }).collect();
            let b = voxelize_points(&shifted, &params).unwrap();
            let occ = |g: &VoxelGrid| -> std::collections::BTreeSet<[i64; 3]> {
                g.cells().filter(|&c| g.is_occupied(c))
                    .map(|c| [0, 1, 2].map(|k| c[k] as i64 + g.origin_index[k])).collect()
            };
            let moved: std::collections::BTreeSet<_> = occ(&a).into_iter().map(|mut c| { c[axis] += 1; c }).collect();
            prop_assert_eq!(moved, occ(&b));
        }
    }
}
