//! Per-robot traversability checks.
//!
//! Aerial motion is a straight 3D segment checked for body clearance. Ground
//! motion additionally needs continuous support: every footprint sample must
//! stand on a floor (an occupied voxel with standable clearance above), and
//! the support height may change by at most the platform's step height
//! between consecutive samples.

use alloc::vec::Vec;

use crate::geom::{Pose, Vec3};
use crate::grid::{CellState, VoxelGrid};
use crate::math;
use crate::robot::{RobotKind, RobotSpec};

const EPS: f64 = 1e-9;

/// How unknown cells are treated during feasibility checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraverseOptions {
    /// Treat `Unknown` as blocking (the default for planning on a partial
    /// map). Ground-truth worlds contain no unknown cells, so the flag is
    /// irrelevant there.
    pub unknown_blocks: bool,
}

impl Default for TraverseOptions {
    fn default() -> Self {
        Self { unknown_blocks: true }
    }
}

fn passable(state: Option<CellState>, opts: &TraverseOptions) -> bool {
    match state {
        Some(CellState::Free) => true,
        Some(CellState::Unknown) => !opts.unknown_blocks,
        // Outside the grid counts as blocked.
        Some(CellState::Occupied) | None => false,
    }
}

/// Is a body sphere of `radius` centered at `p` clear of blocking voxels?
/// A voxel blocks when its center lies within the sphere.
pub fn body_clear(grid: &VoxelGrid, p: &Vec3, radius: f64, opts: &TraverseOptions) -> bool {
    let res = grid.resolution();
    let r_cells = math::ceil(radius / res) as i64;
    let c = grid.cell_of(p);
    for dz in -r_cells..=r_cells {
        for dy in -r_cells..=r_cells {
            for dx in -r_cells..=r_cells {
                let cell = [c[0] + dx, c[1] + dy, c[2] + dz];
                let center = grid.center_i64(cell);
                if (center - p).norm() <= radius + EPS && !passable(grid.state_i64(cell), opts) {
                    return false;
                }
            }
        }
    }
    true
}

/// Standing levels in the voxel column at (x, y): the z centers of free
/// cells that sit directly on an occupied cell and have one more free cell
/// of headroom. Sorted ascending.
pub fn floor_levels(grid: &VoxelGrid, x: f64, y: f64, opts: &TraverseOptions) -> Vec<f64> {
    let mut out = Vec::new();
    let probe = Vec3::new(x, y, grid.origin().z);
    let c = grid.cell_of(&probe);
    let nz = grid.dims()[2] as i64;
    if !(0..grid.dims()[0] as i64).contains(&c[0]) || !(0..grid.dims()[1] as i64).contains(&c[1]) {
        return out;
    }
    for k in 0..nz - 1 {
        if grid.state_i64([c[0], c[1], k]) != Some(CellState::Occupied) {
            continue;
        }
        let stand = grid.state_i64([c[0], c[1], k + 1]);
        let head = grid.state_i64([c[0], c[1], k + 2]);
        if passable(stand, opts) && head.map_or(false, |s| s != CellState::Occupied) {
            out.push(grid.center_i64([c[0], c[1], k + 1]).z);
        }
    }
    out
}

/// Standing level nearest to `z`, ties resolved to the lower level.
pub fn nearest_floor(grid: &VoxelGrid, x: f64, y: f64, z: f64, opts: &TraverseOptions) -> Option<f64> {
    let mut best: Option<f64> = None;
    for level in floor_levels(grid, x, y, opts) {
        match best {
            None => best = Some(level),
            Some(b) => {
                let (db, dl) = ((b - z).abs(), (level - z).abs());
                if dl + EPS < db {
                    best = Some(level);
                }
            }
        }
    }
    best
}

/// Can `robot` move in a straight segment from `from` to `to` on this grid?
///
/// The selected support sequence for ground robots does not depend on
/// `max_step_height`, so feasibility is monotone in the step height.
pub fn traversable(grid: &VoxelGrid, from: &Pose, to: &Pose, robot: &RobotSpec, opts: &TraverseOptions) -> bool {
    if !grid.contains_point(&from.position) || !grid.contains_point(&to.position) {
        return false;
    }
    match robot.kind {
        RobotKind::Aerial => aerial_traversable(grid, from, to, robot, opts),
        RobotKind::Ground => ground_traversable(grid, from, to, robot, opts),
    }
}

fn segment_samples(a: &Vec3, b: &Vec3, spacing: f64) -> usize {
    let n = math::ceil((b - a).norm() / spacing) as usize;
    n.max(1)
}

fn aerial_traversable(grid: &VoxelGrid, from: &Pose, to: &Pose, robot: &RobotSpec, opts: &TraverseOptions) -> bool {
    let n = segment_samples(&from.position, &to.position, grid.resolution());
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let p = from.position + (to.position - from.position) * t;
        if !body_clear(grid, &p, robot.collision_radius, opts) {
            return false;
        }
    }
    true
}

fn ground_traversable(grid: &VoxelGrid, from: &Pose, to: &Pose, robot: &RobotSpec, opts: &TraverseOptions) -> bool {
    let res = grid.resolution();
    let (a, b) = (from.position, to.position);
    // The start pose must itself be standing on a floor.
    let mut z_prev = match nearest_floor(grid, a.x, a.y, a.z, opts) {
        Some(z) if (z - a.z).abs() <= res / 2.0 + EPS => z,
        _ => return false,
    };
    let n = segment_samples(&Vec3::new(a.x, a.y, 0.0), &Vec3::new(b.x, b.y, 0.0), res);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let x = a.x + (b.x - a.x) * t;
        let y = a.y + (b.y - a.y) * t;
        let z = match nearest_floor(grid, x, y, z_prev, opts) {
            Some(z) => z,
            None => return false,
        };
        if (z - z_prev).abs() > robot.max_step_height + EPS {
            return false;
        }
        // Body sphere rests on the feet: center it one radius above.
        let body = Vec3::new(x, y, z + robot.collision_radius);
        if !body_clear(grid, &body, robot.collision_radius, opts) {
            return false;
        }
        z_prev = z;
    }
    (z_prev - b.z).abs() <= res / 2.0 + EPS
}

/// Project a point down/up onto the nearest standing level; returns the
/// standing pose z if one exists.
pub fn stand_at(grid: &VoxelGrid, x: f64, y: f64, z_hint: f64, opts: &TraverseOptions) -> Option<f64> {
    nearest_floor(grid, x, y, z_hint, opts)
}
