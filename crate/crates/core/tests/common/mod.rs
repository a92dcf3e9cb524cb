//! Independent oracles for integration tests.
//!
//! Everything here re-derives the semantics under test with different
//! algorithms and plain scalar loops, sharing no helper code with the
//! implementations it checks.

#![allow(dead_code)]

use joey_core::geom::{Pose, Vec3};
use joey_core::grid::{CellState, VoxelGrid};
use joey_core::robot::{RobotKind, RobotSpec};
use joey_core::sensing::SensorSpec;
use joey_core::traverse::TraverseOptions;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Voxel traversal by exhaustive boundary-crossing enumeration: collect the
/// parameters of every lattice-plane crossing along the segment, sort them,
/// and read off the cell between consecutive crossings from the segment
/// midpoint. Independent of incremental DDA stepping.
pub fn oracle_segment_cells(grid: &VoxelGrid, from: &Vec3, to: &Vec3) -> Vec<[i64; 3]> {
    let res = grid.resolution();
    let origin = grid.origin();
    let d = to - from;
    let mut ts = vec![0.0f64];
    for axis in 0..3 {
        if d[axis].abs() < 1e-15 {
            continue;
        }
        let lo = (from[axis].min(to[axis]) - origin[axis]) / res;
        let hi = (from[axis].max(to[axis]) - origin[axis]) / res;
        let mut k = lo.ceil() as i64;
        while (k as f64) <= hi {
            let coord = origin[axis] + k as f64 * res;
            let t = (coord - from[axis]) / d[axis];
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
            k += 1;
        }
    }
    ts.push(1.0);
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-13);

    let mut cells = Vec::new();
    for w in ts.windows(2) {
        let mid = from + d * ((w[0] + w[1]) * 0.5);
        let mut c = [0i64; 3];
        for axis in 0..3 {
            c[axis] = ((mid[axis] - origin[axis]) / res).floor() as i64;
        }
        if cells.last() != Some(&c) {
            cells.push(c);
        }
    }
    cells
}

/// First-occupied-hit semantics re-derived over the oracle traversal.
/// Returns the hit cell if its center is within range.
pub fn oracle_raycast(world: &VoxelGrid, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<[i64; 3]> {
    let end = origin + dir * max_range;
    for c in oracle_segment_cells(world, origin, &end) {
        match world.state_i64(c) {
            Some(CellState::Occupied) => {
                let center = world.center_i64(c);
                if (center - origin).norm() <= max_range {
                    return Some(c);
                }
                return None;
            }
            Some(_) => {}
            None => return None,
        }
    }
    None
}

/// Per-voxel visibility gain, scalar re-derivation: for every unknown cell,
/// range test, FOV test via explicit angles, and line-of-sight over the
/// oracle traversal.
pub fn oracle_gain_cells(map: &VoxelGrid, pose: &Pose, sensor: &SensorSpec) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    let half_h = sensor.fov_h.to_radians() / 2.0;
    let half_v = sensor.fov_v.to_radians() / 2.0;
    let full_circle = sensor.fov_h >= 360.0 - 1e-9;
    for (c, s) in map.iter() {
        if s != CellState::Unknown {
            continue;
        }
        let center = map.center(c);
        let d = center - pose.position;
        let r = d.norm();
        if r > sensor.max_range {
            continue;
        }
        if r >= 1e-9 {
            let horiz = (d.x * d.x + d.y * d.y).sqrt();
            let el = d.z.atan2(horiz);
            if el.abs() > half_v + 1e-12 {
                continue;
            }
            if !full_circle && horiz >= 1e-9 {
                let mut az = d.y.atan2(d.x) - pose.yaw;
                while az > core::f64::consts::PI {
                    az -= core::f64::consts::TAU;
                }
                while az <= -core::f64::consts::PI {
                    az += core::f64::consts::TAU;
                }
                if az.abs() > half_h + 1e-12 {
                    continue;
                }
            }
            // Line of sight: no occupied cell before the target.
            let target = [c[0] as i64, c[1] as i64, c[2] as i64];
            let mut blocked = false;
            for cell in oracle_segment_cells(map, &pose.position, &center) {
                if cell == target {
                    break;
                }
                if map.state_i64(cell) == Some(CellState::Occupied) {
                    blocked = true;
                    break;
                }
            }
            if blocked {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Brute-force footprint sweep for traversability, re-deriving the support
/// and collision rules with exhaustive scalar scans.
pub fn oracle_traversable(grid: &VoxelGrid, from: &Pose, to: &Pose, robot: &RobotSpec, opts: &TraverseOptions) -> bool {
    if grid.state_at(&from.position).is_none() || grid.state_at(&to.position).is_none() {
        return false;
    }
    let res = grid.resolution();
    let blocked = |state: Option<CellState>| match state {
        Some(CellState::Occupied) | None => true,
        Some(CellState::Unknown) => opts.unknown_blocks,
        Some(CellState::Free) => false,
    };
    // Exhaustive collision check: every grid cell versus the body sphere.
    let body_collides = |p: &Vec3, radius: f64| -> bool {
        for (c, s) in grid.iter() {
            let center = grid.center(c);
            if (center - p).norm() <= radius + 1e-9 && blocked(Some(s)) {
                return true;
            }
        }
        false
    };

    match robot.kind {
        RobotKind::Aerial => {
            let len = (to.position - from.position).norm();
            let n = (len / res).ceil().max(1.0) as usize;
            for i in 0..=n {
                let t = i as f64 / n as f64;
                let p = from.position + (to.position - from.position) * t;
                if body_collides(&p, robot.collision_radius) {
                    return false;
                }
            }
            true
        }
        RobotKind::Ground => {
            // Standing levels by exhaustive column scan.
            let floors = |x: f64, y: f64| -> Vec<f64> {
                let mut out = Vec::new();
                let i = ((x - grid.origin().x) / res).floor() as i64;
                let j = ((y - grid.origin().y) / res).floor() as i64;
                let [nx, ny, nz] = grid.dims();
                if i < 0 || j < 0 || i >= nx as i64 || j >= ny as i64 {
                    return out;
                }
                for k in 0..nz as i64 - 1 {
                    if grid.state_i64([i, j, k]) != Some(CellState::Occupied) {
                        continue;
                    }
                    let stand = grid.state_i64([i, j, k + 1]);
                    let head = grid.state_i64([i, j, k + 2]);
                    let stand_ok = !blocked(stand);
                    let head_ok = head.map_or(false, |s| s != CellState::Occupied);
                    if stand_ok && head_ok {
                        out.push(grid.origin().z + (k as f64 + 1.5) * res);
                    }
                }
                out
            };
            let nearest = |x: f64, y: f64, z: f64| -> Option<f64> {
                let mut best: Option<f64> = None;
                for f in floors(x, y) {
                    best = match best {
                        None => Some(f),
                        Some(b) => {
                            if (f - z).abs() + 1e-9 < (b - z).abs() {
                                Some(f)
                            } else {
                                Some(b)
                            }
                        }
                    };
                }
                best
            };

            let a = from.position;
            let b = to.position;
            let mut z_prev = match nearest(a.x, a.y, a.z) {
                Some(z) if (z - a.z).abs() <= res / 2.0 + 1e-9 => z,
                _ => return false,
            };
            let horiz = ((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt();
            let n = (horiz / res).ceil().max(1.0) as usize;
            for i in 0..=n {
                let t = i as f64 / n as f64;
                let x = a.x + (b.x - a.x) * t;
                let y = a.y + (b.y - a.y) * t;
                let z = match nearest(x, y, z_prev) {
                    Some(z) => z,
                    None => return false,
                };
                if (z - z_prev).abs() > robot.max_step_height + 1e-9 {
                    return false;
                }
                let body = Vec3::new(x, y, z + robot.collision_radius);
                if body_collides(&body, robot.collision_radius) {
                    return false;
                }
                z_prev = z;
            }
            (z_prev - b.z).abs() <= res / 2.0 + 1e-9
        }
    }
}

/// Random world with occupied blobs, a guaranteed-free core, and no unknown
/// cells; used as a ground-truth world.
pub fn random_blob_world(rng: &mut ChaCha8Rng, dims: [usize; 3], n_blobs: usize) -> VoxelGrid {
    let res = 0.25;
    let mut g = VoxelGrid::new(Vec3::zeros(), res, dims, CellState::Free).unwrap();
    let ext = g.aabb().max;
    for _ in 0..n_blobs {
        let c = Vec3::new(
            rng.random_range(0.0..ext.x),
            rng.random_range(0.0..ext.y),
            rng.random_range(0.0..ext.z),
        );
        let half = Vec3::new(
            rng.random_range(res..ext.x * 0.15),
            rng.random_range(res..ext.y * 0.15),
            rng.random_range(res..ext.z * 0.3),
        );
        g.fill_box(&(c - half), &(c + half), CellState::Occupied);
    }
    g
}

/// Mark a random subset of cells unknown (for gain oracles on robot maps).
pub fn scatter_unknown(grid: &mut VoxelGrid, rng: &mut ChaCha8Rng, fraction: f64) {
    let cells: Vec<[usize; 3]> = grid.iter().map(|(c, _)| c).collect();
    for c in cells {
        if rng.random_range(0.0..1.0) < fraction {
            grid.set_state(c, CellState::Unknown);
        }
    }
}

/// A free position strictly inside the grid, at least `margin` from the
/// boundary, not inside an occupied cell.
pub fn random_free_pose(world: &VoxelGrid, rng: &mut ChaCha8Rng, margin: f64) -> Pose {
    let bb = world.aabb();
    loop {
        let p = Vec3::new(
            rng.random_range(bb.min.x + margin..bb.max.x - margin),
            rng.random_range(bb.min.y + margin..bb.max.y - margin),
            rng.random_range(bb.min.z + margin..bb.max.z - margin),
        );
        if world.state_at(&p) == Some(CellState::Free) {
            return Pose::new(p, rng.random_range(-core::f64::consts::PI..core::f64::consts::PI));
        }
    }
}
