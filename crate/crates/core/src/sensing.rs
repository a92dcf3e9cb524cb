//! Simulated range sensing: ray casting against a ground-truth world and
//! integration of the resulting scans into a robot's occupancy map.

use alloc::vec::Vec;

use crate::geom::{Pose, Vec3};
use crate::grid::{CellState, VoxelGrid};
use crate::math;

/// Angular sampling pattern and range of a spinning range sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    /// Horizontal field of view, degrees, centered on the heading.
    pub fov_h: f64,
    /// Vertical field of view, degrees, centered on the horizon.
    pub fov_v: f64,
    /// Considered maximum range in meters.
    pub max_range: f64,
    /// Azimuth sample count across `fov_h`.
    pub rays_h: usize,
    /// Elevation sample count across `fov_v`.
    pub rays_v: usize,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("invalid sensor spec: {0}")]
    BadSpec(&'static str),
    #[error("pose ({0:.3}, {1:.3}, {2:.3}) outside world bounds")]
    PoseOutOfBounds(f64, f64, f64),
}

impl SensorSpec {
    pub fn new(fov_h: f64, fov_v: f64, max_range: f64, rays_h: usize, rays_v: usize) -> Result<Self, SensingError> {
        let s = Self { fov_h, fov_v, max_range, rays_h, rays_v };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SensingError> {
        if !(self.fov_h > 0.0 && self.fov_h <= 360.0) {
            return Err(SensingError::BadSpec("fov_h must be in (0, 360]"));
        }
        if !(self.fov_v > 0.0 && self.fov_v <= 180.0) {
            return Err(SensingError::BadSpec("fov_v must be in (0, 180]"));
        }
        if !(self.max_range > 0.0) {
            return Err(SensingError::BadSpec("max_range must be positive"));
        }
        if self.rays_h == 0 || self.rays_v == 0 {
            return Err(SensingError::BadSpec("ray counts must be positive"));
        }
        Ok(())
    }

    /// True when the sensor sweeps the full circle, in which case azimuth
    /// rings wrap around.
    pub fn wraps(&self) -> bool {
        self.fov_h >= 360.0 - 1e-9
    }

    /// Sensor-frame unit direction of ray (i, j); azimuth bin centers span
    /// the horizontal FOV, elevation bin centers the vertical FOV.
    pub fn ray_direction(&self, i: usize, j: usize) -> Vec3 {
        let fh = math::deg(self.fov_h);
        let fv = math::deg(self.fov_v);
        let az = -fh / 2.0 + (i as f64 + 0.5) * fh / self.rays_h as f64;
        let el = -fv / 2.0 + (j as f64 + 0.5) * fv / self.rays_v as f64;
        let (ce, se) = (math::cos(el), math::sin(el));
        Vec3::new(ce * math::cos(az), ce * math::sin(az), se)
    }

    /// Angular test used by gain evaluation: is the world-frame offset `d`
    /// inside the FOV cone of a sensor heading `yaw`?
    pub fn direction_in_fov(&self, yaw: f64, d: &Vec3) -> bool {
        let horiz = math::hypot(d.x, d.y);
        let r = d.norm();
        if r < 1e-9 {
            return true;
        }
        let el = math::atan2(d.z, horiz);
        if el.abs() > math::deg(self.fov_v) / 2.0 + 1e-12 {
            return false;
        }
        if self.wraps() {
            return true;
        }
        if horiz < 1e-9 {
            // Straight up/down with a partial horizontal FOV: azimuth moot.
            return true;
        }
        let az = math::normalize_angle(math::atan2(d.y, d.x) - yaw);
        az.abs() <= math::deg(self.fov_h) / 2.0 + 1e-12
    }
}

/// One ray of a scan. `point` is in the sensor frame: the center of the first
/// occupied voxel for a hit, or the max-range point along the nominal ray
/// direction for a miss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayReturn {
    pub point: Vec3,
    pub hit: bool,
}

/// A full sweep, stored ring-major: index `j * rays_h + i` is azimuth step
/// `i` on elevation ring `j`. Ring neighbors are the basis for the curvature
/// features in [`crate::features`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPointCloud {
    pub rays_h: usize,
    pub rays_v: usize,
    /// Whether azimuth rings wrap (full 360 degree sweep).
    pub wraps: bool,
    pub returns: Vec<RayReturn>,
}

impl ScanPointCloud {
    pub fn ray(&self, i: usize, j: usize) -> &RayReturn {
        &self.returns[j * self.rays_h + i]
    }

    pub fn hit_count(&self) -> usize {
        self.returns.iter().filter(|r| r.hit).count()
    }
}

/// Voxel cells crossed by the segment `from -> to`, in order, as
/// (cell, entry parameter t in [0, 1]). Classic incremental grid traversal;
/// cells outside the grid are skipped but traversal continues so rays may
/// re-enter after leaving (cannot happen for convex grids, but keeps the
/// iterator total).
pub fn segment_cells(grid: &VoxelGrid, from: &Vec3, to: &Vec3) -> SegmentCells {
    let d = to - from;
    let res = grid.resolution();
    let origin = grid.origin();
    let cell = grid.cell_of(from);
    let mut step = [0i64; 3];
    let mut t_delta = [f64::INFINITY; 3];
    let mut t_max = [f64::INFINITY; 3];
    for a in 0..3 {
        if d[a] > 0.0 {
            step[a] = 1;
            t_delta[a] = res / d[a];
            let boundary = origin[a] + (cell[a] + 1) as f64 * res;
            t_max[a] = (boundary - from[a]) / d[a];
        } else if d[a] < 0.0 {
            step[a] = -1;
            t_delta[a] = -res / d[a];
            let boundary = origin[a] + cell[a] as f64 * res;
            t_max[a] = (boundary - from[a]) / d[a];
        }
    }
    SegmentCells {
        cell,
        step,
        t_delta,
        t_max,
        t: 0.0,
        done: false,
    }
}

pub struct SegmentCells {
    cell: [i64; 3],
    step: [i64; 3],
    t_delta: [f64; 3],
    t_max: [f64; 3],
    t: f64,
    done: bool,
}

impl Iterator for SegmentCells {
    /// (cell index triple, entry parameter along the segment)
    type Item = ([i64; 3], f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let out = (self.cell, self.t);
        // Advance along the axis with the nearest boundary; ties break by
        // axis order which keeps traversal deterministic.
        let mut axis = 0;
        for a in 1..3 {
            if self.t_max[a] < self.t_max[axis] {
                axis = a;
            }
        }
        self.t = self.t_max[axis];
        if !(self.t <= 1.0) {
            self.done = true;
        } else {
            self.cell[axis] += self.step[axis];
            self.t_max[axis] += self.t_delta[axis];
        }
        Some(out)
    }
}

/// Cast one sweep of the sensor from `pose` against a ground-truth world.
///
/// Each ray reports the first occupied voxel's center (expressed in the
/// sensor frame) if that center lies within `max_range`, otherwise a
/// max-range miss marker. Pure function: identical inputs yield identical
/// scans.
pub fn raycast_scan(world: &VoxelGrid, pose: &Pose, sensor: &SensorSpec) -> Result<ScanPointCloud, SensingError> {
    sensor.validate()?;
    if !world.contains_point(&pose.position) {
        let p = pose.position;
        return Err(SensingError::PoseOutOfBounds(p.x, p.y, p.z));
    }
    let mut returns = Vec::with_capacity(sensor.rays_h * sensor.rays_v);
    for j in 0..sensor.rays_v {
        for i in 0..sensor.rays_h {
            let dir_local = sensor.ray_direction(i, j);
            let dir_world = pose.rotate_to_world(&dir_local);
            let end = pose.position + dir_world * sensor.max_range;
            let mut ret = RayReturn {
                point: dir_local * sensor.max_range,
                hit: false,
            };
            for (cell, _t) in segment_cells(world, &pose.position, &end) {
                match world.state_i64(cell) {
                    Some(CellState::Occupied) => {
                        let center = world.center_i64(cell);
                        if (center - pose.position).norm() <= sensor.max_range {
                            ret = RayReturn {
                                point: pose.to_local(&center),
                                hit: true,
                            };
                        }
                        break;
                    }
                    Some(_) => {}
                    None => break,
                }
            }
            returns.push(ret);
        }
    }
    Ok(ScanPointCloud {
        rays_h: sensor.rays_h,
        rays_v: sensor.rays_v,
        wraps: sensor.wraps(),
        returns,
    })
}

/// Result of integrating one scan into a map: the cells that changed away
/// from `Unknown`.
#[derive(Debug, Clone, Default)]
pub struct ScanIntegration {
    pub newly_observed_cells: Vec<[usize; 3]>,
}

impl ScanIntegration {
    pub fn newly_observed(&self) -> usize {
        self.newly_observed_cells.len()
    }
}

/// Integrate a scan taken at `pose` into `map`.
///
/// Cells crossed before a ray's endpoint become `Free`, a hit endpoint
/// becomes `Occupied`. States only ever move up the `Unknown < Free <
/// Occupied` lattice, which makes the result of a multi-ray scan independent
/// of ray order and keeps already-seen walls from being carved away by
/// grazing rays.
pub fn integrate_scan(map: &mut VoxelGrid, pose: &Pose, scan: &ScanPointCloud) -> ScanIntegration {
    let mut out = ScanIntegration::default();
    for ray in &scan.returns {
        let end_world = pose.to_world(&ray.point);
        let end_cell = map.cell_of(&end_world);
        for (cell, _t) in segment_cells(map, &pose.position, &end_world) {
            if !map.in_bounds(cell) {
                continue;
            }
            let c = [cell[0] as usize, cell[1] as usize, cell[2] as usize];
            let at_end = cell == end_cell;
            if at_end && !ray.hit {
                // Max-range miss: the endpoint cell itself stays untouched.
                break;
            }
            let target = if at_end { CellState::Occupied } else { CellState::Free };
            let cur = map.state(c);
            if target > cur {
                if cur == CellState::Unknown {
                    out.newly_observed_cells.push(c);
                }
                map.set_state(c, target);
            }
            if at_end {
                break;
            }
        }
    }
    out
}
