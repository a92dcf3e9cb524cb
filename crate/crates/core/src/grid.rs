//! Ternary occupancy voxel grids.
//!
//! A [`VoxelGrid`] serves both as a ground-truth world (no `Unknown` cells)
//! and as a robot's online map (starts all-`Unknown`, filled in only through
//! scan integration). Cells are addressed either by integer index triple or
//! by metric position.

use alloc::{vec, vec::Vec};

use crate::geom::{Aabb, Vec3};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[repr(u8)]
pub enum CellState {
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

impl CellState {
    pub fn is_known(self) -> bool {
        self != CellState::Unknown
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("grid dims must be strictly positive, got {0}x{1}x{2}")]
    EmptyDims(usize, usize, usize),
    #[error("grid resolution must be positive")]
    BadResolution,
}

/// Regular 3D lattice of ternary cells.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    origin: Vec3,
    resolution: f64,
    dims: [usize; 3],
    cells: Vec<CellState>,
}

impl VoxelGrid {
    pub fn new(origin: Vec3, resolution: f64, dims: [usize; 3], fill: CellState) -> Result<Self, GridError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(GridError::EmptyDims(dims[0], dims[1], dims[2]));
        }
        if !(resolution > 0.0) {
            return Err(GridError::BadResolution);
        }
        Ok(Self {
            origin,
            resolution,
            dims,
            cells: vec![fill; dims[0] * dims[1] * dims[2]],
        })
    }

    /// An all-`Unknown` map with the same frame and shape as `self`.
    pub fn blank_copy(&self) -> Self {
        Self {
            origin: self.origin,
            resolution: self.resolution,
            dims: self.dims,
            cells: vec![CellState::Unknown; self.cells.len()],
        }
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn aabb(&self) -> Aabb {
        let ext = Vec3::new(
            self.dims[0] as f64 * self.resolution,
            self.dims[1] as f64 * self.resolution,
            self.dims[2] as f64 * self.resolution,
        );
        Aabb::new(self.origin, self.origin + ext)
    }

    fn linear(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    pub fn in_bounds(&self, c: [i64; 3]) -> bool {
        (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < self.dims[a])
    }

    pub fn contains_point(&self, p: &Vec3) -> bool {
        self.cell_at(p).is_some()
    }

    /// Integer cell coordinates of the cell containing `p`, unbounded.
    pub fn cell_of(&self, p: &Vec3) -> [i64; 3] {
        let mut c = [0i64; 3];
        for a in 0..3 {
            c[a] = math::floor((p[a] - self.origin[a]) / self.resolution) as i64;
        }
        c
    }

    /// Cell containing `p` if it lies inside the grid.
    pub fn cell_at(&self, p: &Vec3) -> Option<[usize; 3]> {
        let c = self.cell_of(p);
        if self.in_bounds(c) {
            Some([c[0] as usize, c[1] as usize, c[2] as usize])
        } else {
            None
        }
    }

    pub fn state(&self, c: [usize; 3]) -> CellState {
        self.cells[self.linear(c)]
    }

    /// State of a possibly out-of-bounds cell; `None` when outside.
    pub fn state_i64(&self, c: [i64; 3]) -> Option<CellState> {
        if self.in_bounds(c) {
            Some(self.state([c[0] as usize, c[1] as usize, c[2] as usize]))
        } else {
            None
        }
    }

    pub fn state_at(&self, p: &Vec3) -> Option<CellState> {
        self.cell_at(p).map(|c| self.state(c))
    }

    pub fn set_state(&mut self, c: [usize; 3], s: CellState) {
        let i = self.linear(c);
        self.cells[i] = s;
    }

    pub fn center(&self, c: [usize; 3]) -> Vec3 {
        self.center_i64([c[0] as i64, c[1] as i64, c[2] as i64])
    }

    pub fn center_i64(&self, c: [i64; 3]) -> Vec3 {
        Vec3::new(
            self.origin.x + (c[0] as f64 + 0.5) * self.resolution,
            self.origin.y + (c[1] as f64 + 0.5) * self.resolution,
            self.origin.z + (c[2] as f64 + 0.5) * self.resolution,
        )
    }

    pub fn count(&self, s: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == s).count()
    }

    /// Iterate all cells as (index triple, state).
    pub fn iter(&self) -> impl Iterator<Item = ([usize; 3], CellState)> + '_ {
        let [nx, ny, _] = self.dims;
        self.cells.iter().enumerate().map(move |(i, &s)| {
            let x = i % nx;
            let y = (i / nx) % ny;
            let z = i / (nx * ny);
            ([x, y, z], s)
        })
    }

    /// Set every cell whose center falls inside the metric box.
    ///
    /// The box is interpreted half-open per axis (`min <= center < max`) so
    /// adjacent boxes tile without double-writing a voxel layer.
    pub fn fill_box(&mut self, min: &Vec3, max: &Vec3, s: CellState) {
        for a in 0..3 {
            debug_assert!(min[a] <= max[a]);
        }
        let lo = self.cell_of(&(min + Vec3::repeat(self.resolution * 0.5)));
        let hi = self.cell_of(&(max - Vec3::repeat(self.resolution * 0.5)));
        for z in lo[2].max(0)..=hi[2].min(self.dims[2] as i64 - 1) {
            for y in lo[1].max(0)..=hi[1].min(self.dims[1] as i64 - 1) {
                for x in lo[0].max(0)..=hi[0].min(self.dims[0] as i64 - 1) {
                    self.set_state([x as usize, y as usize, z as usize], s);
                }
            }
        }
    }

    /// Set the outermost one-voxel layer on all six faces.
    pub fn fill_shell(&mut self, s: CellState) {
        let [nx, ny, nz] = self.dims;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1 {
                        self.set_state([x, y, z], s);
                    }
                }
            }
        }
    }

    /// Occupied staircase rising from `z0` to `z1` along `axis` (0=x, 1=y),
    /// spanning the box footprint. Steps are one voxel tall.
    pub fn fill_ramp(&mut self, min: &Vec3, max: &Vec3, z0: f64, z1: f64, axis: usize, reverse: bool) {
        let res = self.resolution;
        let steps = (math::ceil((z1 - z0) / res) as i64).max(1);
        let span = max[axis] - min[axis];
        let run = span / steps as f64;
        for i in 0..steps {
            let (mut lo, mut hi) = (*min, *max);
            let a0 = if reverse {
                max[axis] - (i + 1) as f64 * run
            } else {
                min[axis] + i as f64 * run
            };
            lo[axis] = a0;
            hi[axis] = a0 + run;
            lo.z = z0;
            hi.z = (z0 + (i + 1) as f64 * res).min(z1);
            self.fill_box(&lo, &hi, CellState::Occupied);
        }
    }
}
