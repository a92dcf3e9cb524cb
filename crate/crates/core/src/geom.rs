//! Poses, axis-aligned boxes and small vector helpers.

use crate::math;
use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// A 4-DoF robot pose: position plus heading. Both platforms stabilize roll
/// and pitch, so the full SE(3) state never appears in the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    /// Heading in radians, normalized to (-pi, pi].
    pub yaw: f64,
}

impl Pose {
    pub fn new(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            yaw: math::normalize_angle(yaw),
        }
    }

    pub fn at(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::new(Vec3::new(x, y, z), yaw)
    }

    /// Rotate a local vector into the world frame (no translation).
    pub fn rotate_to_world(&self, v: &Vec3) -> Vec3 {
        let (s, c) = (math::sin(self.yaw), math::cos(self.yaw));
        Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
    }

    /// Rotate a world vector into the local frame (no translation).
    pub fn rotate_to_local(&self, v: &Vec3) -> Vec3 {
        let (s, c) = (math::sin(self.yaw), math::cos(self.yaw));
        Vec3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z)
    }

    /// Transform a point from the local frame into the world frame.
    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        self.position + self.rotate_to_world(p)
    }

    /// Transform a world point into the local frame.
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        let d = p - self.position;
        self.rotate_to_local(&d)
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.position - other.position).norm()
    }
}

/// Closed axis-aligned box, `min <= p <= max` per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn from_corners(a: &Vec3, b: &Vec3) -> Self {
        Self {
            min: a.inf(b),
            max: a.sup(b),
        }
    }

    /// Box of the given full extents centered on `c`.
    pub fn centered(c: &Vec3, extents: &Vec3) -> Self {
        let h = extents * 0.5;
        Self {
            min: c - h,
            max: c + h,
        }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn intersection(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.sup(&other.min),
            max: self.max.inf(&other.max),
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.min[a] > self.max[a])
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn inflated(&self, r: f64) -> Aabb {
        let d = Vec3::new(r, r, r);
        Aabb {
            min: self.min - d,
            max: self.max + d,
        }
    }
}
