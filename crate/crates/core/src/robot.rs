//! Robot platform specifications and mounting extrinsics.

use crate::geom::{Pose, Vec3};
use crate::math;
use crate::sensing::SensorSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobotKind {
    Ground,
    Aerial,
}

/// Platform parameters relevant to the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotSpec {
    pub kind: RobotKind,
    pub sensor: SensorSpec,
    /// Nominal travel speed, m/s.
    pub nominal_speed: f64,
    /// Operating budget, seconds.
    pub endurance: f64,
    /// Tallest support-height change the platform can negotiate, meters.
    /// Only meaningful for ground robots.
    pub max_step_height: f64,
    /// Body radius for collision checks, meters.
    pub collision_radius: f64,
}

impl RobotSpec {
    /// Legged carrier defaults: 360x30 degree sensor considered to 20 m,
    /// 0.7 m/s, one hour of endurance.
    pub fn ground_default() -> Self {
        Self {
            kind: RobotKind::Ground,
            sensor: SensorSpec {
                fov_h: 360.0,
                fov_v: 30.0,
                max_range: 20.0,
                rays_h: 180,
                rays_v: 16,
            },
            nominal_speed: 0.7,
            endurance: 3600.0,
            max_step_height: 0.3,
            collision_radius: 0.35,
        }
    }

    /// Aerial passenger defaults: 360x90 degree sensor considered to 20 m,
    /// 1.0 m/s, twelve minutes of endurance.
    pub fn aerial_default() -> Self {
        Self {
            kind: RobotKind::Aerial,
            sensor: SensorSpec {
                fov_h: 360.0,
                fov_v: 90.0,
                max_range: 20.0,
                rays_h: 180,
                rays_v: 32,
            },
            nominal_speed: 1.0,
            endurance: 720.0,
            max_step_height: 0.0,
            collision_radius: 0.30,
        }
    }
}

/// Rigid 4-DoF mounting transform between the carrier body and the passenger
/// sensor: where the passenger sits while carried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    /// Offset in the carrier's body frame, meters.
    pub translation: Vec3,
    /// Heading offset, radians.
    pub yaw: f64,
}

impl Extrinsics {
    pub fn identity() -> Self {
        Self {
            translation: Vec3::zeros(),
            yaw: 0.0,
        }
    }

    /// Compose the carrier pose with this mounting transform.
    pub fn apply(&self, carrier: &Pose) -> Pose {
        Pose::new(
            carrier.to_world(&self.translation),
            math::normalize_angle(carrier.yaw + self.yaw),
        )
    }
}
