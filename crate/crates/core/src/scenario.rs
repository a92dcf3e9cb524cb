//! Validated scenario descriptions: a ground-truth world, the two robot
//! platforms, and every planner/mission parameter. The text format that
//! produces these lives in the companion crate; this module owns the types
//! and the validation rules.

use alloc::string::String;

use crate::geom::{Aabb, Pose, Vec3};
use crate::grid::{CellState, VoxelGrid};
use crate::marsupial::{DeployDirection, MarsupialConfig};
use crate::planner::PlannerParams;
use crate::registration::RegistrationParams;
use crate::robot::{Extrinsics, RobotKind, RobotSpec};
use crate::traverse::{body_clear, nearest_floor, TraverseOptions};

/// What the carrier does once the passenger is airborne.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeployPolicy {
    /// Keep exploring its own frontiers.
    Continue,
    /// Hold at the deployment point until the passenger lands, then home.
    Wait,
    /// Return to mission start immediately.
    Home,
}

/// Which agents take part in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeamConfig {
    Marsupial,
    GroundOnly,
    AerialOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissionConfig {
    /// Simulation step, seconds.
    pub dt: f64,
    pub policy: DeployPolicy,
    pub team: TeamConfig,
    pub direction: DeployDirection,
    /// Inter-agent radio range, meters.
    pub comm_range: f64,
    /// Message channel latency, seconds.
    pub channel_latency: f64,
    /// Message drop probability in [0, 1).
    pub channel_drop: f64,
    /// Resend interval for unacknowledged handoffs, seconds.
    pub handoff_retry: f64,
    /// Co-localization attempts before the passenger faults.
    pub coloc_retries: u32,
    /// Mission wall cap as a multiple of combined endurance.
    pub mission_cap_factor: f64,
    /// Safety factor on the estimated homing time.
    pub homing_safety: f64,
    /// Per-step Gaussian odometry perturbation (sigma, meters); 0 disables.
    pub odom_sigma: f64,
    /// Gaussian range jitter on scans (sigma, meters); 0 disables.
    pub range_jitter_sigma: f64,
    /// How far past a frontier vertex the approach path extends toward the
    /// unknown volume, meters.
    pub frontier_extension: f64,
    /// Frontier clusters whose unknown centroids are farther apart than
    /// this are considered diverging work, eligible for deployment.
    pub divergence_dist: f64,
    /// After deployment the carrier skips frontiers within this radius of
    /// the ceded region.
    pub deconflict_radius: f64,
    /// Periodic map-sync attempt interval while in comm range, seconds.
    pub sync_interval: f64,
    /// Unified-map block edge length, meters.
    pub block_edge: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            policy: DeployPolicy::Continue,
            team: TeamConfig::Marsupial,
            direction: DeployDirection::Up,
            comm_range: 15.0,
            channel_latency: 0.2,
            channel_drop: 0.0,
            handoff_retry: 2.0,
            coloc_retries: 3,
            mission_cap_factor: 4.0,
            homing_safety: 1.25,
            odom_sigma: 0.0,
            range_jitter_sigma: 0.0,
            frontier_extension: 6.0,
            divergence_dist: 10.0,
            deconflict_radius: 10.0,
            sync_interval: 10.0,
            block_edge: 10.0,
        }
    }
}

/// All tunables of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub planner_ground: PlannerParams,
    pub planner_aerial: PlannerParams,
    pub marsupial: MarsupialConfig,
    pub registration: RegistrationParams,
    pub mission: MissionConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            planner_ground: PlannerParams::default(),
            planner_aerial: PlannerParams {
                local_bbox: Vec3::new(20.0, 20.0, 10.0),
                ..PlannerParams::default()
            },
            marsupial: MarsupialConfig::default(),
            registration: RegistrationParams::default(),
            mission: MissionConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// A fully validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub world: VoxelGrid,
    pub start_pose: Pose,
    pub ground: RobotSpec,
    pub aerial: RobotSpec,
    pub extrinsics: Extrinsics,
    pub global_bbox: Aabb,
    pub config: SimConfig,
}

impl ScenarioSpec {
    /// Check every scenario invariant; returns a message naming the violated
    /// one otherwise.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: &str| Err(ScenarioError::Invalid(String::from(m)));
        if self.world.count(CellState::Unknown) != 0 {
            return invalid("ground-truth world contains Unknown cells");
        }
        if !self.world.contains_point(&self.start_pose.position) {
            return invalid("start_pose lies outside the world");
        }
        if self.world.state_at(&self.start_pose.position) != Some(CellState::Free) {
            return invalid("start_pose lies in non-Free space");
        }
        let opts = TraverseOptions::default();
        match nearest_floor(
            &self.world,
            self.start_pose.position.x,
            self.start_pose.position.y,
            self.start_pose.position.z,
            &opts,
        ) {
            Some(z) if (z - self.start_pose.position.z).abs() <= self.world.resolution() / 2.0 + 1e-9 => {}
            _ => return invalid("start_pose is not ground-traversable (no supporting floor)"),
        }
        let body = self.start_pose.position + Vec3::new(0.0, 0.0, self.ground.collision_radius);
        if !body_clear(&self.world, &body, self.ground.collision_radius, &opts) {
            return invalid("start_pose is in collision for the ground robot");
        }
        if self.ground.kind != RobotKind::Ground || self.aerial.kind != RobotKind::Aerial {
            return invalid("robot kinds must be one ground and one aerial");
        }
        self.ground.sensor.validate().map_err(|e| ScenarioError::Invalid(alloc::format!("ground sensor: {e}")))?;
        self.aerial.sensor.validate().map_err(|e| ScenarioError::Invalid(alloc::format!("aerial sensor: {e}")))?;
        if self.global_bbox.is_empty() {
            return invalid("global_bbox is empty");
        }
        let world_box = self.world.aabb();
        if !world_box.contains(&self.global_bbox.min) || !world_box.contains(&self.global_bbox.max) {
            return invalid("global_bbox exceeds world bounds");
        }
        let m = &self.config.marsupial;
        if !(m.r_m > 0.0 && m.r_g > 0.0 && m.cluster_radius > 0.0) {
            return invalid("marsupial radii must be positive");
        }
        if !(0.0..1.0).contains(&m.covered_penalty) || m.vertical_bonus < 0.0 {
            return invalid("marsupial modulation parameters out of range");
        }
        let mc = &self.config.mission;
        if !(mc.dt > 0.0) || !(0.0..1.0).contains(&mc.channel_drop) {
            return invalid("mission config out of range");
        }
        for p in [&self.config.planner_ground, &self.config.planner_aerial] {
            if p.n_samples == 0 || !(p.edge_radius > 0.0) || !(p.completion_gain_threshold > 0.0) {
                return invalid("planner params out of range");
            }
        }
        Ok(())
    }
}
