//! Deterministic simulation and planning library for a marsupial robot team:
//! a ground carrier that ferries an aerial passenger, deploys it where the
//! terrain defeats legged locomotion, and keeps exploring on its own.
//!
//! The crate is split along the data that flows through a mission:
//!
//! - [`grid`] / [`sensing`] / [`traverse`]: ternary voxel worlds, simulated
//!   range scans, scan integration and per-robot traversability.
//! - [`mapstore`] / [`features`]: the block-hashed feature map shared between
//!   the two agents, with diff/merge synchronization.
//! - [`registration`]: scan-to-map registration and the deployment-time
//!   co-localization handshake.
//! - [`graph`] / [`planner`]: the bifurcated exploration planner (dense local
//!   random graphs, sparse global graph, frontiers, auto-homing).
//! - [`marsupial`]: the deployment graph, deployment-region selection, the
//!   handoff package and aerial gain modulation.
//! - [`mission`]: the two-agent discrete-time executive with endurance
//!   accounting, messaging and metrics.
//!
//! Everything is deterministic: a scenario plus a seed fully determines the
//! event log, the metrics and the final maps. The crate is `no_std`
//! (`alloc` required) so the simulation core stays free of host dependencies;
//! IO, the scenario text format and the CLI live in the companion crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod geom;
pub mod grid;
pub mod math;
pub mod sensing;
pub mod traverse;

pub mod features;
pub mod mapstore;

pub mod registration;

pub mod graph;
pub mod planner;

pub mod marsupial;

pub mod mission;
pub mod robot;
pub mod scenario;

pub use geom::{Aabb, Pose, Vec3};
pub use grid::{CellState, VoxelGrid};
pub use robot::{Extrinsics, RobotKind, RobotSpec};
