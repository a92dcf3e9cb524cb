//! Scan-to-map registration and the deployment-time co-localization
//! handshake.
//!
//! The solver aligns a scan's edge/planar features against the unified map
//! by minimizing point-to-line and point-to-plane distances in an iterative
//! Gauss-Newton loop over the 4-DoF pose (x, y, z, yaw). Convergence is
//! declared when the incremental update drops below the configured
//! thresholds before the iteration budget runs out.

use alloc::vec::Vec;

use nalgebra::{Matrix4, Vector4};

use crate::features::{extract_features_local, FeatureLabel, FeatureParams};
use crate::geom::{Pose, Vec3};
use crate::mapstore::UnifiedMap;
use crate::math;
use crate::robot::Extrinsics;
use crate::sensing::ScanPointCloud;

/// Fraction of scan features that must find gated map neighbors for a
/// converged solve to count as a real alignment.
const MIN_MATCHED_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationParams {
    pub max_iterations: u32,
    /// Translation increment below which the solve is converged, meters.
    pub epsilon_trans: f64,
    /// Yaw increment below which the solve is converged, radians.
    pub epsilon_rot: f64,
    /// Correspondence gating distance, meters.
    pub corr_max_dist: f64,
    /// Mean residual above which a "converged" result is rejected as a
    /// wrong-basin alignment.
    pub residual_reject: f64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            epsilon_trans: 0.01,
            epsilon_rot: 0.005,
            corr_max_dist: 1.0,
            residual_reject: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegistrationFailure {
    /// No gated correspondences at the initial pose.
    EmptyCorrespondences,
    /// Iteration budget exhausted before the increments shrank.
    IterationLimit,
    /// Increments converged but the residual stayed above the rejection
    /// threshold (wrong basin).
    HighResidual,
    /// Normal equations unsolvable (degenerate geometry).
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub pose: Pose,
    pub converged: bool,
    pub iterations_used: u32,
    /// Mean point-to-feature distance at the final pose, meters.
    pub residual: f64,
    pub failure: Option<RegistrationFailure>,
    /// Mean residual per accepted iteration (diagnostic; non-increasing).
    pub residual_history: Vec<f64>,
}

struct Correspondences {
    /// (local point, line anchor, line unit direction)
    lines: Vec<(Vec3, Vec3, Vec3)>,
    /// (local point, plane anchor, plane unit normal)
    planes: Vec<(Vec3, Vec3, Vec3)>,
}

impl Correspondences {
    fn len(&self) -> usize {
        self.lines.len() + self.planes.len()
    }

    /// Mean absolute point-to-feature distance at `pose`.
    fn residual(&self, pose: &Pose) -> f64 {
        if self.len() == 0 {
            return f64::INFINITY;
        }
        let mut sum = 0.0;
        for (p, a, d) in &self.lines {
            let w = pose.to_world(p);
            let v = w - a;
            sum += (v - d * v.dot(d)).norm();
        }
        for (p, a, n) in &self.planes {
            let w = pose.to_world(p);
            sum += (w - a).dot(n).abs();
        }
        sum / self.len() as f64
    }
}

fn find_correspondences(
    edges: &[Vec3],
    planars: &[Vec3],
    pose: &Pose,
    map: &UnifiedMap,
    params: &RegistrationParams,
) -> CorrSet {
    let mut lines: Vec<((Vec3, Vec3, Vec3), f64)> = Vec::new();
    let mut planes: Vec<((Vec3, Vec3, Vec3), f64)> = Vec::new();
    for p in edges {
        let w = pose.to_world(p);
        let near = map.nearest_features(&w, FeatureLabel::Edge, 2, params.corr_max_dist);
        if near.len() == 2 {
            let dir = near[1] - near[0];
            if dir.norm() > 1e-6 {
                let d = dir.normalize();
                let v = w - near[0];
                let r = (v - d * v.dot(&d)).norm();
                lines.push(((*p, near[0], d), r));
            }
        }
    }
    for p in planars {
        let w = pose.to_world(p);
        let near = map.nearest_features(&w, FeatureLabel::Planar, 3, params.corr_max_dist);
        if near.len() == 3 {
            let n = (near[1] - near[0]).cross(&(near[2] - near[0]));
            if n.norm() > 1e-6 {
                let n = n.normalize();
                let r = (w - near[0]).dot(&n).abs();
                planes.push(((*p, near[0], n), r));
            }
        }
    }

    // Trim correspondences whose residual is far above the median: scan
    // points without a real counterpart in the map (surfaces only one
    // sensor has seen) otherwise fit spurious lines/planes that stall the
    // solve. The raw median is kept as a consensus measure: it stays high
    // at a wrong-basin alignment even though the trimmed set looks
    // self-consistent.
    let mut all: Vec<f64> = lines.iter().map(|&(_, r)| r).chain(planes.iter().map(|&(_, r)| r)).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    if all.is_empty() {
        return CorrSet {
            corr: Correspondences {
                lines: Vec::new(),
                planes: Vec::new(),
            },
            raw_median: f64::INFINITY,
            candidates: 0,
        };
    }
    let median = all[all.len() / 2];
    let gate = (3.0 * median).max(0.05);
    CorrSet {
        candidates: all.len(),
        corr: Correspondences {
            lines: lines.into_iter().filter(|&(_, r)| r <= gate).map(|(c, _)| c).collect(),
            planes: planes.into_iter().filter(|&(_, r)| r <= gate).map(|(c, _)| c).collect(),
        },
        raw_median: median,
    }
}

struct CorrSet {
    corr: Correspondences,
    raw_median: f64,
    /// Scan features that found any gated neighbors at all.
    candidates: usize,
}

/// One Gauss-Newton step over (tx, ty, tz, yaw). Returns `None` when the
/// normal equations are degenerate.
fn solve_increment(corr: &Correspondences, pose: &Pose) -> Option<Vector4<f64>> {
    let mut h = Matrix4::<f64>::zeros();
    let mut g = Vector4::<f64>::zeros();
    let (s, c) = (math::sin(pose.yaw), math::cos(pose.yaw));
    let dyaw_of = |p: &Vec3| Vec3::new(-s * p.x - c * p.y, c * p.x - s * p.y, 0.0);

    for (p, a, d) in &corr.lines {
        let w = pose.to_world(p);
        let v = w - a;
        let r = v - d * v.dot(d);
        let dy = dyaw_of(p);
        // Rows of the 3x4 Jacobian of r wrt (t, yaw): P * [I | dW/dyaw].
        for axis in 0..3 {
            let mut row = Vector4::<f64>::zeros();
            for col in 0..3 {
                let p_ac = if axis == col { 1.0 } else { 0.0 } - d[axis] * d[col];
                row[col] = p_ac;
            }
            let pd = dy - d * dy.dot(d);
            row[3] = pd[axis];
            h += row * row.transpose();
            g += row * r[axis];
        }
    }
    for (p, a, n) in &corr.planes {
        let w = pose.to_world(p);
        let r = (w - a).dot(n);
        let dy = dyaw_of(p);
        let row = Vector4::new(n.x, n.y, n.z, n.dot(&dy));
        h += row * row.transpose();
        g += row * r;
    }

    // Tiny ridge keeps the solve stable when one direction is barely
    // constrained.
    let ridge = 1e-9 * (h.trace().max(1.0));
    for i in 0..4 {
        h[(i, i)] += ridge;
    }
    h.cholesky().map(|ch| -ch.solve(&g))
}

fn apply_increment(pose: &Pose, delta: &Vector4<f64>) -> Pose {
    Pose::new(
        pose.position + Vec3::new(delta[0], delta[1], delta[2]),
        math::normalize_angle(pose.yaw + delta[3]),
    )
}

/// Register a scan against the unified map starting from `init`.
pub fn register_scan(
    scan: &ScanPointCloud,
    map: &UnifiedMap,
    init: &Pose,
    params: &RegistrationParams,
) -> RegistrationResult {
    let feats = extract_features_local(scan, &FeatureParams::default());
    let mut edges = Vec::new();
    let mut planars = Vec::new();
    for (p, label) in feats {
        match label {
            FeatureLabel::Edge => edges.push(p),
            FeatureLabel::Planar => planars.push(p),
        }
    }

    let mut pose = *init;
    let mut iterations = 0u32;
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut failure = None;
    let mut residual = f64::INFINITY;
    let mut raw_median = f64::INFINITY;
    let mut matched_fraction = 0.0;
    let feature_count = (edges.len() + planars.len()).max(1);

    while iterations < params.max_iterations {
        iterations += 1;
        let set = find_correspondences(&edges, &planars, &pose, map, params);
        if set.corr.len() < 8 {
            failure = Some(RegistrationFailure::EmptyCorrespondences);
            break;
        }
        residual = set.corr.residual(&pose);
        raw_median = set.raw_median;
        matched_fraction = set.candidates as f64 / feature_count as f64;

        let Some(delta) = solve_increment(&set.corr, &pose) else {
            failure = Some(RegistrationFailure::Degenerate);
            break;
        };
        let dt = Vec3::new(delta[0], delta[1], delta[2]).norm();
        let dr = delta[3].abs();
        if dt < params.epsilon_trans && dr < params.epsilon_rot {
            converged = true;
            history.push(residual);
            break;
        }

        // Accept the step only if the residual does not increase; back off
        // by halving otherwise. A fully stalled step ends the solve.
        let mut step = delta;
        let mut accepted = false;
        for _ in 0..4 {
            let trial = apply_increment(&pose, &step);
            let trial_set = find_correspondences(&edges, &planars, &trial, map, params);
            if trial_set.corr.len() >= 8 && trial_set.corr.residual(&trial) <= residual + 1e-12 {
                pose = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        history.push(residual);
        if !accepted {
            failure = Some(RegistrationFailure::IterationLimit);
            break;
        }
    }

    if !converged && failure.is_none() {
        failure = Some(RegistrationFailure::IterationLimit);
    }
    // Wrong-basin guard: a converged solve must also explain the bulk of
    // the scan, both in how many features found counterparts at all and in
    // the untrimmed median distance of those that did.
    if converged && (raw_median > params.residual_reject || matched_fraction < MIN_MATCHED_FRACTION) {
        converged = false;
        failure = Some(RegistrationFailure::HighResidual);
    }

    RegistrationResult {
        pose,
        converged,
        iterations_used: iterations,
        residual,
        failure,
        residual_history: history,
    }
}

/// Deployment-time co-localization: seed registration with the carrier's
/// pose composed with the mounting extrinsics. On success the returned pose
/// anchors the passenger's odometry in the unified frame.
pub fn colocalize(
    aerial_scan: &ScanPointCloud,
    shared_map: &UnifiedMap,
    ground_pose: &Pose,
    extrinsics: &Extrinsics,
    params: &RegistrationParams,
) -> RegistrationResult {
    let init = extrinsics.apply(ground_pose);
    register_scan(aerial_scan, shared_map, &init, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::extract_features;
    use crate::grid::{CellState, VoxelGrid};
    use crate::sensing::{raycast_scan, SensorSpec};

    /// Structured world: room with inner walls giving x, y and yaw
    /// constraints.
    fn corner_world() -> VoxelGrid {
        let mut g = VoxelGrid::new(Vec3::zeros(), 0.25, [64, 48, 16], CellState::Free).unwrap();
        g.fill_shell(CellState::Occupied);
        // Inner partitions.
        g.fill_box(&Vec3::new(6.0, 0.0, 0.0), &Vec3::new(6.5, 7.0, 4.0), CellState::Occupied);
        g.fill_box(&Vec3::new(10.0, 5.0, 0.0), &Vec3::new(16.0, 5.5, 4.0), CellState::Occupied);
        g
    }

    fn sensor() -> SensorSpec {
        SensorSpec::new(360.0, 30.0, 18.0, 180, 16).unwrap()
    }

    fn build_map(world: &VoxelGrid, poses: &[Pose]) -> UnifiedMap {
        let mut map = UnifiedMap::new(10.0, world.resolution(), Vec3::zeros(), 0);
        for pose in poses {
            let scan = raycast_scan(world, pose, &sensor()).unwrap();
            let feats = extract_features(&scan, pose, &FeatureParams::default());
            map.insert_points(&feats);
        }
        map
    }

    #[test]
    fn fixpoint_converges_fast() {
        let world = corner_world();
        let truth = Pose::at(3.0, 3.0, 1.4, 0.4);
        let map = build_map(&world, &[truth, Pose::at(9.0, 8.0, 1.4, -1.2)]);
        let scan = raycast_scan(&world, &truth, &sensor()).unwrap();
        let res = register_scan(&scan, &map, &truth, &RegistrationParams::default());
        assert!(res.converged, "failure: {:?}", res.failure);
        assert!(res.iterations_used <= 2, "iterations: {}", res.iterations_used);
        assert!((res.pose.position - truth.position).norm() < 0.01);
        assert!((res.pose.yaw - truth.yaw).abs() < 0.005);
    }

    #[test]
    fn recovers_from_perturbed_init() {
        let world = corner_world();
        let truth = Pose::at(3.5, 3.5, 1.4, 0.2);
        let map = build_map(&world, &[Pose::at(3.0, 3.0, 1.4, 0.0), Pose::at(8.0, 9.0, 1.4, 2.0)]);
        let scan = raycast_scan(&world, &truth, &sensor()).unwrap();
        let init = Pose::at(3.8, 3.2, 1.5, 0.2 + math::deg(5.0));
        let res = register_scan(&scan, &map, &init, &RegistrationParams::default());
        assert!(res.converged, "failure: {:?} residual {}", res.failure, res.residual);
        assert!(
            (res.pose.position - truth.position).norm() < 0.05,
            "position error {:.4}",
            (res.pose.position - truth.position).norm()
        );
        assert!(
            math::normalize_angle(res.pose.yaw - truth.yaw).abs() < math::deg(1.0),
            "yaw error {:.4}",
            res.pose.yaw - truth.yaw
        );
    }

    #[test]
    fn residual_history_non_increasing() {
        let world = corner_world();
        let truth = Pose::at(4.0, 4.0, 1.4, -0.3);
        let map = build_map(&world, &[Pose::at(3.0, 3.0, 1.4, 0.0)]);
        let scan = raycast_scan(&world, &truth, &sensor()).unwrap();
        let init = Pose::at(4.25, 3.8, 1.45, -0.3 + math::deg(4.0));
        let res = register_scan(&scan, &map, &init, &RegistrationParams::default());
        for w in res.residual_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "residuals increased: {:?}", res.residual_history);
        }
    }

    #[test]
    fn far_init_is_rejected() {
        let world = corner_world();
        let truth = Pose::at(3.0, 3.0, 1.4, 0.0);
        let map = build_map(&world, &[truth, Pose::at(12.0, 8.0, 1.4, 1.0)]);
        let scan = raycast_scan(&world, &truth, &sensor()).unwrap();
        // Initialized five meters away, in a different part of the room.
        let init = Pose::at(8.0, 3.0, 1.4, 0.0);
        let res = register_scan(&scan, &map, &init, &RegistrationParams::default());
        let wrong = (res.pose.position - truth.position).norm() > 0.5;
        assert!(
            !res.converged || !wrong,
            "converged into the wrong basin without rejection: residual {}",
            res.residual
        );
    }

    #[test]
    fn empty_map_is_distinct_error() {
        let world = corner_world();
        let truth = Pose::at(3.0, 3.0, 1.4, 0.0);
        let scan = raycast_scan(&world, &truth, &sensor()).unwrap();
        let empty = UnifiedMap::new(10.0, 0.25, Vec3::zeros(), 0);
        let res = register_scan(&scan, &empty, &truth, &RegistrationParams::default());
        assert!(!res.converged);
        assert_eq!(res.failure, Some(RegistrationFailure::EmptyCorrespondences));
    }

    #[test]
    fn colocalize_with_extrinsics() {
        let world = corner_world();
        let ground = Pose::at(3.0, 3.0, 0.9, 0.3);
        let ext = Extrinsics {
            translation: Vec3::new(0.0, 0.0, 0.4),
            yaw: math::PI / 2.0,
        };
        let carriage = ext.apply(&ground);
        let map = build_map(&world, &[ground, Pose::at(9.0, 8.0, 1.4, -1.0)]);
        let aerial_sensor = SensorSpec::new(360.0, 90.0, 18.0, 180, 32).unwrap();
        let scan = raycast_scan(&world, &carriage, &aerial_sensor).unwrap();
        let res = colocalize(&scan, &map, &ground, &ext, &RegistrationParams::default());
        assert!(res.converged, "failure: {:?}", res.failure);
        assert!((res.pose.position - carriage.position).norm() < 0.05);
        assert!(math::normalize_angle(res.pose.yaw - carriage.yaw).abs() < math::deg(1.0));
    }

    #[test]
    fn colocalize_without_map_fails() {
        let world = corner_world();
        let ground = Pose::at(3.0, 3.0, 0.9, 0.0);
        let empty = UnifiedMap::new(10.0, 0.25, Vec3::zeros(), 0);
        let aerial_sensor = SensorSpec::new(360.0, 90.0, 18.0, 90, 16).unwrap();
        let scan = raycast_scan(&world, &ground, &aerial_sensor).unwrap();
        let res = colocalize(&scan, &empty, &ground, &Extrinsics::identity(), &RegistrationParams::default());
        assert_eq!(res.failure, Some(RegistrationFailure::EmptyCorrespondences));
    }
}
