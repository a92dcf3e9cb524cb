//! Bifurcated graph-based exploration planning.
//!
//! The local stage spans a dense random graph inside a bounding box around
//! the robot and picks the path with the best distance-discounted volumetric
//! gain. When no local path clears the gain threshold the stage reports
//! completion and the global stage takes over: a sparse incrementally built
//! graph assembled from executed paths and high-gain local vertices, used
//! for frontier re-positioning and auto-homing.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::geom::{Aabb, Pose, Vec3};
use crate::graph::{ExplorationGraph, GraphError, GraphKind, VertexId, VolumetricGain};
use crate::grid::{CellState, VoxelGrid};
use crate::math;
use crate::robot::{RobotKind, RobotSpec};
use crate::sensing::{segment_cells, SensorSpec};
use crate::traverse::{body_clear, stand_at, traversable, TraverseOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerParams {
    /// Full extents of the local sampling box, centered on the robot.
    pub local_bbox: Vec3,
    /// Vertex budget per local graph.
    pub n_samples: usize,
    /// Maximum edge length, meters. Global sparsification keeps vertices at
    /// least half this far apart.
    pub edge_radius: f64,
    /// Range used when counting unknown voxels for gain; overrides the
    /// sensor's considered range when smaller. Keeping this at or below the
    /// range resolvable by the sensor's angular sampling means reported gain
    /// is actually realizable by a scan.
    pub gain_range: Option<f64>,
    /// Path gain below which the local stage reports completion, m^3.
    pub completion_gain_threshold: f64,
    /// Distance discount rate for path gain accumulation, 1/m.
    pub path_gain_lambda: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            local_bbox: Vec3::new(20.0, 20.0, 6.0),
            n_samples: 300,
            edge_radius: 2.0,
            gain_range: None,
            completion_gain_threshold: 0.8,
            path_gain_lambda: 0.15,
        }
    }
}

impl PlannerParams {
    pub fn effective_gain_range(&self, sensor: &SensorSpec) -> f64 {
        match self.gain_range {
            Some(r) => r.min(sensor.max_range),
            None => sensor.max_range,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("root pose is in collision or unsupported")]
    RootInvalid,
    #[error("no valid samples inside the local bounding box")]
    NoValidSamples,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Score assigned to a vertex from its raw gain; identity volume for the
/// carrier, handoff-modulated for the passenger.
pub type GainScorer<'a> = &'a dyn Fn(&VolumetricGain, &Pose) -> f64;

pub fn volume_scorer(gain: &VolumetricGain, _pose: &Pose) -> f64 {
    gain.volume
}

/// Count unknown voxels observable from `pose`: within range and FOV and
/// with an occupied-free line of sight. `clip` restricts counting to a box
/// (the local stage clips to its bounding box).
pub fn evaluate_gain(map: &VoxelGrid, pose: &Pose, sensor: &SensorSpec, clip: Option<&Aabb>) -> VolumetricGain {
    gain_and_centroid(map, pose, sensor, clip).0
}

/// Gain plus the centroid of the counted voxels (used to aim frontier
/// approaches); `None` centroid when the gain is zero.
pub fn gain_and_centroid(
    map: &VoxelGrid,
    pose: &Pose,
    sensor: &SensorSpec,
    clip: Option<&Aabb>,
) -> (VolumetricGain, Option<Vec3>) {
    let range = sensor.max_range;
    let p = pose.position;
    let mut count = 0usize;
    let mut sum = Vec3::zeros();

    let mut probe = Aabb::new(p - Vec3::repeat(range), p + Vec3::repeat(range));
    if let Some(c) = clip {
        probe = probe.intersection(c);
    }
    probe = probe.intersection(&map.aabb());
    if probe.is_empty() {
        return (VolumetricGain::default(), None);
    }
    let lo = map.cell_of(&probe.min);
    let hi = map.cell_of(&probe.max);
    let dims = map.dims();
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1);

    for k in clamp(lo[2], dims[2])..=clamp(hi[2], dims[2]) {
        for j in clamp(lo[1], dims[1])..=clamp(hi[1], dims[1]) {
            for i in clamp(lo[0], dims[0])..=clamp(hi[0], dims[0]) {
                let cell = [i, j, k];
                if map.state_i64(cell) != Some(CellState::Unknown) {
                    continue;
                }
                let center = map.center_i64(cell);
                if let Some(c) = clip {
                    if !c.contains(&center) {
                        continue;
                    }
                }
                let d = center - p;
                if d.norm() > range {
                    continue;
                }
                if !sensor.direction_in_fov(pose.yaw, &d) {
                    continue;
                }
                if !line_of_sight(map, &p, cell) {
                    continue;
                }
                count += 1;
                sum += center;
            }
        }
    }
    let gain = VolumetricGain::from_count(count, map.resolution());
    let centroid = if count > 0 { Some(sum / count as f64) } else { None };
    (gain, centroid)
}

/// True when the straight segment from `from` to the target cell's center
/// crosses no occupied voxel. Unknown voxels do not block (the volume being
/// counted is itself unknown).
fn line_of_sight(map: &VoxelGrid, from: &Vec3, target: [i64; 3]) -> bool {
    let end = map.center_i64(target);
    for (cell, _t) in segment_cells(map, from, &end) {
        if cell == target {
            return true;
        }
        if map.state_i64(cell) == Some(CellState::Occupied) {
            return false;
        }
    }
    true
}

/// Sample a dense random graph in the local bounding box around `root`,
/// connect mutually reachable vertices within the edge radius, and keep the
/// component containing the root (vertex 0).
pub fn build_local_graph(
    map: &VoxelGrid,
    root: &Pose,
    robot: &RobotSpec,
    params: &PlannerParams,
    rng: &mut ChaCha8Rng,
    clip: Option<&Aabb>,
) -> Result<ExplorationGraph, PlannerError> {
    let opts = TraverseOptions::default();
    if !body_clear(map, &body_center(root.position, robot), robot.collision_radius, &opts) {
        return Err(PlannerError::RootInvalid);
    }

    let mut bbox = Aabb::centered(&root.position, &params.local_bbox).intersection(&map.aabb());
    if let Some(c) = clip {
        bbox = bbox.intersection(c);
    }
    if bbox.is_empty() {
        return Err(PlannerError::NoValidSamples);
    }

    let kind = match robot.kind {
        RobotKind::Ground => GraphKind::LocalGround,
        RobotKind::Aerial => GraphKind::LocalAerial,
    };
    let mut graph = ExplorationGraph::new(kind);
    graph.add_vertex(*root);

    let mut accepted: Vec<Vec3> = Vec::new();
    let mut attempts = 0usize;
    let max_attempts = params.n_samples.saturating_mul(40).max(400);
    while accepted.len() < params.n_samples && attempts < max_attempts {
        attempts += 1;
        let draw = Vec3::new(
            rng.random_range(bbox.min.x..=bbox.max.x),
            rng.random_range(bbox.min.y..=bbox.max.y),
            rng.random_range(bbox.min.z..=bbox.max.z),
        );
        let candidate = match robot.kind {
            RobotKind::Ground => {
                let Some(z) = stand_at(map, draw.x, draw.y, draw.z, &opts) else {
                    continue;
                };
                let p = Vec3::new(draw.x, draw.y, z);
                if !bbox.contains(&p) {
                    continue;
                }
                p
            }
            RobotKind::Aerial => {
                if map.state_at(&draw) != Some(CellState::Free) {
                    continue;
                }
                draw
            }
        };
        if !body_clear(map, &body_center(candidate, robot), robot.collision_radius, &opts) {
            continue;
        }
        accepted.push(candidate);
    }
    if accepted.is_empty() {
        return Err(PlannerError::NoValidSamples);
    }
    for p in &accepted {
        graph.add_vertex(Pose::new(*p, 0.0));
    }

    // Connect pairs within the edge radius that pass the robot's
    // traversability check.
    let n = graph.len();
    for i in 0..n as u32 {
        for j in (i + 1)..n as u32 {
            let (a, b) = (VertexId(i), VertexId(j));
            let (pa, pb) = (graph.vertex(a).pose, graph.vertex(b).pose);
            let d = pa.distance(&pb);
            if d > params.edge_radius || d < 1e-9 {
                continue;
            }
            if traversable(map, &pa, &pb, robot, &opts) {
                graph.add_edge(a, b, d);
            }
        }
    }

    let component = graph.component_of(VertexId(0));
    graph.retain(&component);
    Ok(graph)
}

fn body_center(p: Vec3, robot: &RobotSpec) -> Vec3 {
    match robot.kind {
        // Ground poses sit at the standing voxel center; lift the body
        // sphere so it rests on the feet rather than in the floor.
        RobotKind::Ground => p + Vec3::new(0.0, 0.0, robot.collision_radius),
        RobotKind::Aerial => p,
    }
}

/// Evaluate raw gain and score for every vertex of a graph.
pub fn evaluate_graph_gains(
    graph: &mut ExplorationGraph,
    map: &VoxelGrid,
    sensor: &SensorSpec,
    params: &PlannerParams,
    clip: Option<&Aabb>,
    scorer: GainScorer<'_>,
) {
    let mut gain_sensor = *sensor;
    gain_sensor.max_range = params.effective_gain_range(sensor);
    for id in graph.ids().collect::<Vec<_>>() {
        let pose = graph.vertex(id).pose;
        let gain = evaluate_gain(map, &pose, &gain_sensor, clip);
        let v = graph.vertex_mut(id);
        v.gain = gain;
        v.score = scorer(&gain, &pose);
    }
}

/// Best exploration path in a local graph: over the shortest-path tree from
/// the root, maximize the sum of distance-discounted vertex scores. Ties
/// break to the smallest vertex id. Returns the vertex sequence from the
/// root and the winning accumulated gain.
pub fn best_local_path(graph: &ExplorationGraph, params: &PlannerParams) -> (Vec<VertexId>, f64) {
    let root = VertexId(0);
    if graph.is_empty() {
        return (Vec::new(), 0.0);
    }
    let (dist, parent) = graph.dijkstra(root);
    let mut best_id = root;
    let mut best_score = discounted(graph, root, 0.0, params);

    let mut acc = alloc::vec![f64::NEG_INFINITY; graph.len()];
    acc[root.index()] = best_score;
    // Vertices sorted by distance so parents are finished first.
    let mut order: Vec<VertexId> = graph.ids().filter(|v| dist[v.index()].is_finite()).collect();
    order.sort_by(|a, b| {
        dist[a.index()]
            .partial_cmp(&dist[b.index()])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });
    for v in order {
        if v == root {
            continue;
        }
        let p = parent[v.index()].expect("finite distance implies a parent");
        acc[v.index()] = acc[p.index()] + discounted(graph, v, dist[v.index()], params);
        if acc[v.index()] > best_score {
            best_score = acc[v.index()];
            best_id = v;
        }
    }

    // Reconstruct root -> best.
    let mut path = Vec::new();
    let mut cur = best_id;
    loop {
        path.push(cur);
        match parent[cur.index()] {
            Some(p) => cur = p,
            None => break,
        }
    }
    path.reverse();
    (path, best_score)
}

fn discounted(graph: &ExplorationGraph, v: VertexId, dist: f64, params: &PlannerParams) -> f64 {
    graph.vertex(v).score * math::exp(-params.path_gain_lambda * dist)
}

/// The local stage reports completion when no path clears the gain
/// threshold (strictly below).
pub fn local_completion(graph: &ExplorationGraph, params: &PlannerParams) -> bool {
    best_local_path(graph, params).1 < params.completion_gain_threshold
}

/// Fold an executed path and the promising vertices of a local graph into
/// the sparse global graph. New vertices keep at least `edge_radius / 2`
/// spacing from existing ones and connect to every existing vertex in edge
/// range that passes the traversability check; unconnectable candidates are
/// dropped so the global graph stays connected.
pub fn update_global_graph(
    global: &mut ExplorationGraph,
    local: &ExplorationGraph,
    executed_path: &[Pose],
    map: &VoxelGrid,
    robot: &RobotSpec,
    params: &PlannerParams,
) {
    let mut candidates: Vec<Pose> = executed_path.to_vec();
    for (_, v) in local.vertices() {
        if v.score >= params.completion_gain_threshold {
            candidates.push(v.pose);
        }
    }
    for pose in candidates {
        try_insert_global(global, &pose, map, robot, params);
    }
}

/// Insert one pose into the global graph honoring spacing and connectivity;
/// returns the vertex standing for it (either the pre-existing nearby vertex
/// or the newly inserted one).
pub fn try_insert_global(
    global: &mut ExplorationGraph,
    pose: &Pose,
    map: &VoxelGrid,
    robot: &RobotSpec,
    params: &PlannerParams,
) -> Option<VertexId> {
    let opts = TraverseOptions::default();
    let spacing = params.edge_radius / 2.0;
    if let Some(near) = global.nearest_vertex(&pose.position) {
        if global.vertex(near).pose.distance(pose) < spacing {
            return Some(near);
        }
    }
    if global.is_empty() {
        return Some(global.add_vertex(*pose));
    }
    // Collect connectable existing vertices before mutating.
    let mut links: Vec<(VertexId, f64)> = Vec::new();
    for (id, v) in global.vertices() {
        let d = v.pose.distance(pose);
        if d <= params.edge_radius && traversable(map, &v.pose, pose, robot, &opts) {
            links.push((id, d));
        }
    }
    if links.is_empty() {
        // Fall back to the nearest vertex if directly reachable; otherwise
        // drop the candidate to preserve connectivity.
        let near = global.nearest_vertex(&pose.position)?;
        let v = global.vertex(near).pose;
        if traversable(map, &v, pose, robot, &opts) {
            links.push((near, v.distance(pose)));
        } else {
            return None;
        }
    }
    let id = global.add_vertex(*pose);
    for (nb, d) in links {
        global.add_edge(id, nb, d);
    }
    Some(id)
}

/// A frontier candidate produced by [`detect_frontiers`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frontier {
    pub id: VertexId,
    pub score: f64,
    /// Centroid of the unknown volume observable from the vertex.
    pub unknown_centroid: Vec3,
}

/// Refresh global vertex gains against the current map and flag frontiers:
/// vertices whose refreshed score clears the completion threshold.
/// Prioritized by score descending, ties by distance to `from` ascending,
/// then by id.
pub fn detect_frontiers(
    global: &mut ExplorationGraph,
    map: &VoxelGrid,
    sensor: &SensorSpec,
    params: &PlannerParams,
    from: &Pose,
    scorer: GainScorer<'_>,
) -> Vec<Frontier> {
    let mut out = Vec::new();
    for id in global.ids().collect::<Vec<_>>() {
        let pose = global.vertex(id).pose;
        let (gain, centroid) = gain_and_centroid(map, &pose, sensor, None);
        let score = scorer(&gain, &pose);
        let v = global.vertex_mut(id);
        v.gain = gain;
        v.score = score;
        v.frontier = score >= params.completion_gain_threshold;
        if v.frontier {
            out.push(Frontier {
                id,
                score,
                unknown_centroid: centroid.unwrap_or(pose.position),
            });
        }
    }
    let dist = |f: &Frontier| (global.vertex(f.id).pose.position - from.position).norm();
    out.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(dist(a).partial_cmp(&dist(b)).unwrap_or(core::cmp::Ordering::Equal))
            .then(a.id.cmp(&b.id))
    });
    out
}

/// Shortest return path to the home vertex.
pub fn auto_home(global: &ExplorationGraph, current: VertexId) -> Result<(Vec<VertexId>, f64), GraphError> {
    let home = global.home_vertex().ok_or(GraphError::NoHome)?;
    global.shortest_path(current, home)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn room_world() -> VoxelGrid {
        // 10 x 10 x 3 m room with occupied shell.
        let mut g = VoxelGrid::new(Vec3::zeros(), 0.25, [40, 40, 12], CellState::Free).unwrap();
        g.fill_shell(CellState::Occupied);
        g
    }

    fn ground() -> RobotSpec {
        RobotSpec::ground_default()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn small_params() -> PlannerParams {
        PlannerParams {
            local_bbox: Vec3::new(12.0, 12.0, 3.0),
            n_samples: 60,
            ..PlannerParams::default()
        }
    }

    const STAND_Z: f64 = 0.375;

    #[test]
    fn bbox_inside_wall_errors() {
        let mut w = room_world();
        w.fill_box(&Vec3::new(0.25, 0.25, 0.25), &Vec3::new(9.75, 9.75, 2.75), CellState::Occupied);
        let root = Pose::at(5.0, 5.0, STAND_Z, 0.0);
        let err = build_local_graph(&w, &root, &ground(), &small_params(), &mut rng(1), None);
        assert!(err.is_err());
    }

    #[test]
    fn fixed_seed_graph_is_deterministic() {
        let w = room_world();
        let root = Pose::at(5.0, 5.0, STAND_Z, 0.0);
        let a = build_local_graph(&w, &root, &ground(), &small_params(), &mut rng(7), None).unwrap();
        let b = build_local_graph(&w, &root, &ground(), &small_params(), &mut rng(7), None).unwrap();
        assert_eq!(a.export_text(), b.export_text());
        assert!(a.len() > 10);
    }

    #[test]
    fn all_vertices_root_reachable() {
        let w = room_world();
        let root = Pose::at(5.0, 5.0, STAND_Z, 0.0);
        let g = build_local_graph(&w, &root, &ground(), &small_params(), &mut rng(3), None).unwrap();
        let comp = g.component_of(VertexId(0));
        assert_eq!(comp.len(), g.len());
    }

    #[test]
    fn gain_zero_in_fully_known_map() {
        let w = room_world();
        let pose = Pose::at(5.0, 5.0, 1.0, 0.0);
        let gain = evaluate_gain(&w, &pose, &ground().sensor, None);
        assert_eq!(gain.unknown_voxels, 0);
        assert_eq!(gain.volume, 0.0);
    }

    #[test]
    fn occluded_region_contributes_nothing() {
        let mut w = room_world();
        // Unknown pocket behind a full-height wall.
        w.fill_box(&Vec3::new(6.0, 0.25, 0.25), &Vec3::new(6.5, 9.75, 2.75), CellState::Occupied);
        w.fill_box(&Vec3::new(6.5, 0.25, 0.25), &Vec3::new(9.75, 9.75, 2.75), CellState::Unknown);
        let pose = Pose::at(3.0, 5.0, 1.0, 0.0);
        let gain = evaluate_gain(&w, &pose, &ground().sensor, None);
        assert_eq!(gain.unknown_voxels, 0, "wall must occlude the unknown pocket");
    }

    #[test]
    fn best_path_prefers_unknown_branch() {
        // Hand-built 5-vertex graph: branch A leads to scored vertices.
        let mut g = ExplorationGraph::new(GraphKind::LocalGround);
        for (x, y) in [(0.0, 0.0), (1.0, 0.5), (2.0, 1.0), (1.0, -0.5), (2.0, -1.0)] {
            g.add_vertex(Pose::at(x, y, 0.0, 0.0));
        }
        g.add_edge(VertexId(0), VertexId(1), 1.2);
        g.add_edge(VertexId(1), VertexId(2), 1.2);
        g.add_edge(VertexId(0), VertexId(3), 1.2);
        g.add_edge(VertexId(3), VertexId(4), 1.2);
        g.vertex_mut(VertexId(2)).score = 5.0;
        let (path, gain) = best_local_path(&g, &PlannerParams::default());
        assert_eq!(path, alloc::vec![VertexId(0), VertexId(1), VertexId(2)]);
        assert!(gain > 0.0);
    }

    #[test]
    fn zero_gain_gives_trivial_path() {
        let mut g = ExplorationGraph::new(GraphKind::LocalGround);
        g.add_vertex(Pose::at(0.0, 0.0, 0.0, 0.0));
        let v = g.add_vertex(Pose::at(1.0, 0.0, 0.0, 0.0));
        g.add_edge(VertexId(0), v, 1.0);
        let (path, gain) = best_local_path(&g, &PlannerParams::default());
        assert_eq!(path, alloc::vec![VertexId(0)]);
        assert_eq!(gain, 0.0);
        assert!(local_completion(&g, &PlannerParams::default()));
    }

    #[test]
    fn equal_scores_tie_break_to_smallest_id() {
        let mut g = ExplorationGraph::new(GraphKind::LocalGround);
        for (x, y) in [(0.0, 0.0), (1.0, 0.5), (1.0, -0.5)] {
            g.add_vertex(Pose::at(x, y, 0.0, 0.0));
        }
        g.add_edge(VertexId(0), VertexId(1), 1.0);
        g.add_edge(VertexId(0), VertexId(2), 1.0);
        g.vertex_mut(VertexId(1)).score = 2.0;
        g.vertex_mut(VertexId(2)).score = 2.0;
        let (path, _) = best_local_path(&g, &PlannerParams::default());
        assert_eq!(*path.last().unwrap(), VertexId(1));
    }

    #[test]
    fn completion_threshold_is_strict() {
        let mut g = ExplorationGraph::new(GraphKind::LocalGround);
        g.add_vertex(Pose::at(0.0, 0.0, 0.0, 0.0));
        let params = PlannerParams::default();
        g.vertex_mut(VertexId(0)).score = params.completion_gain_threshold;
        // Gain exactly at the threshold: not complete (strictly below).
        assert!(!local_completion(&g, &params));
        g.vertex_mut(VertexId(0)).score = params.completion_gain_threshold - 1e-9;
        assert!(local_completion(&g, &params));
    }

    #[test]
    fn global_update_sparsifies_and_connects() {
        let w = room_world();
        let robot = ground();
        let params = small_params();
        let mut global = ExplorationGraph::new(GraphKind::GlobalGround);
        let path: Vec<Pose> = (0..12).map(|i| Pose::at(1.0 + 0.5 * i as f64, 5.0, STAND_Z, 0.0)).collect();
        let empty_local = ExplorationGraph::new(GraphKind::LocalGround);
        update_global_graph(&mut global, &empty_local, &path, &w, &robot, &params);
        let first = global.len();
        assert!(first >= 2);
        update_global_graph(&mut global, &empty_local, &path, &w, &robot, &params);
        assert_eq!(global.len(), first, "repeat update must not duplicate vertices");
        // Spacing invariant.
        for (a, va) in global.vertices() {
            for (b, vb) in global.vertices() {
                if a < b {
                    assert!(va.pose.distance(&vb.pose) >= params.edge_radius / 2.0 - 1e-9);
                }
            }
        }
        // Connectivity invariant.
        assert_eq!(global.component_of(VertexId(0)).len(), global.len());
    }

    #[test]
    fn frontiers_empty_when_everything_known() {
        let w = room_world();
        let mut global = ExplorationGraph::new(GraphKind::GlobalGround);
        global.add_vertex(Pose::at(5.0, 5.0, STAND_Z, 0.0));
        let fr = detect_frontiers(
            &mut global,
            &w,
            &ground().sensor,
            &small_params(),
            &Pose::at(5.0, 5.0, STAND_Z, 0.0),
            &volume_scorer,
        );
        assert!(fr.is_empty());
    }

    #[test]
    fn auto_home_requires_home_flag() {
        let mut g = ExplorationGraph::new(GraphKind::GlobalGround);
        let a = g.add_vertex(Pose::at(0.0, 0.0, 0.0, 0.0));
        assert!(matches!(auto_home(&g, a), Err(GraphError::NoHome)));
        g.vertex_mut(a).home = true;
        let (path, len) = auto_home(&g, a).unwrap();
        assert!(path.is_empty());
        assert_eq!(len, 0.0);
    }
}
