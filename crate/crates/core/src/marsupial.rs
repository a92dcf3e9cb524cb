//! Deployment planning for the carried aerial robot: the deployment graph
//! scored with the passenger's sensor, deployment-region identification and
//! selection, the handoff package, and post-deployment gain modulation.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::geom::{Aabb, Pose, Vec3};
use crate::graph::{ExplorationGraph, GraphKind, VertexId, VolumetricGain};
use crate::grid::VoxelGrid;
use crate::mapstore::{decode_blocks, encode_blocks, BlockPayload, MapError, UnifiedMap};
use crate::planner::evaluate_gain;
use crate::robot::RobotSpec;
use crate::sensing::SensorSpec;
use crate::traverse::{body_clear, stand_at, traversable, TraverseOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarsupialConfig {
    /// Deployment vertices must be farther than this from the carrier's
    /// current pose.
    pub r_m: f64,
    /// Exclusion radius around the carrier's own frontiers: work the ground
    /// robot will handle itself.
    pub r_g: f64,
    /// Single-linkage distance for clustering deployment candidates; also
    /// the coverage radius used by the gain penalty after handoff.
    pub cluster_radius: f64,
    /// Gain multiplier per meter of altitude away from the deployment
    /// height.
    pub vertical_bonus: f64,
    /// Multiplicative gain reduction inside areas already spanned by the
    /// deployment graph.
    pub covered_penalty: f64,
}

impl Default for MarsupialConfig {
    fn default() -> Self {
        Self {
            r_m: 10.0,
            r_g: 8.0,
            cluster_radius: 4.0,
            vertical_bonus: 0.3,
            covered_penalty: 0.3,
        }
    }
}

/// Sparse graph over ground-explored space whose vertex gains are evaluated
/// with the aerial sensor; every vertex pose is ground-reachable so the
/// carrier can bring the passenger there.
#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentGraph {
    pub graph: ExplorationGraph,
}

impl DeploymentGraph {
    pub fn new() -> Self {
        Self {
            graph: ExplorationGraph::new(GraphKind::Deployment),
        }
    }
}

impl Default for DeploymentGraph {
    fn default() -> Self {
        Self::new()
    }
}

/// Extend the deployment graph along newly explored space: executed path
/// poses plus random ground-reachable samples around them, sparsified to
/// half the cluster radius, then re-score every vertex with the aerial
/// sensor.
pub fn update_deployment_graph(
    gm: &mut DeploymentGraph,
    map: &VoxelGrid,
    aerial_sensor: &SensorSpec,
    executed_path: &[Pose],
    ground: &RobotSpec,
    config: &MarsupialConfig,
    rng: &mut ChaCha8Rng,
) {
    if executed_path.is_empty() {
        return;
    }
    let opts = TraverseOptions::default();
    let spacing = config.cluster_radius / 2.0;

    let mut candidates: Vec<Pose> = executed_path.to_vec();
    // Random samples in the inflated path envelope, kept only when standable
    // and directly reachable from the executed path.
    let mut envelope = Aabb::from_corners(&executed_path[0].position, &executed_path[0].position);
    for p in executed_path {
        envelope = Aabb::from_corners(&envelope.min.inf(&p.position), &envelope.max.sup(&p.position));
    }
    let envelope = envelope.inflated(config.cluster_radius).intersection(&map.aabb());
    if !envelope.is_empty() {
        let n_random = executed_path.len() * 2;
        for _ in 0..n_random {
            let draw = Vec3::new(
                rng.random_range(envelope.min.x..=envelope.max.x),
                rng.random_range(envelope.min.y..=envelope.max.y),
                rng.random_range(envelope.min.z..=envelope.max.z),
            );
            let Some(z) = stand_at(map, draw.x, draw.y, draw.z, &opts) else {
                continue;
            };
            let pose = Pose::at(draw.x, draw.y, z, 0.0);
            let body = pose.position + Vec3::new(0.0, 0.0, ground.collision_radius);
            if !body_clear(map, &body, ground.collision_radius, &opts) {
                continue;
            }
            let near = executed_path
                .iter()
                .min_by(|a, b| {
                    a.distance(&pose)
                        .partial_cmp(&b.distance(&pose))
                        .unwrap_or(core::cmp::Ordering::Equal)
                })
                .expect("path non-empty");
            if traversable(map, near, &pose, ground, &opts) {
                candidates.push(pose);
            }
        }
    }

    for pose in candidates {
        let nearest = gm.graph.nearest_vertex(&pose.position);
        if let Some(n) = nearest {
            if gm.graph.vertex(n).pose.distance(&pose) < spacing {
                continue;
            }
        }
        let id = gm.graph.add_vertex(pose);
        // Link into the graph; edges are informational (selection routes on
        // the ground robot's global graph).
        let mut links: Vec<(VertexId, f64)> = Vec::new();
        for (other, v) in gm.graph.vertices() {
            if other == id {
                continue;
            }
            let d = v.pose.distance(&pose);
            if d <= config.cluster_radius && traversable(map, &v.pose, &pose, ground, &opts) {
                links.push((other, d));
            }
        }
        for (other, d) in links {
            gm.graph.add_edge(id, other, d);
        }
    }

    // Re-score everything: the map changed.
    for id in gm.graph.ids().collect::<Vec<_>>() {
        let pose = gm.graph.vertex(id).pose;
        let gain = evaluate_gain(map, &pose, aerial_sensor, None);
        let v = gm.graph.vertex_mut(id);
        v.gain = gain;
        v.score = gain.volume;
    }
}

/// A clustered deployment opportunity.
#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentRegion {
    /// Centroid of the member vertices.
    pub center: Vec3,
    pub member_ids: Vec<VertexId>,
    /// Summed aerial gain volume of the members, m^3.
    pub aggregate_gain: f64,
    /// Entry point on the carrier's global graph.
    pub nearest_global_vertex: VertexId,
}

/// Filter deployment-graph vertices by gain and the r_m / r_g exclusions,
/// then single-linkage cluster the survivors.
pub fn identify_deployment_regions(
    gm: &DeploymentGraph,
    robot_pose: &Pose,
    ground_frontiers: &[Pose],
    ground_global: &ExplorationGraph,
    gain_threshold: f64,
    config: &MarsupialConfig,
) -> Vec<DeploymentRegion> {
    if ground_global.is_empty() {
        return Vec::new();
    }
    let mut survivors: Vec<VertexId> = Vec::new();
    for (id, v) in gm.graph.vertices() {
        if v.gain.volume < gain_threshold {
            continue;
        }
        if (v.pose.position - robot_pose.position).norm() <= config.r_m {
            continue;
        }
        let near_frontier = ground_frontiers
            .iter()
            .any(|f| (f.position - v.pose.position).norm() <= config.r_g);
        if near_frontier {
            continue;
        }
        survivors.push(id);
    }
    if survivors.is_empty() {
        return Vec::new();
    }

    // Single-linkage clustering via union-find at the cluster radius.
    let n = survivors.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = i;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    for a in 0..n {
        for b in (a + 1)..n {
            let pa = gm.graph.vertex(survivors[a]).pose.position;
            let pb = gm.graph.vertex(survivors[b]).pose.position;
            if (pa - pb).norm() <= config.cluster_radius {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }

    let mut regions: Vec<DeploymentRegion> = Vec::new();
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut unique_roots: Vec<usize> = roots.clone();
    unique_roots.sort_unstable();
    unique_roots.dedup();
    for root in unique_roots {
        let members: Vec<VertexId> = (0..n).filter(|&i| roots[i] == root).map(|i| survivors[i]).collect();
        let mut center = Vec3::zeros();
        let mut gain = 0.0;
        for m in &members {
            center += gm.graph.vertex(*m).pose.position;
            gain += gm.graph.vertex(*m).gain.volume;
        }
        center /= members.len() as f64;
        let nearest_global_vertex = ground_global
            .nearest_vertex(&center)
            .expect("checked non-empty global graph");
        regions.push(DeploymentRegion {
            center,
            member_ids: members,
            aggregate_gain: gain,
            nearest_global_vertex,
        });
    }
    regions
}

/// Pick the region with the shortest path on the carrier's global graph.
/// Ties break by lexicographic region center. Regions whose entry vertex is
/// unreachable are skipped; `None` when nothing remains.
pub fn select_deployment(
    ground_global: &ExplorationGraph,
    regions: &[DeploymentRegion],
    current: VertexId,
) -> Option<(DeploymentRegion, Vec<VertexId>, f64)> {
    let mut best: Option<(DeploymentRegion, Vec<VertexId>, f64)> = None;
    for region in regions {
        let Ok((path, len)) = ground_global.shortest_path(current, region.nearest_global_vertex) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((br, _, bl)) => {
                len < *bl
                    || (len == *bl
                        && (region.center.x, region.center.y, region.center.z)
                            < (br.center.x, br.center.y, br.center.z))
            }
        };
        if better {
            best = Some((region.clone(), path, len));
        }
    }
    best
}

/// Which way the passenger's exploration bounding box extends from the
/// deployment height.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeployDirection {
    Up,
    Down,
}

/// Everything transferred from carrier to passenger at deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct HandoffPackage {
    pub block_edge: f64,
    pub resolution: f64,
    pub frame_anchor: Vec3,
    pub blocks: Vec<BlockPayload>,
    pub deployment_graph: ExplorationGraph,
    pub ground_pose: Pose,
    /// Where the passenger must return: the deployment point.
    pub return_pose: Pose,
    pub exploration_bbox: Aabb,
    pub direction: DeployDirection,
}

/// Assemble the handoff: all current map blocks, the deployment graph, the
/// carrier pose, and the global bounding box clipped in z to start at the
/// carrier's height and extend up (or down).
pub fn make_handoff(
    gm: &DeploymentGraph,
    map: &UnifiedMap,
    ground_pose: &Pose,
    global_bbox: &Aabb,
    direction: DeployDirection,
) -> HandoffPackage {
    let mut bbox = *global_bbox;
    match direction {
        DeployDirection::Up => bbox.min.z = ground_pose.position.z,
        DeployDirection::Down => bbox.max.z = ground_pose.position.z,
    }
    HandoffPackage {
        block_edge: map.block_edge(),
        resolution: map.resolution(),
        frame_anchor: map.frame_anchor(),
        blocks: map.all_payloads(),
        deployment_graph: gm.graph.clone(),
        ground_pose: *ground_pose,
        return_pose: *ground_pose,
        exploration_bbox: bbox,
        direction,
    }
}

/// Post-deployment gain modulation for the aerial planner: higher (or
/// lower) vertices earn a vertical bonus, vertices inside areas already
/// spanned by the deployment graph are penalized, and vertices outside the
/// exploration bounding box earn exactly zero.
pub fn modulate_aerial_gain(
    raw: &VolumetricGain,
    vertex_pose: &Pose,
    handoff: &HandoffPackage,
    config: &MarsupialConfig,
) -> f64 {
    if !handoff.exploration_bbox.contains(&vertex_pose.position) {
        return 0.0;
    }
    let dz = (vertex_pose.position.z - handoff.ground_pose.position.z).abs();
    let vertical = 1.0 + config.vertical_bonus * dz;
    let covered = handoff
        .deployment_graph
        .vertices()
        .any(|(_, v)| (v.pose.position - vertex_pose.position).norm() < config.cluster_radius);
    let coverage = if covered { config.covered_penalty } else { 1.0 };
    raw.volume * vertical * coverage
}

// ---------------------------------------------------------------------------
// Handoff wire format
// ---------------------------------------------------------------------------
//
// Fixed-order little-endian header, then the block records (mapstore wire
// format), then the deployment graph as UTF-8 text (planner export format):
//
//   4 x f64  ground pose (x, y, z, yaw)
//   4 x f64  return pose
//   6 x f64  exploration bbox (min xyz, max xyz)
//   u8       direction (0 = up, 1 = down)
//   f64      block edge, f64 dedup resolution, 3 x f64 frame anchor
//   u32      block byte length, u32 graph byte length
//   blocks..., graph text...

pub fn encode_handoff(pkg: &HandoffPackage) -> Vec<u8> {
    let mut out = Vec::new();
    let push_f64 = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&v.to_le_bytes());
    for pose in [&pkg.ground_pose, &pkg.return_pose] {
        push_f64(&mut out, pose.position.x);
        push_f64(&mut out, pose.position.y);
        push_f64(&mut out, pose.position.z);
        push_f64(&mut out, pose.yaw);
    }
    for v in [&pkg.exploration_bbox.min, &pkg.exploration_bbox.max] {
        push_f64(&mut out, v.x);
        push_f64(&mut out, v.y);
        push_f64(&mut out, v.z);
    }
    out.push(match pkg.direction {
        DeployDirection::Up => 0,
        DeployDirection::Down => 1,
    });
    push_f64(&mut out, pkg.block_edge);
    push_f64(&mut out, pkg.resolution);
    push_f64(&mut out, pkg.frame_anchor.x);
    push_f64(&mut out, pkg.frame_anchor.y);
    push_f64(&mut out, pkg.frame_anchor.z);
    let blocks = encode_blocks(&pkg.blocks);
    let graph = pkg.deployment_graph.export_text();
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    out.extend_from_slice(&(graph.len() as u32).to_le_bytes());
    out.extend_from_slice(&blocks);
    out.extend_from_slice(graph.as_bytes());
    out
}

pub fn decode_handoff(bytes: &[u8]) -> Result<HandoffPackage, MapError> {
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8], MapError> {
        if *at + n > bytes.len() {
            return Err(MapError::Wire("truncated handoff"));
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };
    let f64_at = |at: &mut usize| -> Result<f64, MapError> {
        Ok(f64::from_le_bytes(take(at, 8)?.try_into().unwrap()))
    };
    let mut poses = [Pose::at(0.0, 0.0, 0.0, 0.0); 2];
    for pose in poses.iter_mut() {
        let (x, y, z, yaw) = (f64_at(&mut at)?, f64_at(&mut at)?, f64_at(&mut at)?, f64_at(&mut at)?);
        *pose = Pose::at(x, y, z, yaw);
    }
    let bbox_min = Vec3::new(f64_at(&mut at)?, f64_at(&mut at)?, f64_at(&mut at)?);
    let bbox_max = Vec3::new(f64_at(&mut at)?, f64_at(&mut at)?, f64_at(&mut at)?);
    let direction = match take(&mut at, 1)?[0] {
        0 => DeployDirection::Up,
        1 => DeployDirection::Down,
        _ => return Err(MapError::Wire("bad direction byte")),
    };
    let block_edge = f64_at(&mut at)?;
    let resolution = f64_at(&mut at)?;
    let frame_anchor = Vec3::new(f64_at(&mut at)?, f64_at(&mut at)?, f64_at(&mut at)?);
    let blocks_len = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let graph_len = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
    let blocks = decode_blocks(take(&mut at, blocks_len)?)?;
    let graph_text = core::str::from_utf8(take(&mut at, graph_len)?).map_err(|_| MapError::Wire("graph not utf-8"))?;
    let deployment_graph =
        ExplorationGraph::parse_text(graph_text, GraphKind::Deployment).map_err(|_| MapError::Wire("bad graph text"))?;
    if at != bytes.len() {
        return Err(MapError::Wire("trailing bytes"));
    }
    Ok(HandoffPackage {
        block_edge,
        resolution,
        frame_anchor,
        blocks,
        deployment_graph,
        ground_pose: poses[0],
        return_pose: poses[1],
        exploration_bbox: Aabb::new(bbox_min, bbox_max),
        direction,
    })
}
