//! Vertex/edge structure shared by the local, global and deployment graphs,
//! with deterministic shortest-path queries and a line-oriented text export.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt::Write as _;

use crate::geom::{Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub u32);

impl VertexId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    LocalGround,
    LocalAerial,
    GlobalGround,
    GlobalAerial,
    Deployment,
}

/// Volumetric exploration gain: count of newly observable unknown voxels and
/// the corresponding volume.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VolumetricGain {
    pub unknown_voxels: usize,
    pub volume: f64,
}

impl VolumetricGain {
    pub fn from_count(unknown_voxels: usize, resolution: f64) -> Self {
        Self {
            unknown_voxels,
            volume: unknown_voxels as f64 * resolution * resolution * resolution,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub pose: Pose,
    /// Raw volumetric gain of the owning robot's sensor (for deployment
    /// graphs: the passenger sensor).
    pub gain: VolumetricGain,
    /// Planning score; equals `gain.volume` unless a gain modulator is in
    /// effect.
    pub score: f64,
    pub frontier: bool,
    pub home: bool,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("vertices {0:?} and {1:?} are not connected")]
    Disconnected(VertexId, VertexId),
    #[error("graph has no home vertex")]
    NoHome,
    #[error("malformed graph text at line {0}")]
    Parse(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationGraph {
    pub kind: GraphKind,
    vertices: Vec<Vertex>,
    adjacency: Vec<Vec<(VertexId, f64)>>,
}

impl ExplorationGraph {
    pub fn new(kind: GraphKind) -> Self {
        Self {
            kind,
            vertices: Vec::new(),
            adjacency: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn add_vertex(&mut self, pose: Pose) -> VertexId {
        self.vertices.push(Vertex {
            pose,
            gain: VolumetricGain::default(),
            score: 0.0,
            frontier: false,
            home: false,
        });
        self.adjacency.push(Vec::new());
        VertexId(self.vertices.len() as u32 - 1)
    }

    pub fn add_edge(&mut self, a: VertexId, b: VertexId, weight: f64) {
        if a == b || self.has_edge(a, b) {
            return;
        }
        self.adjacency[a.index()].push((b, weight));
        self.adjacency[b.index()].push((a, weight));
        self.adjacency[a.index()].sort_by_key(|(v, _)| *v);
        self.adjacency[b.index()].sort_by_key(|(v, _)| *v);
    }

    pub fn has_edge(&self, a: VertexId, b: VertexId) -> bool {
        self.adjacency[a.index()].iter().any(|(v, _)| *v == b)
    }

    pub fn vertex(&self, id: VertexId) -> &Vertex {
        &self.vertices[id.index()]
    }

    pub fn vertex_mut(&mut self, id: VertexId) -> &mut Vertex {
        &mut self.vertices[id.index()]
    }

    pub fn ids(&self) -> impl Iterator<Item = VertexId> {
        (0..self.vertices.len() as u32).map(VertexId)
    }

    pub fn vertices(&self) -> impl Iterator<Item = (VertexId, &Vertex)> {
        self.vertices.iter().enumerate().map(|(i, v)| (VertexId(i as u32), v))
    }

    pub fn neighbors(&self, id: VertexId) -> &[(VertexId, f64)] {
        &self.adjacency[id.index()]
    }

    /// Canonical undirected edge list (a < b), ordered.
    pub fn edges(&self) -> Vec<(VertexId, VertexId, f64)> {
        let mut out = Vec::new();
        for (i, adj) in self.adjacency.iter().enumerate() {
            for (j, w) in adj {
                if (i as u32) < j.0 {
                    out.push((VertexId(i as u32), *j, *w));
                }
            }
        }
        out
    }

    pub fn home_vertex(&self) -> Option<VertexId> {
        self.vertices().find(|(_, v)| v.home).map(|(id, _)| id)
    }

    /// Euclidean-nearest vertex to a point; ties break to the smaller id.
    pub fn nearest_vertex(&self, p: &Vec3) -> Option<VertexId> {
        let mut best: Option<(f64, VertexId)> = None;
        for (id, v) in self.vertices() {
            let d = (v.pose.position - p).norm();
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, id));
            }
        }
        best.map(|(_, id)| id)
    }

    /// Dijkstra distances and predecessors from a source. Deterministic:
    /// equal-cost heap entries pop in vertex-id order.
    pub fn dijkstra(&self, source: VertexId) -> (Vec<f64>, Vec<Option<VertexId>>) {
        #[derive(PartialEq)]
        struct State {
            cost: f64,
            id: VertexId,
        }
        impl Eq for State {}
        impl Ord for State {
            fn cmp(&self, other: &Self) -> Ordering {
                // Reversed for a min-heap; ties by id for determinism.
                other
                    .cost
                    .partial_cmp(&self.cost)
                    .unwrap_or(Ordering::Equal)
                    .then(other.id.cmp(&self.id))
            }
        }
        impl PartialOrd for State {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        let n = self.vertices.len();
        let mut dist = alloc::vec![f64::INFINITY; n];
        let mut parent: Vec<Option<VertexId>> = alloc::vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[source.index()] = 0.0;
        heap.push(State { cost: 0.0, id: source });
        while let Some(State { cost, id }) = heap.pop() {
            if cost > dist[id.index()] {
                continue;
            }
            for &(next, w) in &self.adjacency[id.index()] {
                let c = cost + w;
                if c < dist[next.index()] {
                    dist[next.index()] = c;
                    parent[next.index()] = Some(id);
                    heap.push(State { cost: c, id: next });
                }
            }
        }
        (dist, parent)
    }

    /// Minimal-weight path between two vertices. Among equal-length paths
    /// the lexicographically smallest vertex-id sequence is returned. The
    /// path includes both endpoints; `from == to` yields an empty path.
    pub fn shortest_path(&self, from: VertexId, to: VertexId) -> Result<(Vec<VertexId>, f64), GraphError> {
        if from == to {
            return Ok((Vec::new(), 0.0));
        }
        let (dist_to, _) = self.dijkstra(to);
        if !dist_to[from.index()].is_finite() {
            return Err(GraphError::Disconnected(from, to));
        }
        // Walk from the source, always picking the smallest-id neighbor that
        // stays on some shortest path. At least one neighbor satisfies the
        // exact arithmetic identity because dist was computed over the same
        // sums.
        let mut path = alloc::vec![from];
        let mut length = 0.0;
        let mut cur = from;
        while cur != to {
            let mut next: Option<(VertexId, f64)> = None;
            for &(nb, w) in &self.adjacency[cur.index()] {
                if dist_to[nb.index()] + w == dist_to[cur.index()] && next.is_none() {
                    next = Some((nb, w));
                }
            }
            let Some((nb, w)) = next else {
                return Err(GraphError::Disconnected(from, to));
            };
            length += w;
            path.push(nb);
            cur = nb;
        }
        Ok((path, length))
    }

    /// Vertices reachable from `root`, ascending.
    pub fn component_of(&self, root: VertexId) -> Vec<VertexId> {
        let n = self.vertices.len();
        let mut seen = alloc::vec![false; n];
        let mut stack = alloc::vec![root];
        seen[root.index()] = true;
        while let Some(v) = stack.pop() {
            for &(nb, _) in &self.adjacency[v.index()] {
                if !seen[nb.index()] {
                    seen[nb.index()] = true;
                    stack.push(nb);
                }
            }
        }
        (0..n as u32).map(VertexId).filter(|v| seen[v.index()]).collect()
    }

    /// Drop every vertex outside `keep` (ascending ids), re-indexing
    /// densely. Returns the id mapping old -> new.
    pub fn retain(&mut self, keep: &[VertexId]) -> Vec<Option<VertexId>> {
        let n = self.vertices.len();
        let mut map: Vec<Option<VertexId>> = alloc::vec![None; n];
        for (new_idx, old) in keep.iter().enumerate() {
            map[old.index()] = Some(VertexId(new_idx as u32));
        }
        let mut vertices = Vec::with_capacity(keep.len());
        let mut adjacency = Vec::with_capacity(keep.len());
        for old in keep {
            vertices.push(self.vertices[old.index()].clone());
            let mut adj: Vec<(VertexId, f64)> = self.adjacency[old.index()]
                .iter()
                .filter_map(|(nb, w)| map[nb.index()].map(|new| (new, *w)))
                .collect();
            adj.sort_by_key(|(v, _)| *v);
            adjacency.push(adj);
        }
        self.vertices = vertices;
        self.adjacency = adjacency;
        map
    }

    /// Line-oriented export: `V id x y z gain flags` and `E a b w`.
    /// Deterministic; floats at fixed precision so the format round-trips
    /// stably (parse-then-export reproduces the text byte for byte).
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        for (id, v) in self.vertices() {
            let mut flags = String::new();
            if v.frontier {
                flags.push('f');
            }
            if v.home {
                flags.push('h');
            }
            if flags.is_empty() {
                flags.push('-');
            }
            let _ = writeln!(
                out,
                "V {} {:.6} {:.6} {:.6} {:.6} {}",
                id.0, v.pose.position.x, v.pose.position.y, v.pose.position.z, v.gain.volume, flags
            );
        }
        for (a, b, w) in self.edges() {
            let _ = writeln!(out, "E {} {} {:.6}", a.0, b.0, w);
        }
        out
    }

    /// Parse the text export. Gains come back as volumes (voxel counts are
    /// not part of the format); yaw is not exported and parses as zero.
    pub fn parse_text(text: &str, kind: GraphKind) -> Result<Self, GraphError> {
        let mut g = ExplorationGraph::new(kind);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let tag = parts.next().ok_or(GraphError::Parse(lineno + 1))?;
            let mut next_f64 = || -> Result<f64, GraphError> {
                parts
                    .next()
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or(GraphError::Parse(lineno + 1))
            };
            match tag {
                "V" => {
                    let id = next_f64()? as u32;
                    if id as usize != g.len() {
                        return Err(GraphError::Parse(lineno + 1));
                    }
                    let (x, y, z) = (next_f64()?, next_f64()?, next_f64()?);
                    let volume = next_f64()?;
                    let flags = parts.next().ok_or(GraphError::Parse(lineno + 1))?;
                    let vid = g.add_vertex(Pose::at(x, y, z, 0.0));
                    let v = g.vertex_mut(vid);
                    v.gain = VolumetricGain {
                        unknown_voxels: 0,
                        volume,
                    };
                    v.score = volume;
                    v.frontier = flags.contains('f');
                    v.home = flags.contains('h');
                }
                "E" => {
                    let a = VertexId(next_f64()? as u32);
                    let b = VertexId(next_f64()? as u32);
                    let w = next_f64()?;
                    if a.index() >= g.len() || b.index() >= g.len() {
                        return Err(GraphError::Parse(lineno + 1));
                    }
                    g.add_edge(a, b, w);
                }
                _ => return Err(GraphError::Parse(lineno + 1)),
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_graph(weights: &[f64]) -> ExplorationGraph {
        let mut g = ExplorationGraph::new(GraphKind::GlobalGround);
        for i in 0..=weights.len() {
            g.add_vertex(Pose::at(i as f64, 0.0, 0.0, 0.0));
        }
        for (i, w) in weights.iter().enumerate() {
            g.add_edge(VertexId(i as u32), VertexId(i as u32 + 1), *w);
        }
        g
    }

    #[test]
    fn same_vertex_has_empty_path() {
        let g = line_graph(&[1.0, 2.0]);
        let (path, len) = g.shortest_path(VertexId(1), VertexId(1)).unwrap();
        assert!(path.is_empty());
        assert_eq!(len, 0.0);
    }

    #[test]
    fn five_vertex_optimum() {
        // Diamond with a costly direct edge: optimum is around the cheap side.
        let mut g = ExplorationGraph::new(GraphKind::GlobalGround);
        for i in 0..5 {
            g.add_vertex(Pose::at(i as f64, 0.0, 0.0, 0.0));
        }
        g.add_edge(VertexId(0), VertexId(1), 1.0);
        g.add_edge(VertexId(1), VertexId(4), 1.0);
        g.add_edge(VertexId(0), VertexId(2), 0.5);
        g.add_edge(VertexId(2), VertexId(3), 0.5);
        g.add_edge(VertexId(3), VertexId(4), 0.5);
        g.add_edge(VertexId(0), VertexId(4), 10.0);
        let (path, len) = g.shortest_path(VertexId(0), VertexId(4)).unwrap();
        assert_eq!(len, 1.5);
        assert_eq!(path, alloc::vec![VertexId(0), VertexId(2), VertexId(3), VertexId(4)]);
    }

    #[test]
    fn equal_length_paths_take_lexicographic_route() {
        // Two symmetric routes 0-1-3 and 0-2-3 of equal weight.
        let mut g = ExplorationGraph::new(GraphKind::GlobalGround);
        for i in 0..4 {
            g.add_vertex(Pose::at(i as f64, 0.0, 0.0, 0.0));
        }
        g.add_edge(VertexId(0), VertexId(1), 1.0);
        g.add_edge(VertexId(0), VertexId(2), 1.0);
        g.add_edge(VertexId(1), VertexId(3), 1.0);
        g.add_edge(VertexId(2), VertexId(3), 1.0);
        let (path, _) = g.shortest_path(VertexId(0), VertexId(3)).unwrap();
        assert_eq!(path, alloc::vec![VertexId(0), VertexId(1), VertexId(3)]);
    }

    #[test]
    fn disconnected_pair_errors() {
        let mut g = line_graph(&[1.0]);
        let lonely = g.add_vertex(Pose::at(9.0, 9.0, 0.0, 0.0));
        assert!(matches!(
            g.shortest_path(VertexId(0), lonely),
            Err(GraphError::Disconnected(..))
        ));
    }

    #[test]
    fn export_parse_round_trip_is_stable() {
        let mut g = line_graph(&[1.25, 0.75]);
        g.vertex_mut(VertexId(0)).home = true;
        g.vertex_mut(VertexId(2)).frontier = true;
        g.vertex_mut(VertexId(2)).gain = VolumetricGain {
            unknown_voxels: 64,
            volume: 1.0,
        };
        let text = g.export_text();
        let parsed = ExplorationGraph::parse_text(&text, GraphKind::GlobalGround).unwrap();
        assert_eq!(parsed.export_text(), text);
        assert_eq!(parsed.home_vertex(), Some(VertexId(0)));
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!(ExplorationGraph::parse_text("V nope", GraphKind::Deployment).is_err());
        assert!(ExplorationGraph::parse_text("E 0 1 1.0", GraphKind::Deployment).is_err());
    }
}
