//! The unified block-hashed feature map shared between agents.
//!
//! The map is partitioned into axis-aligned cubic blocks identified by a
//! hash of their integer index. Each block holds two feature sub-blocks
//! (edge and planar points, deduplicated on the voxel lattice) plus a
//! version counter used by the diff/merge synchronization protocol.
//!
//! Versions are Lamport-style: the low bit carries the writer identity, the
//! upper bits a per-block update counter. Two agents can therefore never
//! mint the same version for diverging content, which is what makes
//! version-based diffs converge to identical point sets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::features::{FeatureLabel, LabeledPoint};
use crate::geom::Vec3;
use crate::math;

/// Signed integer block coordinates. The index of a point is
/// `floor(p / L)` per axis in the unified frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlockIndex {
    pub i: i32,
    pub j: i32,
    pub k: i32,
}

impl BlockIndex {
    pub fn of_point(p: &Vec3, block_edge: f64) -> Self {
        Self {
            i: math::floor(p.x / block_edge) as i32,
            j: math::floor(p.y / block_edge) as i32,
            k: math::floor(p.z / block_edge) as i32,
        }
    }

    pub fn center(&self, block_edge: f64) -> Vec3 {
        Vec3::new(
            (self.i as f64 + 0.5) * block_edge,
            (self.j as f64 + 0.5) * block_edge,
            (self.k as f64 + 0.5) * block_edge,
        )
    }
}

/// Supported per-axis index range for hashing: [-2^20, 2^20).
const HASH_HALF_RANGE: i64 = 1 << 20;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MapError {
    #[error("block index ({0}, {1}, {2}) outside hashable range")]
    IndexOutOfRange(i32, i32, i32),
    #[error("map frame/block-edge mismatch: {0}")]
    FrameMismatch(&'static str),
    #[error("malformed block wire data: {0}")]
    Wire(&'static str),
}

/// Deterministic injective hash of a block index: three 21-bit biased
/// coordinates packed into one 64-bit word.
pub fn block_hash(index: BlockIndex) -> Result<u64, MapError> {
    let (i, j, k) = (index.i as i64, index.j as i64, index.k as i64);
    for c in [i, j, k] {
        if !(-HASH_HALF_RANGE..HASH_HALF_RANGE).contains(&c) {
            return Err(MapError::IndexOutOfRange(index.i, index.j, index.k));
        }
    }
    let bias = |c: i64| (c + HASH_HALF_RANGE) as u64;
    Ok((bias(i) << 42) | (bias(j) << 21) | bias(k))
}

/// Inverse of [`block_hash`].
pub fn block_unhash(h: u64) -> BlockIndex {
    let mask = (1u64 << 21) - 1;
    let unbias = |c: u64| (c as i64 - HASH_HALF_RANGE) as i32;
    BlockIndex {
        i: unbias((h >> 42) & mask),
        j: unbias((h >> 21) & mask),
        k: unbias(h & mask),
    }
}

/// Voxel-lattice key used for deduplication; points are snapped to voxel
/// centers so merged point sets are exactly order-insensitive.
type LatticeKey = [i64; 3];

fn lattice_key(p: &Vec3, resolution: f64) -> LatticeKey {
    [
        math::floor(p.x / resolution) as i64,
        math::floor(p.y / resolution) as i64,
        math::floor(p.z / resolution) as i64,
    ]
}

fn lattice_center(k: &LatticeKey, resolution: f64) -> Vec3 {
    Vec3::new(
        (k[0] as f64 + 0.5) * resolution,
        (k[1] as f64 + 0.5) * resolution,
        (k[2] as f64 + 0.5) * resolution,
    )
}

/// One spatial block: two deduplicated feature point sets plus a version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapBlock {
    pub index: BlockIndex,
    pub version: u32,
    edge: BTreeSet<LatticeKey>,
    planar: BTreeSet<LatticeKey>,
}

impl MapBlock {
    fn new(index: BlockIndex) -> Self {
        Self {
            index,
            version: 0,
            edge: BTreeSet::new(),
            planar: BTreeSet::new(),
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edge.len()
    }

    pub fn planar_count(&self) -> usize {
        self.planar.len()
    }

    pub fn edge_points(&self, resolution: f64) -> impl Iterator<Item = Vec3> + '_ {
        self.edge.iter().map(move |k| lattice_center(k, resolution))
    }

    pub fn planar_points(&self, resolution: f64) -> impl Iterator<Item = Vec3> + '_ {
        self.planar.iter().map(move |k| lattice_center(k, resolution))
    }

    fn set(&self, label: FeatureLabel) -> &BTreeSet<LatticeKey> {
        match label {
            FeatureLabel::Edge => &self.edge,
            FeatureLabel::Planar => &self.planar,
        }
    }

    fn set_mut(&mut self, label: FeatureLabel) -> &mut BTreeSet<LatticeKey> {
        match label {
            FeatureLabel::Edge => &mut self.edge,
            FeatureLabel::Planar => &mut self.planar,
        }
    }
}

/// Writer identity folded into block versions (low bit).
pub type WriterId = u8;

/// Map summary used by the diff protocol: block hash -> version.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSummary {
    pub block_edge: f64,
    pub resolution: f64,
    pub frame_anchor: Vec3,
    pub versions: BTreeMap<u64, u32>,
}

/// A block in transferable form, points expanded to metric coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPayload {
    pub hash: u64,
    pub version: u32,
    pub edge: Vec<Vec3>,
    pub planar: Vec<Vec3>,
}

/// Hash-indexed collection of map blocks in a single consistent frame.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedMap {
    block_edge: f64,
    resolution: f64,
    /// Where the unified frame was anchored (the carrier's start pose);
    /// recorded for compatibility checks between agents.
    frame_anchor: Vec3,
    writer: WriterId,
    blocks: BTreeMap<BlockIndex, MapBlock>,
}

impl UnifiedMap {
    pub fn new(block_edge: f64, resolution: f64, frame_anchor: Vec3, writer: WriterId) -> Self {
        assert!(block_edge > 0.0 && resolution > 0.0);
        Self {
            block_edge,
            resolution,
            frame_anchor,
            writer,
            blocks: BTreeMap::new(),
        }
    }

    pub fn block_edge(&self) -> f64 {
        self.block_edge
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn frame_anchor(&self) -> Vec3 {
        self.frame_anchor
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &MapBlock> {
        self.blocks.values()
    }

    pub fn block(&self, index: BlockIndex) -> Option<&MapBlock> {
        self.blocks.get(&index)
    }

    pub fn point_count(&self) -> usize {
        self.blocks.values().map(|b| b.edge_count() + b.planar_count()).sum()
    }

    fn next_version(&self, current: u32) -> u32 {
        let counter = current >> 1;
        ((counter + 1) << 1) | (self.writer as u32 & 1)
    }

    /// Insert labeled points (unified frame). Points are snapped to voxel
    /// centers, routed to their block, deduplicated; touched blocks bump
    /// their version once per call.
    pub fn insert_points(&mut self, points: &[LabeledPoint]) {
        let mut touched: BTreeSet<BlockIndex> = BTreeSet::new();
        for lp in points {
            let key = lattice_key(&lp.position, self.resolution);
            let center = lattice_center(&key, self.resolution);
            let index = BlockIndex::of_point(&center, self.block_edge);
            let block = self.blocks.entry(index).or_insert_with(|| MapBlock::new(index));
            if block.set_mut(lp.label).insert(key) {
                touched.insert(index);
            }
        }
        for index in touched {
            let v = self.blocks[&index].version;
            let next = self.next_version(v);
            self.blocks.get_mut(&index).unwrap().version = next;
        }
    }

    /// Summary for the diff protocol.
    pub fn summary(&self) -> MapSummary {
        let mut versions = BTreeMap::new();
        for (idx, b) in &self.blocks {
            versions.insert(block_hash(*idx).expect("indices validated on insert"), b.version);
        }
        MapSummary {
            block_edge: self.block_edge,
            resolution: self.resolution,
            frame_anchor: self.frame_anchor,
            versions,
        }
    }

    fn check_compat(&self, block_edge: f64, resolution: f64, frame_anchor: &Vec3) -> Result<(), MapError> {
        if block_edge != self.block_edge {
            return Err(MapError::FrameMismatch("block edge length differs"));
        }
        if resolution != self.resolution {
            return Err(MapError::FrameMismatch("dedup resolution differs"));
        }
        if *frame_anchor != self.frame_anchor {
            return Err(MapError::FrameMismatch("frame anchor differs"));
        }
        Ok(())
    }

    /// Hashes of blocks the remote side lacks or holds at a lower version:
    /// exactly what this map should send.
    pub fn diff_blocks(&self, remote: &MapSummary) -> Result<BTreeSet<u64>, MapError> {
        self.check_compat(remote.block_edge, remote.resolution, &remote.frame_anchor)?;
        let mut out = BTreeSet::new();
        for (idx, b) in &self.blocks {
            let h = block_hash(*idx).expect("indices validated on insert");
            match remote.versions.get(&h) {
                None => {
                    out.insert(h);
                }
                Some(&rv) if b.version > rv => {
                    out.insert(h);
                }
                Some(_) => {}
            }
        }
        Ok(out)
    }

    /// Extract a block as a transferable payload.
    pub fn payload(&self, hash: u64) -> Option<BlockPayload> {
        let idx = block_unhash(hash);
        self.blocks.get(&idx).map(|b| BlockPayload {
            hash,
            version: b.version,
            edge: b.edge_points(self.resolution).collect(),
            planar: b.planar_points(self.resolution).collect(),
        })
    }

    pub fn payloads<'a>(&'a self, hashes: impl IntoIterator<Item = u64> + 'a) -> Vec<BlockPayload> {
        hashes.into_iter().filter_map(|h| self.payload(h)).collect()
    }

    pub fn all_payloads(&self) -> Vec<BlockPayload> {
        self.blocks
            .keys()
            .map(|idx| block_hash(*idx).expect("indices validated on insert"))
            .collect::<Vec<_>>()
            .into_iter()
            .filter_map(|h| self.payload(h))
            .collect()
    }

    /// Merge incoming blocks: per-block union of the feature point sets.
    ///
    /// Version rules: a previously absent block adopts the incoming version;
    /// an existing block whose content grew mints `max(local, incoming) + 1`;
    /// unchanged content adopts `max(local, incoming)`. Content is always a
    /// set union, so merging is idempotent and order-insensitive at the
    /// point-set level.
    pub fn merge_blocks(&mut self, incoming: &[BlockPayload]) -> Result<usize, MapError> {
        let mut changed_blocks = 0;
        for payload in incoming {
            let idx = block_unhash(payload.hash);
            let entry = self.blocks.entry(idx).or_insert_with(|| MapBlock::new(idx));
            let was_empty = entry.edge.is_empty() && entry.planar.is_empty() && entry.version == 0;
            let mut changed = false;
            for (pts, label) in [(&payload.edge, FeatureLabel::Edge), (&payload.planar, FeatureLabel::Planar)] {
                let set = entry.set_mut(label);
                for p in pts {
                    changed |= set.insert(lattice_key(p, self.resolution));
                }
            }
            if was_empty {
                entry.version = payload.version;
            } else if changed {
                entry.version = ((entry.version.max(payload.version) >> 1) + 1) << 1 | (self.writer as u32 & 1);
            } else {
                entry.version = entry.version.max(payload.version);
            }
            if changed {
                changed_blocks += 1;
            }
        }
        Ok(changed_blocks)
    }

    /// Nearest `k` feature points of one label within `max_dist` of `p`.
    /// Searches the 27-block neighborhood, which is exhaustive as long as
    /// `max_dist <= block_edge`. Distance ties resolve in lattice order.
    pub fn nearest_features(&self, p: &Vec3, label: FeatureLabel, k: usize, max_dist: f64) -> Vec<Vec3> {
        let center_idx = BlockIndex::of_point(p, self.block_edge);
        let mut found: Vec<(f64, LatticeKey)> = Vec::new();
        for di in -1..=1 {
            for dj in -1..=1 {
                for dk in -1..=1 {
                    let idx = BlockIndex {
                        i: center_idx.i + di,
                        j: center_idx.j + dj,
                        k: center_idx.k + dk,
                    };
                    let Some(block) = self.blocks.get(&idx) else { continue };
                    for key in block.set(label) {
                        let c = lattice_center(key, self.resolution);
                        let d = (c - p).norm();
                        if d <= max_dist {
                            found.push((d, *key));
                        }
                    }
                }
            }
        }
        found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(core::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        found
            .into_iter()
            .take(k)
            .map(|(_, key)| lattice_center(&key, self.resolution))
            .collect()
    }

    /// Full point sets as (label, lattice key) pairs, for content equality
    /// checks between agents.
    pub fn content_set(&self) -> BTreeSet<(u8, LatticeKey)> {
        let mut out = BTreeSet::new();
        for b in self.blocks.values() {
            for k in &b.edge {
                out.insert((0u8, *k));
            }
            for k in &b.planar {
                out.insert((1u8, *k));
            }
        }
        out
    }

    /// Check the block-extent invariant: every stored point lies inside its
    /// block's axis-aligned extent.
    pub fn check_extents(&self) -> bool {
        self.blocks.iter().all(|(idx, b)| {
            b.edge_points(self.resolution)
                .chain(b.planar_points(self.resolution))
                .all(|p| BlockIndex::of_point(&p, self.block_edge) == *idx)
        })
    }
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------
//
// Length-prefixed block records, little-endian throughout:
//   u32 record length (bytes after this prefix)
//   u64 block hash
//   u32 version
//   u32 edge point count
//   u32 planar point count
//   3 x i32 fixed-point millimeters per point, edge points then planar
//
// Encoding is deterministic (points in lattice order), so encode/decode
// round-trips byte-exactly.

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_point_mm(buf: &mut Vec<u8>, p: &Vec3) {
    for a in 0..3 {
        let mm = math::round(p[a] * 1000.0) as i32;
        buf.extend_from_slice(&mm.to_le_bytes());
    }
}

pub fn encode_block(payload: &BlockPayload) -> Vec<u8> {
    let mut body = Vec::with_capacity(20 + 12 * (payload.edge.len() + payload.planar.len()));
    body.extend_from_slice(&payload.hash.to_le_bytes());
    push_u32(&mut body, payload.version);
    push_u32(&mut body, payload.edge.len() as u32);
    push_u32(&mut body, payload.planar.len() as u32);
    for p in payload.edge.iter().chain(payload.planar.iter()) {
        push_point_mm(&mut body, p);
    }
    let mut out = Vec::with_capacity(4 + body.len());
    push_u32(&mut out, body.len() as u32);
    out.extend_from_slice(&body);
    out
}

pub fn encode_blocks(payloads: &[BlockPayload]) -> Vec<u8> {
    let mut out = Vec::new();
    for p in payloads {
        out.extend_from_slice(&encode_block(p));
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MapError> {
        if self.at + n > self.buf.len() {
            return Err(MapError::Wire("truncated record"));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, MapError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, MapError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32, MapError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn point_mm(&mut self) -> Result<Vec3, MapError> {
        let x = self.i32()? as f64 / 1000.0;
        let y = self.i32()? as f64 / 1000.0;
        let z = self.i32()? as f64 / 1000.0;
        Ok(Vec3::new(x, y, z))
    }
}

pub fn decode_blocks(bytes: &[u8]) -> Result<Vec<BlockPayload>, MapError> {
    let mut r = Reader { buf: bytes, at: 0 };
    let mut out = Vec::new();
    while r.at < bytes.len() {
        let len = r.u32()? as usize;
        let end = r.at + len;
        if end > bytes.len() {
            return Err(MapError::Wire("record length exceeds buffer"));
        }
        let hash = r.u64()?;
        let version = r.u32()?;
        let n_edge = r.u32()? as usize;
        let n_planar = r.u32()? as usize;
        if len != 20 + 12 * (n_edge + n_planar) {
            return Err(MapError::Wire("record length disagrees with counts"));
        }
        let mut edge = Vec::with_capacity(n_edge);
        for _ in 0..n_edge {
            edge.push(r.point_mm()?);
        }
        let mut planar = Vec::with_capacity(n_planar);
        for _ in 0..n_planar {
            planar.push(r.point_mm()?);
        }
        out.push(BlockPayload {
            hash,
            version,
            edge,
            planar,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn lp(x: f64, y: f64, z: f64, label: FeatureLabel) -> LabeledPoint {
        LabeledPoint {
            position: Vec3::new(x, y, z),
            label,
        }
    }

    fn test_map(writer: WriterId) -> UnifiedMap {
        UnifiedMap::new(10.0, 0.25, Vec3::zeros(), writer)
    }

    #[test]
    fn hash_is_injective_locally() {
        let a = block_hash(BlockIndex { i: 0, j: 0, k: 0 }).unwrap();
        let b = block_hash(BlockIndex { i: 0, j: 0, k: 1 }).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, block_hash(BlockIndex { i: 0, j: 0, k: 0 }).unwrap());
    }

    #[test]
    fn hash_round_trip_and_range() {
        for idx in [
            BlockIndex { i: 0, j: 0, k: 0 },
            BlockIndex { i: -1, j: 2, k: -3 },
            BlockIndex { i: 1_000_000, j: -1_000_000, k: 524_287 },
        ] {
            assert_eq!(block_unhash(block_hash(idx).unwrap()), idx);
        }
        assert!(block_hash(BlockIndex { i: 1 << 20, j: 0, k: 0 }).is_err());
    }

    #[test]
    fn hash_exhaustive_small_cube() {
        let mut seen = BTreeSet::new();
        for i in -4..=4 {
            for j in -4..=4 {
                for k in -4..=4 {
                    seen.insert(block_hash(BlockIndex { i, j, k }).unwrap());
                }
            }
        }
        assert_eq!(seen.len(), 729);
    }

    #[test]
    fn insert_routes_to_block_by_floor() {
        let mut m = test_map(0);
        m.insert_points(&[lp(12.3, 0.1, 0.4, FeatureLabel::Planar)]);
        let b = m.block(BlockIndex { i: 1, j: 0, k: 0 }).expect("block (1,0,0)");
        assert_eq!(b.planar_count(), 1);
        assert_eq!(b.edge_count(), 0);
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn insert_deduplicates() {
        let mut m = test_map(0);
        m.insert_points(&[lp(1.0, 1.0, 1.0, FeatureLabel::Edge)]);
        let v1 = m.block(BlockIndex { i: 0, j: 0, k: 0 }).unwrap().version;
        m.insert_points(&[lp(1.0, 1.0, 1.0, FeatureLabel::Edge)]);
        let b = m.block(BlockIndex { i: 0, j: 0, k: 0 }).unwrap();
        assert_eq!(b.edge_count(), 1);
        assert_eq!(b.version, v1, "no-op insert must not bump the version");
    }

    #[test]
    fn diff_identical_maps_is_empty() {
        let mut a = test_map(0);
        a.insert_points(&[lp(1.0, 2.0, 0.5, FeatureLabel::Planar), lp(14.0, 2.0, 0.5, FeatureLabel::Edge)]);
        let b = a.clone();
        assert!(a.diff_blocks(&b.summary()).unwrap().is_empty());
    }

    #[test]
    fn diff_against_empty_lists_all() {
        let mut a = test_map(0);
        for x in 0..5 {
            a.insert_points(&[lp(x as f64 * 10.0 + 1.0, 1.0, 1.0, FeatureLabel::Planar)]);
        }
        let empty = test_map(1).summary();
        assert_eq!(a.diff_blocks(&empty).unwrap().len(), 5);
    }

    #[test]
    fn diff_rejects_frame_mismatch() {
        let a = test_map(0);
        let b = UnifiedMap::new(2.154, 0.25, Vec3::zeros(), 1);
        assert!(matches!(a.diff_blocks(&b.summary()), Err(MapError::FrameMismatch(_))));
    }

    #[test]
    fn merge_empty_is_identity() {
        let mut a = test_map(0);
        a.insert_points(&[lp(1.0, 2.0, 0.5, FeatureLabel::Planar)]);
        let before = a.clone();
        a.merge_blocks(&[]).unwrap();
        assert_eq!(a, before);
    }

    #[test]
    fn merge_is_idempotent() {
        let mut a = test_map(0);
        a.insert_points(&[lp(1.0, 2.0, 0.5, FeatureLabel::Planar)]);
        let mut b = test_map(1);
        b.insert_points(&[lp(1.1, 2.0, 0.5, FeatureLabel::Edge), lp(11.0, 0.5, 0.5, FeatureLabel::Planar)]);
        let payloads = b.all_payloads();
        a.merge_blocks(&payloads).unwrap();
        let once = a.clone();
        a.merge_blocks(&payloads).unwrap();
        assert_eq!(a.content_set(), once.content_set());
        assert_eq!(a, once, "repeat merge of same payloads must be a fixpoint");
    }

    #[test]
    fn merge_content_commutes() {
        let base = {
            let mut m = test_map(0);
            m.insert_points(&[lp(0.4, 0.6, 0.1, FeatureLabel::Planar)]);
            m
        };
        let mut x = test_map(0);
        x.insert_points(&[lp(3.0, 3.0, 1.0, FeatureLabel::Edge), lp(0.4, 0.6, 0.1, FeatureLabel::Planar)]);
        let mut y = test_map(1);
        y.insert_points(&[lp(3.2, 3.0, 1.0, FeatureLabel::Planar), lp(-4.0, 0.6, 0.1, FeatureLabel::Edge)]);

        let mut ab = base.clone();
        ab.merge_blocks(&x.all_payloads()).unwrap();
        ab.merge_blocks(&y.all_payloads()).unwrap();
        let mut ba = base.clone();
        ba.merge_blocks(&y.all_payloads()).unwrap();
        ba.merge_blocks(&x.all_payloads()).unwrap();
        assert_eq!(ab.content_set(), ba.content_set());
    }

    #[test]
    fn extent_invariant_holds() {
        let mut m = UnifiedMap::new(2.154, 0.25, Vec3::zeros(), 0);
        for i in 0..200 {
            let f = i as f64;
            m.insert_points(&[
                lp(f * 0.31 - 20.0, f * 0.17 - 10.0, f * 0.05, FeatureLabel::Planar),
                lp(f * -0.23 + 3.0, f * 0.41 - 30.0, f * -0.07, FeatureLabel::Edge),
            ]);
        }
        assert!(m.check_extents());
    }

    #[test]
    fn wire_round_trip_is_byte_exact() {
        let mut m = test_map(0);
        m.insert_points(&[
            lp(1.0, 2.0, 0.5, FeatureLabel::Planar),
            lp(-3.25, 2.0, 0.5, FeatureLabel::Edge),
            lp(14.7, -22.0, 3.5, FeatureLabel::Planar),
        ]);
        let bytes = encode_blocks(&m.all_payloads());
        let decoded = decode_blocks(&bytes).unwrap();
        assert_eq!(encode_blocks(&decoded), bytes);

        // And transporting through the wire preserves the point set exactly.
        let mut other = test_map(1);
        other.merge_blocks(&decoded).unwrap();
        assert_eq!(other.content_set(), m.content_set());
    }

    #[test]
    fn wire_rejects_garbage() {
        assert!(decode_blocks(&[1, 2, 3]).is_err());
        let mut m = test_map(0);
        m.insert_points(&[lp(1.0, 2.0, 0.5, FeatureLabel::Planar)]);
        let mut bytes = encode_blocks(&m.all_payloads());
        bytes.truncate(bytes.len() - 2);
        assert!(decode_blocks(&bytes).is_err());
    }

    #[test]
    fn bidirectional_sync_converges_to_identical_content() {
        let mut a = test_map(0);
        let mut b = test_map(1);
        a.insert_points(&[lp(1.0, 1.0, 1.0, FeatureLabel::Planar), lp(12.0, 1.0, 1.0, FeatureLabel::Edge)]);
        b.insert_points(&[lp(1.5, 1.0, 1.0, FeatureLabel::Planar), lp(-5.0, 1.0, 1.0, FeatureLabel::Planar)]);
        // A few extra touches to skew versions.
        a.insert_points(&[lp(12.5, 1.0, 1.0, FeatureLabel::Edge)]);

        for _ in 0..4 {
            let send_ab = a.payloads(a.diff_blocks(&b.summary()).unwrap());
            b.merge_blocks(&send_ab).unwrap();
            let send_ba = b.payloads(b.diff_blocks(&a.summary()).unwrap());
            a.merge_blocks(&send_ba).unwrap();
        }
        assert_eq!(a.content_set(), b.content_set());
        assert!(a.diff_blocks(&b.summary()).unwrap().is_empty());
        assert!(b.diff_blocks(&a.summary()).unwrap().is_empty());
    }

    #[test]
    fn nearest_features_orders_by_distance() {
        let mut m = test_map(0);
        m.insert_points(&[
            lp(1.0, 1.0, 1.0, FeatureLabel::Planar),
            lp(1.5, 1.0, 1.0, FeatureLabel::Planar),
            lp(2.5, 1.0, 1.0, FeatureLabel::Planar),
            lp(1.2, 1.0, 1.0, FeatureLabel::Edge),
        ]);
        let q = Vec3::new(1.0, 1.1, 1.0);
        let near = m.nearest_features(&q, FeatureLabel::Planar, 2, 1.0);
        assert_eq!(near.len(), 2);
        assert!((near[0] - Vec3::new(1.125, 1.125, 1.125)).norm() < 1e-9);
    }

    #[test]
    fn vector_sum_is_deterministic() {
        // Guard for the version arithmetic: writers mint distinct parities.
        let mut g = test_map(0);
        let mut a = test_map(1);
        g.insert_points(&[lp(1.0, 1.0, 1.0, FeatureLabel::Planar)]);
        a.insert_points(&[lp(1.5, 1.0, 1.0, FeatureLabel::Planar)]);
        let vg = g.block(BlockIndex { i: 0, j: 0, k: 0 }).unwrap().version;
        let va = a.block(BlockIndex { i: 0, j: 0, k: 0 }).unwrap().version;
        assert_ne!(vg, va);
        assert_eq!(vg % 2, 0);
        assert_eq!(va % 2, 1);
    }

    #[test]
    fn literal_small_cube_edge_supported() {
        // Blocks of volume 10 m^3 read literally: edge length 10^(1/3).
        let edge = 2.154_434_690_031_884;
        let mut m = UnifiedMap::new(edge, 0.25, Vec3::zeros(), 0);
        m.insert_points(&vec![
            lp(2.0, 0.1, 0.1, FeatureLabel::Planar),
            lp(2.3, 0.1, 0.1, FeatureLabel::Planar),
        ]);
        assert!(m.check_extents());
        assert_eq!(m.point_count(), 2);
    }
}
