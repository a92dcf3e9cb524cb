//! Edge/planar feature classification of range scans.
//!
//! Each scan point gets a local curvature score over its azimuth ring
//! neighbors; high-curvature points (corners, poles) become edge features,
//! low-curvature points (walls, floors) become planar features, the middle
//! band is discarded.

use alloc::vec::Vec;

use crate::geom::{Pose, Vec3};
use crate::sensing::ScanPointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FeatureLabel {
    Edge,
    Planar,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPoint {
    pub position: Vec3,
    pub label: FeatureLabel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    /// Ring neighbors per point (half on each side).
    pub neighbors: usize,
    /// Curvature quantile at and above which points become edges.
    pub edge_quantile: f64,
    /// Curvature quantile at and below which points become planar.
    pub planar_quantile: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            neighbors: 4,
            edge_quantile: 0.90,
            planar_quantile: 0.40,
        }
    }
}

/// Curvature of point `p` given its ring neighbors: squared norm of the sum
/// of difference vectors, normalized by neighbor count and range.
fn curvature(p: &Vec3, neighbors: &[Vec3]) -> f64 {
    let mut sum = Vec3::zeros();
    for n in neighbors {
        sum += n - p;
    }
    let denom = (neighbors.len() as f64) * p.norm();
    if denom < 1e-9 {
        return 0.0;
    }
    sum.norm_squared() / (denom * denom)
}

/// Classify scan points in the sensor frame. Only rays with a full set of
/// hit neighbors on their ring participate; rings with too few hits yield
/// nothing, which is a valid (empty) result rather than an error.
pub fn extract_features_local(scan: &ScanPointCloud, params: &FeatureParams) -> Vec<(Vec3, FeatureLabel)> {
    let half = (params.neighbors / 2).max(1);
    let mut candidates: Vec<(usize, f64)> = Vec::new();

    for j in 0..scan.rays_v {
        let row = j * scan.rays_h;
        let n = scan.rays_h;
        if n < 2 * half + 1 {
            continue;
        }
        for i in 0..n {
            let center = &scan.returns[row + i];
            if !center.hit {
                continue;
            }
            let mut neigh = Vec::with_capacity(2 * half);
            let mut ok = true;
            for d in 1..=half {
                for s in [-(d as isize), d as isize] {
                    let idx = i as isize + s;
                    let idx = if scan.wraps {
                        idx.rem_euclid(n as isize) as usize
                    } else if idx < 0 || idx >= n as isize {
                        ok = false;
                        break;
                    } else {
                        idx as usize
                    };
                    let r = &scan.returns[row + idx];
                    if !r.hit {
                        ok = false;
                        break;
                    }
                    neigh.push(r.point);
                }
                if !ok {
                    break;
                }
            }
            if ok {
                candidates.push((row + i, curvature(&center.point, &neigh)));
            }
        }
    }

    if candidates.is_empty() {
        return Vec::new();
    }

    let mut curvatures: Vec<f64> = candidates.iter().map(|&(_, c)| c).collect();
    curvatures.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let q = |f: f64| {
        let idx = (f * (curvatures.len() - 1) as f64) as usize;
        curvatures[idx.min(curvatures.len() - 1)]
    };
    let q_planar = q(params.planar_quantile);
    let q_edge = q(params.edge_quantile);

    let mut out = Vec::new();
    for (idx, c) in candidates {
        let p = scan.returns[idx].point;
        // The strict `c > q_planar` guard keeps degenerate scans (all
        // curvatures equal, e.g. a perfect plane) from producing edges.
        if c >= q_edge && c > q_planar {
            out.push((p, FeatureLabel::Edge));
        } else if c <= q_planar {
            out.push((p, FeatureLabel::Planar));
        }
    }
    out
}

/// Classify scan points and express them in the unified frame via the scan
/// pose.
pub fn extract_features(scan: &ScanPointCloud, pose: &Pose, params: &FeatureParams) -> Vec<LabeledPoint> {
    extract_features_local(scan, params)
        .into_iter()
        .map(|(p, label)| LabeledPoint {
            position: pose.to_world(&p),
            label,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::RayReturn;

    fn cloud(rays_h: usize, points: Vec<Option<Vec3>>) -> ScanPointCloud {
        ScanPointCloud {
            rays_h,
            rays_v: points.len() / rays_h,
            wraps: false,
            returns: points
                .into_iter()
                .map(|p| match p {
                    Some(point) => RayReturn { point, hit: true },
                    None => RayReturn {
                        point: Vec3::new(1.0, 0.0, 0.0),
                        hit: false,
                    },
                })
                .collect(),
        }
    }

    #[test]
    fn flat_plane_is_all_planar() {
        // Evenly spaced collinear points: difference sums cancel exactly.
        let pts: Vec<Option<Vec3>> = (0..16)
            .map(|i| Some(Vec3::new(4.0, -2.0 + 0.25 * i as f64, 0.0)))
            .collect();
        let scan = cloud(16, pts);
        let feats = extract_features_local(&scan, &FeatureParams::default());
        assert!(!feats.is_empty());
        assert!(feats.iter().all(|(_, l)| *l == FeatureLabel::Planar));
    }

    #[test]
    fn corner_point_is_edge() {
        // Two walls meeting at 90 degrees; the corner has maximal curvature.
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(Some(Vec3::new(4.0, -2.0 + 0.25 * i as f64, 0.0)));
        }
        let corner = Vec3::new(4.0, 0.0, 0.0);
        for i in 1..8 {
            pts.push(Some(corner + Vec3::new(-0.25 * i as f64, 0.0, 0.0)));
        }
        let scan = cloud(15, pts.into_iter().collect());
        let feats = extract_features_local(&scan, &FeatureParams::default());
        let edges: Vec<&Vec3> = feats
            .iter()
            .filter(|(_, l)| *l == FeatureLabel::Edge)
            .map(|(p, _)| p)
            .collect();
        assert!(!edges.is_empty());
        assert!(
            edges.iter().any(|p| (*p - corner).norm() < 0.6),
            "corner not among edges: {edges:?}"
        );
    }

    #[test]
    fn short_ring_yields_empty() {
        let pts: Vec<Option<Vec3>> = (0..3).map(|i| Some(Vec3::new(1.0 + i as f64, 0.0, 0.0))).collect();
        let scan = cloud(3, pts);
        assert!(extract_features_local(&scan, &FeatureParams::default()).is_empty());
    }

    #[test]
    fn misses_break_rings() {
        let mut pts: Vec<Option<Vec3>> = (0..10)
            .map(|i| Some(Vec3::new(4.0, -2.0 + 0.4 * i as f64, 0.0)))
            .collect();
        pts[5] = None;
        let scan = cloud(10, pts);
        let feats = extract_features_local(&scan, &FeatureParams::default());
        // Points 3..=7 lost their full neighbor sets.
        assert!(feats.len() <= 5);
    }
}
