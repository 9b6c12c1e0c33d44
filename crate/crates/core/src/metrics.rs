//! Geometric error metrics between meshes.
//!
//! Two complementary error notions are provided for corresponded meshes:
//!
//! * **vertex error** — Euclidean distance between corresponding vertices;
//!   sensitive to sliding along the surface.
//! * **surface error** — distance from a vertex to the *closest point
//!   anywhere* on the other mesh's triangulated surface; measures true
//!   geometric deviation and is insensitive to reparametrization.
//!
//! Point-to-surface queries run through an axis-aligned bounding-box
//! hierarchy ([`TriangleBvh`]) whose traversal prunes conservatively, so its
//! answers match an exhaustive scan over every triangle exactly. All
//! distances are in mm.

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{check_same_topology, TriMesh, VertexMask};

// ============================================================================
// Point-primitive distances
// ============================================================================

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab = b - a;
    let denom = ab.norm_squared();
    let t = if denom > 0.0 {
        ((p - a).dot(&ab) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

/// Distance from `p` to the solid triangle `(a, b, c)`.
///
/// Uses the barycentric-region classification: the closest point is found by
/// identifying which Voronoi region of the triangle contains `p` (a vertex,
/// an edge, or the face interior). Degenerate triangles (collinear or
/// coincident vertices) fall back to the minimum over the three edges, which
/// is exact for a degenerate triangle's point set.
pub fn point_triangle_distance(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> f64 {
    let ab = b - a;
    let ac = c - a;

    // Degenerate triangle: area numerically zero relative to edge lengths.
    let cross = ab.cross(&ac);
    if cross.norm_squared() <= 1e-28 * ab.norm_squared() * ac.norm_squared() {
        return point_segment_distance(p, a, b)
            .min(point_segment_distance(p, b, c))
            .min(point_segment_distance(p, a, c));
    }

    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (p - a).norm(); // vertex region A
    }

    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (p - b).norm(); // vertex region B
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm(); // edge region AB
    }

    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (p - c).norm(); // vertex region C
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm(); // edge region AC
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm(); // edge region BC
    }

    // Face interior.
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}

// ============================================================================
// Bounding-volume hierarchy
// ============================================================================

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { start: usize, count: usize },
    Inner { left: usize, right: usize },
}

#[derive(Clone, Debug)]
struct Node {
    min: Point3<f64>,
    max: Point3<f64>,
    kind: NodeKind,
}

/// Axis-aligned bounding-box hierarchy over a mesh's triangles.
///
/// Construction is deterministic: splits are median splits along the longest
/// centroid axis, with ties broken by triangle index. Queries prune with a
/// conservative margin, so [`TriangleBvh::distance`] returns exactly the
/// minimum over all triangles.
#[derive(Clone, Debug)]
pub struct TriangleBvh {
    nodes: Vec<Node>,
    triangles: Vec<[Point3<f64>; 3]>,
}

const LEAF_SIZE: usize = 8;

/// A triangle being placed into the tree: corners, centroid, source index.
type BuildItem = ([Point3<f64>; 3], Point3<f64>, usize);

impl TriangleBvh {
    /// Builds a hierarchy over the triangles of `mesh`.
    pub fn build(mesh: &TriMesh) -> TriangleBvh {
        let verts = mesh.vertices();
        let mut items: Vec<BuildItem> = mesh
            .faces()
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let t = [
                    verts[f[0] as usize],
                    verts[f[1] as usize],
                    verts[f[2] as usize],
                ];
                let centroid = Point3::from((t[0].coords + t[1].coords + t[2].coords) / 3.0);
                (t, centroid, i)
            })
            .collect();
        let mut bvh = TriangleBvh {
            nodes: Vec::new(),
            triangles: Vec::with_capacity(items.len()),
        };
        bvh.build_range(&mut items);
        bvh
    }

    /// Recursively builds the subtree for `items`, returning its node index.
    fn build_range(&mut self, items: &mut [BuildItem]) -> usize {
        let mut min = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut max = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut cmin = min;
        let mut cmax = max;
        for (tri, centroid, _) in items.iter() {
            for p in tri {
                for d in 0..3 {
                    min[d] = min[d].min(p[d]);
                    max[d] = max[d].max(p[d]);
                }
            }
            for d in 0..3 {
                cmin[d] = cmin[d].min(centroid[d]);
                cmax[d] = cmax[d].max(centroid[d]);
            }
        }

        let node_index = self.nodes.len();
        self.nodes.push(Node {
            min,
            max,
            kind: NodeKind::Leaf { start: 0, count: 0 },
        });

        let extent = cmax - cmin;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };

        if items.len() <= LEAF_SIZE || extent[axis] <= 0.0 {
            let start = self.triangles.len();
            for (tri, _, _) in items.iter() {
                self.triangles.push(*tri);
            }
            self.nodes[node_index].kind = NodeKind::Leaf {
                start,
                count: items.len(),
            };
            return node_index;
        }

        // Total order on (centroid coordinate, original index) keeps the
        // partition reproducible even with duplicated centroids.
        items.sort_unstable_by(|a, b| {
            a.1[axis]
                .partial_cmp(&b.1[axis])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.2.cmp(&b.2))
        });
        let mid = items.len() / 2;
        let (lo, hi) = items.split_at_mut(mid);
        let left = self.build_range(lo);
        let right = self.build_range(hi);
        self.nodes[node_index].kind = NodeKind::Inner { left, right };
        node_index
    }

    /// Number of triangles indexed.
    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    fn aabb_distance_sq(&self, node: &Node, p: &Point3<f64>) -> f64 {
        let mut sq = 0.0;
        for d in 0..3 {
            let c = p[d].clamp(node.min[d], node.max[d]);
            sq += (p[d] - c) * (p[d] - c);
        }
        sq
    }

    /// Distance from `p` to the closest point on any indexed triangle.
    ///
    /// Equals the exhaustive minimum over all triangles: pruning enters any
    /// node whose box could hold a point at least as close as the best found
    /// so far, with a tiny conservative margin against rounding.
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        let mut best_sq = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if self.aabb_distance_sq(node, p) * (1.0 - 1e-12) > best_sq {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for tri in &self.triangles[start..start + count] {
                        let d = point_triangle_distance(p, &tri[0], &tri[1], &tri[2]);
                        best_sq = best_sq.min(d * d);
                    }
                }
                NodeKind::Inner { left, right } => {
                    // Visit the nearer child first to tighten the bound early.
                    let dl = self.aabb_distance_sq(&self.nodes[left], p);
                    let dr = self.aabb_distance_sq(&self.nodes[right], p);
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best_sq.sqrt()
    }
}

/// Distance from each point to the surface of `target`.
///
/// Points are processed in parallel; the output order matches the input and
/// is independent of the thread count.
pub fn surface_distances(points: &[Point3<f64>], target: &TriMesh) -> Vec<f64> {
    let bvh = TriangleBvh::build(target);
    points.par_iter().map(|p| bvh.distance(p)).collect()
}

// ============================================================================
// Error statistics
// ============================================================================

/// Summary statistics of per-vertex errors over an evaluation region (mm).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    /// Root mean square of surface errors.
    pub rms_surface: f64,
    /// Largest surface error.
    pub max_surface: f64,
    /// Mean surface error.
    pub mean_surface: f64,
    /// Root mean square of corresponding-vertex errors.
    pub rms_vertex: f64,
    /// Number of vertices evaluated.
    pub sample_count: usize,
}

impl ErrorStats {
    /// Builds statistics from raw per-vertex errors.
    ///
    /// The two slices must have the same length. Empty slices describe a
    /// degenerate (nothing-to-evaluate) region and produce all-zero
    /// statistics with `sample_count = 0`.
    pub fn from_errors(surface: &[f64], vertex: &[f64]) -> Result<ErrorStats> {
        if surface.len() != vertex.len() {
            return Err(Error::Config(format!(
                "{} surface errors but {} vertex errors",
                surface.len(),
                vertex.len()
            )));
        }
        let n = surface.len();
        if n == 0 {
            return Ok(ErrorStats {
                rms_surface: 0.0,
                max_surface: 0.0,
                mean_surface: 0.0,
                rms_vertex: 0.0,
                sample_count: 0,
            });
        }
        let rms = |xs: &[f64]| (xs.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
        Ok(ErrorStats {
            rms_surface: rms(surface),
            max_surface: surface.iter().cloned().fold(0.0, f64::max),
            mean_surface: surface.iter().sum::<f64>() / n as f64,
            rms_vertex: rms(vertex),
            sample_count: n,
        })
    }
}

/// Per-vertex errors of `estimate` against `truth` over a vertex region.
///
/// Returns `(surface_errors, vertex_errors)`, one entry per set mask bit in
/// ascending vertex order. Surface errors measure each selected estimate
/// vertex against the *whole* truth surface; vertex errors compare
/// corresponding vertices directly. The meshes must be corresponded.
pub fn region_errors(
    estimate: &TriMesh,
    truth: &TriMesh,
    region: &VertexMask,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_same_topology(estimate, truth, "region_errors")?;
    if region.vertex_count() != estimate.vertex_count() {
        return Err(Error::Config(format!(
            "region mask length {} does not match vertex count {}",
            region.vertex_count(),
            estimate.vertex_count()
        )));
    }
    let points: Vec<Point3<f64>> = region
        .iter_set()
        .map(|v| estimate.vertices()[v])
        .collect();
    let surface = surface_distances(&points, truth);
    let vertex: Vec<f64> = region
        .iter_set()
        .map(|v| (estimate.vertices()[v] - truth.vertices()[v]).norm())
        .collect();
    Ok((surface, vertex))
}

/// [`region_errors`] reduced to summary statistics.
///
/// The region must be nonempty: statistics over no vertices are undefined
/// here, and callers that need a zero-stats convention for vacuous regions
/// (e.g. a fully known shape) own that decision explicitly via
/// [`ErrorStats::from_errors`] on empty slices.
pub fn region_error_stats(
    estimate: &TriMesh,
    truth: &TriMesh,
    region: &VertexMask,
) -> Result<ErrorStats> {
    if region.is_empty() {
        return Err(Error::Config(
            "error statistics over an empty region are undefined".into(),
        ));
    }
    let (surface, vertex) = region_errors(estimate, truth, region)?;
    ErrorStats::from_errors(&surface, &vertex)
}

/// Largest displacement jump a seam vertex would suffer crossing from the
/// kept prior surface to the donor surface.
///
/// The seam is derived from `known` (known vertices sharing a face edge with
/// unknown ones); the gap is the maximum over seam vertices `i` of
/// `|prior_i - donor_i|`. The donor is whichever surface supplies the
/// unknown region (the raw model estimate for cut-and-paste, the warped
/// estimate for smooth completion). An empty seam is an error: there is no
/// boundary to measure.
pub fn seam_gap(prior: &TriMesh, known: &VertexMask, donor: &TriMesh) -> Result<f64> {
    check_same_topology(prior, donor, "seam_gap")?;
    let seam = crate::mesh::seam_vertices(prior, known)?;
    if seam.is_empty() {
        return Err(Error::Config(
            "seam is empty; the known and unknown regions share no face edge".into(),
        ));
    }
    Ok(seam
        .iter_set()
        .map(|v| (prior.vertices()[v] - donor.vertices()[v]).norm())
        .fold(0.0, f64::max))
}

// ============================================================================
// Tests
// ============================================================================
