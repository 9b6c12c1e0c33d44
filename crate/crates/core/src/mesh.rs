//! Triangle meshes, vertex masks, and region selection.
//!
//! All geometry in this crate lives in millimetres, with the superior
//! (head-ward) direction along +z. Meshes are assumed to be in vertex-wise
//! correspondence across a population: vertex `i` denotes the same anatomical
//! location on every mesh, and connectivity is shared.
//!
//! Region selection works on closed z-intervals ("slabs"), mirroring how
//! partial scans are cropped by axial slices: the known region of a partial
//! shape is the union of the slab spanning a labelled region of interest
//! (e.g. the acetabulum) and a slab covering the top fraction of the
//! mesh height (the iliac crest).

use std::collections::BTreeMap;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// ============================================================================
// VertexMask
// ============================================================================

/// Boolean mask over the vertices of a mesh.
///
/// The mask length always equals the vertex count of the mesh it was built
/// for; operations combining masks of different lengths fail.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexMask {
    bits: Vec<bool>,
}

impl VertexMask {
    /// Builds a mask from raw per-vertex flags.
    pub fn from_bits(bits: Vec<bool>) -> Self {
        VertexMask { bits }
    }

    /// Mask of `n` vertices, all selected.
    pub fn all_set(n: usize) -> Self {
        VertexMask { bits: vec![true; n] }
    }

    /// Mask of `n` vertices, none selected.
    pub fn none_set(n: usize) -> Self {
        VertexMask { bits: vec![false; n] }
    }

    /// Mask of `n` vertices with exactly the given indices selected.
    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::Config(format!(
                    "mask index {i} out of range for {n} vertices"
                )));
            }
            bits[i] = true;
        }
        Ok(VertexMask { bits })
    }

    /// Number of vertices the mask covers.
    pub fn vertex_count(&self) -> usize {
        self.bits.len()
    }

    /// Whether vertex `i` is selected. Panics if `i` is out of range.
    pub fn is_set(&self, i: usize) -> bool {
        self.bits[i]
    }

    /// Sets or clears vertex `i`. Panics if `i` is out of range.
    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    /// Number of selected vertices.
    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when no vertex is selected.
    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// True when every vertex is selected.
    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    /// Mask selecting exactly the vertices this one does not.
    pub fn complement(&self) -> Self {
        VertexMask {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Union with another mask of the same length.
    pub fn union(&self, other: &VertexMask) -> Result<Self> {
        self.check_len(other)?;
        Ok(VertexMask {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    /// Intersection with another mask of the same length.
    pub fn intersection(&self, other: &VertexMask) -> Result<Self> {
        self.check_len(other)?;
        Ok(VertexMask {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }

    /// True when every vertex selected here is also selected in `other`.
    pub fn is_subset_of(&self, other: &VertexMask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Indices of selected vertices, ascending.
    pub fn iter_set(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| if b { Some(i) } else { None })
    }

    /// Raw per-vertex flags.
    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    fn check_len(&self, other: &VertexMask) -> Result<()> {
        if self.bits.len() != other.bits.len() {
            return Err(Error::Config(format!(
                "mask length mismatch: {} vs {}",
                self.bits.len(),
                other.bits.len()
            )));
        }
        Ok(())
    }
}

// ============================================================================
// TriMesh
// ============================================================================

/// Immutable triangle mesh with optional named vertex labels.
///
/// Invariants enforced at construction:
/// - at least 3 vertices and 1 face;
/// - every face index is in range;
/// - no face repeats a vertex.
///
/// Labels are named vertex masks (e.g. `"acetabulum"`, `"crest"`); each label
/// mask has the same length as the vertex list.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    labels: BTreeMap<String, VertexMask>,
}

impl TriMesh {
    /// Builds a mesh, validating the structural invariants.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Topology(format!(
                "mesh needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if faces.is_empty() {
            return Err(Error::Topology("mesh needs at least 1 face".into()));
        }
        if vertices.len() > u32::MAX as usize {
            return Err(Error::Topology(format!(
                "vertex count {} exceeds the 32-bit index limit",
                vertices.len()
            )));
        }
        let n = vertices.len() as u32;
        for (f, face) in faces.iter().enumerate() {
            for &idx in face {
                if idx >= n {
                    return Err(Error::Topology(format!(
                        "face {f} references vertex {idx}, but the mesh has {n} vertices"
                    )));
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::Topology(format!(
                    "face {f} repeats a vertex: [{}, {}, {}]",
                    face[0], face[1], face[2]
                )));
            }
        }
        Ok(TriMesh {
            vertices,
            faces,
            labels: BTreeMap::new(),
        })
    }

    /// Attaches a named label mask; the mask length must match the vertex count.
    pub fn insert_label(&mut self, name: impl Into<String>, mask: VertexMask) -> Result<()> {
        if mask.vertex_count() != self.vertices.len() {
            return Err(Error::Config(format!(
                "label mask length {} does not match vertex count {}",
                mask.vertex_count(),
                self.vertices.len()
            )));
        }
        self.labels.insert(name.into(), mask);
        Ok(())
    }

    /// Number of vertices.
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Number of triangular faces.
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Vertex positions (mm).
    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    /// Triangle vertex indices.
    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// All label masks, keyed by name.
    pub fn labels(&self) -> &BTreeMap<String, VertexMask> {
        &self.labels
    }

    /// Label mask by name, if present.
    pub fn label(&self, name: &str) -> Option<&VertexMask> {
        self.labels.get(name)
    }

    /// New mesh with the same connectivity and labels but replaced positions.
    pub fn with_vertices(&self, vertices: Vec<Point3<f64>>) -> Result<TriMesh> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Topology(format!(
                "replacement vertex count {} does not match {}",
                vertices.len(),
                self.vertices.len()
            )));
        }
        Ok(TriMesh {
            vertices,
            faces: self.faces.clone(),
            labels: self.labels.clone(),
        })
    }

    /// True when `other` shares this mesh's vertex count and face list.
    pub fn same_topology(&self, other: &TriMesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.faces == other.faces
    }

    /// Axis-aligned bounding box as `(min, max)` corners.
    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for p in &self.vertices[1..] {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }
}

/// Requires `a` and `b` to be corresponded (same vertex count and faces).
pub(crate) fn check_same_topology(a: &TriMesh, b: &TriMesh, what: &str) -> Result<()> {
    if !a.same_topology(b) {
        return Err(Error::Topology(format!(
            "{what}: meshes are not corresponded ({} vertices / {} faces vs {} vertices / {} faces)",
            a.vertex_count(),
            a.face_count(),
            b.vertex_count(),
            b.face_count()
        )));
    }
    Ok(())
}

// ============================================================================
// Height and slab selection
// ============================================================================

/// Minimum and maximum z over a point set. Panics on an empty slice.
pub fn z_extent(points: &[Point3<f64>]) -> (f64, f64) {
    let mut lo = points[0].z;
    let mut hi = points[0].z;
    for p in &points[1..] {
        lo = lo.min(p.z);
        hi = hi.max(p.z);
    }
    (lo, hi)
}

/// Mesh extent along the superior axis: `max z - min z` (mm).
///
/// A planar mesh has height 0; the result is always finite and non-negative
/// for finite vertex data.
pub fn mesh_height(mesh: &TriMesh) -> f64 {
    let (lo, hi) = z_extent(mesh.vertices());
    hi - lo
}

/// Vertices whose z lies in the closed interval `[z_lo, z_hi]`.
///
/// Both endpoints are inclusive so that a slab bounded by exact vertex
/// coordinates keeps those vertices. `z_lo > z_hi` is a configuration error.
pub fn select_slab(mesh: &TriMesh, z_lo: f64, z_hi: f64) -> Result<VertexMask> {
    if !z_lo.is_finite() || !z_hi.is_finite() {
        return Err(Error::Config(format!(
            "slab bounds must be finite, got [{z_lo}, {z_hi}]"
        )));
    }
    if z_lo > z_hi {
        return Err(Error::Config(format!(
            "slab bounds out of order: z_lo {z_lo} > z_hi {z_hi}"
        )));
    }
    let bits = mesh
        .vertices()
        .iter()
        .map(|p| p.z >= z_lo && p.z <= z_hi)
        .collect();
    Ok(VertexMask::from_bits(bits))
}

/// Known-region mask for a partial view of `mesh`.
///
/// The mask is the union of two slabs:
///
/// 1. every vertex whose z falls within the z-range spanned by the
///    `region_label` vertices (the slices that fully enclose the labelled
///    region of interest), and
/// 2. the top `crest_fraction` of the mesh height, i.e. z in
///    `[z_max - crest_fraction * height, z_max]`.
///
/// `crest_fraction` is a decimal fraction in `[0, 1]`. Zero keeps component
/// (1) only (no top slab at all, not even the single top-most plane);
/// one makes the mask cover the whole mesh.
pub fn build_prior_mask(
    mesh: &TriMesh,
    region_label: &VertexMask,
    crest_fraction: f64,
) -> Result<VertexMask> {
    if region_label.vertex_count() != mesh.vertex_count() {
        return Err(Error::Config(format!(
            "label mask length {} does not match vertex count {}",
            region_label.vertex_count(),
            mesh.vertex_count()
        )));
    }
    if region_label.is_empty() {
        return Err(Error::Config(
            "region label is empty; cannot derive its slab".into(),
        ));
    }
    if !(0.0..=1.0).contains(&crest_fraction) || !crest_fraction.is_finite() {
        return Err(Error::Config(format!(
            "crest fraction must be a decimal fraction in [0, 1], got {crest_fraction}"
        )));
    }

    let labelled: Vec<Point3<f64>> = region_label
        .iter_set()
        .map(|i| mesh.vertices()[i])
        .collect();
    let (label_lo, label_hi) = z_extent(&labelled);
    let mut mask = select_slab(mesh, label_lo, label_hi)?;

    if crest_fraction > 0.0 {
        let (z_lo, z_hi) = z_extent(mesh.vertices());
        let crest_lo = z_hi - crest_fraction * (z_hi - z_lo);
        let crest = select_slab(mesh, crest_lo, z_hi)?;
        mask = mask.union(&crest)?;
    }
    Ok(mask)
}

/// Known vertices that share a mesh edge with at least one unknown vertex.
///
/// The seam is the boundary ring(s) of the known region; it is always a
/// subset of `known`. Masks of the wrong length are rejected.
pub fn seam_vertices(mesh: &TriMesh, known: &VertexMask) -> Result<VertexMask> {
    if known.vertex_count() != mesh.vertex_count() {
        return Err(Error::Config(format!(
            "mask length {} does not match vertex count {}",
            known.vertex_count(),
            mesh.vertex_count()
        )));
    }
    let mut seam = VertexMask::none_set(mesh.vertex_count());
    for face in mesh.faces() {
        for (a, b) in [
            (face[0] as usize, face[1] as usize),
            (face[1] as usize, face[2] as usize),
            (face[2] as usize, face[0] as usize),
        ] {
            match (known.is_set(a), known.is_set(b)) {
                (true, false) => seam.set(a, true),
                (false, true) => seam.set(b, true),
                _ => {}
            }
        }
    }
    Ok(seam)
}

// ============================================================================
// Tests
// ============================================================================
