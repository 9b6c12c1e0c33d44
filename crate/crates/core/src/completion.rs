//! Completion of a partial surface from a shape-model estimate.
//!
//! Given a *prior* (the partial surface actually measured), a mask of its
//! known vertices, and a full-surface *estimate* fitted by the shape model,
//! two strategies produce a complete surface:
//!
//! * **cut-and-paste** keeps the prior on the known region and copies the
//!   unknown region verbatim from the estimate. Fast, but the two surfaces
//!   generally disagree along the seam, leaving a visible step.
//! * **smooth** fits a thin-plate spline mapping the estimate's known-region
//!   vertices onto the prior's, then transports the estimate's unknown
//!   region through that warp. Because every seam vertex is a spline knot
//!   and the spline interpolates exactly, the donated surface meets the
//!   prior continuously.
//!
//! Both methods preserve the prior bit-for-bit on the known region. When the
//! known region has more vertices than the knot budget, knots are thinned by
//! farthest-point subsampling — except seam vertices, which are always
//! retained so the continuity guarantee survives the thinning.

use std::fmt;
use std::str::FromStr;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{check_same_topology, seam_vertices, TriMesh, VertexMask};
use crate::tps::fit_tps;

/// Default cap on the number of thin-plate-spline knots.
pub const DEFAULT_MAX_KNOTS: usize = 500;

// ============================================================================
// Types
// ============================================================================

/// Strategy for joining the donated surface to the prior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionMethod {
    /// Copy unknown-region vertices straight from the estimate.
    CutAndPaste,
    /// Warp the estimate onto the prior before donating the unknown region.
    Smooth,
}

impl fmt::Display for CompletionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompletionMethod::CutAndPaste => write!(f, "cut_and_paste"),
            CompletionMethod::Smooth => write!(f, "smooth"),
        }
    }
}

impl FromStr for CompletionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cut_and_paste" | "cut-and-paste" | "cnp" => Ok(CompletionMethod::CutAndPaste),
            "smooth" => Ok(CompletionMethod::Smooth),
            other => Err(Error::Config(format!(
                "unknown completion method '{other}' (expected cut_and_paste or smooth)"
            ))),
        }
    }
}

/// A completed surface plus everything needed to audit the join.
#[derive(Clone, Debug)]
pub struct CompletionResult {
    /// The completed surface: prior on known vertices, donor elsewhere.
    pub mesh: TriMesh,
    /// Mask of vertices taken from the prior.
    pub known: VertexMask,
    /// Known vertices adjacent to unknown ones (the join boundary).
    pub seam: VertexMask,
    /// Strategy that produced the result.
    pub method: CompletionMethod,
    /// Thin-plate-spline knots used (0 for cut-and-paste).
    pub knot_count: usize,
    /// Spline regularization weight (0 unless noisy knot data demanded it).
    pub regularization: f64,
    /// The full surface that supplied the unknown region: the raw estimate
    /// for cut-and-paste, the warped estimate for smooth. Seam discontinuity
    /// is measured against this mesh.
    pub donor: TriMesh,
}

impl CompletionResult {
    /// Serializable summary written alongside output meshes.
    pub fn metadata(&self) -> CompletionMetadata {
        CompletionMetadata {
            method: self.method,
            knot_count: self.knot_count,
            regularization: self.regularization,
            known_count: self.known.count_set(),
            unknown_count: self.known.vertex_count() - self.known.count_set(),
            seam_count: self.seam.count_set(),
        }
    }
}

/// JSON-facing summary of a completion run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionMetadata {
    /// Strategy that produced the result.
    pub method: CompletionMethod,
    /// Thin-plate-spline knots used (0 for cut-and-paste).
    pub knot_count: usize,
    /// Spline regularization weight.
    pub regularization: f64,
    /// Number of known (kept) vertices.
    pub known_count: usize,
    /// Number of donated vertices.
    pub unknown_count: usize,
    /// Number of seam vertices.
    pub seam_count: usize,
}

// ============================================================================
// Completion strategies
// ============================================================================

fn validate_completion_inputs(
    prior: &TriMesh,
    known: &VertexMask,
    estimate: &TriMesh,
    what: &str,
) -> Result<()> {
    check_same_topology(prior, estimate, what)?;
    if known.vertex_count() != prior.vertex_count() {
        return Err(Error::Config(format!(
            "{what}: mask length {} does not match vertex count {}",
            known.vertex_count(),
            prior.vertex_count()
        )));
    }
    if known.is_empty() {
        return Err(Error::Config(format!(
            "{what}: known-region mask is empty; there is no prior to keep"
        )));
    }
    if known.is_full() {
        return Err(Error::Config(format!(
            "{what}: every vertex is known; there is nothing to complete"
        )));
    }
    Ok(())
}

/// Merged vertex list: prior where known, donor elsewhere. Copies are exact.
fn splice_vertices(prior: &TriMesh, known: &VertexMask, donor: &TriMesh) -> Vec<Point3<f64>> {
    prior
        .vertices()
        .iter()
        .zip(donor.vertices())
        .enumerate()
        .map(|(i, (p, d))| if known.is_set(i) { *p } else { *d })
        .collect()
}

/// Completes a partial surface by copying the unknown region verbatim from
/// the estimate.
///
/// The known region is taken from the prior unchanged; no attempt is made to
/// reconcile the two surfaces at the seam, so the result generally shows a
/// step there.
pub fn cut_and_paste(
    prior: &TriMesh,
    known: &VertexMask,
    estimate: &TriMesh,
) -> Result<CompletionResult> {
    validate_completion_inputs(prior, known, estimate, "cut_and_paste")?;
    let seam = seam_vertices(prior, known)?;
    let mesh = prior.with_vertices(splice_vertices(prior, known, estimate))?;
    Ok(CompletionResult {
        mesh,
        known: known.clone(),
        seam,
        method: CompletionMethod::CutAndPaste,
        knot_count: 0,
        regularization: 0.0,
        donor: estimate.clone(),
    })
}

/// Completes a partial surface by warping the estimate onto the prior with a
/// thin-plate spline before donating the unknown region.
///
/// Knot sources are the estimate's known-region vertices, targets the
/// prior's corresponding vertices. If the known region exceeds `max_knots`,
/// knots are thinned by farthest-point subsampling with all seam vertices
/// retained; the cap may therefore be exceeded when the seam alone is larger
/// than `max_knots`. With `regularization = 0` the warp interpolates its
/// knots exactly, so the donated surface meets the prior continuously at the
/// seam.
pub fn smooth_complete(
    prior: &TriMesh,
    known: &VertexMask,
    estimate: &TriMesh,
    max_knots: usize,
    regularization: f64,
) -> Result<CompletionResult> {
    validate_completion_inputs(prior, known, estimate, "smooth_complete")?;
    let seam = seam_vertices(prior, known)?;
    if seam.is_empty() {
        return Err(Error::Config(
            "smooth_complete: seam is empty (the unknown region shares no face edge with the \
             known region), so no continuous join exists"
                .into(),
        ));
    }

    let knot_indices: Vec<usize> = if known.count_set() <= max_knots {
        known.iter_set().collect()
    } else {
        farthest_point_subsample(estimate.vertices(), known, &seam, max_knots)?
    };
    let sources: Vec<Point3<f64>> = knot_indices.iter().map(|&i| estimate.vertices()[i]).collect();
    let targets: Vec<Point3<f64>> = knot_indices.iter().map(|&i| prior.vertices()[i]).collect();

    let warp = fit_tps(&sources, &targets, regularization)?;
    let donor = warp.warp_mesh(estimate)?;
    let mesh = prior.with_vertices(splice_vertices(prior, known, &donor))?;

    Ok(CompletionResult {
        mesh,
        known: known.clone(),
        seam,
        method: CompletionMethod::Smooth,
        knot_count: knot_indices.len(),
        regularization,
        donor,
    })
}

/// Runs the selected completion strategy with its standard parameters.
pub fn complete(
    prior: &TriMesh,
    known: &VertexMask,
    estimate: &TriMesh,
    method: CompletionMethod,
    max_knots: usize,
    regularization: f64,
) -> Result<CompletionResult> {
    match method {
        CompletionMethod::CutAndPaste => cut_and_paste(prior, known, estimate),
        CompletionMethod::Smooth => {
            smooth_complete(prior, known, estimate, max_knots, regularization)
        }
    }
}

// ============================================================================
// Farthest-point subsampling
// ============================================================================

/// Deterministic farthest-point subsample of the candidate vertices.
///
/// All `mandatory` vertices (which must be candidates) are retained first,
/// even when they alone exceed `target`. Remaining slots are filled
/// greedily with the candidate farthest from everything selected so far;
/// distance ties break toward the smaller vertex index, and when no
/// mandatory vertices exist the seed is the lowest-index candidate. The
/// selection stops early if every remaining candidate coincides with an
/// already-selected point (such duplicates would be useless, degenerate
/// knots). Returns ascending vertex indices.
pub fn farthest_point_subsample(
    points: &[Point3<f64>],
    candidates: &VertexMask,
    mandatory: &VertexMask,
    target: usize,
) -> Result<Vec<usize>> {
    let n = points.len();
    if candidates.vertex_count() != n || mandatory.vertex_count() != n {
        return Err(Error::Config(format!(
            "mask lengths {} and {} do not match point count {n}",
            candidates.vertex_count(),
            mandatory.vertex_count()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::Config("no candidate vertices to subsample".into()));
    }
    if !mandatory.is_subset_of(candidates) {
        return Err(Error::Config(
            "mandatory vertices must all be candidates".into(),
        ));
    }
    if target == 0 {
        return Err(Error::Config("subsample target must be at least 1".into()));
    }

    let mut chosen = vec![false; n];
    let mut dist_sq = vec![f64::INFINITY; n];
    let mut selected: Vec<usize> = mandatory.iter_set().collect();
    for &s in &selected {
        chosen[s] = true;
    }
    for &s in &selected {
        for c in candidates.iter_set() {
            if !chosen[c] {
                dist_sq[c] = dist_sq[c].min((points[c] - points[s]).norm_squared());
            }
        }
    }
    if selected.is_empty() {
        let seed = candidates.iter_set().next().expect("nonempty candidates");
        chosen[seed] = true;
        selected.push(seed);
        for c in candidates.iter_set() {
            if !chosen[c] {
                dist_sq[c] = dist_sq[c].min((points[c] - points[seed]).norm_squared());
            }
        }
    }

    while selected.len() < target {
        let mut best: Option<usize> = None;
        let mut best_d = -1.0;
        for c in candidates.iter_set() {
            if !chosen[c] && dist_sq[c] > best_d {
                best_d = dist_sq[c];
                best = Some(c);
            }
        }
        let Some(c) = best else { break }; // candidates exhausted
        if best_d <= 0.0 {
            break; // only coincident points remain
        }
        chosen[c] = true;
        selected.push(c);
        for k in candidates.iter_set() {
            if !chosen[k] {
                dist_sq[k] = dist_sq[k].min((points[k] - points[c]).norm_squared());
            }
        }
    }

    selected.sort_unstable();
    Ok(selected)
}

// ============================================================================
// Tests
// ============================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::seam_gap;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// 6x6 grid with a gentle height field. A flat grid would make every
    /// knot set coplanar, which the spline fit (correctly) rejects.
    fn grid() -> TriMesh {
        let flat = crate::mesh::tests::grid(6, 6, 0.0);
        flat.with_vertices(
            flat.vertices()
                .iter()
                .map(|p| {
                    Point3::new(
                        p.x,
                        p.y,
                        0.4 * (1.3 * p.x).sin() + 0.25 * (0.9 * p.y).cos(),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    /// Known = lower two rows of the 6x6 grid (12 vertices).
    fn lower_rows_mask(n: usize) -> VertexMask {
        VertexMask::from_indices(36, &(0..n).collect::<Vec<_>>()).unwrap()
    }

    fn perturbed(mesh: &TriMesh, seed: u64, scale: f64) -> TriMesh {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        mesh.with_vertices(
            mesh.vertices()
                .iter()
                .map(|p| {
                    Point3::new(
                        p.x + rng.random_range(-scale..scale),
                        p.y + rng.random_range(-scale..scale),
                        p.z + rng.random_range(-scale..scale),
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn cut_and_paste_splices_exactly() {
        let prior = grid();
        let estimate = perturbed(&prior, 1, 0.4);
        let known = lower_rows_mask(12);
        let result = cut_and_paste(&prior, &known, &estimate).unwrap();

        for i in 0..36 {
            if known.is_set(i) {
                // Bit-exact copy of the prior.
                assert_eq!(result.mesh.vertices()[i], prior.vertices()[i]);
            } else {
                assert_eq!(result.mesh.vertices()[i], estimate.vertices()[i]);
            }
        }
        assert_eq!(result.method, CompletionMethod::CutAndPaste);
        assert_eq!(result.knot_count, 0);
        assert_eq!(result.donor.vertices(), estimate.vertices());
        assert_eq!(result.mesh.faces(), prior.faces());
    }

    #[test]
    fn both_methods_return_the_prior_when_estimate_equals_prior() {
        let prior = grid();
        let known = lower_rows_mask(12);

        let cnp = cut_and_paste(&prior, &known, &prior).unwrap();
        assert_eq!(cnp.mesh.vertices(), prior.vertices());

        let smooth = smooth_complete(&prior, &known, &prior, DEFAULT_MAX_KNOTS, 0.0).unwrap();
        for (got, want) in smooth.mesh.vertices().iter().zip(prior.vertices()) {
            assert!((got - want).norm() < 1e-9);
        }
        // Known region is still bit-exact even for smooth.
        for i in known.iter_set() {
            assert_eq!(smooth.mesh.vertices()[i], prior.vertices()[i]);
        }
    }

    #[test]
    fn smooth_completion_absorbs_a_rigid_translation() {
        // The estimate is the truth displaced by a constant t. The spline
        // maps estimate coordinates back onto the prior exactly (affine term),
        // so the donated unknown region lands on the truth.
        let truth = grid();
        let t = Vector3::new(2.0, -1.0, 3.5);
        let estimate = truth
            .with_vertices(truth.vertices().iter().map(|p| p + t).collect())
            .unwrap();
        let known = lower_rows_mask(12);

        let smooth = smooth_complete(&truth, &known, &estimate, DEFAULT_MAX_KNOTS, 0.0).unwrap();
        for i in 0..36 {
            assert!(
                (smooth.mesh.vertices()[i] - truth.vertices()[i]).norm() < 1e-8,
                "vertex {i}"
            );
        }

        // Cut-and-paste keeps the translation in the unknown region.
        let cnp = cut_and_paste(&truth, &known, &estimate).unwrap();
        for i in 0..36 {
            if !known.is_set(i) {
                let err = (cnp.mesh.vertices()[i] - truth.vertices()[i]).norm();
                assert!((err - t.norm()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn seam_gap_contrast_between_methods() {
        // Estimate disagrees with the prior by a constant 0.5 mm lift, so
        // cut-and-paste leaves a 0.5 mm step at the seam while smooth joins
        // continuously.
        let prior = grid();
        let estimate = prior
            .with_vertices(
                prior
                    .vertices()
                    .iter()
                    .map(|p| Point3::new(p.x, p.y, p.z + 0.5))
                    .collect(),
            )
            .unwrap();
        let known = lower_rows_mask(12);

        let cnp = cut_and_paste(&prior, &known, &estimate).unwrap();
        let gap = seam_gap(&prior, &cnp.known, &cnp.donor).unwrap();
        assert!((gap - 0.5).abs() < 1e-12, "cut-and-paste gap {gap}");

        let smooth = smooth_complete(&prior, &known, &estimate, DEFAULT_MAX_KNOTS, 0.0).unwrap();
        let gap = seam_gap(&prior, &smooth.known, &smooth.donor).unwrap();
        assert!(gap <= 1e-6, "smooth gap {gap}");
    }

    #[test]
    fn known_region_is_preserved_bit_exactly_with_noisy_estimates() {
        let prior = perturbed(&grid(), 7, 0.3);
        let estimate = perturbed(&grid(), 8, 0.3);
        let known = lower_rows_mask(14);
        for result in [
            cut_and_paste(&prior, &known, &estimate).unwrap(),
            smooth_complete(&prior, &known, &estimate, DEFAULT_MAX_KNOTS, 0.0).unwrap(),
        ] {
            for i in known.iter_set() {
                // Exact f64 equality, not a tolerance.
                assert_eq!(result.mesh.vertices()[i], prior.vertices()[i]);
            }
        }
    }

    #[test]
    fn smooth_respects_the_knot_cap_but_keeps_the_seam() {
        let prior = grid();
        let estimate = perturbed(&prior, 3, 0.1);
        let known = lower_rows_mask(18); // 18 known vertices
        let seam = seam_vertices(&prior, &known).unwrap();

        let capped = smooth_complete(&prior, &known, &estimate, 8, 0.0).unwrap();
        assert!(capped.knot_count <= 8.max(seam.count_set()));
        assert!(capped.knot_count >= seam.count_set());
        // The continuity guarantee survives the cap because the seam
        // vertices all remain knots.
        let gap = seam_gap(&prior, &capped.known, &capped.donor).unwrap();
        assert!(gap <= 1e-6, "gap {gap}");
    }

    #[test]
    fn smooth_completion_is_deterministic() {
        let prior = grid();
        let estimate = perturbed(&prior, 5, 0.25);
        let known = lower_rows_mask(12);
        let a = smooth_complete(&prior, &known, &estimate, 10, 0.0).unwrap();
        let b = smooth_complete(&prior, &known, &estimate, 10, 0.0).unwrap();
        assert_eq!(a.mesh.vertices(), b.mesh.vertices());
        assert_eq!(a.knot_count, b.knot_count);
    }

    #[test]
    fn degenerate_masks_are_rejected() {
        let prior = grid();
        let estimate = perturbed(&prior, 2, 0.2);
        for mask in [VertexMask::none_set(36), VertexMask::all_set(36)] {
            let err = cut_and_paste(&prior, &mask, &estimate).unwrap_err();
            assert_eq!(err.category(), "CONFIG");
            let err =
                smooth_complete(&prior, &mask, &estimate, DEFAULT_MAX_KNOTS, 0.0).unwrap_err();
            assert_eq!(err.category(), "CONFIG");
        }
        let err = cut_and_paste(&prior, &VertexMask::all_set(9), &estimate).unwrap_err();
        assert_eq!(err.category(), "CONFIG");
    }

    #[test]
    fn disconnected_unknown_region_has_no_seam_and_errors() {
        // Two disjoint tetrahedra in one mesh; the unknown one shares no
        // face edge with the known one.
        let mut vertices = Vec::new();
        let mut faces: Vec<[u32; 3]> = Vec::new();
        for (k, offset) in [0.0f64, 10.0].iter().enumerate() {
            let o = *offset;
            vertices.extend([
                Point3::new(o, 0.0, 0.0),
                Point3::new(o + 1.0, 0.0, 0.0),
                Point3::new(o, 1.0, 0.0),
                Point3::new(o, 0.0, 1.0),
            ]);
            let b = (4 * k) as u32;
            faces.extend([
                [b, b + 2, b + 1],
                [b, b + 1, b + 3],
                [b, b + 3, b + 2],
                [b + 1, b + 2, b + 3],
            ]);
        }
        let mesh = TriMesh::new(vertices, faces).unwrap();
        let known = VertexMask::from_indices(8, &[0, 1, 2, 3]).unwrap();

        let err = smooth_complete(&mesh, &known, &mesh, DEFAULT_MAX_KNOTS, 0.0).unwrap_err();
        assert_eq!(err.category(), "CONFIG");
        assert!(err.to_string().contains("seam"), "{err}");

        // Cut-and-paste needs no seam and still works.
        assert!(cut_and_paste(&mesh, &known, &mesh).is_ok());
    }

    #[test]
    fn topology_mismatch_is_rejected() {
        let prior = grid();
        let other = crate::mesh::tests::cube();
        let err =
            cut_and_paste(&prior, &lower_rows_mask(12), &other).unwrap_err();
        assert_eq!(err.category(), "TOPOLOGY");
    }

    #[test]
    fn farthest_point_subsample_hand_case() {
        // Ten points on a line. Seeded at index 0 (mandatory), the farthest
        // candidate is 9; next, indices 4 and 5 tie at min-distance 4 and
        // the tie breaks to the smaller index.
        let points: Vec<Point3<f64>> =
            (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let candidates = VertexMask::all_set(10);
        let mandatory = VertexMask::from_indices(10, &[0]).unwrap();
        let picked = farthest_point_subsample(&points, &candidates, &mandatory, 3).unwrap();
        assert_eq!(picked, vec![0, 4, 9]);

        // Without mandatory vertices the seed is the lowest candidate.
        let none = VertexMask::none_set(10);
        let picked = farthest_point_subsample(&points, &candidates, &none, 2).unwrap();
        assert_eq!(picked, vec![0, 9]);
    }

    #[test]
    fn farthest_point_subsample_keeps_mandatory_beyond_target() {
        let points: Vec<Point3<f64>> =
            (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let candidates = VertexMask::all_set(10);
        let mandatory = VertexMask::from_indices(10, &[2, 3, 5]).unwrap();
        let picked = farthest_point_subsample(&points, &candidates, &mandatory, 2).unwrap();
        assert_eq!(picked, vec![2, 3, 5]);
    }

    #[test]
    fn farthest_point_subsample_skips_coincident_points() {
        let mut points: Vec<Point3<f64>> =
            (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        points.push(Point3::new(0.0, 0.0, 0.0)); // duplicate of index 0
        let candidates = VertexMask::all_set(6);
        let mandatory = VertexMask::from_indices(6, &[0]).unwrap();
        let picked = farthest_point_subsample(&points, &candidates, &mandatory, 6).unwrap();
        // Index 5 coincides with index 0 and is never selected.
        assert_eq!(picked, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn farthest_point_subsample_validation() {
        let points: Vec<Point3<f64>> =
            (0..4).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let err = farthest_point_subsample(
            &points,
            &VertexMask::none_set(4),
            &VertexMask::none_set(4),
            2,
        )
        .unwrap_err();
        assert_eq!(err.category(), "CONFIG");

        // Mandatory not a subset of candidates.
        let err = farthest_point_subsample(
            &points,
            &VertexMask::from_indices(4, &[0, 1]).unwrap(),
            &VertexMask::from_indices(4, &[3]).unwrap(),
            2,
        )
        .unwrap_err();
        assert_eq!(err.category(), "CONFIG");

        let err = farthest_point_subsample(
            &points,
            &VertexMask::all_set(4),
            &VertexMask::none_set(4),
            0,
        )
        .unwrap_err();
        assert_eq!(err.category(), "CONFIG");
    }

    #[test]
    fn method_parsing_and_display() {
        assert_eq!(
            "cut_and_paste".parse::<CompletionMethod>().unwrap(),
            CompletionMethod::CutAndPaste
        );
        assert_eq!(
            "cnp".parse::<CompletionMethod>().unwrap(),
            CompletionMethod::CutAndPaste
        );
        assert_eq!(
            "CUT-AND-PASTE".parse::<CompletionMethod>().unwrap(),
            CompletionMethod::CutAndPaste
        );
        assert_eq!(
            "smooth".parse::<CompletionMethod>().unwrap(),
            CompletionMethod::Smooth
        );
        assert!("warp".parse::<CompletionMethod>().is_err());

        assert_eq!(CompletionMethod::CutAndPaste.to_string(), "cut_and_paste");
        assert_eq!(CompletionMethod::Smooth.to_string(), "smooth");
        // Round trip through Display/FromStr.
        for m in [CompletionMethod::CutAndPaste, CompletionMethod::Smooth] {
            assert_eq!(m.to_string().parse::<CompletionMethod>().unwrap(), m);
        }
    }

    #[test]
    fn metadata_serializes_the_run_parameters() {
        let prior = grid();
        let estimate = perturbed(&prior, 4, 0.2);
        let known = lower_rows_mask(12);
        let result = smooth_complete(&prior, &known, &estimate, DEFAULT_MAX_KNOTS, 0.0).unwrap();
        let meta = result.metadata();
        assert_eq!(meta.method, CompletionMethod::Smooth);
        assert_eq!(meta.knot_count, 12);
        assert_eq!(meta.known_count, 12);
        assert_eq!(meta.unknown_count, 24);
        let json = serde_json::to_string(&meta).unwrap();
        assert!(json.contains("\"smooth\""), "{json}");
        let back: CompletionMetadata = serde_json::from_str(&json).unwrap();
        assert_eq!(back, meta);
    }
}
