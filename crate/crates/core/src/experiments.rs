//! Leave-one-out evaluation protocols, aggregation, and heat-map export.
//!
//! Two protocols are implemented over a corresponded mesh population:
//!
//! - **Complete-anatomy generalization** ([`loo_full`]): each shape in turn
//!   is left out, a model is trained on the rest, the left-out shape is
//!   projected onto all modes and re-synthesized, and errors are measured
//!   over every vertex. This measures how well the model generalizes to an
//!   unseen but fully observed shape.
//! - **Partial-prior extrapolation** ([`loo_extrapolate`]): the left-out
//!   shape is only partially observed (a prior mask built from its
//!   acetabulum label and a crest slab), coefficients are fitted to the
//!   known vertices alone, and the reconstruction is stitched to the known
//!   surface by a completion method. Errors are measured over the unknown
//!   region only — the part that was actually extrapolated.
//!
//! Reports carry the full per-iteration table, aggregates recomputable from
//! it, per-vertex mean-error fields for heat-map export, and a provenance
//! block (input digests, seed, resolved options). Identical inputs produce
//! byte-identical report JSON: iterations run in parallel but are reduced
//! in fixed order, so thread count cannot change a single output byte.
//!
//! Error direction ([`crate::metrics`] convention): estimate vertices are
//! measured against the truth surface, one-sided.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::completion::{complete, CompletionMethod, DEFAULT_MAX_KNOTS};
use crate::error::{Error, Result};
use crate::mesh::{build_prior_mask, TriMesh, VertexMask};
use crate::metrics::{region_errors, seam_gap, ErrorStats};
use crate::ply::{save_mesh_with_comments, PlyFormat};
use crate::provenance::{mesh_digest, Provenance};
use crate::ssm::{build_ssm, project_full, project_partial, synthesize};

/// Report kind produced by [`loo_full`].
pub const KIND_COMPLETE_ANATOMY: &str = "complete_anatomy_loo";
/// Report kind produced by [`loo_extrapolate`].
pub const KIND_PARTIAL_PRIOR: &str = "partial_prior_loo";

/// Aggregate/heat-map key of the single [`loo_full`] cell.
pub const FULL_KEY: &str = "full";

/// Sentinel written into heat-map fields for vertices that were known
/// (never extrapolated) in every iteration; renderers map it to grey.
pub const KNOWN_SENTINEL: f64 = -1.0;

// ============================================================================
// Configuration types
// ============================================================================

fn default_true() -> bool {
    true
}

/// How much of the shape is treated as known prior surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Fraction of the mesh height, taken from the top, whose vertices are
    /// known. Decimal fraction in `[0, 1]` (0.05 = 5%).
    pub crest_fraction: f64,
    /// Whether the acetabulum label (and the z-slab enclosing it) is known.
    #[serde(default = "default_true")]
    pub include_acetabulum: bool,
}

impl PriorConfig {
    /// A config with the given crest fraction and the acetabulum included.
    pub fn new(crest_fraction: f64) -> Result<Self> {
        let config = PriorConfig {
            crest_fraction,
            include_acetabulum: true,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks that the crest fraction is a valid decimal fraction.
    pub fn validate(&self) -> Result<()> {
        if !self.crest_fraction.is_finite() || !(0.0..=1.0).contains(&self.crest_fraction) {
            return Err(Error::Config(format!(
                "crest_fraction must lie in [0, 1], got {}",
                self.crest_fraction
            )));
        }
        Ok(())
    }

    /// Stable string identity used in aggregate and heat-map keys,
    /// e.g. `acetabulum+crest0.05`.
    pub fn key(&self) -> String {
        if self.include_acetabulum {
            format!("acetabulum+crest{}", self.crest_fraction)
        } else {
            format!("crest{}", self.crest_fraction)
        }
    }
}

/// The default evaluation grid: crest fractions 0%, 5%, 10%, 15%, each with
/// the acetabulum included.
pub fn default_configs() -> Vec<PriorConfig> {
    [0.0, 0.05, 0.10, 0.15]
        .iter()
        .map(|&f| PriorConfig {
            crest_fraction: f,
            include_acetabulum: true,
        })
        .collect()
}

/// Tunable options of the leave-one-out protocols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LooOptions {
    /// Ridge weight for the partial projection (0 = plain least squares).
    pub tikhonov: f64,
    /// Knot budget for smooth completion.
    pub max_knots: usize,
    /// Spline regularization weight for smooth completion.
    pub tps_regularization: f64,
    /// Record failed iterations as gaps instead of aborting the run.
    /// Aggregates then cover the surviving rows only, and the report's
    /// `gaps` map says exactly how many rows each cell is missing —
    /// silent averaging over absent cells is never possible.
    pub skip_failures: bool,
    /// Seed of the dataset generator, if known; recorded in provenance.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dataset_seed: Option<u64>,
}

impl Default for LooOptions {
    fn default() -> Self {
        LooOptions {
            tikhonov: 0.0,
            max_knots: DEFAULT_MAX_KNOTS,
            tps_regularization: 0.0,
            skip_failures: false,
            dataset_seed: None,
        }
    }
}

// ============================================================================
// Report types
// ============================================================================

/// One evaluated (left-out shape, config, method) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    /// Index of the left-out shape in the input dataset.
    pub left_out: usize,
    /// Prior configuration; absent for complete-anatomy rows.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config: Option<PriorConfig>,
    /// Completion method; absent for complete-anatomy rows.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub method: Option<CompletionMethod>,
    /// Error statistics of this cell; absent when the iteration failed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stats: Option<ErrorStats>,
    /// Largest prior/donor displacement jump along the seam (mm).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seam_gap: Option<f64>,
    /// True when the unknown region was empty (nothing to extrapolate);
    /// such rows carry zero stats by definition.
    #[serde(default)]
    pub degenerate: bool,
    /// Whether every known vertex of the completed mesh is bit-identical
    /// to the prior surface.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prior_preserved: Option<bool>,
    /// Failure description when the iteration was skipped.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl IterationRow {
    /// Aggregate/heat-map key of the cell this row belongs to.
    pub fn key(&self) -> String {
        match (&self.config, &self.method) {
            (Some(c), Some(m)) => format!("{}|{m}", c.key()),
            _ => FULL_KEY.to_string(),
        }
    }
}

/// Full record of one leave-one-out run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Protocol that produced the report.
    pub kind: String,
    /// Input digests, seed, and resolved parameters.
    pub provenance: Provenance,
    /// Vertices per shape.
    pub vertex_count: usize,
    /// Shapes in the dataset.
    pub shape_count: usize,
    /// Evaluated prior configurations (empty for complete-anatomy runs).
    pub configs: Vec<PriorConfig>,
    /// Evaluated completion methods (empty for complete-anatomy runs).
    pub methods: Vec<CompletionMethod>,
    /// Options the run was executed with.
    pub options: LooOptions,
    /// Per left-out index: digests of the meshes actually trained on,
    /// in dataset order. Row `i` never contains shape `i`'s digest.
    pub training_digests: Vec<Vec<String>>,
    /// One row per (left-out, config, method) cell.
    pub per_iteration: Vec<IterationRow>,
    /// Per-cell aggregates keyed by `config.key()|method` (or `full`):
    /// `rms_surface` = RMS over rows of per-row mean surface error,
    /// `max_surface` = average over rows of per-row max surface error,
    /// `mean_surface`/`rms_vertex` = mean/RMS of the per-row values,
    /// `sample_count` = number of rows aggregated.
    pub aggregates: BTreeMap<String, ErrorStats>,
    /// Per-vertex mean surface error (mm) over iterations in which the
    /// vertex was unknown, keyed like `aggregates`; [`KNOWN_SENTINEL`]
    /// where the vertex was known in every iteration.
    pub per_vertex_mean_error: BTreeMap<String, Vec<f64>>,
    /// Failed-row counts per cell key; empty on a clean run.
    pub gaps: BTreeMap<String, usize>,
}

impl ExperimentReport {
    /// Serializes the report as pretty JSON (deterministic byte-for-byte).
    pub fn to_json_string(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("report serialization failed: {e}")))?;
        text.push('\n');
        Ok(text)
    }

    /// Parses a report from JSON text.
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("report does not parse as JSON: {e}")))
    }

    /// Writes the report as JSON to a file.
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }

    /// Reads a report from a JSON file.
    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Writes the aggregate table as CSV: one row per prior config, one
    /// `rms`/`max` column pair per method (mm). Crest fractions are
    /// rendered as percentages to match the usual table axes; error values
    /// are written at full shortest-round-trip precision. Complete-anatomy
    /// reports produce a single row. Cells whose aggregate is missing (all
    /// rows failed) are left empty.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        if self.kind == KIND_COMPLETE_ANATOMY {
            out.push_str("rms_of_mean_surface_mm,avg_of_max_surface_mm\n");
            if let Some(a) = self.aggregates.get(FULL_KEY) {
                out.push_str(&format!("{},{}\n", a.rms_surface, a.max_surface));
            }
        } else {
            out.push_str("crest_percent,include_acetabulum");
            for m in &self.methods {
                out.push_str(&format!(",{m}_rms_mm,{m}_max_mm"));
            }
            out.push('\n');
            for c in &self.configs {
                out.push_str(&format!(
                    "{},{}",
                    format_percent(c.crest_fraction),
                    c.include_acetabulum
                ));
                for m in &self.methods {
                    match self.aggregates.get(&format!("{}|{m}", c.key())) {
                        Some(a) => {
                            out.push_str(&format!(",{},{}", a.rms_surface, a.max_surface));
                        }
                        None => out.push_str(",,"),
                    }
                }
                out.push('\n');
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Renders a decimal fraction as a percentage for table axes, trimming
/// binary-representation noise (`0.05` → `"5"`, not `"5.000000000000001"`).
fn format_percent(fraction: f64) -> String {
    let mut s = format!("{:.8}", fraction * 100.0);
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

// ============================================================================
// Shared machinery
// ============================================================================

/// Prefixes an error message with iteration context, keeping its category.
fn annotate(context: &str, e: Error) -> Error {
    match e {
        Error::Io { .. } => e,
        Error::Format(m) => Error::Format(format!("{context}: {m}")),
        Error::Topology(m) => Error::Topology(format!("{context}: {m}")),
        Error::Singular(m) => Error::Singular(format!("{context}: {m}")),
        Error::Config(m) => Error::Config(format!("{context}: {m}")),
    }
}

/// Arithmetic mean shape of a corresponded population (labels and
/// connectivity taken from the first mesh).
pub fn mean_mesh(meshes: &[TriMesh]) -> Result<TriMesh> {
    if meshes.is_empty() {
        return Err(Error::Config("mean of zero meshes is undefined".into()));
    }
    let first = &meshes[0];
    for (i, m) in meshes.iter().enumerate().skip(1) {
        if !first.same_topology(m) {
            return Err(Error::Topology(format!(
                "mesh {i} does not share the template connectivity of mesh 0"
            )));
        }
    }
    let n = first.vertex_count();
    let mut sums = vec![nalgebra::Vector3::<f64>::zeros(); n];
    for m in meshes {
        for (s, p) in sums.iter_mut().zip(m.vertices()) {
            *s += p.coords;
        }
    }
    let inv = 1.0 / meshes.len() as f64;
    first.with_vertices(
        sums.iter()
            .map(|s| nalgebra::Point3::from(s * inv))
            .collect(),
    )
}

/// Zero statistics for a vacuous (fully known) evaluation region.
fn zero_stats() -> ErrorStats {
    ErrorStats::from_errors(&[], &[]).expect("empty error slices are consistent")
}

/// Aggregates rows with stats into per-key summary statistics.
///
/// Per key: `rms_surface` = RMS of per-row `mean_surface` values (the
/// "RMS of mean surface errors" table), `max_surface` = average of per-row
/// `max_surface` values ("average of maximum surface errors"),
/// `mean_surface` and `rms_vertex` = mean resp. RMS of the per-row values,
/// `sample_count` = contributing rows.
fn aggregate_rows(rows: &[IterationRow]) -> BTreeMap<String, ErrorStats> {
    let mut grouped: BTreeMap<String, Vec<&ErrorStats>> = BTreeMap::new();
    for row in rows {
        if let Some(stats) = &row.stats {
            grouped.entry(row.key()).or_default().push(stats);
        }
    }
    grouped
        .into_iter()
        .map(|(key, cells)| {
            let n = cells.len() as f64;
            let rms_surface =
                (cells.iter().map(|s| s.mean_surface * s.mean_surface).sum::<f64>() / n).sqrt();
            let max_surface = cells.iter().map(|s| s.max_surface).sum::<f64>() / n;
            let mean_surface = cells.iter().map(|s| s.mean_surface).sum::<f64>() / n;
            let rms_vertex =
                (cells.iter().map(|s| s.rms_vertex * s.rms_vertex).sum::<f64>() / n).sqrt();
            (
                key,
                ErrorStats {
                    rms_surface,
                    max_surface,
                    mean_surface,
                    rms_vertex,
                    sample_count: cells.len(),
                },
            )
        })
        .collect()
}

/// Per-vertex error contributions of one row: `(vertex, surface error)`.
type HeatContribution = Vec<(usize, f64)>;

/// Reduces per-row heat contributions into mean-error fields with the
/// known-region sentinel.
fn reduce_heat_fields(
    keys: impl Iterator<Item = String>,
    rows: &[IterationRow],
    contributions: &[HeatContribution],
    vertex_count: usize,
) -> BTreeMap<String, Vec<f64>> {
    let mut fields = BTreeMap::new();
    for key in keys {
        let mut sums = vec![0.0f64; vertex_count];
        let mut counts = vec![0usize; vertex_count];
        for (row, contribution) in rows.iter().zip(contributions) {
            if row.key() != key {
                continue;
            }
            for &(v, err) in contribution {
                sums[v] += err;
                counts[v] += 1;
            }
        }
        let field = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| if c == 0 { KNOWN_SENTINEL } else { s / c as f64 })
            .collect();
        fields.insert(key, field);
    }
    fields
}

fn check_dataset(meshes: &[TriMesh]) -> Result<()> {
    if meshes.len() < 3 {
        return Err(Error::Config(format!(
            "leave-one-out needs at least 3 meshes, got {}",
            meshes.len()
        )));
    }
    let first = &meshes[0];
    for (i, m) in meshes.iter().enumerate().skip(1) {
        if !first.same_topology(m) {
            return Err(Error::Topology(format!(
                "mesh {i} does not share the template connectivity of mesh 0"
            )));
        }
    }
    Ok(())
}

/// Digests of all meshes except `left_out`, in dataset order.
fn training_digests_for(digests: &[String], left_out: usize) -> Vec<String> {
    digests
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != left_out)
        .map(|(_, d)| d.clone())
        .collect()
}

fn training_set(meshes: &[TriMesh], left_out: usize) -> Vec<TriMesh> {
    meshes
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != left_out)
        .map(|(_, m)| m.clone())
        .collect()
}

// ============================================================================
// Complete-anatomy protocol
// ============================================================================

/// Leave-one-out generalization test on fully observed shapes.
///
/// For each shape: train on the rest, project the left-out shape onto all
/// modes, re-synthesize, and measure errors over every vertex.
pub fn loo_full(meshes: &[TriMesh]) -> Result<ExperimentReport> {
    loo_full_with(meshes, &LooOptions::default())
}

/// [`loo_full`] with explicit options.
pub fn loo_full_with(meshes: &[TriMesh], options: &LooOptions) -> Result<ExperimentReport> {
    check_dataset(meshes)?;
    let digests: Vec<String> = meshes.iter().map(mesh_digest).collect();
    let vertex_count = meshes[0].vertex_count();
    let all = VertexMask::all_set(vertex_count);

    let outcomes: Vec<Result<IterationRow>> = (0..meshes.len())
        .into_par_iter()
        .map(|i| {
            let run = || -> Result<ErrorStats> {
                let ssm = build_ssm(&training_set(meshes, i))?;
                let b = project_full(&ssm, &meshes[i])?;
                let estimate = synthesize(&ssm, &b)?;
                let (surface, vertex) = region_errors(&estimate, &meshes[i], &all)?;
                ErrorStats::from_errors(&surface, &vertex)
            };
            match run() {
                Ok(stats) => Ok(IterationRow {
                    left_out: i,
                    config: None,
                    method: None,
                    stats: Some(stats),
                    seam_gap: None,
                    degenerate: false,
                    prior_preserved: None,
                    error: None,
                }),
                Err(e) => Err(annotate(&format!("left-out {i}"), e)),
            }
        })
        .collect();

    let mut per_iteration = Vec::with_capacity(outcomes.len());
    let mut gaps: BTreeMap<String, usize> = BTreeMap::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(row) => per_iteration.push(row),
            Err(e) if options.skip_failures => {
                let row = IterationRow {
                    left_out: i,
                    config: None,
                    method: None,
                    stats: None,
                    seam_gap: None,
                    degenerate: false,
                    prior_preserved: None,
                    error: Some(e.to_string()),
                };
                *gaps.entry(row.key()).or_insert(0) += 1;
                per_iteration.push(row);
            }
            Err(e) => return Err(e),
        }
    }

    let aggregates = aggregate_rows(&per_iteration);
    let mut provenance = Provenance::new().with_meshes(meshes).with_parameters(
        serde_json::json!({ "protocol": KIND_COMPLETE_ANATOMY, "options": options }),
    );
    if let Some(seed) = options.dataset_seed {
        provenance = provenance.with_seed(seed);
    }

    Ok(ExperimentReport {
        kind: KIND_COMPLETE_ANATOMY.to_string(),
        provenance,
        vertex_count,
        shape_count: meshes.len(),
        configs: Vec::new(),
        methods: Vec::new(),
        options: options.clone(),
        training_digests: (0..meshes.len())
            .map(|i| training_digests_for(&digests, i))
            .collect(),
        per_iteration,
        aggregates,
        per_vertex_mean_error: BTreeMap::new(),
        gaps,
    })
}

// ============================================================================
// Partial-prior extrapolation protocol
// ============================================================================

/// Leave-one-out extrapolation test on partially observed shapes.
///
/// For each (left-out shape, config, method): train on the rest, build the
/// prior mask on the left-out shape, fit coefficients to the known vertices
/// with all modes, synthesize the estimate, complete it against the known
/// surface, and measure errors over the unknown region only.
pub fn loo_extrapolate(
    meshes: &[TriMesh],
    configs: &[PriorConfig],
    methods: &[CompletionMethod],
) -> Result<ExperimentReport> {
    loo_extrapolate_with(meshes, configs, methods, &LooOptions::default())
}

/// Rows and heat contributions of one left-out iteration.
struct LeftOutOutcome {
    rows: Vec<IterationRow>,
    contributions: Vec<HeatContribution>,
}

/// [`loo_extrapolate`] with explicit options.
pub fn loo_extrapolate_with(
    meshes: &[TriMesh],
    configs: &[PriorConfig],
    methods: &[CompletionMethod],
    options: &LooOptions,
) -> Result<ExperimentReport> {
    check_dataset(meshes)?;
    if configs.is_empty() {
        return Err(Error::Config("no prior configurations given".into()));
    }
    if methods.is_empty() {
        return Err(Error::Config("no completion methods given".into()));
    }
    for config in configs {
        config.validate()?;
    }
    {
        let mut seen = std::collections::BTreeSet::new();
        for config in configs {
            if !seen.insert(config.key()) {
                return Err(Error::Config(format!(
                    "duplicate prior configuration {}",
                    config.key()
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for method in methods {
            if !seen.insert(method.to_string()) {
                return Err(Error::Config(format!("duplicate completion method {method}")));
            }
        }
    }

    let digests: Vec<String> = meshes.iter().map(mesh_digest).collect();
    let vertex_count = meshes[0].vertex_count();

    // One parallel job per left-out shape; each emits its (config, method)
    // rows in fixed order so the sequential reduction below is order-stable.
    let outcomes: Vec<LeftOutOutcome> = (0..meshes.len())
        .into_par_iter()
        .map(|i| left_out_iteration(meshes, i, configs, methods, options))
        .collect::<Result<Vec<_>>>()?;

    let mut per_iteration = Vec::with_capacity(meshes.len() * configs.len() * methods.len());
    let mut contributions = Vec::with_capacity(per_iteration.capacity());
    let mut gaps: BTreeMap<String, usize> = BTreeMap::new();
    for outcome in outcomes {
        for (row, contribution) in outcome.rows.into_iter().zip(outcome.contributions) {
            if row.error.is_some() {
                *gaps.entry(row.key()).or_insert(0) += 1;
            }
            per_iteration.push(row);
            contributions.push(contribution);
        }
    }

    let aggregates = aggregate_rows(&per_iteration);
    let keys = configs.iter().flat_map(|c| {
        methods
            .iter()
            .map(move |m| format!("{}|{m}", c.key()))
    });
    let per_vertex_mean_error =
        reduce_heat_fields(keys, &per_iteration, &contributions, vertex_count);

    let mut provenance = Provenance::new().with_meshes(meshes).with_parameters(
        serde_json::json!({
            "protocol": KIND_PARTIAL_PRIOR,
            "configs": configs,
            "methods": methods,
            "options": options,
        }),
    );
    if let Some(seed) = options.dataset_seed {
        provenance = provenance.with_seed(seed);
    }

    Ok(ExperimentReport {
        kind: KIND_PARTIAL_PRIOR.to_string(),
        provenance,
        vertex_count,
        shape_count: meshes.len(),
        configs: configs.to_vec(),
        methods: methods.to_vec(),
        options: options.clone(),
        training_digests: (0..meshes.len())
            .map(|i| training_digests_for(&digests, i))
            .collect(),
        per_iteration,
        aggregates,
        per_vertex_mean_error,
        gaps,
    })
}

/// Evaluates every (config, method) cell for one left-out shape.
fn left_out_iteration(
    meshes: &[TriMesh],
    left_out: usize,
    configs: &[PriorConfig],
    methods: &[CompletionMethod],
    options: &LooOptions,
) -> Result<LeftOutOutcome> {
    let truth = &meshes[left_out];
    let empty_region = VertexMask::none_set(truth.vertex_count());
    let mut rows = Vec::with_capacity(configs.len() * methods.len());
    let mut contributions: Vec<HeatContribution> = Vec::with_capacity(rows.capacity());

    // A failed row either aborts the whole run or is recorded as a gap.
    let push_failure = |rows: &mut Vec<IterationRow>,
                            contributions: &mut Vec<HeatContribution>,
                            config: &PriorConfig,
                            method: CompletionMethod,
                            e: &Error|
     -> Result<()> {
        let context = format!("left-out {left_out}, {}, {method}", config.key());
        if !options.skip_failures {
            return Err(annotate(
                &context,
                match e {
                    Error::Io { path, source } => Error::io(
                        path.clone(),
                        std::io::Error::new(source.kind(), source.to_string()),
                    ),
                    Error::Format(m) => Error::Format(m.clone()),
                    Error::Topology(m) => Error::Topology(m.clone()),
                    Error::Singular(m) => Error::Singular(m.clone()),
                    Error::Config(m) => Error::Config(m.clone()),
                },
            ));
        }
        rows.push(IterationRow {
            left_out,
            config: Some(*config),
            method: Some(method),
            stats: None,
            seam_gap: None,
            degenerate: false,
            prior_preserved: None,
            error: Some(format!("{context}: {e}")),
        });
        contributions.push(Vec::new());
        Ok(())
    };

    let ssm = build_ssm(&training_set(meshes, left_out))
        .map_err(|e| annotate(&format!("left-out {left_out}"), e));
    let ssm = match ssm {
        Ok(ssm) => Ok(ssm),
        Err(e) => {
            if options.skip_failures {
                Err(e.to_string())
            } else {
                return Err(e);
            }
        }
    };

    for config in configs {
        // Model failure poisons every cell of this iteration.
        let ssm = match &ssm {
            Ok(ssm) => ssm,
            Err(msg) => {
                for &method in methods {
                    rows.push(IterationRow {
                        left_out,
                        config: Some(*config),
                        method: Some(method),
                        stats: None,
                        seam_gap: None,
                        degenerate: false,
                        prior_preserved: None,
                        error: Some(msg.clone()),
                    });
                    contributions.push(Vec::new());
                }
                continue;
            }
        };

        // Known mask and fitted estimate are method-independent.
        let prepared = (|| -> Result<(VertexMask, VertexMask, Option<TriMesh>)> {
            let region = match (config.include_acetabulum, truth.label("acetabulum")) {
                (true, Some(label)) => label.clone(),
                (true, None) => {
                    return Err(Error::Config(
                        "dataset meshes carry no 'acetabulum' label".into(),
                    ))
                }
                (false, _) => empty_region.clone(),
            };
            let known = build_prior_mask(truth, &region, config.crest_fraction)?;
            let unknown = known.complement();
            if unknown.is_empty() {
                return Ok((known, unknown, None));
            }
            let b = project_partial(ssm, truth, &known, options.tikhonov)?;
            let estimate = synthesize(ssm, &b)?;
            Ok((known, unknown, Some(estimate)))
        })();

        let (known, unknown, estimate) = match prepared {
            Ok(p) => p,
            Err(e) => {
                for &method in methods {
                    push_failure(&mut rows, &mut contributions, config, method, &e)?;
                }
                continue;
            }
        };

        for &method in methods {
            let Some(estimate) = &estimate else {
                // Fully known shape: nothing to extrapolate, zero error.
                rows.push(IterationRow {
                    left_out,
                    config: Some(*config),
                    method: Some(method),
                    stats: Some(zero_stats()),
                    seam_gap: None,
                    degenerate: true,
                    prior_preserved: Some(true),
                    error: None,
                });
                contributions.push(Vec::new());
                continue;
            };

            let cell = (|| -> Result<(IterationRow, HeatContribution)> {
                let result = complete(
                    truth,
                    &known,
                    estimate,
                    method,
                    options.max_knots,
                    options.tps_regularization,
                )?;
                let (surface, vertex) = region_errors(&result.mesh, truth, &unknown)?;
                let stats = ErrorStats::from_errors(&surface, &vertex)?;
                let gap = seam_gap(truth, &known, &result.donor)?;
                let preserved = known
                    .iter_set()
                    .all(|v| result.mesh.vertices()[v] == truth.vertices()[v]);
                let contribution: HeatContribution =
                    unknown.iter_set().zip(surface.iter().copied()).collect();
                Ok((
                    IterationRow {
                        left_out,
                        config: Some(*config),
                        method: Some(method),
                        stats: Some(stats),
                        seam_gap: Some(gap),
                        degenerate: false,
                        prior_preserved: Some(preserved),
                        error: None,
                    },
                    contribution,
                ))
            })();

            match cell {
                Ok((row, contribution)) => {
                    rows.push(row);
                    contributions.push(contribution);
                }
                Err(e) => push_failure(&mut rows, &mut contributions, config, method, &e)?,
            }
        }
    }

    Ok(LeftOutOutcome {
        rows,
        contributions,
    })
}

// ============================================================================
// Heat-map export
// ============================================================================

/// Writes the per-vertex mean-error field of one (config, method) cell as a
/// PLY heat map on the mean shape.
///
/// The field is stored in the vertex `quality` channel; vertices that were
/// known in every iteration carry [`KNOWN_SENTINEL`] so renderers can grey
/// them out.
pub fn export_heatmap(
    report: &ExperimentReport,
    config: &PriorConfig,
    method: CompletionMethod,
    mean_shape: &TriMesh,
    path: impl AsRef<Path>,
) -> Result<()> {
    let key = format!("{}|{method}", config.key());
    let field = report.per_vertex_mean_error.get(&key).ok_or_else(|| {
        Error::Config(format!(
            "report has no heat-map field '{key}'; available: [{}]",
            report
                .per_vertex_mean_error
                .keys()
                .cloned()
                .collect::<Vec<_>>()
                .join(", ")
        ))
    })?;
    if field.len() != mean_shape.vertex_count() {
        return Err(Error::Config(format!(
            "heat-map field length {} does not match mean shape vertex count {}",
            field.len(),
            mean_shape.vertex_count()
        )));
    }
    let mut comments = vec![
        format!("tool_version {}", report.provenance.tool_version),
        format!("cell {key}"),
        format!("quality mean surface error (mm); {KNOWN_SENTINEL} = known region"),
    ];
    if let Some(seed) = report.provenance.seed {
        comments.push(format!("seed {seed}"));
    }
    if let Some(digest) = &report.provenance.dataset_digest {
        comments.push(format!("dataset {digest}"));
    }
    save_mesh_with_comments(mean_shape, path, PlyFormat::Ascii, Some(field), &comments)
}

// ============================================================================
// Tests
// ============================================================================
