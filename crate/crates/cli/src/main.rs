//! Command-line toolkit for statistical shape models and partial-surface
//! completion.
//!
//! Subcommands cover the full workflow: `synth` generates a deterministic
//! labelled dataset, `build-ssm` trains a shape model from it, `complete`
//! reconstructs a partially known mesh, `eval-loo` runs the leave-one-out
//! evaluation protocols, and `heatmap` exports per-vertex error fields from
//! a report.
//!
//! Conventions shared by every subcommand:
//!
//! - Failures print exactly one machine-parsable line to stderr,
//!   `error[CATEGORY]: message`, with a category-specific exit code
//!   (IO=10, FORMAT=11, TOPOLOGY=12, SINGULAR=13, CONFIG=14).
//! - A JSON config file (`--config`) mirrors the flags; explicit flags win
//!   on conflict, and the fully resolved parameters are recorded in every
//!   artifact's provenance block.
//! - The seed resolves as flag > config file > `SHAPECOMPLETE_SEED` env
//!   var > built-in default.
//! - Outputs embed input digests, the seed, and the tool version — never
//!   timestamps — so identical inputs reproduce identical bytes, whatever
//!   `--jobs` says.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use shapecomplete_core::completion::{complete, CompletionMethod, DEFAULT_MAX_KNOTS};
use shapecomplete_core::experiments::{
    default_configs, export_heatmap, loo_extrapolate_with, loo_full_with, mean_mesh,
    ExperimentReport, LooOptions, PriorConfig, KIND_PARTIAL_PRIOR,
};
use shapecomplete_core::mesh::build_prior_mask;
use shapecomplete_core::metrics::seam_gap;
use shapecomplete_core::ply::{load_mesh, save_mesh_with_comments, PlyFormat};
use shapecomplete_core::provenance::{dataset_digest, mesh_digest, Provenance, TOOL_VERSION};
use shapecomplete_core::ssm::{
    build_ssm, load_ssm, project_partial, save_ssm, synthesize, SsmSidecar,
    ZERO_VARIANCE_REL_THRESHOLD,
};
use shapecomplete_core::synth::{default_sigmas, generate_population, SynthSpec, DEFAULT_SEED};
use shapecomplete_core::{Error, Result, TriMesh, VertexMask};

// ============================================================================
// Argument definitions
// ============================================================================

#[derive(Parser)]
#[command(
    name = "shapecomplete",
    version,
    about = "Statistical shape models and partial shape completion for corresponded meshes",
    after_help = "Errors print one line `error[CATEGORY]: message` to stderr; exit codes: \
                  IO=10, FORMAT=11, TOPOLOGY=12, SINGULAR=13, CONFIG=14."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled dataset with known ground truth.
    Synth(SynthArgs),
    /// Build a shape model from a dataset directory.
    BuildSsm(BuildSsmArgs),
    /// Complete a partially known mesh using a trained model.
    Complete(CompleteArgs),
    /// Run a leave-one-out evaluation and write report artifacts.
    EvalLoo(EvalLooArgs),
    /// Export one per-vertex error heat map from a report.
    Heatmap(HeatmapArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed of the population stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of shapes to generate.
    #[arg(long)]
    shapes: Option<usize>,
    /// Number of generative displacement modes.
    #[arg(long)]
    modes: Option<usize>,
    /// Template subdivision level (0 = 12 vertices, 3 = 642).
    #[arg(long)]
    resolution: Option<u32>,
    /// Standard deviation of per-coordinate jitter (mm).
    #[arg(long)]
    noise: Option<f64>,
    /// Comma-separated per-mode coefficient sigmas in mm
    /// (default: graded 3.0 down to 0.3).
    #[arg(long)]
    sigmas: Option<String>,
    /// Mesh file encoding.
    #[arg(long, value_parser = ["ascii", "binary"])]
    format: Option<String>,
    /// JSON config file mirroring these flags (flags win on conflict).
    #[arg(long)]
    config: Option<PathBuf>,
}

/// `synth --config` file: same knobs as the flags.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthFileConfig {
    out: Option<PathBuf>,
    seed: Option<u64>,
    shapes: Option<usize>,
    modes: Option<usize>,
    resolution: Option<u32>,
    noise: Option<f64>,
    sigmas: Option<Vec<f64>>,
    format: Option<String>,
}

#[derive(Args)]
struct BuildSsmArgs {
    /// Dataset directory (a `synth` output, or any directory of
    /// corresponded PLY meshes).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file mirroring these flags (flags win on conflict).
    #[arg(long)]
    config: Option<PathBuf>,
}

/// `build-ssm --config` file: same knobs as the flags.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuildSsmFileConfig {
    dataset: Option<PathBuf>,
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompleteArgs {
    /// Trained model file (a `build-ssm` output).
    #[arg(long)]
    model: PathBuf,
    /// Partially known mesh (PLY); geometry is trusted on the known region.
    #[arg(long)]
    input: PathBuf,
    /// Completed mesh output path (PLY, binary little-endian).
    #[arg(long)]
    out: PathBuf,
    /// Take the known-vertex mask from this label of the input mesh.
    #[arg(long, conflicts_with = "crest")]
    known_label: Option<String>,
    /// Build the known mask from the acetabulum label plus this crest
    /// fraction (decimal, e.g. 0.05 for 5%).
    #[arg(long)]
    crest: Option<f64>,
    /// With --crest: leave the acetabulum region out of the known mask.
    #[arg(long, requires = "crest")]
    no_acetabulum: bool,
    /// Completion method.
    #[arg(long, default_value = "smooth")]
    method: String,
    /// Knot budget for smooth completion.
    #[arg(long, default_value_t = DEFAULT_MAX_KNOTS)]
    max_knots: usize,
    /// Spline regularization weight for smooth completion.
    #[arg(long, default_value_t = 0.0)]
    tps_regularization: f64,
    /// Ridge weight for the partial projection.
    #[arg(long, default_value_t = 0.0)]
    tikhonov: f64,
}

#[derive(Args)]
struct EvalLooArgs {
    /// Dataset directory (a `synth` output).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Protocol: `full` (complete-anatomy) or `extrapolate` (partial prior).
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated crest fractions as decimals, e.g. `0,0.05,0.10,0.15`.
    #[arg(long)]
    crest: Option<String>,
    /// Comma-separated completion methods (`cut_and_paste`/`cnp`, `smooth`).
    #[arg(long)]
    methods: Option<String>,
    /// Leave the acetabulum region out of every prior mask.
    #[arg(long)]
    no_acetabulum: bool,
    /// Ridge weight for the partial projection.
    #[arg(long)]
    tikhonov: Option<f64>,
    /// Knot budget for smooth completion.
    #[arg(long)]
    max_knots: Option<usize>,
    /// Spline regularization weight for smooth completion.
    #[arg(long)]
    tps_regularization: Option<f64>,
    /// Record failed iterations as gaps instead of aborting.
    #[arg(long)]
    skip_failures: bool,
    /// Worker threads for the leave-one-out loop (output bytes are
    /// independent of this).
    #[arg(long)]
    jobs: Option<usize>,
    /// Report JSON output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the aggregate table as CSV to this path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also export per-cell heat maps into this directory.
    #[arg(long)]
    heatmaps: Option<PathBuf>,
    /// JSON config file mirroring these flags (flags win on conflict).
    #[arg(long)]
    config: Option<PathBuf>,
}

/// `eval-loo --config` file: same knobs as the flags.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalLooFileConfig {
    dataset: Option<PathBuf>,
    mode: Option<String>,
    crest: Option<Vec<f64>>,
    methods: Option<Vec<String>>,
    no_acetabulum: Option<bool>,
    tikhonov: Option<f64>,
    max_knots: Option<usize>,
    tps_regularization: Option<f64>,
    skip_failures: Option<bool>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
    heatmaps: Option<PathBuf>,
}

#[derive(Args)]
struct HeatmapArgs {
    /// Report JSON (an `eval-loo` output).
    #[arg(long)]
    report: PathBuf,
    /// Dataset directory the report was computed from (for the mean shape).
    #[arg(long)]
    dataset: PathBuf,
    /// Crest fraction of the cell to export (decimal).
    #[arg(long)]
    crest: f64,
    /// Select the cell whose prior mask excluded the acetabulum.
    #[arg(long)]
    no_acetabulum: bool,
    /// Completion method of the cell to export.
    #[arg(long)]
    method: String,
    /// Output PLY path.
    #[arg(long)]
    out: PathBuf,
}

// ============================================================================
// Shared plumbing
// ============================================================================

fn exit_code_for(e: &Error) -> u8 {
    match e.category() {
        "IO" => 10,
        "FORMAT" => 11,
        "TOPOLOGY" => 12,
        "SINGULAR" => 13,
        _ => 14,
    }
}

/// Seed from the `SHAPECOMPLETE_SEED` environment variable, if set.
fn env_seed() -> Result<Option<u64>> {
    match std::env::var("SHAPECOMPLETE_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| {
                Error::Config(format!(
                    "SHAPECOMPLETE_SEED must be an unsigned integer, got '{text}'"
                ))
            }),
        Err(_) => Ok(None),
    }
}

fn load_file_config<T: serde::de::DeserializeOwned + Default>(
    path: &Option<PathBuf>,
) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!(
            "{}: config file does not match this subcommand's flags: {e}",
            path.display()
        ))
    })
}

fn parse_method(name: &str) -> Result<CompletionMethod> {
    match name.trim() {
        "cnp" | "cut_and_paste" | "cut-and-paste" => Ok(CompletionMethod::CutAndPaste),
        "smooth" => Ok(CompletionMethod::Smooth),
        other => Err(Error::Config(format!(
            "unknown completion method '{other}' (expected cut_and_paste/cnp or smooth)"
        ))),
    }
}

fn parse_crest_fraction(value: f64) -> Result<f64> {
    if !value.is_finite() || value < 0.0 {
        return Err(Error::Config(format!(
            "crest fraction must be a nonnegative decimal, got {value}"
        )));
    }
    if value > 1.0 {
        return Err(Error::Config(format!(
            "crest fraction {value} exceeds 1; fractions are decimals, not percents \
             (did you mean {}?)",
            value / 100.0
        )));
    }
    Ok(value)
}

fn parse_crest_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|item| {
            let item = item.trim();
            let value: f64 = item.parse().map_err(|_| {
                Error::Config(format!("crest list entry '{item}' is not a number"))
            })?;
            parse_crest_fraction(value)
        })
        .collect()
}

/// Dataset directory manifest written by `synth` and read back by the
/// training/evaluation subcommands.
#[derive(Serialize, Deserialize)]
struct DatasetManifest {
    provenance: Provenance,
    /// Mesh file names in dataset order, relative to the directory.
    files: Vec<String>,
    /// Ground-truth record file name, relative to the directory.
    ground_truth: String,
    vertex_count: usize,
    face_count: usize,
}

const MANIFEST_NAME: &str = "dataset.json";

/// Loads a dataset directory: meshes in manifest order when a manifest is
/// present, otherwise every `*.ply` in lexicographic name order.
fn load_dataset(dir: &Path) -> Result<(Vec<TriMesh>, Option<DatasetManifest>)> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let manifest: Option<DatasetManifest> = if manifest_path.exists() {
        let text =
            std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        Some(serde_json::from_str(&text).map_err(|e| {
            Error::Format(format!(
                "{}: manifest does not parse: {e}",
                manifest_path.display()
            ))
        })?)
    } else {
        None
    };

    let files: Vec<PathBuf> = match &manifest {
        Some(m) => m.files.iter().map(|f| dir.join(f)).collect(),
        None => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "ply"))
                .collect();
            files.sort();
            files
        }
    };
    if files.is_empty() {
        return Err(Error::Config(format!(
            "{}: no PLY meshes found",
            dir.display()
        )));
    }
    let meshes = files
        .iter()
        .map(|path| Ok(load_mesh(path)?.mesh))
        .collect::<Result<Vec<TriMesh>>>()?;
    Ok((meshes, manifest))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ============================================================================
// synth
// ============================================================================

fn run_synth(args: SynthArgs) -> Result<()> {
    let file: SynthFileConfig = load_file_config(&args.config)?;

    let seed = match args.seed.or(file.seed) {
        Some(seed) => seed,
        None => env_seed()?.unwrap_or(DEFAULT_SEED),
    };
    let modes = args.modes.or(file.modes).unwrap_or(10);
    let sigmas = match (&args.sigmas, file.sigmas) {
        (Some(text), _) => text
            .split(',')
            .map(|item| {
                item.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("sigma list entry '{}' is not a number", item.trim()))
                })
            })
            .collect::<Result<Vec<f64>>>()?,
        (None, Some(list)) => list,
        (None, None) => default_sigmas(modes),
    };
    let spec = SynthSpec {
        template_resolution: args.resolution.or(file.resolution).unwrap_or(3),
        generative_modes: modes,
        coefficient_sigmas: sigmas,
        noise_sigma: args.noise.or(file.noise).unwrap_or(0.2),
        sample_count: args.shapes.or(file.shapes).unwrap_or(42),
        seed,
    };
    let format = match args.format.or(file.format).as_deref() {
        None | Some("binary") => PlyFormat::BinaryLittleEndian,
        Some("ascii") => PlyFormat::Ascii,
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown mesh format '{other}' (expected ascii or binary)"
            )))
        }
    };
    let out = args
        .out
        .or(file.out)
        .ok_or_else(|| Error::Config("missing output directory (--out)".into()))?;

    let (meshes, truth) = generate_population(&spec)?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let digits = meshes.len().to_string().len().max(3);
    let mut files = Vec::with_capacity(meshes.len());
    for (i, mesh) in meshes.iter().enumerate() {
        let name = format!("shape_{i:0digits$}.ply");
        let comments = vec![
            format!("tool_version {TOOL_VERSION}"),
            format!("seed {seed}"),
            format!("shape {i} of {}", meshes.len()),
        ];
        save_mesh_with_comments(mesh, out.join(&name), format, None, &comments)?;
        files.push(name);
    }

    let truth_name = "ground_truth.json";
    write_json(&out.join(truth_name), &truth)?;

    let parameters = serde_json::to_value(&spec)
        .map_err(|e| Error::Format(format!("spec serialization failed: {e}")))?;
    let manifest = DatasetManifest {
        provenance: Provenance::new()
            .with_seed(seed)
            .with_meshes(&meshes)
            .with_parameters(parameters),
        files,
        ground_truth: truth_name.to_string(),
        vertex_count: meshes[0].vertex_count(),
        face_count: meshes[0].face_count(),
    };
    write_json(&out.join(MANIFEST_NAME), &manifest)?;

    println!(
        "wrote {} shapes ({} vertices, {} faces) to {}",
        meshes.len(),
        manifest.vertex_count,
        manifest.face_count,
        out.display()
    );
    println!(
        "dataset digest: {}",
        manifest.provenance.dataset_digest.as_deref().unwrap_or("-")
    );
    Ok(())
}

// ============================================================================
// build-ssm
// ============================================================================

fn run_build_ssm(args: BuildSsmArgs) -> Result<()> {
    let file: BuildSsmFileConfig = load_file_config(&args.config)?;
    let dataset = args
        .dataset
        .or(file.dataset)
        .ok_or_else(|| Error::Config("missing dataset directory (--dataset)".into()))?;
    let out = args
        .out
        .or(file.out)
        .ok_or_else(|| Error::Config("missing model output path (--out)".into()))?;

    let (meshes, manifest) = load_dataset(&dataset)?;
    let ssm = build_ssm(&meshes)?;

    let training_hashes: Vec<String> = meshes.iter().map(mesh_digest).collect();
    let sidecar = SsmSidecar {
        tool_version: TOOL_VERSION.to_string(),
        sample_count: meshes.len(),
        zero_variance_threshold: ZERO_VARIANCE_REL_THRESHOLD,
        extra: serde_json::json!({
            "dataset": dataset.display().to_string(),
            "dataset_digest": dataset_digest(&training_hashes),
            "dataset_seed": manifest.as_ref().and_then(|m| m.provenance.seed),
        }),
        training_hashes,
    };
    save_ssm(&ssm, &out, &sidecar)?;

    println!(
        "model: {} vertices, {} modes (trained on {} shapes)",
        ssm.vertex_count(),
        ssm.mode_count(),
        meshes.len()
    );
    for (j, sigma) in ssm.std_devs().iter().enumerate() {
        println!("sigma {j}: {sigma} mm");
    }
    println!("wrote {}", out.display());
    Ok(())
}

// ============================================================================
// complete
// ============================================================================

/// Metadata JSON written next to a completed mesh.
///
/// The known and seam masks live here rather than as mesh labels: they
/// overlap the anatomical labels, and the PLY label channel stores a
/// single value per vertex.
#[derive(Serialize)]
struct CompleteRecord {
    provenance: Provenance,
    completion: shapecomplete_core::completion::CompletionMetadata,
    /// Largest prior/donor displacement jump along the seam (mm).
    seam_gap_mm: f64,
    /// Vertices kept from the input.
    known_indices: Vec<usize>,
    /// Known vertices on the boundary of the donated region.
    seam_indices: Vec<usize>,
}

fn run_complete(args: CompleteArgs) -> Result<()> {
    let (ssm, _sidecar) = load_ssm(&args.model)?;
    let loaded = load_mesh(&args.input)?;
    let mesh = loaded.mesh;

    let known = match (&args.known_label, args.crest) {
        (Some(name), None) => mesh
            .label(name)
            .cloned()
            .ok_or_else(|| {
                Error::Config(format!(
                    "input mesh has no label '{name}'; available: [{}]",
                    mesh.labels().keys().cloned().collect::<Vec<_>>().join(", ")
                ))
            })?,
        (None, Some(crest)) => {
            let crest = parse_crest_fraction(crest)?;
            let region = if args.no_acetabulum {
                VertexMask::none_set(mesh.vertex_count())
            } else {
                mesh.label("acetabulum")
                    .cloned()
                    .ok_or_else(|| {
                        Error::Config(
                            "input mesh has no 'acetabulum' label; pass --no-acetabulum to \
                             build the mask from the crest slab alone"
                                .into(),
                        )
                    })?
            };
            build_prior_mask(&mesh, &region, crest)?
        }
        (None, None) => {
            return Err(Error::Config(
                "no known region given: pass --known-label NAME or --crest FRACTION".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects conflicting flags"),
    };

    let method = parse_method(&args.method)?;
    let coefficients = project_partial(&ssm, &mesh, &known, args.tikhonov)?;
    let estimate = synthesize(&ssm, &coefficients)?;
    let result = complete(
        &mesh,
        &known,
        &estimate,
        method,
        args.max_knots,
        args.tps_regularization,
    )?;
    let gap = seam_gap(&mesh, &known, &result.donor)?;

    let comments = vec![
        format!("tool_version {TOOL_VERSION}"),
        format!("model {}", mesh_digest(&ssm.mean_mesh()?)),
        format!("input {}", mesh_digest(&mesh)),
        format!("method {method}"),
    ];
    save_mesh_with_comments(
        &result.mesh,
        &args.out,
        PlyFormat::BinaryLittleEndian,
        None,
        &comments,
    )?;

    let record = CompleteRecord {
        provenance: Provenance::new()
            .with_meshes(std::slice::from_ref(&mesh))
            .with_parameters(serde_json::json!({
                "model": args.model.display().to_string(),
                "input": args.input.display().to_string(),
                "known_label": args.known_label,
                "crest": args.crest,
                "no_acetabulum": args.no_acetabulum,
                "method": method.to_string(),
                "max_knots": args.max_knots,
                "tps_regularization": args.tps_regularization,
                "tikhonov": args.tikhonov,
            })),
        completion: result.metadata(),
        seam_gap_mm: gap,
        known_indices: result.known.iter_set().collect(),
        seam_indices: result.seam.iter_set().collect(),
    };
    let record_path = PathBuf::from(format!("{}.json", args.out.display()));
    write_json(&record_path, &record)?;

    println!(
        "completed {} unknown vertices via {} ({} knots); seam gap {gap} mm",
        record.completion.unknown_count, method, record.completion.knot_count
    );
    println!("wrote {} and {}", args.out.display(), record_path.display());
    Ok(())
}

// ============================================================================
// eval-loo
// ============================================================================

/// Deterministic file name for one heat-map cell.
fn heatmap_file_name(config: &PriorConfig, method: CompletionMethod) -> String {
    let crest = format!("{}", config.crest_fraction).replace('.', "p");
    let region = if config.include_acetabulum {
        "acetabulum"
    } else {
        "noacetabulum"
    };
    format!("heat_crest{crest}_{region}_{method}.ply")
}

fn run_eval_loo(args: EvalLooArgs) -> Result<()> {
    let file: EvalLooFileConfig = load_file_config(&args.config)?;

    if let Some(jobs) = args.jobs.or(file.jobs) {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("could not set up {jobs} worker threads: {e}")))?;
    }

    let dataset = args
        .dataset
        .or(file.dataset)
        .ok_or_else(|| Error::Config("missing dataset directory (--dataset)".into()))?;
    let mode = args.mode.or(file.mode).unwrap_or_else(|| "extrapolate".into());
    let out = args
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("report.json"));

    let (meshes, manifest) = load_dataset(&dataset)?;
    let options = LooOptions {
        tikhonov: args.tikhonov.or(file.tikhonov).unwrap_or(0.0),
        max_knots: args.max_knots.or(file.max_knots).unwrap_or(DEFAULT_MAX_KNOTS),
        tps_regularization: args
            .tps_regularization
            .or(file.tps_regularization)
            .unwrap_or(0.0),
        skip_failures: args.skip_failures || file.skip_failures.unwrap_or(false),
        dataset_seed: manifest.as_ref().and_then(|m| m.provenance.seed),
    };

    let report = match mode.as_str() {
        "full" => {
            for (flag, given) in [
                ("--crest", args.crest.is_some() || file.crest.is_some()),
                ("--methods", args.methods.is_some() || file.methods.is_some()),
                (
                    "--no-acetabulum",
                    args.no_acetabulum || file.no_acetabulum.unwrap_or(false),
                ),
            ] {
                if given {
                    return Err(Error::Config(format!(
                        "{flag} applies to --mode extrapolate only"
                    )));
                }
            }
            loo_full_with(&meshes, &options)?
        }
        "extrapolate" => {
            let include_acetabulum =
                !(args.no_acetabulum || file.no_acetabulum.unwrap_or(false));
            let fractions = match (&args.crest, file.crest) {
                (Some(text), _) => parse_crest_list(text)?,
                (None, Some(list)) => list
                    .into_iter()
                    .map(parse_crest_fraction)
                    .collect::<Result<Vec<f64>>>()?,
                (None, None) => default_configs().iter().map(|c| c.crest_fraction).collect(),
            };
            let configs: Vec<PriorConfig> = fractions
                .into_iter()
                .map(|crest_fraction| PriorConfig {
                    crest_fraction,
                    include_acetabulum,
                })
                .collect();
            let methods = match (&args.methods, file.methods) {
                (Some(text), _) => text
                    .split(',')
                    .map(parse_method)
                    .collect::<Result<Vec<_>>>()?,
                (None, Some(list)) => list
                    .iter()
                    .map(|name| parse_method(name))
                    .collect::<Result<Vec<_>>>()?,
                (None, None) => vec![CompletionMethod::CutAndPaste, CompletionMethod::Smooth],
            };
            loo_extrapolate_with(&meshes, &configs, &methods, &options)?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown mode '{other}' (expected full or extrapolate)"
            )))
        }
    };

    report.save_json(&out)?;
    println!("report: {}", out.display());

    if let Some(csv) = args.csv.or(file.csv) {
        report.write_csv(&csv)?;
        println!("csv: {}", csv.display());
    }
    if let Some(dir) = args.heatmaps.or(file.heatmaps) {
        if report.kind != KIND_PARTIAL_PRIOR {
            return Err(Error::Config(
                "--heatmaps applies to --mode extrapolate only".into(),
            ));
        }
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mean = mean_mesh(&meshes)?;
        for config in &report.configs {
            for &method in &report.methods {
                let path = dir.join(heatmap_file_name(config, method));
                export_heatmap(&report, config, method, &mean, &path)?;
            }
        }
        println!("heatmaps: {}", dir.display());
    }

    for (key, stats) in &report.aggregates {
        println!(
            "{key}: rms {} mm, max {} mm (over {} iterations)",
            stats.rms_surface, stats.max_surface, stats.sample_count
        );
    }
    if !report.gaps.is_empty() {
        for (key, count) in &report.gaps {
            println!("{key}: {count} failed iterations recorded as gaps");
        }
    }
    Ok(())
}

// ============================================================================
// heatmap
// ============================================================================

fn run_heatmap(args: HeatmapArgs) -> Result<()> {
    let report = ExperimentReport::load_json(&args.report)?;
    let (meshes, _) = load_dataset(&args.dataset)?;
    let mean = mean_mesh(&meshes)?;
    let config = PriorConfig {
        crest_fraction: parse_crest_fraction(args.crest)?,
        include_acetabulum: !args.no_acetabulum,
    };
    let method = parse_method(&args.method)?;
    export_heatmap(&report, &config, method, &mean, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

// ============================================================================
// Entry point
// ============================================================================

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => run_synth(args),
        Command::BuildSsm(args) => run_build_ssm(args),
        Command::Complete(args) => run_complete(args),
        Command::EvalLoo(args) => run_eval_loo(args),
        Command::Heatmap(args) => run_heatmap(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code_for(&e))
        }
    }
}
