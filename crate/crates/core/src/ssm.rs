//! Statistical shape models over corresponded meshes.
//!
//! A shape model is a principal-component decomposition of a training
//! population: a mean shape plus orthonormal displacement modes scaled by
//! their standard deviations (mm). Every mesh is flattened into a vector
//! `(x0, y0, z0, x1, y1, z1, ...)` of length `3N`.
//!
//! The decomposition is computed through the S x S Gram matrix of the
//! centred training vectors rather than the full `3N x 3N` covariance, which
//! is exact for the at-most `S - 1` modes a population of `S` shapes can
//! carry and keeps the cost independent of mesh resolution. The covariance
//! uses the sample divisor `S - 1`. Modes whose variance falls below
//! `1e-12` of the largest variance are treated as numerical zeros and
//! dropped. Each kept mode is sign-normalized so its largest-magnitude entry
//! is positive, making builds reproducible across platforms.
//!
//! Fitting the model to a *partial* shape restricts the least-squares
//! problem to the rows of the known vertices. The system is solved by a
//! rank-revealing factorization (SVD); when the known region leaves some
//! mode combinations unobserved the minimum-norm minimizer is returned. An
//! optional Tikhonov weight shrinks the coefficients for noisy data; the
//! default of zero reproduces plain least squares.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector, Point3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{check_same_topology, TriMesh, VertexMask};

/// Relative variance below which a mode is considered numerically zero.
pub const ZERO_VARIANCE_REL_THRESHOLD: f64 = 1e-12;

const MAGIC: &[u8; 8] = b"SSMMODEL";
const FORMAT_VERSION: u32 = 1;

// ============================================================================
// Types
// ============================================================================

/// Principal-component shape model.
#[derive(Clone, Debug, PartialEq)]
pub struct Ssm {
    mean: DVector<f64>,
    modes: DMatrix<f64>,
    std_devs: Vec<f64>,
    faces: Vec<[u32; 3]>,
}

impl Ssm {
    /// Assembles a model from raw parts, validating the invariants
    /// (consistent dimensions, orthonormal modes, nonincreasing positive
    /// standard deviations, in-range faces).
    pub fn from_parts(
        mean: DVector<f64>,
        modes: DMatrix<f64>,
        std_devs: Vec<f64>,
        faces: Vec<[u32; 3]>,
    ) -> Result<Ssm> {
        if !mean.len().is_multiple_of(3) || mean.is_empty() {
            return Err(Error::Config(format!(
                "mean length {} is not a positive multiple of 3",
                mean.len()
            )));
        }
        let n = mean.len() / 3;
        if modes.nrows() != mean.len() {
            return Err(Error::Config(format!(
                "mode rows {} do not match mean length {}",
                modes.nrows(),
                mean.len()
            )));
        }
        if modes.ncols() != std_devs.len() {
            return Err(Error::Config(format!(
                "{} modes but {} standard deviations",
                modes.ncols(),
                std_devs.len()
            )));
        }
        for (j, &sd) in std_devs.iter().enumerate() {
            if !sd.is_finite() || sd <= 0.0 {
                return Err(Error::Config(format!(
                    "standard deviation {j} is not positive: {sd}"
                )));
            }
            if j > 0 && sd > std_devs[j - 1] * (1.0 + 1e-12) {
                return Err(Error::Config(
                    "standard deviations must be nonincreasing".into(),
                ));
            }
        }
        // Orthonormality guards against corrupted or hand-rolled mode data.
        let k = modes.ncols();
        if k > 0 {
            let gram = modes.transpose() * &modes;
            for i in 0..k {
                for j in 0..k {
                    let want = if i == j { 1.0 } else { 0.0 };
                    if (gram[(i, j)] - want).abs() > 1e-6 {
                        return Err(Error::Config(format!(
                            "modes are not orthonormal (gram[{i},{j}] = {})",
                            gram[(i, j)]
                        )));
                    }
                }
            }
        }
        for (f, face) in faces.iter().enumerate() {
            for &idx in face {
                if idx as usize >= n {
                    return Err(Error::Topology(format!(
                        "face {f} references vertex {idx}, but the model has {n} vertices"
                    )));
                }
            }
        }
        if faces.is_empty() {
            return Err(Error::Topology("model needs at least 1 face".into()));
        }
        Ok(Ssm {
            mean,
            modes,
            std_devs,
            faces,
        })
    }

    /// Number of vertices of the modelled meshes.
    pub fn vertex_count(&self) -> usize {
        self.mean.len() / 3
    }

    /// Number of retained modes.
    pub fn mode_count(&self) -> usize {
        self.modes.ncols()
    }

    /// Mean shape as a flattened vector of length `3N`.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Orthonormal mode matrix (`3N x k`).
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    /// Per-mode standard deviations (mm), nonincreasing.
    pub fn std_devs(&self) -> &[f64] {
        &self.std_devs
    }

    /// Shared connectivity of the modelled population.
    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Mean shape as a mesh.
    pub fn mean_mesh(&self) -> Result<TriMesh> {
        TriMesh::new(unflatten_vertices(&self.mean), self.faces.clone())
    }
}

/// Coefficients of a shape in the mode basis (mm).
#[derive(Clone, Debug, PartialEq)]
pub struct ModeCoefficients {
    values: DVector<f64>,
}

impl ModeCoefficients {
    /// Wraps raw coefficients.
    pub fn from_vec(values: Vec<f64>) -> Self {
        ModeCoefficients {
            values: DVector::from_vec(values),
        }
    }

    /// All-zero coefficients for `k` modes (the mean shape).
    pub fn zeros(k: usize) -> Self {
        ModeCoefficients {
            values: DVector::zeros(k),
        }
    }

    /// Number of coefficients.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when there are no coefficients.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw coefficients (mm).
    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    /// Coefficients in units of per-mode standard deviations.
    pub fn normalized(&self, ssm: &Ssm) -> Result<Vec<f64>> {
        if self.len() != ssm.mode_count() {
            return Err(Error::Config(format!(
                "coefficient count {} does not match mode count {}",
                self.len(),
                ssm.mode_count()
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(ssm.std_devs())
            .map(|(&b, &sd)| b / sd)
            .collect())
    }

    pub(crate) fn values(&self) -> &DVector<f64> {
        &self.values
    }
}

// ============================================================================
// Flattening helpers
// ============================================================================

/// Flattens mesh vertices into `(x0, y0, z0, x1, ...)`.
pub fn flatten_vertices(mesh: &TriMesh) -> DVector<f64> {
    let mut v = DVector::zeros(3 * mesh.vertex_count());
    for (i, p) in mesh.vertices().iter().enumerate() {
        v[3 * i] = p.x;
        v[3 * i + 1] = p.y;
        v[3 * i + 2] = p.z;
    }
    v
}

/// Inverse of [`flatten_vertices`].
pub fn unflatten_vertices(v: &DVector<f64>) -> Vec<Point3<f64>> {
    v.as_slice()
        .chunks_exact(3)
        .map(|c| Point3::new(c[0], c[1], c[2]))
        .collect()
}

// ============================================================================
// Building
// ============================================================================

/// Builds a shape model from a corresponded training population.
///
/// Needs at least two meshes sharing one topology. The number of retained
/// modes is at most `S - 1` and may be smaller when the population carries
/// numerically zero variance directions (e.g. duplicated shapes).
pub fn build_ssm(meshes: &[TriMesh]) -> Result<Ssm> {
    let s_count = meshes.len();
    if s_count < 2 {
        return Err(Error::Config(format!(
            "building a model needs at least 2 shapes, got {s_count}"
        )));
    }
    for m in &meshes[1..] {
        check_same_topology(&meshes[0], m, "build_ssm")?;
    }

    let n3 = 3 * meshes[0].vertex_count();
    let mut data = DMatrix::zeros(n3, s_count);
    for (s, mesh) in meshes.iter().enumerate() {
        data.set_column(s, &flatten_vertices(mesh));
    }

    // Mean over shapes, accumulated in input order for reproducibility.
    let mut mean = DVector::zeros(n3);
    for s in 0..s_count {
        mean += data.column(s);
    }
    mean /= s_count as f64;
    for s in 0..s_count {
        let centred = data.column(s) - &mean;
        data.set_column(s, &centred);
    }

    // Snapshot route: eigen-decompose the S x S Gram matrix. Nonzero
    // eigenvalues equal those of the covariance scaled by (S - 1), and the
    // full-dimensional modes are recovered as D * v / |D * v|.
    let gram = data.transpose() * &data;
    let eigen = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..s_count).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let lambda_max = eigen.eigenvalues[order[0]].max(0.0);
    let threshold = lambda_max * ZERO_VARIANCE_REL_THRESHOLD;
    let mut kept: Vec<(f64, DVector<f64>)> = Vec::new();
    for &ei in &order {
        let lambda = eigen.eigenvalues[ei];
        if lambda <= threshold || lambda <= 0.0 {
            continue;
        }
        if kept.len() == s_count - 1 {
            break;
        }
        let mut u = &data * eigen.eigenvectors.column(ei);
        let norm = u.norm();
        if norm <= 0.0 {
            continue;
        }
        u /= norm;
        sign_normalize(&mut u);
        let sigma = norm / ((s_count - 1) as f64).sqrt();
        kept.push((sigma, u));
    }
    // Eigenvalue ordering already sorts sigma; make the invariant airtight
    // against ulp-level ties.
    kept.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

    let k = kept.len();
    let mut modes = DMatrix::zeros(n3, k);
    let mut std_devs = Vec::with_capacity(k);
    for (j, (sigma, u)) in kept.into_iter().enumerate() {
        modes.set_column(j, &u);
        std_devs.push(sigma);
    }

    Ok(Ssm {
        mean,
        modes,
        std_devs,
        faces: meshes[0].faces().to_vec(),
    })
}

/// Flips `u` so its largest-magnitude entry (first such index) is positive.
fn sign_normalize(u: &mut DVector<f64>) {
    let mut arg = 0;
    let mut best = -1.0;
    for (i, &x) in u.iter().enumerate() {
        let a = x.abs();
        if a > best {
            best = a;
            arg = i;
        }
    }
    if u[arg] < 0.0 {
        *u = -&*u;
    }
}

// ============================================================================
// Projection and synthesis
// ============================================================================

fn check_model_mesh(ssm: &Ssm, mesh: &TriMesh, what: &str) -> Result<()> {
    if mesh.vertex_count() != ssm.vertex_count() || mesh.faces() != ssm.faces() {
        return Err(Error::Topology(format!(
            "{what}: mesh is not corresponded with the model ({} vertices vs {})",
            mesh.vertex_count(),
            ssm.vertex_count()
        )));
    }
    Ok(())
}

/// Coefficients of a complete shape: `b = modes^T (x - mean)`.
///
/// This is the orthogonal projection onto the mode basis; for shapes inside
/// the model span, `synthesize` inverts it exactly.
pub fn project_full(ssm: &Ssm, mesh: &TriMesh) -> Result<ModeCoefficients> {
    check_model_mesh(ssm, mesh, "project_full")?;
    let x = flatten_vertices(mesh);
    let b = ssm.modes.transpose() * (x - &ssm.mean);
    Ok(ModeCoefficients { values: b })
}

/// Least-squares coefficients from the known region of a partial shape.
///
/// Minimizes `|R (mean + modes b) - R x|^2` over `b`, where `R` restricts to
/// the rows of vertices selected by `known`; coordinates of unknown vertices
/// are never read. With `tikhonov > 0` the objective gains `tikhonov |b|^2`.
/// When the restricted system is rank-deficient the minimum-norm minimizer
/// is returned.
pub fn project_partial(
    ssm: &Ssm,
    mesh: &TriMesh,
    known: &VertexMask,
    tikhonov: f64,
) -> Result<ModeCoefficients> {
    check_model_mesh(ssm, mesh, "project_partial")?;
    if known.vertex_count() != ssm.vertex_count() {
        return Err(Error::Config(format!(
            "mask length {} does not match vertex count {}",
            known.vertex_count(),
            ssm.vertex_count()
        )));
    }
    if known.is_empty() {
        return Err(Error::Config(
            "known-region mask is empty; nothing to fit".into(),
        ));
    }
    if !tikhonov.is_finite() || tikhonov < 0.0 {
        return Err(Error::Config(format!(
            "Tikhonov weight must be finite and nonnegative, got {tikhonov}"
        )));
    }

    let k = ssm.mode_count();
    if k == 0 {
        return Ok(ModeCoefficients::zeros(0));
    }

    let rows = 3 * known.count_set();
    let mut a = DMatrix::zeros(rows, k);
    let mut r = DVector::zeros(rows);
    for (row3, v) in known.iter_set().enumerate() {
        let p = mesh.vertices()[v];
        for d in 0..3 {
            let row = 3 * row3 + d;
            r[row] = p[d] - ssm.mean[3 * v + d];
            for j in 0..k {
                a[(row, j)] = ssm.modes[(3 * v + d, j)];
            }
        }
    }

    let b = if tikhonov > 0.0 {
        let mut normal = a.transpose() * &a;
        for j in 0..k {
            normal[(j, j)] += tikhonov;
        }
        let rhs = a.transpose() * r;
        normal
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .ok_or_else(|| Error::Singular("regularized normal equations not SPD".into()))?
    } else {
        let svd = a.svd(true, true);
        let sv_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        if sv_max <= 0.0 {
            DVector::zeros(k)
        } else {
            svd.solve(&r, sv_max * 1e-12)
                .map_err(|e| Error::Singular(format!("restricted least squares failed: {e}")))?
        }
    };
    Ok(ModeCoefficients { values: b })
}

/// Instantiates the mesh `mean + modes * b`.
pub fn synthesize(ssm: &Ssm, coefficients: &ModeCoefficients) -> Result<TriMesh> {
    if coefficients.len() != ssm.mode_count() {
        return Err(Error::Config(format!(
            "coefficient count {} does not match mode count {}",
            coefficients.len(),
            ssm.mode_count()
        )));
    }
    let x = if coefficients.is_empty() {
        ssm.mean.clone()
    } else {
        &ssm.mean + &ssm.modes * coefficients.values()
    };
    TriMesh::new(unflatten_vertices(&x), ssm.faces.clone())
}

// ============================================================================
// Persistence
// ============================================================================

/// Provenance sidecar stored next to a model file as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmSidecar {
    /// Version of the tool that built the model.
    pub tool_version: String,
    /// Content hash of each training mesh, in training order.
    pub training_hashes: Vec<String>,
    /// Number of training shapes.
    pub sample_count: usize,
    /// Relative variance threshold used to drop numerically zero modes.
    pub zero_variance_threshold: f64,
    /// Free-form extra build parameters.
    #[serde(default)]
    pub extra: serde_json::Value,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Writes a model as a little-endian binary file plus a JSON sidecar.
///
/// Layout: magic `SSMMODEL`, format version (u32), vertex/mode/face counts
/// (u64), mean (`3N` f64), modes (column-major `3N x k` f64), standard
/// deviations (`k` f64), faces (`3F` u32). Numbers are exact: a save/load
/// round trip is bit-identical.
pub fn save_ssm(ssm: &Ssm, path: impl AsRef<Path>, sidecar: &SsmSidecar) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e| Error::io(path, e);

    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(io_err)?;
    out.write_u64::<LittleEndian>(ssm.vertex_count() as u64)
        .map_err(io_err)?;
    out.write_u64::<LittleEndian>(ssm.mode_count() as u64)
        .map_err(io_err)?;
    out.write_u64::<LittleEndian>(ssm.faces.len() as u64)
        .map_err(io_err)?;
    for &x in ssm.mean.iter() {
        out.write_f64::<LittleEndian>(x).map_err(io_err)?;
    }
    for j in 0..ssm.mode_count() {
        for &x in ssm.modes.column(j).iter() {
            out.write_f64::<LittleEndian>(x).map_err(io_err)?;
        }
    }
    for &sd in &ssm.std_devs {
        out.write_f64::<LittleEndian>(sd).map_err(io_err)?;
    }
    for face in &ssm.faces {
        for &idx in face {
            out.write_u32::<LittleEndian>(idx).map_err(io_err)?;
        }
    }
    fs::write(path, out).map_err(io_err)?;

    let json = serde_json::to_string_pretty(sidecar)
        .map_err(|e| Error::Format(format!("sidecar serialization failed: {e}")))?;
    let sc_path = sidecar_path(path);
    fs::write(&sc_path, json + "\n").map_err(|e| Error::io(sc_path.clone(), e))
}

/// Reads a model written by [`save_ssm`]; the sidecar is optional.
pub fn load_ssm(path: impl AsRef<Path>) -> Result<(Ssm, Option<SsmSidecar>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = std::io::Cursor::new(&bytes);
    let truncated = |_| Error::Format(format!("{}: truncated model file", path.display()));

    let mut magic = [0u8; 8];
    cur.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: not a shape-model file (bad magic)",
            path.display()
        )));
    }
    let version = cur.read_u32::<LittleEndian>().map_err(truncated)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported model format version {version} (expected {FORMAT_VERSION})",
            path.display()
        )));
    }
    let n = cur.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    let k = cur.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    let f = cur.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    // Reject absurd counts before allocating.
    let remaining = bytes.len().saturating_sub(cur.position() as usize);
    let need = 8 * (3 * n + 3 * n * k + k) + 4 * 3 * f;
    if n == 0 || need != remaining {
        return Err(Error::Format(format!(
            "{}: corrupt model file (payload size mismatch)",
            path.display()
        )));
    }

    let mut mean = DVector::zeros(3 * n);
    for i in 0..3 * n {
        mean[i] = cur.read_f64::<LittleEndian>().map_err(truncated)?;
    }
    let mut modes = DMatrix::zeros(3 * n, k);
    for j in 0..k {
        for i in 0..3 * n {
            modes[(i, j)] = cur.read_f64::<LittleEndian>().map_err(truncated)?;
        }
    }
    let mut std_devs = Vec::with_capacity(k);
    for _ in 0..k {
        std_devs.push(cur.read_f64::<LittleEndian>().map_err(truncated)?);
    }
    let mut faces = Vec::with_capacity(f);
    for _ in 0..f {
        let mut face = [0u32; 3];
        for slot in &mut face {
            *slot = cur.read_u32::<LittleEndian>().map_err(truncated)?;
        }
        faces.push(face);
    }

    let ssm = Ssm::from_parts(mean, modes, std_devs, faces).map_err(|e| {
        Error::Format(format!("{}: corrupt model file ({e})", path.display()))
    })?;

    let sc_path = sidecar_path(path);
    let sidecar = match fs::read_to_string(&sc_path) {
        Ok(text) => Some(serde_json::from_str(&text).map_err(|e| {
            Error::Format(format!("{}: invalid sidecar: {e}", sc_path.display()))
        })?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(sc_path, e)),
    };
    Ok((ssm, sidecar))
}

// ============================================================================
// Tests
// ============================================================================
