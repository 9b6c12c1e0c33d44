//! Statistical shape modelling and partial-surface completion for
//! corresponded triangle meshes.
//!
//! The crate covers the full estimation pipeline for anatomical surfaces
//! reconstructed from partial scans:
//!
//! 1. [`mesh`]/[`ply`] — corresponded triangle meshes, named vertex regions,
//!    slab-based known-region masks, PLY I/O;
//! 2. [`ssm`] — principal-component shape models built from example
//!    populations, with full and partial (restricted least-squares)
//!    projection;
//! 3. [`tps`]/[`completion`] — completing the unknown region of a partial
//!    shape from a model estimate, either by direct copy-and-paste or by a
//!    thin-plate-spline warp that is seamless at the region boundary;
//! 4. [`metrics`] — exact point-to-surface distances and error statistics;
//! 5. [`experiments`] — leave-one-out evaluation protocols, aggregate
//!    tables, and per-vertex error heat maps;
//! 6. [`synth`] — a deterministic synthetic-population generator used by the
//!    test harness and the CLI.
//!
//! Conventions: all coordinates are in millimetres; the superior direction is
//! +z; meshes within one population are in vertex-wise correspondence and
//! share connectivity. All computations are deterministic for fixed inputs
//! and seeds, regardless of thread count.

pub mod completion;
pub mod error;
pub mod experiments;
pub mod mesh;
pub mod metrics;
pub mod ply;
pub mod provenance;
pub mod ssm;
pub mod synth;
pub mod tps;

pub use error::{Error, Result};
pub use mesh::{TriMesh, VertexMask};
