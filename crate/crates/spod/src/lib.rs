//! Decomposition of transport-dominated snapshot data into co-moving frames.
//!
//! Snapshot matrices of travelling structures have slowly decaying singular
//! values, so a single low-rank basis describes them poorly. This crate
//! splits such data into several frames, each moving along a prescribed
//! path, and optimizes the frame contents so that every frame is low-rank
//! while their shifted sum still reproduces the data:
//!
//! ```text
//! q  =  sum_k  T[path_k] q_k,      rank(q_k) small.
//! ```
//!
//! The pieces:
//!
//! * [`field`]: grids, snapshot matrices, transport paths, weight masks.
//! * [`shift`]: the transport operator (exact cell moves or Lagrange
//!   interpolation).
//! * [`decomp`]: decompositions, domain extension, reconstruction, and the
//!   constraint projection.
//! * [`lowrank`]: truncated/full SVDs, first-order singular value updates,
//!   and the plain low-rank baseline.
//! * [`objective`]: the singular-value objectives and their gradients.
//! * [`optimize`]: constrained descent (steepest or L-BFGS) with rank
//!   staging.
//! * [`generate`]: analytic test fields with known frame structure.
//! * [`analyze`]: front detection and post-hoc decomposition summaries.
//! * [`gradcheck`]: finite-difference verification of the gradients.
//!
//! With the default `parallel` feature the per-column and per-frame loops
//! run on rayon; results are identical with the feature off.

pub mod analyze;
pub mod decomp;
pub mod error;
pub mod field;
pub mod generate;
pub mod gradcheck;
pub mod lowrank;
pub mod objective;
pub mod optimize;
mod par;
pub mod shift;

pub use decomp::Decomposition;
pub use error::{Error, Result};
pub use field::{FramePath, GridSpec, SnapshotField, WeightMask};
