//! Instance-aware segmentation losses.
//!
//! The crate provides:
//!
//! - [`volume`] and [`rvl`]: dense 2D/3D volumes, binary masks and the RVL1
//!   file format.
//! - [`labeling`]: connected-component labeling (exact union-find and
//!   iterative max-pool) with canonical ids and centers of mass.
//! - [`diffgraph`]: a small reverse-mode tape plus finite-difference checks.
//! - [`losses`]: Dice/BCE/focal base losses, the instance-wise loss (and its
//!   no-TP and predicted-side variants), the center-of-instance loss, the ICI
//!   and DICI compounds and a blob-loss baseline.
//! - [`metrics`]: instance-aware evaluation and mean-rank tables.
//! - [`synth`]: seeded multi-blob phantoms.
//! - [`optim`]: gradient descent on per-voxel logits to compare losses.

pub mod diffgraph;
pub mod error;
pub mod labeling;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod rvl;
pub mod synth;
pub mod volume;

pub use error::{Error, Result};
