//! Two-phase image segmentation by split Bregman minimisation of the
//! weighted-TV Chan–Vese energy, with an Otsu thresholding baseline.
//!
//! ```
//! use twophase_core::{segment, synthetic, SolverParams};
//!
//! let s = synthetic::make_synthetic(synthetic::SyntheticKind::Disk, 64, 0.05, 1).unwrap();
//! let res = segment(&s.image, &SolverParams::default()).unwrap();
//! assert!(res.mask.agreement(&s.truth) > 0.95);
//! ```

pub mod baseline;
pub mod error;
pub mod grid;
pub mod imgio;
pub mod solver;
pub mod synthetic;
pub mod weight;

pub use baseline::{otsu_segment, otsu_threshold};
pub use error::{Error, Result};
pub use grid::{divergence, gradient, laplacian, Mask, ScalarField, VectorField};
pub use solver::{segment, segment_with_observer, SegmentationResult, Snapshot, SolverParams, SolverState, StopReason};
pub use weight::{edge_weight, WeightParams};
