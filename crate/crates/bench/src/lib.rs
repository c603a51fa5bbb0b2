//! Benchmark workloads shared by `benches/solver.rs`. Kept in the library so
//! the inputs themselves can be checked by ordinary tests.

use twophase_core::synthetic::{make_synthetic, SyntheticKind};
use twophase_core::{ScalarField, SolverParams};

/// Image sides for the per-operator benchmarks.
pub const OPERATOR_SIZES: [usize; 2] = [128, 512];

pub fn operator_input(size: usize) -> ScalarField {
    make_synthetic(SyntheticKind::Disk, size, 0.1, 1).expect("size is at least 16").image
}

/// The end-to-end workload: a lightly noisy 128x128 disk at default settings.
pub fn pipeline_input() -> (ScalarField, SolverParams) {
    let image = make_synthetic(SyntheticKind::Disk, 128, 0.05, 7).expect("valid size").image;
    (image, SolverParams::default())
}
