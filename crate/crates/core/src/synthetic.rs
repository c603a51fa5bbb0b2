//! Seeded two-region test images with known ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Mask, ScalarField};

pub const FOREGROUND_LEVEL: f64 = 0.9;
pub const BACKGROUND_LEVEL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// Centred disk of radius `size / 4`.
    Disk,
    /// Four vertical bars, each `size / 8` wide.
    Bars,
}

impl std::str::FromStr for SyntheticKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "disk" => Ok(SyntheticKind::Disk),
            "bars" => Ok(SyntheticKind::Bars),
            other => Err(format!("unknown synthetic image `{other}` (expected disk or bars)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub image: ScalarField,
    pub truth: Mask,
}

/// Ground-truth mask of a `size x size` synthetic image.
pub fn ground_truth(kind: SyntheticKind, size: usize) -> Mask {
    let centre = size as f64 / 2.0;
    let radius = size as f64 / 4.0;
    let bar = (size / 8).max(1);
    Mask::from_fn(size, size, |i, j| match kind {
        SyntheticKind::Disk => {
            let (x, y) = (i as f64 + 0.5 - centre, j as f64 + 0.5 - centre);
            x * x + y * y <= radius * radius
        }
        SyntheticKind::Bars => (i / bar) % 2 == 1,
    })
}

/// Foreground at 0.9, background at 0.1, plus i.i.d. Gaussian noise of
/// standard deviation `noise_std`, clipped to `[0, 1]`.
pub fn make_synthetic(kind: SyntheticKind, size: usize, noise_std: f64, seed: u64) -> Result<Synthetic> {
    if size < 16 {
        return Err(Error::param("size", format!("must be at least 16, got {size}")));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::param("noise", format!("must be non-negative, got {noise_std}")));
    }
    let truth = ground_truth(kind, size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).expect("validated std");
    let image = ScalarField::from_fn(size, size, |i, j| {
        let base = if truth.get(i, j) { FOREGROUND_LEVEL } else { BACKGROUND_LEVEL };
        if noise_std == 0.0 {
            base
        } else {
            (base + noise.sample(&mut rng)).clamp(0.0, 1.0)
        }
    });
    Ok(Synthetic { image, truth })
}
