//! Edge-stopping weight `g = 1 / (1 + |grad(G_sigma * f)|^2 / rho^2)`.
//!
//! `g` is close to 1 in flat regions and drops towards 0 across strong
//! edges, so the weighted TV term charges less for boundaries that the
//! image itself supports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    /// Standard deviation of the Gaussian pre-smoothing, in pixels.
    pub sigma: f64,
    /// Gradient scale; larger values flatten `g` towards 1.
    pub rho: f64,
    /// Skip the edge map entirely and use `g = 1` (plain TV).
    pub uniform: bool,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            rho: 0.1,
            uniform: false,
        }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be positive, got {}", self.sigma)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::param("rho", format!("must be positive, got {}", self.rho)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Sampled 1-D Gaussian truncated at radius `ceil(3 sigma)` and renormalized
/// to unit sum. The returned vector has length `2 * radius + 1` with the
/// centre tap at index `radius`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|k| {
            let x = k as f64 - radius as f64;
            (-x * x / denom).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    Ok(taps)
}

/// 1-D convolution along `axis` with clamp-to-edge boundaries.
pub fn convolve(f: &ScalarField, kernel: &[f64], axis: Axis) -> ScalarField {
    assert!(kernel.len() % 2 == 1, "kernel length must be odd");
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = f.shape();
    let clamp = |k: isize, n: usize| k.clamp(0, n as isize - 1) as usize;
    ScalarField::build_rows(w, h, |j, out| match axis {
        Axis::X => {
            let row = f.row(j);
            for (i, o) in out.iter_mut().enumerate() {
                *o = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, c)| c * row[clamp(i as isize + t as isize - radius, w)])
                    .sum();
            }
        }
        Axis::Y => {
            for (i, o) in out.iter_mut().enumerate() {
                *o = kernel
                    .iter()
                    .enumerate()
                    .map(|(t, c)| c * f.get(i, clamp(j as isize + t as isize - radius, h)))
                    .sum();
            }
        }
    })
}

/// Separable Gaussian blur, x pass then y pass.
pub fn gaussian_blur(f: &ScalarField, sigma: f64) -> Result<ScalarField> {
    let kernel = gaussian_kernel(sigma)?;
    Ok(convolve(&convolve(f, &kernel, Axis::X), &kernel, Axis::Y))
}

/// Edge weight map for image `f`. All values lie in `(0, 1]`.
pub fn edge_weight(f: &ScalarField, params: &WeightParams) -> Result<ScalarField> {
    if params.uniform {
        return Ok(ScalarField::filled(f.width(), f.height(), 1.0));
    }
    params.validate()?;
    let smoothed = gaussian_blur(f, params.sigma)?;
    let grad = gradient(&smoothed);
    let inv_rho2 = 1.0 / (params.rho * params.rho);
    Ok(grad
        .x
        .zip_map(&grad.y, |gx, gy| 1.0 / (1.0 + (gx * gx + gy * gy) * inv_rho2)))
}
