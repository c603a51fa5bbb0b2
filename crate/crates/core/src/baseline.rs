//! Otsu's global threshold, the unregularised comparison point for the
//! variational segmentation.

use crate::error::{Error, Result};
use crate::grid::{Mask, ScalarField};

pub const BINS: usize = 256;

/// Intensity histogram over `[0, 1]`; value `v` falls in bin `round(255 v)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub bins: [u64; BINS],
    pub total: u64,
}

impl Histogram {
    pub fn from_field(f: &ScalarField) -> Self {
        let mut bins = [0u64; BINS];
        for &v in f.as_slice() {
            bins[bin_of(v)] += 1;
        }
        Self {
            bins,
            total: f.len() as u64,
        }
    }

    pub fn from_counts(bins: [u64; BINS]) -> Self {
        Self {
            total: bins.iter().sum(),
            bins,
        }
    }
}

#[inline]
pub fn bin_of(v: f64) -> usize {
    ((v * (BINS - 1) as f64).round().max(0.0) as usize).min(BINS - 1)
}

/// Intensity at the lower edge of bin `k`, i.e. halfway between the
/// centres of bins `k - 1` and `k`.
#[inline]
pub fn bin_edge(k: usize) -> f64 {
    (k as f64 - 0.5) / (BINS - 1) as f64
}

/// `a * b` as a 256-bit value `(high, low)`.
fn widening_mul(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a_hi, a_lo) = (a >> 64, a & MASK);
    let (b_hi, b_lo) = (b >> 64, b & MASK);
    let ll = a_lo * b_lo;
    let lh = a_lo * b_hi;
    let hl = a_hi * b_lo;
    let hh = a_hi * b_hi;
    let mid = (ll >> 64) + (lh & MASK) + (hl & MASK);
    let low = (ll & MASK) | (mid << 64);
    let high = hh + (lh >> 64) + (hl >> 64) + (mid >> 64);
    (high, low)
}

/// Between-class variance of the split `bins < k | bins >= k`, kept as the
/// exact fraction `(N S0 - S n0)^2 / (n0 n1)` (proportional to the variance
/// by the constant `1 / N^2`).
#[derive(Debug, Clone, Copy)]
struct Separation {
    num: u128,
    den: u128,
}

impl Separation {
    fn exceeds(&self, other: &Separation) -> bool {
        widening_mul(self.num, other.den) > widening_mul(other.num, self.den)
    }
}

/// Bin index `k` (1..=255) maximising between-class variance, where the
/// background is bins `< k`. Ties go to the lowest `k`.
pub fn otsu_bin(hist: &Histogram) -> Result<usize> {
    let n = hist.total;
    if n == 0 {
        return Err(Error::Degenerate("empty histogram"));
    }
    // keeps N * S below 2^64 so the squared difference fits in u128
    if n > 1 << 27 {
        return Err(Error::param("image", "too many pixels for exact Otsu arithmetic"));
    }
    let total_sum: u64 = hist.bins.iter().enumerate().map(|(k, &c)| k as u64 * c).sum();

    let mut best: Option<(usize, Separation)> = None;
    let (mut n0, mut s0) = (0u64, 0u64);
    for k in 1..BINS {
        n0 += hist.bins[k - 1];
        s0 += (k as u64 - 1) * hist.bins[k - 1];
        let n1 = n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let diff = (n as i128 * s0 as i128 - total_sum as i128 * n0 as i128).unsigned_abs();
        let sep = Separation {
            num: diff * diff,
            den: n0 as u128 * n1 as u128,
        };
        if best.is_none_or(|(_, b)| sep.exceeds(&b)) {
            best = Some((k, sep));
        }
    }
    match best {
        Some((k, sep)) if sep.num > 0 => Ok(k),
        _ => Err(Error::Degenerate("image has a single intensity level")),
    }
}

/// Otsu threshold in intensity units. Pixels with `f >= threshold` are
/// foreground.
pub fn otsu_threshold(f: &ScalarField) -> Result<f64> {
    otsu_bin(&Histogram::from_field(f)).map(bin_edge)
}

pub fn otsu_segment(f: &ScalarField) -> Result<Mask> {
    let k = otsu_bin(&Histogram::from_field(f))?;
    // classify by bin so the mask agrees with the histogram split exactly
    let (w, h) = f.shape();
    Ok(Mask::from_fn(w, h, |i, j| bin_of(f.get(i, j)) >= k))
}
