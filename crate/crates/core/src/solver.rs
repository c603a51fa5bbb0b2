//! Split Bregman minimisation of the two-phase weighted-TV energy
//!
//! ```text
//! E(u) = sum g |grad u| + lambda * sum ((f - c1)^2 - (f - c2)^2) u,   0 <= u <= 1
//! ```
//!
//! The gradient is split off as `d ~ grad u` with a Bregman variable `b`.
//! Each outer iteration does one clamped Jacobi sweep for `u`, a closed-form
//! shrinkage for `d`, a re-estimate of the two region means, a damped update
//! of `b`, and records the energy. Iteration stops once the energy rises
//! above the mean of the previous `m` values, or its change against that
//! mean falls below `tol * |E^0|`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, neighbor_count, Mask, ScalarField, VectorField};
use crate::weight::{edge_weight, WeightParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Data-fidelity weight. Larger values mean less regularisation.
    pub lambda: f64,
    /// Penalty weight of the `d = grad u` splitting.
    pub gamma: f64,
    /// Step size of the Bregman update.
    pub tau: f64,
    /// Number of past energies averaged by the stopping rule.
    pub avg_window: usize,
    /// Relative energy tolerance.
    pub tol: f64,
    pub max_iters: usize,
    /// Call the observer every this many iterations; 0 disables it.
    pub snapshot_every: usize,
    /// Cut level separating foreground (`u >= threshold`) from background.
    pub threshold: f64,
    pub weight: WeightParams,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            gamma: 0.1,
            tau: 0.01,
            avg_window: 10,
            tol: 1e-4,
            max_iters: 10_000,
            snapshot_every: 0,
            threshold: 0.5,
            weight: WeightParams::default(),
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive, got {v}")))
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        positive("lambda", self.lambda)?;
        positive("gamma", self.gamma)?;
        positive("tau", self.tau)?;
        positive("tol", self.tol)?;
        if self.avg_window == 0 {
            return Err(Error::param("avg_window", "must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::param(
                "threshold",
                format!("must lie strictly between 0 and 1, got {}", self.threshold),
            ));
        }
        if !self.weight.uniform {
            self.weight.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The latest energy exceeded the running mean.
    EnergyRise,
    /// The latest energy is within tolerance of the running mean.
    ToleranceMet,
    MaxIters,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::EnergyRise => "energy_rise",
            StopReason::ToleranceMet => "tolerance_met",
            StopReason::MaxIters => "max_iters",
        })
    }
}

/// Iterate bundle carried between outer iterations.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub u: ScalarField,
    pub d: VectorField,
    pub b: VectorField,
    pub c1: f64,
    pub c2: f64,
    /// `E^0 ..= E^iter`.
    pub energy_trace: Vec<f64>,
    pub iter: usize,
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    pub mask: Mask,
    pub u_final: ScalarField,
    pub c1: f64,
    pub c2: f64,
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub elapsed_seconds: f64,
    /// Set when the input was constant and no iteration ran.
    pub degenerate: bool,
}

/// `r = (f - c1)^2 - (f - c2)^2`, pointwise.
pub fn residual_field(f: &ScalarField, c1: f64, c2: f64) -> ScalarField {
    f.map(|v| (v - c1) * (v - c1) - (v - c2) * (v - c2))
}

/// Vector soft-thresholding: shrinks `z` towards the origin by `threshold`
/// while keeping its direction. Returns zero when `|z| <= threshold`.
#[inline]
pub fn shrink(zx: f64, zy: f64, threshold: f64) -> (f64, f64) {
    let norm = zx.hypot(zy);
    if norm <= threshold || norm == 0.0 {
        return (0.0, 0.0);
    }
    let scale = (norm - threshold) / norm;
    (zx * scale, zy * scale)
}

/// Closed-form `d` update: shrink `grad u + b` by `g / gamma` per pixel.
pub fn solve_d(u: &ScalarField, b: &VectorField, g: &ScalarField, gamma: f64) -> VectorField {
    let grad = gradient(u);
    let n = u.len();
    let mut dx = Vec::with_capacity(n);
    let mut dy = Vec::with_capacity(n);
    let (gx, gy) = (grad.x.as_slice(), grad.y.as_slice());
    let (bx, by) = (b.x.as_slice(), b.y.as_slice());
    for k in 0..n {
        let (x, y) = shrink(gx[k] + bx[k], gy[k] + by[k], g.as_slice()[k] / gamma);
        dx.push(x);
        dy.push(y);
    }
    let (w, h) = u.shape();
    VectorField::new(
        ScalarField::from_vec(w, h, dx).expect("shape preserved"),
        ScalarField::from_vec(w, h, dy).expect("shape preserved"),
    )
}

/// Right-hand side of `laplacian(u) = (lambda / gamma) r + div(d - b)`.
pub fn u_rhs(r: &ScalarField, d: &VectorField, b: &VectorField, lambda: f64, gamma: f64) -> ScalarField {
    let div = divergence(&d.sub(b));
    let scale = lambda / gamma;
    r.zip_map(&div, |rv, dv| scale * rv + dv)
}

/// One unclamped Jacobi sweep for `laplacian(u) = rhs`, using the same
/// stencil as [`crate::grid::laplacian`] (diagonal 4 inside, 3 on edges,
/// 2 in corners). Reads only `u`; pixels with no neighbours keep their
/// value.
pub fn jacobi_sweep(u: &ScalarField, rhs: &ScalarField) -> ScalarField {
    let (w, h) = u.shape();
    ScalarField::build_rows(w, h, |j, out| {
        let cur = u.row(j);
        let up = (j > 0).then(|| u.row(j - 1));
        let down = (j + 1 < h).then(|| u.row(j + 1));
        let rhs_row = rhs.row(j);
        for i in 0..w {
            let diag = neighbor_count(i, j, w, h);
            if diag == 0 {
                out[i] = cur[i];
                continue;
            }
            let mut acc = 0.0;
            if i > 0 {
                acc += cur[i - 1];
            }
            if i + 1 < w {
                acc += cur[i + 1];
            }
            if let Some(r) = up {
                acc += r[i];
            }
            if let Some(r) = down {
                acc += r[i];
            }
            out[i] = (acc - rhs_row[i]) / diag as f64;
        }
    })
}

/// `u` update: one Jacobi sweep followed by projection onto `[0, 1]`.
pub fn solve_u(state: &SolverState, r: &ScalarField, params: &SolverParams) -> ScalarField {
    let rhs = u_rhs(r, &state.d, &state.b, params.lambda, params.gamma);
    jacobi_sweep(&state.u, &rhs).map(|v| v.clamp(0.0, 1.0))
}

/// Region means of `f` split at `u >= threshold`. A mean is `None` when its
/// region is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionAverages {
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub n1: usize,
    pub n2: usize,
}

pub fn update_averages(f: &ScalarField, u: &ScalarField, threshold: f64) -> RegionAverages {
    let (mut s1, mut s2, mut n1, mut n2) = (0.0, 0.0, 0usize, 0usize);
    for (&fv, &uv) in f.as_slice().iter().zip(u.as_slice()) {
        if uv >= threshold {
            s1 += fv;
            n1 += 1;
        } else {
            s2 += fv;
            n2 += 1;
        }
    }
    RegionAverages {
        c1: (n1 > 0).then(|| s1 / n1 as f64),
        c2: (n2 > 0).then(|| s2 / n2 as f64),
        n1,
        n2,
    }
}

/// `b + tau (grad u_next - d_next)`.
pub fn update_bregman(b: &VectorField, u_next: &ScalarField, d_next: &VectorField, tau: f64) -> VectorField {
    let grad = gradient(u_next);
    VectorField::new(
        ScalarField::from_fn(b.x.width(), b.x.height(), |i, j| {
            b.x.get(i, j) + tau * (grad.x.get(i, j) - d_next.x.get(i, j))
        }),
        ScalarField::from_fn(b.y.width(), b.y.height(), |i, j| {
            b.y.get(i, j) + tau * (grad.y.get(i, j) - d_next.y.get(i, j))
        }),
    )
}

/// Discrete energy `sum g |grad u| + lambda sum r u`. Can be negative.
pub fn energy(u: &ScalarField, f: &ScalarField, g: &ScalarField, c1: f64, c2: f64, lambda: f64) -> f64 {
    let grad = gradient(u);
    let mut tv = 0.0;
    let mut data = 0.0;
    for k in 0..u.len() {
        tv += g.as_slice()[k] * grad.x.as_slice()[k].hypot(grad.y.as_slice()[k]);
        let fv = f.as_slice()[k];
        data += ((fv - c1) * (fv - c1) - (fv - c2) * (fv - c2)) * u.as_slice()[k];
    }
    tv + lambda * data
}

/// Min-max normalisation `(f - f_min) / (f_max - f_min)`.
///
/// A constant image has no range to normalise by and yields
/// [`Error::Degenerate`].
pub fn initialize(f: &ScalarField) -> Result<ScalarField> {
    let (lo, hi) = (f.min(), f.max());
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN ranges are degenerate too
    if !(hi > lo) {
        return Err(Error::Degenerate("image is constant"));
    }
    let span = hi - lo;
    Ok(f.map(|v| (v - lo) / span))
}

/// Stopping test on `E^0 ..= E^k`.
///
/// Never fires before `m + 1` iterations have run. After that, with `Ebar`
/// the mean of the `m` energies preceding `E^k`, stops on `E^k > Ebar`
/// (energy rise) or on `|E^k - Ebar| < tol * |E^0|` (converged).
pub fn should_stop(energy_trace: &[f64], m: usize, tol: f64) -> Option<StopReason> {
    let k = energy_trace.len().checked_sub(1)?;
    if m == 0 || k < m + 1 {
        return None;
    }
    let current = energy_trace[k];
    let mean = energy_trace[k - m..k].iter().sum::<f64>() / m as f64;
    if current > mean {
        Some(StopReason::EnergyRise)
    } else if (current - mean).abs() < tol * energy_trace[0].abs() {
        Some(StopReason::ToleranceMet)
    } else {
        None
    }
}

/// What the observer sees after an iteration.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub iter: usize,
    pub u: &'a ScalarField,
    pub energy: f64,
    pub threshold: f64,
}

/// Segments `f` (intensities in `[0, 1]`) into foreground and background.
pub fn segment(f: &ScalarField, params: &SolverParams) -> Result<SegmentationResult> {
    segment_with_observer(f, params, |_| {})
}

/// [`segment`] with a callback fired at iteration 0 and then every
/// `params.snapshot_every` iterations. Nothing is reported when
/// `snapshot_every` is 0.
pub fn segment_with_observer<F>(f: &ScalarField, params: &SolverParams, mut observer: F) -> Result<SegmentationResult>
where
    F: FnMut(Snapshot<'_>),
{
    params.validate()?;
    let start = Instant::now();
    let (w, h) = f.shape();

    let u0 = match initialize(f) {
        Ok(u0) => u0,
        Err(Error::Degenerate(_)) => {
            let u = ScalarField::zeros(w, h);
            let c = f.get(0, 0);
            return Ok(SegmentationResult {
                mask: Mask::threshold(&u, params.threshold),
                u_final: u,
                c1: c,
                c2: c,
                energy_trace: vec![0.0],
                iterations: 0,
                stop_reason: StopReason::ToleranceMet,
                elapsed_seconds: start.elapsed().as_secs_f64(),
                degenerate: true,
            });
        }
        Err(e) => return Err(e),
    };
    let g = edge_weight(f, &params.weight)?;

    let init = update_averages(f, &u0, params.threshold);
    let overall = f.sum() / f.len() as f64;
    let c1 = init.c1.unwrap_or(overall);
    let c2 = init.c2.unwrap_or(overall);
    let e0 = energy(&u0, f, &g, c1, c2, params.lambda);

    let mut state = SolverState {
        u: u0,
        d: VectorField::zeros(w, h),
        b: VectorField::zeros(w, h),
        c1,
        c2,
        energy_trace: vec![e0],
        iter: 0,
    };
    let snapshots = params.snapshot_every > 0;
    if snapshots {
        observer(Snapshot {
            iter: 0,
            u: &state.u,
            energy: e0,
            threshold: params.threshold,
        });
    }

    let stop_reason = loop {
        if state.iter >= params.max_iters {
            break StopReason::MaxIters;
        }
        let r = residual_field(f, state.c1, state.c2);
        let u = solve_u(&state, &r, params);
        let d = solve_d(&u, &state.b, &g, params.gamma);
        let avgs = update_averages(f, &u, params.threshold);
        if let Some(c1) = avgs.c1 {
            state.c1 = c1;
        }
        if let Some(c2) = avgs.c2 {
            state.c2 = c2;
        }
        state.b = update_bregman(&state.b, &u, &d, params.tau);
        state.u = u;
        state.d = d;
        let e = energy(&state.u, f, &g, state.c1, state.c2, params.lambda);
        state.energy_trace.push(e);
        state.iter += 1;

        if snapshots && state.iter.is_multiple_of(params.snapshot_every) {
            observer(Snapshot {
                iter: state.iter,
                u: &state.u,
                energy: e,
                threshold: params.threshold,
            });
        }
        if let Some(reason) = should_stop(&state.energy_trace, params.avg_window, params.tol) {
            break reason;
        }
    };

    Ok(SegmentationResult {
        mask: Mask::threshold(&state.u, params.threshold),
        u_final: state.u,
        c1: state.c1,
        c2: state.c2,
        energy_trace: state.energy_trace,
        iterations: state.iter,
        stop_reason,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::laplacian;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(rng: &mut impl Rng, w: usize, h: usize, lo: f64, hi: f64) -> ScalarField {
        ScalarField::from_fn(w, h, |_, _| rng.gen_range(lo..hi))
    }

    /// Minimiser of `g|d| + (gamma/2)(d - z)^2` by scanning `[-2, 2]`.
    fn scan_argmin(z: f64, g: f64, gamma: f64) -> f64 {
        let steps = 40_000;
        (0..=steps)
            .map(|k| -2.0 + 4.0 * k as f64 / steps as f64)
            .map(|d| (d, g * d.abs() + 0.5 * gamma * (d - z) * (d - z)))
            .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
            .0
    }

    #[test]
    fn residual_examples() {
        let f = ScalarField::from_vec(3, 1, vec![0.5, 0.9, 0.2]).unwrap();
        let r = residual_field(&f, 0.4, 0.4);
        assert!(r.as_slice().iter().all(|&v| v == 0.0));
        let r = residual_field(&f, 1.0, 0.0);
        assert_eq!(r.get(0, 0), 0.0);
        assert!((r.get(1, 0) - (-0.80)).abs() < 1e-15);
    }

    #[test]
    fn shrink_examples() {
        let (x, y) = shrink(3.0, 4.0, 2.0);
        assert!((x - 1.8).abs() < 1e-15 && (y - 2.4).abs() < 1e-15);
        assert_eq!(shrink(0.3, -0.4, 0.5), (0.0, 0.0));
        assert_eq!(shrink(0.0, 0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn shrink_matches_scan() {
        let d = shrink(0.7, 0.0, 1.0 / 2.0).0;
        let scanned = scan_argmin(0.7, 1.0, 2.0);
        assert!((scanned - 0.2).abs() < 1e-3);
        assert!((d - scanned).abs() < 1e-3);
    }

    #[test]
    fn solve_d_zero_inside_threshold() {
        let u = ScalarField::from_vec(2, 1, vec![0.0, 0.1]).unwrap();
        let d = solve_d(&u, &VectorField::zeros(2, 1), &ScalarField::filled(2, 1, 1.0), 0.1);
        assert!(d.x.as_slice().iter().chain(d.y.as_slice()).all(|&v| v == 0.0));
    }

    #[test]
    fn harmonic_constant_is_fixed() {
        let state = SolverState {
            u: ScalarField::filled(5, 4, 0.5),
            d: VectorField::zeros(5, 4),
            b: VectorField::zeros(5, 4),
            c1: 0.0,
            c2: 0.0,
            energy_trace: vec![0.0],
            iter: 0,
        };
        let out = solve_u(&state, &ScalarField::zeros(5, 4), &SolverParams::default());
        assert!(out.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn solve_u_clamps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let state = SolverState {
                u: random_field(&mut rng, 6, 7, 0.0, 1.0),
                d: VectorField::new(random_field(&mut rng, 6, 7, -3.0, 3.0), random_field(&mut rng, 6, 7, -3.0, 3.0)),
                b: VectorField::new(random_field(&mut rng, 6, 7, -3.0, 3.0), random_field(&mut rng, 6, 7, -3.0, 3.0)),
                c1: 0.0,
                c2: 0.0,
                energy_trace: vec![0.0],
                iter: 0,
            };
            let r = random_field(&mut rng, 6, 7, -1.0, 1.0);
            let out = solve_u(&state, &r, &SolverParams::default());
            assert!(out.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn jacobi_sweep_inverts_laplacian_stencil() {
        // for any u, the sweep applied with rhs = laplacian(u) reproduces u
        // at the fixed point, i.e. jacobi(u, lap u) == u
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_field(&mut rng, 7, 5, -1.0, 1.0);
        let out = jacobi_sweep(&u, &laplacian(&u));
        for (a, b) in out.as_slice().iter().zip(u.as_slice()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn jacobi_converges_to_optimality_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (w, h) = (8, 8);
        let (lambda, gamma) = (1.0, 0.1);
        let f = random_field(&mut rng, w, h, 0.0, 1.0);
        // c1 + c2 = 2 mean(f) gives sum r = 0, so the Neumann system is solvable
        let mean = f.sum() / f.len() as f64;
        let c1 = mean + 0.3;
        let c2 = 2.0 * mean - c1;
        let r = residual_field(&f, c1, c2);
        let d = VectorField::new(random_field(&mut rng, w, h, -0.2, 0.2), random_field(&mut rng, w, h, -0.2, 0.2));
        let b = VectorField::new(random_field(&mut rng, w, h, -0.2, 0.2), random_field(&mut rng, w, h, -0.2, 0.2));
        let rhs = u_rhs(&r, &d, &b, lambda, gamma);

        let mut u = random_field(&mut rng, w, h, 0.0, 1.0);
        for _ in 0..10_000 {
            u = jacobi_sweep(&u, &rhs);
        }
        // the bipartite grid leaves a sign-alternating mode; average it out
        let next = jacobi_sweep(&u, &rhs);
        let u = u.zip_map(&next, |a, b| 0.5 * (a + b));

        let pde = laplacian(&u).zip_map(&rhs, |a, b| a - b);
        assert!(pde.as_slice().iter().all(|v| v.abs() < 1e-8));

        // lambda r + gamma grad^*(grad u - d + b) = 0, with grad^* = -div
        let inner = gradient(&u).sub(&d).add(&b);
        let adj = divergence(&inner).map(|v| -v);
        let opt = r.zip_map(&adj, |rv, av| lambda * rv + gamma * av);
        assert!(opt.as_slice().iter().all(|v| v.abs() < 1e-6), "max {}", opt.max());
    }

    #[test]
    fn averages_examples() {
        let f = ScalarField::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let a = update_averages(&f, &f, 0.5);
        assert_eq!((a.c1, a.c2, a.n1, a.n2), (Some(1.0), Some(0.0), 2, 2));

        let f = ScalarField::filled(3, 3, 0.3);
        let u = ScalarField::from_fn(3, 3, |i, _| i as f64 / 2.0);
        let a = update_averages(&f, &u, 0.5);
        assert!((a.c1.unwrap() - 0.3).abs() < 1e-15 && (a.c2.unwrap() - 0.3).abs() < 1e-15);

        let f = ScalarField::from_vec(2, 2, vec![0.1, 0.2, 0.8, 0.9]).unwrap();
        let u = ScalarField::from_vec(2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let a = update_averages(&f, &u, 0.5);
        assert!((a.c1.unwrap() - 0.85).abs() < 1e-15);
        assert!((a.c2.unwrap() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn averages_tie_is_foreground_and_empty_is_none() {
        let f = ScalarField::from_vec(2, 1, vec![0.2, 0.4]).unwrap();
        let u = ScalarField::filled(2, 1, 0.5);
        let a = update_averages(&f, &u, 0.5);
        assert_eq!(a.n1, 2);
        assert_eq!(a.c2, None);
        assert!((a.c1.unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn bregman_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_field(&mut rng, 4, 3, 0.0, 1.0);
        let b = VectorField::new(random_field(&mut rng, 4, 3, -1.0, 1.0), random_field(&mut rng, 4, 3, -1.0, 1.0));
        assert_eq!(update_bregman(&b, &u, &gradient(&u), 0.01), b);
        assert_eq!(update_bregman(&b, &u, &VectorField::zeros(4, 3), 0.0), b);

        // single pixel interior difference (1, -1)
        let u = ScalarField::zeros(2, 2);
        let d = VectorField::new(
            ScalarField::from_vec(2, 2, vec![-1.0, 0.0, 0.0, 0.0]).unwrap(),
            ScalarField::from_vec(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap(),
        );
        let out = update_bregman(&VectorField::zeros(2, 2), &u, &d, 0.01);
        assert_eq!(out.x.get(0, 0), 0.01);
        assert_eq!(out.y.get(0, 0), -0.01);
    }

    #[test]
    fn energy_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_field(&mut rng, 4, 4, 0.0, 1.0);
        let g = random_field(&mut rng, 4, 4, 0.1, 1.0);
        assert_eq!(energy(&ScalarField::zeros(4, 4), &f, &g, 0.8, 0.1, 2.0), 0.0);

        let ones = ScalarField::filled(4, 4, 1.0);
        let expect = 2.0 * residual_field(&f, 0.8, 0.1).sum();
        assert!((energy(&ones, &f, &g, 0.8, 0.1, 2.0) - expect).abs() < 1e-12);

        // naive double loop
        let u = random_field(&mut rng, 4, 4, 0.0, 1.0);
        let (c1, c2, lambda) = (0.7, 0.2, 1.5);
        let mut naive = 0.0;
        for j in 0..4 {
            for i in 0..4 {
                let dx = if i < 3 { u.get(i + 1, j) - u.get(i, j) } else { 0.0 };
                let dy = if j < 3 { u.get(i, j + 1) - u.get(i, j) } else { 0.0 };
                let fv = f.get(i, j);
                naive += g.get(i, j) * (dx * dx + dy * dy).sqrt();
                naive += lambda * ((fv - c1).powi(2) - (fv - c2).powi(2)) * u.get(i, j);
            }
        }
        assert!((energy(&u, &f, &g, c1, c2, lambda) - naive).abs() < 1e-12);
    }

    #[test]
    fn initialize_examples() {
        let f = ScalarField::from_vec(3, 1, vec![10.0, 20.0, 30.0]).unwrap();
        assert_eq!(initialize(&f).unwrap().get(1, 0), 0.5);
        let f = ScalarField::from_vec(3, 1, vec![0.0, 0.25, 1.0]).unwrap();
        assert_eq!(initialize(&f).unwrap(), f);
        assert!(matches!(initialize(&ScalarField::filled(2, 2, 0.4)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn should_stop_examples() {
        assert_eq!(should_stop(&[100.0, 90.0], 2, 1e-4), None);
        assert_eq!(should_stop(&[100.0, 90.0, 80.0], 2, 1e-4), None);
        let decreasing: Vec<f64> = (0..=5).map(|k| 100.0 - 10.0 * k as f64).collect();
        assert_eq!(should_stop(&decreasing, 2, 1e-4), None);
        assert_eq!(should_stop(&[100.0, 50.0, 40.0, 46.0], 2, 1e-4), Some(StopReason::EnergyRise));
        // |E - mean| = 0.005 < 1e-4 * 100
        assert_eq!(
            should_stop(&[100.0, 50.0, 50.01, 50.0], 2, 1e-4),
            Some(StopReason::ToleranceMet)
        );
        // negative E^0 scales by magnitude
        assert_eq!(
            should_stop(&[-100.0, -150.0, -150.01, -150.01], 2, 1e-4),
            Some(StopReason::ToleranceMet)
        );
    }

    #[test]
    fn segment_constant_image_is_degenerate() {
        let res = segment(&ScalarField::filled(8, 8, 0.3), &SolverParams::default()).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.stop_reason, StopReason::ToleranceMet);
        assert_eq!(res.mask.foreground_count(), 0);
    }

    #[test]
    fn segment_rejects_bad_params() {
        let f = ScalarField::filled(4, 4, 0.0);
        for p in [
            SolverParams { lambda: 0.0, ..Default::default() },
            SolverParams { gamma: -1.0, ..Default::default() },
            SolverParams { tau: 0.0, ..Default::default() },
            SolverParams { threshold: 1.0, ..Default::default() },
            SolverParams { avg_window: 0, ..Default::default() },
        ] {
            assert!(matches!(segment(&f, &p), Err(Error::InvalidParameter { .. })));
        }
    }

    #[test]
    fn segment_binary_image_exact() {
        let f = ScalarField::from_fn(32, 24, |i, j| if i >= 12 && (6..18).contains(&j) { 1.0 } else { 0.0 });
        let res = segment(&f, &SolverParams::default()).unwrap();
        let truth = Mask::threshold(&f, 0.5);
        assert_eq!(res.mask, truth);
        assert_eq!(res.stop_reason, StopReason::ToleranceMet);
        assert_eq!(res.energy_trace.len(), res.iterations + 1);
    }

    #[test]
    fn observer_called_on_schedule() {
        let f = ScalarField::from_fn(16, 16, |i, _| if i < 8 { 0.1 } else { 0.9 });
        let params = SolverParams {
            snapshot_every: 3,
            max_iters: 20,
            ..Default::default()
        };
        let mut seen = Vec::new();
        let res = segment_with_observer(&f, &params, |s| seen.push((s.iter, s.energy))).unwrap();
        assert_eq!(seen[0], (0, res.energy_trace[0]));
        for (iter, e) in &seen {
            assert_eq!(iter % 3, 0);
            assert_eq!(*e, res.energy_trace[*iter]);
        }
        assert_eq!(seen.len(), res.iterations / 3 + 1);
    }

    #[test]
    fn max_iters_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = random_field(&mut rng, 16, 16, 0.0, 1.0);
        let params = SolverParams {
            max_iters: 3,
            ..Default::default()
        };
        let res = segment(&f, &params).unwrap();
        assert_eq!(res.stop_reason, StopReason::MaxIters);
        assert_eq!(res.iterations, 3);
        assert_eq!(res.energy_trace.len(), 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn shrink_is_scalar_prox(z in -1.5f64..1.5, g in 0.01f64..1.0, gamma in 0.5f64..10.0) {
            let d = shrink(z, 0.0, g / gamma).0;
            prop_assert!((d - scan_argmin(z, g, gamma)).abs() < 1e-3);
        }

        #[test]
        fn means_minimise_squared_deviation(
            fv in prop::collection::vec(0.0f64..1.0, 25),
            uv in prop::collection::vec(0.0f64..1.0, 25),
        ) {
            let f = ScalarField::from_vec(5, 5, fv).unwrap();
            let u = ScalarField::from_vec(5, 5, uv).unwrap();
            let a = update_averages(&f, &u, 0.5);
            let sse = |c: f64, fg: bool| -> f64 {
                f.as_slice().iter().zip(u.as_slice())
                    .filter(|(_, &uu)| (uu >= 0.5) == fg)
                    .map(|(&ff, _)| (ff - c).powi(2)).sum()
            };
            if let Some(c1) = a.c1 {
                prop_assert!(sse(c1 + 0.01, true) >= sse(c1, true));
                prop_assert!(sse(c1 - 0.01, true) >= sse(c1, true));
            }
            if let Some(c2) = a.c2 {
                prop_assert!(sse(c2 + 0.01, false) >= sse(c2, false));
                prop_assert!(sse(c2 - 0.01, false) >= sse(c2, false));
            }
        }

        #[test]
        fn segment_invariants(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_field(&mut rng, 12, 10, 0.0, 1.0);
            let params = SolverParams { max_iters: 200, ..Default::default() };
            let mut boxed = true;
            let res = segment_with_observer(&f, &SolverParams { snapshot_every: 1, ..params }, |s| {
                boxed &= s.u.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v));
            }).unwrap();
            prop_assert!(boxed);
            prop_assert_eq!(res.mask.clone(), Mask::threshold(&res.u_final, 0.5));
            prop_assert_eq!(res.energy_trace.len(), res.iterations + 1);
            let (lo, hi) = (f.min(), f.max());
            prop_assert!(res.c1 >= lo && res.c1 <= hi && res.c2 >= lo && res.c2 <= hi);
            let again = segment(&f, &params).unwrap();
            prop_assert_eq!(again.mask, res.mask);
            prop_assert_eq!(again.energy_trace, res.energy_trace);
        }
    }
}
