//! Dense 2-D fields and forward-difference calculus on a uniform pixel grid.
//!
//! Pixels are addressed as `(i, j)` with `i` the column (x) and `j` the row
//! (y). Storage is row-major, so `(i, j)` lives at `j * width + i`.
//!
//! The operators form an exact discrete adjoint pair:
//!
//! * `gradient` uses forward differences, zero at the last index of each axis;
//! * `divergence` is the negative adjoint of `gradient`, so that
//!   `<grad u, w> = -<u, div w>` holds to rounding error on any grid;
//! * `laplacian` is the composition `divergence(gradient(u))`.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row count above which per-row loops are handed to rayon.
const PAR_MIN_ROWS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ScalarField {
    /// Field of the given size with every pixel set to `value`.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "field dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroSize);
        }
        if data.len() != width * height {
            return Err(Error::Malformed(format!(
                "{} values supplied for a {width}x{height} field",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "field dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.width + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[j * self.width + i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Row `j` as a slice.
    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.width..(j + 1) * self.width]
    }

    pub fn check_shape(&self, other: &ScalarField) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                actual: other.shape(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two same-shaped fields.
    ///
    /// Panics on shape mismatch.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "field shapes differ");
        Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Sum of all values, accumulated row by row in a fixed order.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Euclidean inner product `sum_ij a_ij * b_ij`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        assert_eq!(self.shape(), other.shape(), "field shapes differ");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Fills a new field row by row; `fill(j, row)` writes row `j`.
    pub(crate) fn build_rows<F>(width: usize, height: usize, fill: F) -> Self
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        let mut data = vec![0.0; width * height];
        if height >= PAR_MIN_ROWS {
            data.par_chunks_mut(width)
                .enumerate()
                .for_each(|(j, row)| fill(j, row));
        } else {
            data.chunks_mut(width)
                .enumerate()
                .for_each(|(j, row)| fill(j, row));
        }
        Self {
            width,
            height,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    /// Panics if the components differ in shape.
    pub fn new(x: ScalarField, y: ScalarField) -> Self {
        assert_eq!(x.shape(), y.shape(), "vector components differ in shape");
        Self { x, y }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            x: ScalarField::zeros(width, height),
            y: ScalarField::zeros(width, height),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.x.shape()
    }

    pub fn dot(&self, other: &VectorField) -> f64 {
        self.x.dot(&other.x) + self.y.dot(&other.y)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Pointwise Euclidean magnitude `|w_ij|`.
    pub fn magnitude(&self) -> ScalarField {
        self.x.zip_map(&self.y, f64::hypot)
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        VectorField {
            x: self.x.zip_map(&other.x, |a, b| a - b),
            y: self.y.zip_map(&other.y, |a, b| a - b),
        }
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField {
            x: self.x.zip_map(&other.x, |a, b| a + b),
            y: self.y.zip_map(&other.y, |a, b| a + b),
        }
    }
}

/// Binary label image; `true` marks the foreground region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ZeroSize);
        }
        if data.len() != width * height {
            return Err(Error::Malformed(format!(
                "{} labels supplied for a {width}x{height} mask",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Foreground wherever `u >= threshold`.
    pub fn threshold(u: &ScalarField, threshold: f64) -> Self {
        Self {
            width: u.width,
            height: u.height,
            data: u.data.iter().map(|&v| v >= threshold).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[j * self.width + i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Number of horizontally or vertically adjacent pixel pairs whose
    /// labels differ. A discrete measure of boundary length.
    pub fn boundary_transitions(&self) -> usize {
        let mut n = 0;
        for j in 0..self.height {
            for i in 0..self.width {
                let here = self.get(i, j);
                if i + 1 < self.width && self.get(i + 1, j) != here {
                    n += 1;
                }
                if j + 1 < self.height && self.get(i, j + 1) != here {
                    n += 1;
                }
            }
        }
        n
    }

    /// Fraction of pixels carrying the same label in both masks.
    pub fn agreement(&self, other: &Mask) -> f64 {
        assert_eq!(self.shape(), other.shape(), "mask shapes differ");
        let same = self.data.iter().zip(&other.data).filter(|(a, b)| a == b).count();
        same as f64 / self.data.len() as f64
    }

    /// 1.0 for foreground, 0.0 for background.
    pub fn to_field(&self) -> ScalarField {
        ScalarField {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Forward-difference gradient. Both components are zero on the last
/// column (x) or last row (y).
pub fn gradient(u: &ScalarField) -> VectorField {
    let (w, h) = u.shape();
    let gx = ScalarField::build_rows(w, h, |j, out| {
        let row = u.row(j);
        for i in 0..w - 1 {
            out[i] = row[i + 1] - row[i];
        }
        out[w - 1] = 0.0;
    });
    let gy = ScalarField::build_rows(w, h, |j, out| {
        if j + 1 < h {
            let (cur, next) = (u.row(j), u.row(j + 1));
            for i in 0..w {
                out[i] = next[i] - cur[i];
            }
        } else {
            out.fill(0.0);
        }
    });
    VectorField { x: gx, y: gy }
}

/// `-d*` along one axis for a sequence `w[0..n]`, evaluated at index `k`.
#[inline]
fn neg_adjoint(prev: f64, cur: f64, k: usize, n: usize) -> f64 {
    if n == 1 {
        // the forward difference is identically zero, so is its adjoint
        0.0
    } else if k == 0 {
        cur
    } else if k == n - 1 {
        -prev
    } else {
        cur - prev
    }
}

/// Discrete divergence, the negative adjoint of [`gradient`].
pub fn divergence(w: &VectorField) -> ScalarField {
    let (width, height) = w.shape();
    ScalarField::build_rows(width, height, |j, out| {
        let wx = w.x.row(j);
        let wy_cur = w.y.row(j);
        let wy_prev = if j > 0 { Some(w.y.row(j - 1)) } else { None };
        for i in 0..width {
            let px = if i > 0 { wx[i - 1] } else { 0.0 };
            let py = wy_prev.map_or(0.0, |r| r[i]);
            out[i] = neg_adjoint(px, wx[i], i, width) + neg_adjoint(py, wy_cur[i], j, height);
        }
    })
}

/// Discrete Laplacian, `divergence(gradient(u))`.
pub fn laplacian(u: &ScalarField) -> ScalarField {
    divergence(&gradient(u))
}

/// Number of grid neighbours of `(i, j)`, i.e. the magnitude of the diagonal
/// entry of the composed Laplacian stencil at that pixel.
#[inline]
pub fn neighbor_count(i: usize, j: usize, width: usize, height: usize) -> usize {
    usize::from(i > 0) + usize::from(i + 1 < width) + usize::from(j > 0) + usize::from(j + 1 < height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field_strategy(max: usize) -> impl Strategy<Value = (ScalarField, ScalarField, ScalarField)> {
        (1..=max, 1..=max).prop_flat_map(|(w, h)| {
            let n = w * h;
            (
                prop::collection::vec(-1.0f64..1.0, n),
                prop::collection::vec(-1.0f64..1.0, n),
                prop::collection::vec(-1.0f64..1.0, n),
            )
                .prop_map(move |(a, b, c)| {
                    (
                        ScalarField::from_vec(w, h, a).unwrap(),
                        ScalarField::from_vec(w, h, b).unwrap(),
                        ScalarField::from_vec(w, h, c).unwrap(),
                    )
                })
        })
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = gradient(&ScalarField::filled(3, 3, 5.0));
        assert!(g.x.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_row() {
        let u = ScalarField::from_vec(3, 1, vec![0.0, 1.0, 3.0]).unwrap();
        let g = gradient(&u);
        assert_eq!(g.x.as_slice(), &[1.0, 2.0, 0.0]);
        assert_eq!(g.y.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_pixel() {
        let u = ScalarField::filled(1, 1, 4.2);
        let g = gradient(&u);
        assert_eq!(g.x.as_slice(), &[0.0]);
        assert_eq!(g.y.as_slice(), &[0.0]);
        assert_eq!(laplacian(&u).as_slice(), &[0.0]);
    }

    #[test]
    fn divergence_of_zero() {
        let d = divergence(&VectorField::zeros(4, 3));
        assert!(d.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divergence_two_pixel_case_table() {
        let c = 0.75;
        let w = VectorField::new(
            ScalarField::from_vec(2, 1, vec![c, 123.0]).unwrap(),
            ScalarField::zeros(2, 1),
        );
        let d = divergence(&w);
        assert_eq!(d.as_slice(), &[c, -c]);
    }

    #[test]
    fn divergence_interior_row() {
        let w = VectorField::new(
            ScalarField::from_vec(4, 1, vec![1.0, 3.0, 7.0, 100.0]).unwrap(),
            ScalarField::zeros(4, 1),
        );
        assert_eq!(divergence(&w).as_slice(), &[1.0, 2.0, 4.0, -7.0]);
    }

    #[test]
    fn laplacian_interior_stencil() {
        let u = ScalarField::from_fn(5, 5, |i, j| ((i * 7 + j * 13) % 11) as f64);
        let lap = laplacian(&u);
        let (a, b, c, d, e) = (u.get(1, 2), u.get(3, 2), u.get(2, 1), u.get(2, 3), u.get(2, 2));
        assert_eq!(lap.get(2, 2), a + b + c + d - 4.0 * e);
    }

    #[test]
    fn laplacian_boundary_diagonals() {
        // impulse at a pixel: the diagonal of the stencil is -neighbor_count
        for (i, j, diag) in [(0, 0, 2.0), (2, 0, 3.0), (0, 2, 3.0), (2, 2, 4.0), (4, 4, 2.0)] {
            let u = ScalarField::from_fn(5, 5, |a, b| if (a, b) == (i, j) { 1.0 } else { 0.0 });
            assert_eq!(laplacian(&u).get(i, j), -diag);
            assert_eq!(neighbor_count(i, j, 5, 5) as f64, diag);
        }
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let lap = laplacian(&ScalarField::filled(6, 4, -2.5));
        assert!(lap.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mask_transitions_and_agreement() {
        let m = Mask::from_fn(4, 4, |i, _| i >= 2);
        assert_eq!(m.boundary_transitions(), 4);
        assert_eq!(m.foreground_count(), 8);
        let all = Mask::from_fn(4, 4, |_, _| true);
        assert_eq!(all.boundary_transitions(), 0);
        assert_eq!(m.agreement(&all), 0.5);
        let checker = Mask::from_fn(3, 3, |i, j| (i + j) % 2 == 0);
        assert_eq!(checker.boundary_transitions(), 12);
    }

    #[test]
    fn large_fields_match_sequential_rows() {
        // crosses the parallel threshold; compare against a small-field stitch
        let u = ScalarField::from_fn(7, 130, |i, j| ((i * 31 + j * 17) % 23) as f64 * 0.1);
        let g = gradient(&u);
        for j in 0..129 {
            for i in 0..7 {
                assert_eq!(g.y.get(i, j), u.get(i, j + 1) - u.get(i, j));
            }
        }
    }

    proptest! {
        #[test]
        fn adjointness((u, wx, wy) in field_strategy(16)) {
            let w = VectorField::new(wx, wy);
            let lhs = gradient(&u).dot(&w);
            let rhs = -u.dot(&divergence(&w));
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + u.norm() * w.norm()));
        }

        #[test]
        fn laplacian_is_composition((u, _, _) in field_strategy(16)) {
            prop_assert_eq!(laplacian(&u), divergence(&gradient(&u)));
        }

        #[test]
        fn laplacian_symmetric_nsd((u, v, _) in field_strategy(12)) {
            let a = laplacian(&u).dot(&v);
            let b = u.dot(&laplacian(&v));
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + u.norm() * v.norm()));
            prop_assert!(laplacian(&u).dot(&u) <= 1e-12);
        }

        #[test]
        fn operators_are_linear((u, v, w) in field_strategy(10), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let combo = u.zip_map(&v, |a, b| alpha * a + beta * b);
            let gu = gradient(&u);
            let gv = gradient(&v);
            let gc = gradient(&combo);
            for k in 0..u.len() {
                let expect = alpha * gu.x.as_slice()[k] + beta * gv.x.as_slice()[k];
                prop_assert!((gc.x.as_slice()[k] - expect).abs() < 1e-12);
            }
            let vf = VectorField::new(v.clone(), w.clone());
            let uf = VectorField::new(u.clone(), v.clone());
            let sum = VectorField::new(
                vf.x.zip_map(&uf.x, |a, b| alpha * a + beta * b),
                vf.y.zip_map(&uf.y, |a, b| alpha * a + beta * b),
            );
            let dv = divergence(&vf);
            let du = divergence(&uf);
            let ds = divergence(&sum);
            for k in 0..u.len() {
                let expect = alpha * dv.as_slice()[k] + beta * du.as_slice()[k];
                prop_assert!((ds.as_slice()[k] - expect).abs() < 1e-12);
            }
        }
    }
}
