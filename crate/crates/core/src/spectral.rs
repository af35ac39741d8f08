//! Fourier-space calculus on the 2π-periodic square.
//!
//! Fields are stored as their full `n × n` array of complex Fourier
//! coefficients, normalized so that
//!
//! ```text
//! f(x) = Σ_k f̂_k e^{i k·x},   f̂_k = n⁻² Σ_j f(x_j) e^{-i k·x_j}
//! ```
//!
//! Both the physical samples and the coefficients are laid out row-major with
//! the first index running along `x`. Coefficient index `i` maps to wavenumber
//! `i` for `i < n/2` and `i - n` otherwise, so wavenumbers span
//! `-n/2 ..= n/2 - 1` in each direction.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform collocation grid with `n` points per side on `[0, 2π)²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(n));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of points (and of Fourier modes).
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical cell size `h = 2π/n`.
    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Wavenumber carried by one-dimensional index `i`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// One-dimensional index holding wavenumber `k` (wrapped modulo `n`).
    #[inline]
    pub fn index_of(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// Wavenumber pair `(k₁, k₂)` of a flat coefficient index.
    #[inline]
    pub fn mode(&self, flat: usize) -> (i64, i64) {
        (self.wavenumber(flat / self.n), self.wavenumber(flat % self.n))
    }

    #[inline]
    pub fn flat_index(&self, k1: i64, k2: i64) -> usize {
        self.index_of(k1) * self.n + self.index_of(k2)
    }

    /// Largest wavenumber magnitude kept by the two-thirds rule.
    #[inline]
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    #[inline]
    pub fn nyquist(&self) -> i64 {
        -(self.n as i64) / 2
    }

    /// Coordinates of collocation point `(j₁, j₂)`.
    #[inline]
    pub fn point(&self, j1: usize, j2: usize) -> (f64, f64) {
        let h = self.spacing();
        (h * j1 as f64, h * j2 as f64)
    }

    /// Samples `f` at every collocation point.
    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for j1 in 0..self.n {
            for j2 in 0..self.n {
                let (x, y) = self.point(j1, j2);
                out.push(f(x, y));
            }
        }
        out
    }

    /// `|k|²` for every coefficient, in storage order.
    pub fn wavenumber_squared(&self) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                let (k1, k2) = self.mode(idx);
                (k1 * k1 + k2 * k2) as f64
            })
            .collect()
    }
}

impl TryFrom<usize> for Grid {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        Grid::new(n)
    }
}

impl From<Grid> for usize {
    fn from(g: Grid) -> usize {
        g.n
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Plans>> = RefCell::new(HashMap::new());
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Unnormalized in-place 2D FFT of an `n × n` row-major buffer.
fn fft2_in_place(buf: &mut [Complex64], n: usize, inverse: bool) {
    PLANS.with(|cell| {
        let mut map = cell.borrow_mut();
        let plans = map.entry(n).or_insert_with(|| {
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(n);
            let inverse = planner.plan_fft_inverse(n);
            let len = forward
                .get_inplace_scratch_len()
                .max(inverse.get_inplace_scratch_len());
            Plans {
                forward,
                inverse,
                scratch: vec![Complex64::new(0.0, 0.0); len],
            }
        });
        let fft = if inverse {
            plans.inverse.clone()
        } else {
            plans.forward.clone()
        };
        fft.process_with_scratch(buf, &mut plans.scratch);
        transpose_square(buf, n);
        fft.process_with_scratch(buf, &mut plans.scratch);
        transpose_square(buf, n);
    });
}

/// Direction of a [`transform`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Physical samples of a field, or its Fourier representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Physical(Grid, Vec<f64>),
    Spectral(SpectralField2D),
}

/// Moves a field between physical samples and Fourier coefficients.
///
/// A forward request expects physical samples and an inverse request
/// expects a spectral field; when the input is already in the requested
/// representation it is returned unchanged.
pub fn transform(input: Representation, direction: Direction) -> Result<Representation> {
    match (input, direction) {
        (Representation::Physical(grid, samples), Direction::Forward) => Ok(
            Representation::Spectral(SpectralField2D::from_physical(grid, &samples)?),
        ),
        (Representation::Spectral(field), Direction::Inverse) => {
            let grid = field.grid();
            Ok(Representation::Physical(grid, field.to_physical()))
        }
        (other, _) => Ok(other),
    }
}

/// Which derivative [`SpectralField2D::derivative`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeKind {
    Dx,
    Dy,
    Laplacian,
}

/// A real scalar field on the periodic square, held in Fourier space.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField2D {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField2D {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex64::new(value, 0.0);
        f
    }

    pub fn from_coeffs(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    /// Forward transform of real samples.
    pub fn from_physical(grid: Grid, samples: &[f64]) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                actual: samples.len(),
            });
        }
        let mut coeffs: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft2_in_place(&mut coeffs, grid.n(), false);
        let norm = 1.0 / grid.len() as f64;
        for c in &mut coeffs {
            *c *= norm;
        }
        Ok(Self { grid, coeffs })
    }

    /// Samples `f` on the grid and transforms.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: Grid, f: F) -> Self {
        Self::from_physical(grid, &grid.sample(f)).expect("sample count matches grid")
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.grid)
    }

    /// Inverse transform to real samples.
    pub fn to_physical(&self) -> Vec<f64> {
        let mut buf = self.coeffs.clone();
        fft2_in_place(&mut buf, self.grid.n(), true);
        buf.into_iter().map(|c| c.re).collect()
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    #[inline]
    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        self.coeffs[self.grid.flat_index(k1, k2)]
    }

    #[inline]
    pub fn set_coeff(&mut self, k1: i64, k2: i64, value: Complex64) {
        let idx = self.grid.flat_index(k1, k2);
        self.coeffs[idx] = value;
    }

    /// Spatial average, i.e. the real part of the `k = 0` coefficient.
    #[inline]
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Sets the `k = 0` coefficient to exactly zero.
    pub fn remove_mean(&mut self) {
        self.coeffs[0] = Complex64::new(0.0, 0.0);
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `Σ_k |f̂_k|²`; multiply by `(2π)²` for the squared L² norm.
    pub fn coeff_energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn ensure_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(self.grid.n(), other.grid.n()));
        }
        Ok(())
    }

    fn map_modes<F: Fn(i64, i64, Complex64) -> Complex64>(&self, f: F) -> Self {
        let grid = self.grid;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, &c)| {
                let (k1, k2) = grid.mode(idx);
                f(k1, k2, c)
            })
            .collect();
        Self { grid, coeffs }
    }

    pub fn derivative(&self, kind: DerivativeKind) -> Self {
        match kind {
            DerivativeKind::Dx => self.dx(),
            DerivativeKind::Dy => self.dy(),
            DerivativeKind::Laplacian => self.laplacian(),
        }
    }

    /// `∂_x`, with the Nyquist column zeroed so the result stays real.
    pub fn dx(&self) -> Self {
        let nyq = self.grid.nyquist();
        self.map_modes(|k1, _, c| {
            if k1 == nyq {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k1 as f64) * c
            }
        })
    }

    /// `∂_y`, with the Nyquist row zeroed so the result stays real.
    pub fn dy(&self) -> Self {
        let nyq = self.grid.nyquist();
        self.map_modes(|_, k2, c| {
            if k2 == nyq {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k2 as f64) * c
            }
        })
    }

    pub fn laplacian(&self) -> Self {
        self.map_modes(|k1, k2, c| c * (-((k1 * k1 + k2 * k2) as f64)))
    }

    /// `Δ⁻¹` on mean-zero fields; the output has zero mean.
    pub fn inverse_laplacian(&self) -> Result<Self> {
        let mean = self.coeffs[0].norm();
        let scale = self.max_abs_coeff();
        if mean > 1e-12 * scale {
            return Err(Error::NonZeroMean {
                mean: self.coeffs[0].re,
                scale,
            });
        }
        Ok(self.map_modes(|k1, k2, c| {
            let k2sum = k1 * k1 + k2 * k2;
            if k2sum == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                c * (-1.0 / k2sum as f64)
            }
        }))
    }

    /// Two-thirds rule: zeroes every mode with `max(|k₁|,|k₂|) > n/3`.
    pub fn dealias(&self) -> Self {
        let mut out = self.clone();
        out.dealias_in_place();
        out
    }

    pub fn dealias_in_place(&mut self) {
        let grid = self.grid;
        let cut = grid.dealias_cutoff();
        for (idx, c) in self.coeffs.iter_mut().enumerate() {
            let (k1, k2) = grid.mode(idx);
            if k1.abs() > cut || k2.abs() > cut {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Gaussian mollifier `exp(-ℓ²|k|²/2)`; `ℓ = 0` is the identity and the
    /// mean is untouched.
    pub fn mollify(&self, ell: f64) -> Result<Self> {
        if !(ell >= 0.0) {
            return Err(Error::NegativeScale(ell));
        }
        if ell == 0.0 {
            return Ok(self.clone());
        }
        let a = 0.5 * ell * ell;
        Ok(self.map_modes(|k1, k2, c| {
            if k1 == 0 && k2 == 0 {
                c
            } else {
                c * (-a * (k1 * k1 + k2 * k2) as f64).exp()
            }
        }))
    }

    /// Keeps the `m` lowest modes (ordered by `|k|²`, ties broken
    /// lexicographically on `(k₁, k₂)`) and zeroes the rest.
    ///
    /// A retained mode always brings its conjugate partner along, so the
    /// kept set can exceed `m` by one. `m = 0` returns the zero field.
    pub fn project_low_modes(&self, m: usize) -> Self {
        let grid = self.grid;
        let mut out = Self::zeros(grid);
        if m == 0 {
            return out;
        }
        let mut order: Vec<(i64, i64, i64)> = (0..grid.len())
            .map(|idx| {
                let (k1, k2) = grid.mode(idx);
                (k1 * k1 + k2 * k2, k1, k2)
            })
            .collect();
        order.sort_unstable();
        let mut keep = vec![false; grid.len()];
        let mut kept = 0usize;
        for (_, k1, k2) in order {
            if kept >= m {
                break;
            }
            let idx = grid.flat_index(k1, k2);
            if keep[idx] {
                continue;
            }
            keep[idx] = true;
            kept += 1;
            let partner = grid.flat_index(-k1, -k2);
            if !keep[partner] {
                keep[partner] = true;
                kept += 1;
            }
        }
        for (idx, flag) in keep.into_iter().enumerate() {
            if flag {
                out.coeffs[idx] = self.coeffs[idx];
            }
        }
        out
    }

    /// Number of modes with `|k| ≤ radius`.
    pub fn modes_within(grid: Grid, radius: i64) -> usize {
        let r2 = radius.saturating_mul(radius);
        (0..grid.len())
            .filter(|&idx| {
                let (k1, k2) = grid.mode(idx);
                k1 * k1 + k2 * k2 <= r2
            })
            .count()
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    /// `self += a · other`
    pub fn axpy(&mut self, a: f64, other: &Self) {
        debug_assert_eq!(self.grid, other.grid);
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o * a;
        }
    }

    /// Multiplies coefficient-wise by a real per-mode factor.
    pub fn apply_multiplier(&mut self, factor: &[f64]) {
        debug_assert_eq!(factor.len(), self.coeffs.len());
        for (c, &f) in self.coeffs.iter_mut().zip(factor) {
            *c *= f;
        }
    }
}

impl Add for &SpectralField2D {
    type Output = SpectralField2D;

    fn add(self, rhs: Self) -> SpectralField2D {
        assert_eq!(self.grid, rhs.grid, "grid mismatch");
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect();
        SpectralField2D { grid: self.grid, coeffs }
    }
}

impl Sub for &SpectralField2D {
    type Output = SpectralField2D;

    fn sub(self, rhs: Self) -> SpectralField2D {
        assert_eq!(self.grid, rhs.grid, "grid mismatch");
        let coeffs = self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect();
        SpectralField2D { grid: self.grid, coeffs }
    }
}

impl Neg for &SpectralField2D {
    type Output = SpectralField2D;

    fn neg(self) -> SpectralField2D {
        SpectralField2D {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

impl Mul<f64> for &SpectralField2D {
    type Output = SpectralField2D;

    fn mul(self, rhs: f64) -> SpectralField2D {
        SpectralField2D {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|c| c * rhs).collect(),
        }
    }
}

impl AddAssign<&SpectralField2D> for SpectralField2D {
    fn add_assign(&mut self, rhs: &SpectralField2D) {
        self.axpy(1.0, rhs);
    }
}

/// Inverse transform of two fields with a single complex FFT.
pub(crate) fn to_physical_pair(a: &SpectralField2D, b: &SpectralField2D) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(a.grid, b.grid);
    let mut buf: Vec<Complex64> = a
        .coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(x, y)| Complex64::new(x.re - y.im, x.im + y.re))
        .collect();
    fft2_in_place(&mut buf, a.grid.n(), true);
    buf.into_iter().map(|c| (c.re, c.im)).unzip()
}

/// Forward transform of two real sample arrays with a single complex FFT.
pub(crate) fn from_physical_pair(grid: Grid, a: &[f64], b: &[f64]) -> (SpectralField2D, SpectralField2D) {
    debug_assert_eq!(a.len(), grid.len());
    debug_assert_eq!(b.len(), grid.len());
    let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
    fft2_in_place(&mut buf, grid.n(), false);
    let norm = 0.5 / grid.len() as f64;
    let mut fa = Vec::with_capacity(grid.len());
    let mut fb = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let (k1, k2) = grid.mode(idx);
        let h = buf[idx];
        let hc = buf[grid.flat_index(-k1, -k2)].conj();
        fa.push((h + hc) * norm);
        // (h - hc) / (2i)
        let d = h - hc;
        fb.push(Complex64::new(d.im, -d.re) * norm);
    }
    (
        SpectralField2D { grid, coeffs: fa },
        SpectralField2D { grid, coeffs: fb },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        // xorshift; enough for round-trip checks
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        (0..n * n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(6).is_err());
        assert!(Grid::new(9).is_err());
        let g = grid(8);
        assert!((g.spacing() - PI / 4.0).abs() < 1e-15);
        assert_eq!(g.wavenumber(3), 3);
        assert_eq!(g.wavenumber(4), -4);
        assert_eq!(g.index_of(-1), 7);
    }

    #[test]
    fn constant_maps_to_dc() {
        let g = grid(32);
        let f = SpectralField2D::from_fn(g, |_, _| 3.0);
        assert!((f.coeff(0, 0).re - 3.0).abs() < 1e-14);
        for (idx, c) in f.coeffs().iter().enumerate().skip(1) {
            assert!(c.norm() < 1e-14, "mode {:?}", g.mode(idx));
        }
    }

    #[test]
    fn cosine_splits_into_two_modes() {
        let g = grid(32);
        let f = SpectralField2D::from_fn(g, |x, _| x.cos());
        assert!((f.coeff(1, 0) - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((f.coeff(-1, 0) - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        let rest: f64 = f.coeff_energy() - 0.5;
        assert!(rest.abs() < 1e-14);
    }

    #[test]
    fn round_trip_random_fields() {
        for n in [8usize, 10, 16, 48, 64, 128, 256] {
            let g = grid(n);
            let samples = pseudo_random(n, n as u64);
            let f = SpectralField2D::from_physical(g, &samples).unwrap();
            let back = f.to_physical();
            let scale = samples.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(max_diff(&samples, &back) <= 1e-13 * scale, "n = {n}");
        }
    }

    #[test]
    fn transform_dispatch() {
        let g = grid(16);
        let samples = g.sample(|x, y| (x + 2.0 * y).sin());
        let spec = transform(Representation::Physical(g, samples.clone()), Direction::Forward).unwrap();
        let back = transform(spec, Direction::Inverse).unwrap();
        match back {
            Representation::Physical(_, s) => assert!(max_diff(&s, &samples) < 1e-13),
            _ => panic!("expected physical samples"),
        }
        assert!(matches!(
            SpectralField2D::from_physical(g, &[0.0; 10]),
            Err(Error::DimensionMismatch { expected: 256, actual: 10 })
        ));
    }

    #[test]
    fn pair_transforms_match_single() {
        let g = grid(32);
        let a = SpectralField2D::from_physical(g, &pseudo_random(32, 1)).unwrap();
        let b = SpectralField2D::from_physical(g, &pseudo_random(32, 2)).unwrap();
        let (pa, pb) = to_physical_pair(&a, &b);
        assert!(max_diff(&pa, &a.to_physical()) < 1e-14);
        assert!(max_diff(&pb, &b.to_physical()) < 1e-14);
        let (fa, fb) = from_physical_pair(g, &pa, &pb);
        for (x, y) in fa.coeffs().iter().zip(a.coeffs()) {
            assert!((x - y).norm() < 1e-15);
        }
        for (x, y) in fb.coeffs().iter().zip(b.coeffs()) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn derivatives_of_single_modes() {
        let g = grid(32);
        let c = SpectralField2D::from_fn(g, |x, _| x.cos());
        let s = SpectralField2D::from_fn(g, |x, _| -x.sin());
        assert!(max_diff(&c.dx().to_physical(), &s.to_physical()) < 1e-13);

        let f = SpectralField2D::from_fn(g, |x, y| (3.0 * x).sin() * (4.0 * y).cos());
        let lap = f.derivative(DerivativeKind::Laplacian).to_physical();
        let expect: Vec<f64> = f.to_physical().iter().map(|v| -25.0 * v).collect();
        assert!(max_diff(&lap, &expect) < 1e-12);

        let k = SpectralField2D::constant(g, 2.5);
        assert_eq!(k.dy().max_abs_coeff(), 0.0);
    }

    #[test]
    fn nyquist_dropped_by_odd_derivatives() {
        let g = grid(8);
        let f = SpectralField2D::from_fn(g, |x, y| (4.0 * x).cos() + (4.0 * y).cos());
        assert!(f.coeff(-4, 0).norm() > 0.5);
        assert_eq!(f.dx().max_abs_coeff(), 0.0);
        assert_eq!(f.dy().max_abs_coeff(), 0.0);
    }

    #[test]
    fn inverse_laplacian_examples() {
        let g = grid(32);
        let c = SpectralField2D::from_fn(g, |x, _| x.cos());
        let inv = c.inverse_laplacian().unwrap();
        let expect: Vec<f64> = c.to_physical().iter().map(|v| -v).collect();
        assert!(max_diff(&inv.to_physical(), &expect) < 1e-13);

        let f = SpectralField2D::from_fn(g, |x, y| (3.0 * x).sin() * (4.0 * y).cos());
        let inv = f.inverse_laplacian().unwrap();
        let expect: Vec<f64> = f.to_physical().iter().map(|v| -v / 25.0).collect();
        assert!(max_diff(&inv.to_physical(), &expect) < 1e-13);
        assert!(max_diff(&inv.laplacian().to_physical(), &f.to_physical()) < 1e-12);

        let one = SpectralField2D::constant(g, 1.0);
        assert!(matches!(one.inverse_laplacian(), Err(Error::NonZeroMean { .. })));
    }

    #[test]
    fn dealias_examples() {
        let g = grid(32);
        let c = SpectralField2D::from_fn(g, |x, _| x.cos());
        assert!(coeff_diff(&c.dealias(), &c) < 1e-15);
        let mut high = SpectralField2D::zeros(g);
        high.set_coeff(15, 0, Complex64::new(1.0, 0.0));
        high.set_coeff(-15, 0, Complex64::new(1.0, 0.0));
        assert_eq!(high.dealias().max_abs_coeff(), 0.0);
        let mut edge = SpectralField2D::zeros(g);
        edge.set_coeff(10, -10, Complex64::new(1.0, 0.0));
        assert_eq!(edge.dealias(), edge);
    }

    /// Product of two trigonometric polynomials by direct convolution of
    /// their coefficient sets (no FFT, no aliasing).
    fn convolve_oracle(a: &SpectralField2D, b: &SpectralField2D) -> HashMap<(i64, i64), Complex64> {
        let g = a.grid();
        let nz = |f: &SpectralField2D| -> Vec<((i64, i64), Complex64)> {
            f.coeffs()
                .iter()
                .enumerate()
                .filter(|(_, c)| c.norm() > 1e-15)
                .map(|(i, &c)| (g.mode(i), c))
                .collect()
        };
        let mut out = HashMap::new();
        for ((a1, a2), ca) in nz(a) {
            for ((b1, b2), cb) in nz(b) {
                *out.entry((a1 + b1, a2 + b2)).or_insert(Complex64::new(0.0, 0.0)) += ca * cb;
            }
        }
        out
    }

    #[test]
    fn dealiased_square_matches_padded_convolution() {
        let g = grid(32);
        let f = SpectralField2D::from_fn(g, |x, _| (10.0 * x).cos());
        let phys = f.to_physical();
        let sq: Vec<f64> = phys.iter().map(|v| v * v).collect();
        let product = SpectralField2D::from_physical(g, &sq).unwrap().dealias();
        let oracle = convolve_oracle(&f, &f);
        let cut = g.dealias_cutoff();
        for idx in 0..g.len() {
            let (k1, k2) = g.mode(idx);
            if k1.abs() > cut || k2.abs() > cut {
                continue;
            }
            let expect = oracle.get(&(k1, k2)).copied().unwrap_or_default();
            assert!(
                (product.coeffs()[idx] - expect).norm() < 1e-13,
                "mode ({k1},{k2})"
            );
        }
        // cos²(10x) = 1/2 + cos(20x)/2; the k = ±20 part is removed, the mean survives.
        assert!((product.mean() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn mollify_examples() {
        let g = grid(32);
        let c = SpectralField2D::from_fn(g, |x, _| x.cos());
        assert_eq!(c.mollify(0.0).unwrap(), c);
        let m = c.mollify(1.0).unwrap().to_physical();
        let expect: Vec<f64> = c.to_physical().iter().map(|v| v * (-0.5f64).exp()).collect();
        assert!(max_diff(&m, &expect) < 1e-14);
        let k = SpectralField2D::constant(g, 5.0);
        assert_eq!(k.mollify(0.7).unwrap().mean(), 5.0);
        assert!(matches!(c.mollify(-0.1), Err(Error::NegativeScale(_))));
    }

    #[test]
    fn project_low_modes_examples() {
        let g = grid(16);
        let f = SpectralField2D::from_physical(g, &pseudo_random(16, 9)).unwrap();
        assert_eq!(f.project_low_modes(g.len()), f);
        assert_eq!(f.project_low_modes(10_000), f);
        let mean_only = f.project_low_modes(1);
        assert_eq!(mean_only.coeff(0, 0), f.coeff(0, 0));
        assert!((mean_only.coeff_energy() - f.coeff(0, 0).norm_sqr()).abs() < 1e-18);

        let c = SpectralField2D::from_fn(g, |x, _| x.cos() + 0.3);
        let m = SpectralField2D::modes_within(g, 1);
        assert_eq!(m, 5);
        assert!(coeff_diff(&c.project_low_modes(m), &c) < 1e-15);
    }

    fn coeff_diff(a: &SpectralField2D, b: &SpectralField2D) -> f64 {
        (a - b).max_abs_coeff()
    }

    #[test]
    fn project_keeps_conjugate_pairs() {
        let g = grid(16);
        let f = SpectralField2D::from_physical(g, &pseudo_random(16, 4)).unwrap();
        for m in 1..40 {
            let p = f.project_low_modes(m);
            for idx in 0..g.len() {
                let (k1, k2) = g.mode(idx);
                let partner = g.flat_index(-k1, -k2);
                assert_eq!(
                    p.coeffs()[idx] == Complex64::new(0.0, 0.0),
                    p.coeffs()[partner] == Complex64::new(0.0, 0.0),
                    "m = {m}"
                );
            }
            // the retained set is a real field: imaginary residue stays at roundoff
            let back = SpectralField2D::from_physical(g, &p.to_physical()).unwrap();
            assert!((&back - &p).max_abs_coeff() < 1e-14);
        }
    }
}
