//! Periodic grid, Fourier transforms and Fourier multipliers.
//!
//! The physical domain is the torus `[0, 2πL)²` sampled on an `n × n` grid.
//! Arrays are row-major with the row index running along the second
//! coordinate: `values[i2 * n + i1]` is the sample at `(x₁, x₂) = (h·i1, h·i2)`.
//! Spectra use the same layout with integer modes `kᵢ ∈ {−n/2, …, n/2−1}`;
//! the physical wavevector of mode `(k₁, k₂)` is `(k₁/L, k₂/L)`.
//!
//! Forward transforms are normalised by `1/n²`, so the coefficient of mode
//! `k` is the average of `f·e^{−ik·x/L}` over the torus. A constant field `c`
//! maps to `c` at `k = 0`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid resolution and torus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    /// `L`: the torus is `[0, 2πL)²`.
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid.n must be a power of two >= 16, got {n}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Config(format!(
                "grid.L must be positive and finite, got {half_width}"
            )));
        }
        Ok(Self { n, half_width })
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Grid spacing `h = 2πL/n`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI * self.half_width / self.n as f64
    }

    /// Area of the torus, `(2πL)²`.
    pub fn area(&self) -> f64 {
        let side = 2.0 * PI * self.half_width;
        side * side
    }

    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    /// Signed integer mode of array index `i` along one axis.
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Array index of the signed mode `k` (taken modulo `n`).
    pub fn index_of(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    pub fn flat_index(&self, k1: i64, k2: i64) -> usize {
        self.index_of(k2) * self.n + self.index_of(k1)
    }

    /// Physical coordinate of grid index `i`.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Largest mode magnitude kept by the 2/3 rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::Config(format!(
                "grid mismatch: n={} L={} vs n={} L={}",
                self.n, self.half_width, other.n, other.half_width
            )));
        }
        Ok(())
    }
}

/// Real scalar field sampled on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealField2D {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl RealField2D {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x₁, x₂)` at the grid points.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n;
        let mut values = Vec::with_capacity(grid.len());
        for i2 in 0..n {
            let y = grid.coord(i2);
            for i1 in 0..n {
                values.push(f(grid.coord(i1), y));
            }
        }
        Self { grid, values }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Pointwise product, without dealiasing.
    pub fn hadamard(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `∫|f|² dx` over the torus (midpoint rule, exact for trigonometric
    /// polynomials below Nyquist).
    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_area()
    }

    /// `∫ f g dx`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_area()
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn sub_mean(&self) -> Self {
        let m = self.mean();
        self.map(|v| v - m)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Add<&RealField2D> for &RealField2D {
    type Output = RealField2D;
    fn add(self, rhs: &RealField2D) -> RealField2D {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub<&RealField2D> for &RealField2D {
    type Output = RealField2D;
    fn sub(self, rhs: &RealField2D) -> RealField2D {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Neg for &RealField2D {
    type Output = RealField2D;
    fn neg(self) -> RealField2D {
        self.map(|v| -v)
    }
}

impl Mul<&RealField2D> for f64 {
    type Output = RealField2D;
    fn mul(self, rhs: &RealField2D) -> RealField2D {
        rhs.scaled(self)
    }
}

impl AddAssign<&RealField2D> for RealField2D {
    fn add_assign(&mut self, rhs: &RealField2D) {
        for (a, b) in self.values.iter_mut().zip(&rhs.values) {
            *a += b;
        }
    }
}

impl SubAssign<&RealField2D> for RealField2D {
    fn sub_assign(&mut self, rhs: &RealField2D) {
        for (a, b) in self.values.iter_mut().zip(&rhs.values) {
            *a -= b;
        }
    }
}

/// Two-component vector field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField2D {
    pub x: RealField2D,
    pub y: RealField2D,
}

impl VectorField2D {
    pub fn new(x: RealField2D, y: RealField2D) -> Self {
        debug_assert_eq!(x.grid, y.grid);
        Self { x, y }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::new(RealField2D::zeros(grid), RealField2D::zeros(grid))
    }

    pub fn grid(&self) -> GridSpec {
        self.x.grid
    }

    pub fn components(&self) -> [&RealField2D; 2] {
        [&self.x, &self.y]
    }

    pub fn map(&self, f: impl Fn(&RealField2D) -> RealField2D) -> Self {
        Self::new(f(&self.x), f(&self.y))
    }

    pub fn zip_map(
        &self,
        other: &Self,
        f: impl Fn(&RealField2D, &RealField2D) -> RealField2D,
    ) -> Self {
        Self::new(f(&self.x, &other.x), f(&self.y, &other.y))
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|c| c.scaled(s))
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> RealField2D {
        self.x.zip_map(&self.y, |a, b| a.hypot(b))
    }

    pub fn sup_abs(&self) -> f64 {
        self.magnitude().sup_abs()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.x.l2_norm_sq() + self.y.l2_norm_sq()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.x.inner(&other.x) + self.y.inner(&other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.x.max_abs_diff(&other.x).max(self.y.max_abs_diff(&other.y))
    }
}

impl Add<&VectorField2D> for &VectorField2D {
    type Output = VectorField2D;
    fn add(self, rhs: &VectorField2D) -> VectorField2D {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub<&VectorField2D> for &VectorField2D {
    type Output = VectorField2D;
    fn sub(self, rhs: &VectorField2D) -> VectorField2D {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Neg for &VectorField2D {
    type Output = VectorField2D;
    fn neg(self) -> VectorField2D {
        self.map(|c| -c)
    }
}

/// Fourier coefficients of a field on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum2D {
    pub grid: GridSpec,
    pub coeffs: Vec<Complex64>,
}

impl ComplexSpectrum2D {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn at(&self, k1: i64, k2: i64) -> Complex64 {
        self.coeffs[self.grid.flat_index(k1, k2)]
    }

    pub fn set(&mut self, k1: i64, k2: i64, c: Complex64) {
        let idx = self.grid.flat_index(k1, k2);
        self.coeffs[idx] = c;
    }

    /// Coefficient ℓ² norm `(Σ|ĉ_k|²)^{1/2}`.
    pub fn l2_coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Physical `L²` norm via Parseval: `‖f‖² = area · Σ|ĉ_k|²`.
    pub fn parseval_l2_norm(&self) -> f64 {
        self.l2_coeff_norm() * self.grid.area().sqrt()
    }

    /// Largest Hermitian-symmetry defect `|ĉ(−k) − conj ĉ(k)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n;
        let mut worst: f64 = 0.0;
        for i2 in 0..n {
            for i1 in 0..n {
                let j1 = (n - i1) % n;
                let j2 = (n - i2) % n;
                let a = self.coeffs[i2 * n + i1];
                let b = self.coeffs[j2 * n + j1];
                worst = worst.max((a - b.conj()).norm());
            }
        }
        worst
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }
}

impl Add<&ComplexSpectrum2D> for &ComplexSpectrum2D {
    type Output = ComplexSpectrum2D;
    fn add(self, rhs: &ComplexSpectrum2D) -> ComplexSpectrum2D {
        ComplexSpectrum2D {
            grid: self.grid,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub<&ComplexSpectrum2D> for &ComplexSpectrum2D {
    type Output = ComplexSpectrum2D;
    fn sub(self, rhs: &ComplexSpectrum2D) -> ComplexSpectrum2D {
        ComplexSpectrum2D {
            grid: self.grid,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Spectral transforms of a vector field's two components.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSpectrum {
    pub x: ComplexSpectrum2D,
    pub y: ComplexSpectrum2D,
}

impl VectorSpectrum {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            x: ComplexSpectrum2D::zeros(grid),
            y: ComplexSpectrum2D::zeros(grid),
        }
    }
}

/// Transform plans and wavenumber tables for one grid.
///
/// Cloning is cheap: the FFT plans are shared behind `Arc` and are safe to
/// use from several threads at once.
#[derive(Clone)]
pub struct Spectral {
    grid: GridSpec,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Physical wavevector components `kᵢ/L`.
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// Wavevector used for first derivatives: equal to `kx`/`ky` except on
    /// the Nyquist line of that axis, where it is zero.
    dx: Vec<f64>,
    dy: Vec<f64>,
    /// `|ξ|²` including Nyquist modes.
    k2: Vec<f64>,
    keep: Vec<bool>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.n;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let l = grid.half_width;
        let nyq = -(n as i64) / 2;
        let cutoff = grid.dealias_cutoff();
        let mut kx = Vec::with_capacity(grid.len());
        let mut ky = Vec::with_capacity(grid.len());
        let mut dx = Vec::with_capacity(grid.len());
        let mut dy = Vec::with_capacity(grid.len());
        let mut k2 = Vec::with_capacity(grid.len());
        let mut keep = Vec::with_capacity(grid.len());
        for i2 in 0..n {
            let m2 = grid.mode(i2);
            for i1 in 0..n {
                let m1 = grid.mode(i1);
                let (x, y) = (m1 as f64 / l, m2 as f64 / l);
                kx.push(x);
                ky.push(y);
                dx.push(if m1 == nyq { 0.0 } else { x });
                dy.push(if m2 == nyq { 0.0 } else { y });
                k2.push(x * x + y * y);
                keep.push(m1.abs() <= cutoff && m2.abs() <= cutoff);
            }
        }
        Self {
            grid,
            fwd,
            inv,
            kx,
            ky,
            dx,
            dy,
            k2,
            keep,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Physical wavevector of flat index `idx`.
    pub fn wavevector(&self, idx: usize) -> (f64, f64) {
        (self.kx[idx], self.ky[idx])
    }

    /// Derivative wavevector (Nyquist components zeroed).
    pub fn derivative_wavevector(&self, idx: usize) -> (f64, f64) {
        (self.dx[idx], self.dy[idx])
    }

    pub fn wavenumber_sq(&self, idx: usize) -> f64 {
        self.k2[idx]
    }

    pub fn is_retained(&self, idx: usize) -> bool {
        self.keep[idx]
    }

    fn transform_2d(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.n;
        plan.process(buf);
        transpose_square(buf, n);
        plan.process(buf);
        transpose_square(buf, n);
    }

    pub(crate) fn hat(&self, f: &RealField2D) -> ComplexSpectrum2D {
        assert_eq!(f.grid, self.grid, "field on a different grid");
        let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform_2d(&mut buf, &self.fwd);
        let norm = 1.0 / self.grid.len() as f64;
        for c in buf.iter_mut() {
            *c *= norm;
        }
        ComplexSpectrum2D {
            grid: self.grid,
            coeffs: buf,
        }
    }

    pub(crate) fn unhat(&self, s: &ComplexSpectrum2D) -> RealField2D {
        assert_eq!(s.grid, self.grid, "spectrum on a different grid");
        let mut buf = s.coeffs.clone();
        self.transform_2d(&mut buf, &self.inv);
        RealField2D {
            grid: self.grid,
            values: buf.into_iter().map(|c| c.re).collect(),
        }
    }

    pub(crate) fn hat_vec(&self, u: &VectorField2D) -> VectorSpectrum {
        VectorSpectrum {
            x: self.hat(&u.x),
            y: self.hat(&u.y),
        }
    }

    pub(crate) fn unhat_vec(&self, s: &VectorSpectrum) -> VectorField2D {
        VectorField2D::new(self.unhat(&s.x), self.unhat(&s.y))
    }

    pub fn forward(&self, f: &RealField2D) -> Result<ComplexSpectrum2D> {
        self.grid.check_same(&f.grid)?;
        Ok(self.hat(f))
    }

    /// Inverse transform; the imaginary part (roundoff for Hermitian input)
    /// is discarded.
    pub fn inverse(&self, s: &ComplexSpectrum2D) -> Result<RealField2D> {
        self.grid.check_same(&s.grid)?;
        Ok(self.unhat(s))
    }

    /// Multiplies every coefficient by `m(ξ₁, ξ₂)`. Modes whose coefficient
    /// is exactly zero are skipped, so a symbol singular at the origin is
    /// fine on mean-free input.
    pub fn apply_multiplier(
        &self,
        s: &ComplexSpectrum2D,
        m: impl Fn(f64, f64) -> Complex64,
    ) -> Result<ComplexSpectrum2D> {
        self.grid.check_same(&s.grid)?;
        let mut out = s.clone();
        for (idx, c) in out.coeffs.iter_mut().enumerate() {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (x, y) = (self.kx[idx], self.ky[idx]);
            let v = m(x, y);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Domain(format!(
                    "multiplier is not finite at ξ = ({x}, {y})"
                )));
            }
            *c *= v;
        }
        Ok(out)
    }

    /// `∂₁` in Fourier space.
    pub(crate) fn d1_hat(&self, s: &ComplexSpectrum2D) -> ComplexSpectrum2D {
        ComplexSpectrum2D {
            grid: s.grid,
            coeffs: s
                .coeffs
                .iter()
                .zip(&self.dx)
                .map(|(c, &k)| Complex64::new(-c.im * k, c.re * k))
                .collect(),
        }
    }

    /// `∂₂` in Fourier space.
    pub(crate) fn d2_hat(&self, s: &ComplexSpectrum2D) -> ComplexSpectrum2D {
        ComplexSpectrum2D {
            grid: s.grid,
            coeffs: s
                .coeffs
                .iter()
                .zip(&self.dy)
                .map(|(c, &k)| Complex64::new(-c.im * k, c.re * k))
                .collect(),
        }
    }

    pub(crate) fn grad_hat(&self, s: &ComplexSpectrum2D) -> VectorSpectrum {
        VectorSpectrum {
            x: self.d1_hat(s),
            y: self.d2_hat(s),
        }
    }

    pub(crate) fn div_hat(&self, u: &VectorSpectrum) -> ComplexSpectrum2D {
        &self.d1_hat(&u.x) + &self.d2_hat(&u.y)
    }

    pub(crate) fn lap_hat(&self, s: &ComplexSpectrum2D) -> ComplexSpectrum2D {
        ComplexSpectrum2D {
            grid: s.grid,
            coeffs: s.coeffs.iter().zip(&self.k2).map(|(c, &k2)| -c * k2).collect(),
        }
    }

    pub fn gradient(&self, f: &RealField2D) -> Result<VectorField2D> {
        let s = self.forward(f)?;
        Ok(self.unhat_vec(&self.grad_hat(&s)))
    }

    pub fn divergence(&self, u: &VectorField2D) -> Result<RealField2D> {
        self.grid.check_same(&u.grid())?;
        let s = self.hat_vec(u);
        Ok(self.unhat(&self.div_hat(&s)))
    }

    pub fn laplacian(&self, f: &RealField2D) -> Result<RealField2D> {
        let s = self.forward(f)?;
        Ok(self.unhat(&self.lap_hat(&s)))
    }

    /// Scalar curl `∂₁u² − ∂₂u¹`.
    pub fn curl(&self, u: &VectorField2D) -> Result<RealField2D> {
        self.grid.check_same(&u.grid())?;
        let s = self.hat_vec(u);
        Ok(self.unhat(&(&self.d1_hat(&s.y) - &self.d2_hat(&s.x))))
    }

    /// 2/3 rule: zero every mode with `max(|k₁|,|k₂|) > n/3`.
    pub fn dealias(&self, s: &ComplexSpectrum2D) -> ComplexSpectrum2D {
        let mut out = s.clone();
        self.dealias_in_place(&mut out);
        out
    }

    pub(crate) fn dealias_in_place(&self, s: &mut ComplexSpectrum2D) {
        for (c, &k) in s.coeffs.iter_mut().zip(&self.keep) {
            if !k {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Removes modes above the 2/3 cutoff from a physical field.
    pub fn dealias_field(&self, f: &RealField2D) -> RealField2D {
        let mut s = self.hat(f);
        self.dealias_in_place(&mut s);
        self.unhat(&s)
    }

    /// Pointwise product evaluated on the grid and then dealiased, returned
    /// as a spectrum.
    pub(crate) fn product_hat(&self, f: &RealField2D, g: &RealField2D) -> ComplexSpectrum2D {
        let mut s = self.hat(&f.hadamard(g));
        self.dealias_in_place(&mut s);
        s
    }

    /// `u·∇z` for a scalar `z` given by its spectrum; dealiased spectrum out.
    pub(crate) fn advect_hat(&self, u: &VectorField2D, z: &ComplexSpectrum2D) -> ComplexSpectrum2D {
        let gz = self.unhat_vec(&self.grad_hat(z));
        let prod = &u.x.hadamard(&gz.x) + &u.y.hadamard(&gz.y);
        let mut s = self.hat(&prod);
        self.dealias_in_place(&mut s);
        s
    }

    /// `(u·∇)z` for a vector `z` given by its spectra.
    pub(crate) fn advect_vec_hat(&self, u: &VectorField2D, z: &VectorSpectrum) -> VectorSpectrum {
        VectorSpectrum {
            x: self.advect_hat(u, &z.x),
            y: self.advect_hat(u, &z.y),
        }
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, l: f64) -> GridSpec {
        GridSpec::new(n, l).unwrap()
    }

    fn random_field(g: GridSpec, seed: u64) -> RealField2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealField2D::from_values(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn band_limited(g: GridSpec, seed: u64, kmax: i64) -> RealField2D {
        let sp = Spectral::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ComplexSpectrum2D::zeros(g);
        for k2 in -kmax..=kmax {
            for k1 in -kmax..=kmax {
                s.set(k1, k2, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            }
        }
        // real part of the synthesised field is band-limited too
        sp.unhat(&s)
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(48, 1.0).is_err());
        assert!(GridSpec::new(8, 1.0).is_err());
        assert!(GridSpec::new(32, 0.0).is_err());
        assert!(GridSpec::new(32, 8.0).is_ok());
    }

    #[test]
    fn zero_field_has_zero_spectrum() {
        let g = grid(32, 1.0);
        let s = Spectral::new(g).forward(&RealField2D::zeros(g)).unwrap();
        assert!(s.coeffs.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn constant_maps_to_mean_mode() {
        let g = grid(32, 3.0);
        let s = Spectral::new(g).forward(&RealField2D::constant(g, 2.5)).unwrap();
        assert!((s.at(0, 0).re - 2.5).abs() < 1e-14);
        let rest: f64 = s.coeffs.iter().skip(1).map(|c| c.norm()).fold(0.0, f64::max);
        assert!(rest < 1e-14);
    }

    #[test]
    fn cosine_single_mode() {
        let l = 2.0;
        let g = grid(32, l);
        let f = RealField2D::from_fn(g, |x, _| (x / l).cos());
        let s = Spectral::new(g).forward(&f).unwrap();
        for i2 in 0..g.n {
            for i1 in 0..g.n {
                let (k1, k2) = (g.mode(i1), g.mode(i2));
                let expect = if k2 == 0 && k1.abs() == 1 { 0.5 } else { 0.0 };
                let c = s.at(k1, k2);
                assert!((c.re - expect).abs() < 1e-12 && c.im.abs() < 1e-12, "k=({k1},{k2}) {c}");
            }
        }
    }

    #[test]
    fn round_trip_all_sizes() {
        for &n in &[32, 64, 128, 256] {
            let g = grid(n, 8.0);
            let sp = Spectral::new(g);
            let f = random_field(g, n as u64);
            let back = sp.inverse(&sp.forward(&f).unwrap()).unwrap();
            assert!(back.max_abs_diff(&f) <= 1e-12 * f.sup_abs(), "n={n}");
        }
    }

    #[test]
    fn mismatched_grid_is_config_error() {
        let sp = Spectral::new(grid(32, 1.0));
        let f = RealField2D::zeros(grid(64, 1.0));
        assert!(matches!(sp.forward(&f), Err(Error::Config(_))));
    }

    #[test]
    fn multiplier_identity_and_laplacian_symbol() {
        let g = grid(32, 1.0);
        let sp = Spectral::new(g);
        let f = random_field(g, 3);
        let s = sp.forward(&f).unwrap();
        let same = sp.apply_multiplier(&s, |_, _| Complex64::new(1.0, 0.0)).unwrap();
        assert_eq!(same, s);

        let cosx = sp.forward(&RealField2D::from_fn(g, |x, _| x.cos())).unwrap();
        let m = sp.apply_multiplier(&cosx, |a, b| Complex64::new(a * a + b * b, 0.0)).unwrap();
        assert!((m.at(1, 0) - cosx.at(1, 0)).norm() < 1e-15);
    }

    #[test]
    fn derivative_multiplier_on_cosine() {
        let g = grid(32, 1.0);
        let sp = Spectral::new(g);
        let s = sp.forward(&RealField2D::from_fn(g, |x, _| x.cos())).unwrap();
        let d = sp.apply_multiplier(&s, |a, _| Complex64::new(0.0, a)).unwrap();
        let minus_sin = sp.forward(&RealField2D::from_fn(g, |x, _| -x.sin())).unwrap();
        assert!((&d - &minus_sin).max_abs() < 1e-14);
    }

    #[test]
    fn non_finite_multiplier_is_domain_error() {
        let g = grid(16, 1.0);
        let sp = Spectral::new(g);
        let s = sp.forward(&RealField2D::constant(g, 1.0)).unwrap();
        let r = sp.apply_multiplier(&s, |a, b| Complex64::new(1.0 / (a * a + b * b), 0.0));
        assert!(matches!(r, Err(Error::Domain(_))));
        // mean-free input never touches ξ = 0
        let mut s = sp.forward(&RealField2D::from_fn(g, |x, _| x.cos())).unwrap();
        s.coeffs[0] = Complex64::new(0.0, 0.0);
        assert!(sp.apply_multiplier(&s, |a, b| Complex64::new(1.0 / (a * a + b * b), 0.0)).is_ok());
    }

    #[test]
    fn real_even_multiplier_keeps_hermitian_symmetry() {
        let g = grid(32, 1.0);
        let sp = Spectral::new(g);
        let s = sp.forward(&random_field(g, 9)).unwrap();
        let m = sp
            .apply_multiplier(&s, |a, b| Complex64::new((-(a * a + b * b) / 50.0).exp(), 0.0))
            .unwrap();
        assert!(m.hermitian_defect() < 1e-15);
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = grid(32, 2.0);
        let sp = Spectral::new(g);
        let gr = sp.gradient(&RealField2D::constant(g, 7.0)).unwrap();
        assert!(gr.sup_abs() < 1e-13);
    }

    #[test]
    fn div_grad_is_laplacian() {
        let g = grid(64, 1.5);
        let sp = Spectral::new(g);
        let f = band_limited(g, 11, 20);
        let lhs = sp.divergence(&sp.gradient(&f).unwrap()).unwrap();
        let rhs = sp.laplacian(&f).unwrap();
        assert!(lhs.max_abs_diff(&rhs) <= 1e-11 * rhs.sup_abs());
    }

    #[test]
    fn laplacian_of_cos2x() {
        let g = grid(32, 1.0);
        let sp = Spectral::new(g);
        let f = RealField2D::from_fn(g, |x, _| (2.0 * x).cos());
        let lap = sp.laplacian(&f).unwrap();
        let expect = f.scaled(-4.0);
        assert!(lap.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn dealias_behaviour() {
        let g = grid(64, 1.0);
        let sp = Spectral::new(g);
        let n = g.n as i64;
        let bl = band_limited(g, 5, n / 3);
        let raw = sp.forward(&bl).unwrap();
        let s = sp.dealias(&raw);
        assert!((&s - &raw).max_abs() < 1e-15);
        assert_eq!(sp.dealias(&s), s);

        let mut single = ComplexSpectrum2D::zeros(g);
        single.set(n / 2 - 1, 0, Complex64::new(1.0, 0.0));
        assert!(sp.dealias(&single).max_abs() == 0.0);

        let r = sp.forward(&random_field(g, 8)).unwrap();
        assert!(sp.dealias(&r).l2_coeff_norm() <= r.l2_coeff_norm());
    }

    #[test]
    fn derivatives_commute_with_multipliers() {
        let g = grid(32, 1.0);
        let sp = Spectral::new(g);
        let s = sp.forward(&band_limited(g, 2, 10)).unwrap();
        let m = |a: f64, b: f64| Complex64::new((a * a + b * b).sqrt().cos(), 0.0);
        let a = sp.d1_hat(&sp.apply_multiplier(&s, m).unwrap());
        let b = sp.apply_multiplier(&sp.d1_hat(&s), m).unwrap();
        assert!((&a - &b).max_abs() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn parseval_holds(seed in any::<u64>(), l in 0.5f64..10.0) {
                let g = grid(32, l);
                let sp = Spectral::new(g);
                let f = random_field(g, seed);
                let phys = f.l2_norm();
                let spec = sp.forward(&f).unwrap().parseval_l2_norm();
                prop_assert!((phys - spec).abs() <= 1e-12 * phys);
            }

            #[test]
            fn round_trip_is_identity(seed in any::<u64>()) {
                let g = grid(64, 8.0);
                let sp = Spectral::new(g);
                let f = random_field(g, seed);
                let back = sp.inverse(&sp.forward(&f).unwrap()).unwrap();
                prop_assert!(back.max_abs_diff(&f) <= 1e-12 * f.sup_abs());
            }
        }
    }
}
