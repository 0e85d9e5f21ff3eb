//! Homogeneous Littlewood-Paley decomposition on the periodic grid.
//!
//! The radial profile is `φ(ξ) = χ(ξ/2) − χ(ξ)` where `χ` is a C^∞ cutoff
//! equal to 1 on `|ξ| ≤ 3/4` and 0 on `|ξ| ≥ 4/3`. Hence `φ_j = φ(2^{−j}·)`
//! is supported in `3/4·2^j ≤ |ξ| ≤ 8/3·2^j` and the sum over a range of `j`
//! telescopes to 1 on every wavevector it covers. The mean (`ξ = 0`) belongs
//! to no block.
//!
//! `L²` norms are torus integrals, evaluated through Parseval from the
//! spectrum so block norms never need an inverse transform.

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ComplexSpectrum2D, GridSpec, RealField2D, Spectral, VectorSpectrum};

pub const ANNULUS_INNER: f64 = 3.0 / 4.0;
pub const ANNULUS_OUTER: f64 = 8.0 / 3.0;
const CHI_FLAT: f64 = 3.0 / 4.0;
const CHI_ZERO: f64 = 4.0 / 3.0;

fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Low-pass cutoff `χ(r)`.
pub fn chi(r: f64) -> f64 {
    1.0 - smooth_step((r - CHI_FLAT) / (CHI_ZERO - CHI_FLAT))
}

/// Annular profile `φ(r) = χ(r/2) − χ(r)`.
pub fn phi(r: f64) -> f64 {
    chi(0.5 * r) - chi(r)
}

/// `φ_j(r) = φ(2^{−j} r)`, written so that adjacent blocks evaluate the
/// shared `χ` term at bit-identical arguments.
pub fn phi_j(j: i32, r: f64) -> f64 {
    chi(r * 2f64.powi(-(j + 1))) - chi(r * 2f64.powi(-j))
}

/// Regularity index of `Ḃ^s_{2,1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovIndex {
    pub s: f64,
}

impl BesovIndex {
    pub fn new(s: f64) -> Result<Self> {
        if !(-1.0..=2.0).contains(&s) {
            return Err(Error::Domain(format!("Besov index s = {s} outside [-1, 2]")));
        }
        Ok(Self { s })
    }
}

/// Sampled dyadic partition of unity over `j ∈ [j_min, j_max]`.
#[derive(Debug, Clone)]
pub struct DyadicPartition {
    grid: GridSpec,
    j_min: i32,
    j_max: i32,
    /// Per block: `(flat index, φ_j(ξ))` for every mode with `φ_j(ξ) > 0`.
    blocks: Vec<Vec<(usize, f64)>>,
}

impl DyadicPartition {
    /// Builds the partition and checks that the range covers every nonzero
    /// wavevector retained by the 2/3 rule.
    pub fn new(grid: GridSpec, j_min: i32, j_max: i32) -> Result<Self> {
        if j_min > j_max {
            return Err(Error::Config(format!(
                "dyadic range is empty: j_min = {j_min} > j_max = {j_max}"
            )));
        }
        let l = grid.half_width;
        let xi_low = 1.0 / l;
        let cutoff = grid.dealias_cutoff() as f64;
        let xi_high = cutoff * std::f64::consts::SQRT_2 / l;
        let covered_low = CHI_ZERO * 2f64.powi(j_min);
        let covered_high = CHI_FLAT * 2f64.powi(j_max + 1);
        if covered_low > xi_low {
            return Err(Error::Config(format!(
                "dyadic range too narrow: |ξ| in [{xi_low}, {covered_low}) is not covered (lower j_min)"
            )));
        }
        if covered_high < xi_high {
            return Err(Error::Config(format!(
                "dyadic range too narrow: |ξ| in ({covered_high}, {xi_high}] is not covered (raise j_max)"
            )));
        }
        Ok(Self::build(grid, j_min, j_max))
    }

    /// Smallest range that covers every nonzero wavevector of the grid,
    /// including the modes removed by dealiasing.
    pub fn covering(grid: GridSpec) -> Self {
        let (j_min, j_max) = Self::covering_range(grid);
        Self::build(grid, j_min, j_max)
    }

    pub fn covering_range(grid: GridSpec) -> (i32, i32) {
        let l = grid.half_width;
        let xi_low = 1.0 / l;
        let xi_high = std::f64::consts::SQRT_2 * (grid.n / 2) as f64 / l;
        let j_min = (xi_low / CHI_ZERO).log2().floor() as i32;
        let j_max = (xi_high / CHI_FLAT).log2().ceil() as i32 - 1;
        (j_min, j_max)
    }

    fn build(grid: GridSpec, j_min: i32, j_max: i32) -> Self {
        let sp_l = grid.half_width;
        let n = grid.n;
        let mut blocks = vec![Vec::new(); (j_max - j_min + 1) as usize];
        for i2 in 0..n {
            let k2 = grid.mode(i2) as f64 / sp_l;
            for i1 in 0..n {
                let k1 = grid.mode(i1) as f64 / sp_l;
                let r = k1.hypot(k2);
                if r == 0.0 {
                    continue;
                }
                let idx = i2 * n + i1;
                // only j with 3/4·2^j ≤ r ≤ 8/3·2^j can be nonzero
                let j_lo = ((r / ANNULUS_OUTER).log2().floor() as i32).max(j_min);
                let j_hi = ((r / ANNULUS_INNER).log2().ceil() as i32).min(j_max);
                for j in j_lo..=j_hi {
                    let w = phi_j(j, r);
                    if w > 0.0 {
                        blocks[(j - j_min) as usize].push((idx, w));
                    }
                }
            }
        }
        Self {
            grid,
            j_min,
            j_max,
            blocks,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn j_min(&self) -> i32 {
        self.j_min
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn j_range(&self) -> std::ops::RangeInclusive<i32> {
        self.j_min..=self.j_max
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    fn slot(&self, j: i32) -> Result<usize> {
        if j < self.j_min || j > self.j_max {
            return Err(Error::Domain(format!(
                "block j = {j} outside [{}, {}]",
                self.j_min, self.j_max
            )));
        }
        Ok((j - self.j_min) as usize)
    }

    /// Nonzero entries `(flat index, φ_j)` of block `j`.
    pub fn entries(&self, j: i32) -> Result<&[(usize, f64)]> {
        Ok(&self.blocks[self.slot(j)?])
    }

    /// Dense multiplier table of `Σ_{j ∈ js} φ_j`.
    pub fn multiplier_sum(&self, js: impl IntoIterator<Item = i32>) -> Vec<f64> {
        let mut table = vec![0.0; self.grid.len()];
        for j in js {
            if let Ok(slot) = self.slot(j) {
                for &(idx, w) in &self.blocks[slot] {
                    table[idx] += w;
                }
            }
        }
        table
    }

    /// Largest `|Σ_j φ_j(ξ) − 1|` over the nonzero wavevectors kept by the
    /// 2/3 rule.
    pub fn partition_of_unity_error(&self, spectral: &Spectral) -> f64 {
        let sum = self.multiplier_sum(self.j_range());
        let mut worst: f64 = 0.0;
        for (idx, s) in sum.iter().enumerate() {
            if idx == 0 || !spectral.is_retained(idx) {
                continue;
            }
            worst = worst.max((s - 1.0).abs());
        }
        worst
    }

    pub fn block_hat(&self, s: &ComplexSpectrum2D, j: i32) -> Result<ComplexSpectrum2D> {
        let mut out = ComplexSpectrum2D::zeros(s.grid);
        for &(idx, w) in self.entries(j)? {
            out.coeffs[idx] = s.coeffs[idx] * w;
        }
        Ok(out)
    }

    /// `Δ̇_j z`.
    pub fn block(&self, spectral: &Spectral, z: &RealField2D, j: i32) -> Result<RealField2D> {
        let s = spectral.forward(z)?;
        Ok(spectral.unhat(&self.block_hat(&s, j)?))
    }

    /// `‖Δ̇_j z‖_{L²}` for every `j`, from the spectrum of `z`.
    pub fn block_norms(&self, s: &ComplexSpectrum2D) -> Vec<f64> {
        let area = self.grid.area();
        self.blocks
            .iter()
            .map(|entries| {
                let e: f64 = entries
                    .iter()
                    .map(|&(idx, w)| w * w * s.coeffs[idx].norm_sqr())
                    .sum();
                (area * e).sqrt()
            })
            .collect()
    }

    /// Block norms of a vector field (Euclidean `L²` of both components).
    pub fn block_norms_vec(&self, s: &VectorSpectrum) -> Vec<f64> {
        let area = self.grid.area();
        self.blocks
            .iter()
            .map(|entries| {
                let e: f64 = entries
                    .iter()
                    .map(|&(idx, w)| w * w * (s.x.coeffs[idx].norm_sqr() + s.y.coeffs[idx].norm_sqr()))
                    .sum();
                (area * e).sqrt()
            })
            .collect()
    }

    /// `Σ_j 2^{js} b_j` for precomputed block norms.
    pub fn besov_from_blocks(&self, block_norms: &[f64], s: f64) -> f64 {
        block_norms
            .iter()
            .zip(self.j_range())
            .map(|(b, j)| 2f64.powf(j as f64 * s) * b)
            .sum()
    }

    pub fn besov_hat(&self, z: &ComplexSpectrum2D, s: f64) -> f64 {
        self.besov_from_blocks(&self.block_norms(z), s)
    }

    pub fn besov_hat_vec(&self, z: &VectorSpectrum, s: f64) -> f64 {
        self.besov_from_blocks(&self.block_norms_vec(z), s)
    }

    /// `‖z‖_{Ḃ^s_{2,1}} = Σ_j 2^{js}‖Δ̇_j z‖_{L²}`; the mean of `z` is ignored.
    pub fn besov_norm(&self, spectral: &Spectral, z: &RealField2D, s: f64) -> Result<f64> {
        Ok(self.besov_hat(&spectral.forward(z)?, s))
    }

    /// Blocks with `2^j ≤ N₀`.
    pub fn low_blocks(&self, n0: u32) -> impl Iterator<Item = i32> + '_ {
        let cap = n0 as f64;
        self.j_range().filter(move |&j| 2f64.powi(j) <= cap)
    }

    pub fn high_blocks(&self, n0: u32) -> impl Iterator<Item = i32> + '_ {
        let cap = n0 as f64;
        self.j_range().filter(move |&j| 2f64.powi(j) > cap)
    }

    /// Spectral split into `(z^ℓ, z^h)`.
    pub fn low_high_hat(
        &self,
        s: &ComplexSpectrum2D,
        n0: u32,
    ) -> (ComplexSpectrum2D, ComplexSpectrum2D) {
        let low = self.multiplier_sum(self.low_blocks(n0));
        let high = self.multiplier_sum(self.high_blocks(n0));
        let apply = |table: &[f64]| ComplexSpectrum2D {
            grid: s.grid,
            coeffs: s.coeffs.iter().zip(table).map(|(c, &m)| c * m).collect(),
        };
        (apply(&low), apply(&high))
    }

    pub fn low_high_split(
        &self,
        spectral: &Spectral,
        z: &RealField2D,
        n0: u32,
    ) -> Result<(RealField2D, RealField2D)> {
        if n0 < 1 {
            return Err(Error::Domain("N0 must be >= 1".into()));
        }
        let s = spectral.forward(z)?;
        let (lo, hi) = self.low_high_hat(&s, n0);
        Ok((spectral.unhat(&lo), spectral.unhat(&hi)))
    }

    pub fn decompose(&self, spectral: &Spectral, z: &RealField2D) -> Result<DyadicDecomposition> {
        let s = spectral.forward(z)?;
        let mut blocks = BTreeMap::new();
        for j in self.j_range() {
            blocks.insert(j, spectral.unhat(&self.block_hat(&s, j)?));
        }
        Ok(DyadicDecomposition {
            blocks,
            source_hash: field_hash(z),
        })
    }
}

/// Hash of the bit patterns of a field, identifying the decomposed source.
pub fn field_hash(z: &RealField2D) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    z.grid.n.hash(&mut h);
    z.grid.half_width.to_bits().hash(&mut h);
    for v in &z.values {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// The family `{Δ̇_j z}` of one field.
#[derive(Debug, Clone)]
pub struct DyadicDecomposition {
    pub blocks: BTreeMap<i32, RealField2D>,
    pub source_hash: u64,
}

impl DyadicDecomposition {
    /// `Σ_j Δ̇_j z`.
    pub fn reconstruct(&self) -> Option<RealField2D> {
        let mut it = self.blocks.values();
        let mut acc = it.next()?.clone();
        for b in it {
            acc += b;
        }
        Some(acc)
    }
}

/// Running per-block time norms of one field along a trajectory:
/// `sup_t ‖Δ̇_j z‖`, `∫‖Δ̇_j z‖ dt` and `∫‖Δ̇_j z‖² dt`, with left-endpoint
/// quadrature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheminLernerAccumulator {
    pub j_min: i32,
    pub sup: Vec<f64>,
    pub integral: Vec<f64>,
    pub integral_sq: Vec<f64>,
    pub horizon: f64,
}

impl CheminLernerAccumulator {
    pub fn new(partition: &DyadicPartition) -> Self {
        let m = partition.len();
        Self {
            j_min: partition.j_min(),
            sup: vec![0.0; m],
            integral: vec![0.0; m],
            integral_sq: vec![0.0; m],
            horizon: 0.0,
        }
    }

    /// Advances by `dt` with the block norms sampled at the left endpoint.
    pub fn update(&mut self, block_norms: &[f64], dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        debug_assert_eq!(block_norms.len(), self.sup.len());
        for (i, &b) in block_norms.iter().enumerate() {
            self.sup[i] = self.sup[i].max(b);
            self.integral[i] += b * dt;
            self.integral_sq[i] += b * b * dt;
        }
        self.horizon += dt;
        Ok(())
    }

    /// Folds the state at the right end of the horizon into the sup norms.
    pub fn include_endpoint(&mut self, block_norms: &[f64]) {
        for (m, &b) in self.sup.iter_mut().zip(block_norms) {
            *m = m.max(b);
        }
    }

    fn weighted(&self, per_block: impl Iterator<Item = f64>, s: f64) -> f64 {
        per_block
            .enumerate()
            .map(|(i, v)| 2f64.powf((self.j_min + i as i32) as f64 * s) * v)
            .sum()
    }

    /// `‖z‖_{L̃^∞_t(Ḃ^s)}`.
    pub fn linf(&self, s: f64) -> f64 {
        self.weighted(self.sup.iter().copied(), s)
    }

    /// `‖z‖_{L^1_t(Ḃ^s)}` (tilde and plain norms coincide for `p = 1`).
    pub fn l1(&self, s: f64) -> f64 {
        self.weighted(self.integral.iter().copied(), s)
    }

    /// `‖z‖_{L̃^2_t(Ḃ^s)}`.
    pub fn l2(&self, s: f64) -> f64 {
        self.weighted(self.integral_sq.iter().map(|v| v.sqrt()), s)
    }
}

/// Lebesgue exponent for the Bernstein check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lp {
    One,
    Two,
    Inf,
}

impl Lp {
    fn inv(self) -> f64 {
        match self {
            Lp::One => 1.0,
            Lp::Two => 0.5,
            Lp::Inf => 0.0,
        }
    }

    fn rank(self) -> u8 {
        match self {
            Lp::One => 1,
            Lp::Two => 2,
            Lp::Inf => 3,
        }
    }

    pub fn norm(self, f: &RealField2D) -> f64 {
        match self {
            Lp::One => f.l1_norm(),
            Lp::Two => f.l2_norm(),
            Lp::Inf => f.sup_abs(),
        }
    }
}

/// Both sides of the Bernstein inequalities for one frequency-localised
/// field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BernsteinReport {
    pub sigma: f64,
    pub k: u32,
    pub p: Lp,
    pub q: Lp,
    /// `‖∇^k z‖_{L^q}`.
    pub grad_norm_q: f64,
    pub norm_q: f64,
    pub norm_p: f64,
    /// `‖∇^k z‖_q / (σ^k ‖z‖_q)`; the lower constant is its reciprocal.
    pub lower_ratio: f64,
    /// `‖∇^k z‖_q / (σ^{k+2/p−2/q} ‖z‖_p)`: the upper constant.
    pub upper_ratio: f64,
    /// Smallest `C` for which both inequalities hold.
    pub implied_constant: f64,
}

/// Pointwise magnitude of `∇^k z` (Euclidean for `k = 1`, Frobenius for
/// `k = 2`).
pub fn gradient_power_magnitude(spectral: &Spectral, s: &ComplexSpectrum2D, k: u32) -> RealField2D {
    match k {
        0 => spectral.unhat(s),
        1 => spectral.unhat_vec(&spectral.grad_hat(s)).magnitude(),
        _ => {
            let d1 = spectral.d1_hat(s);
            let d2 = spectral.d2_hat(s);
            let h11 = spectral.unhat(&spectral.d1_hat(&d1));
            let h12 = spectral.unhat(&spectral.d2_hat(&d1));
            let h22 = spectral.unhat(&spectral.d2_hat(&d2));
            let mut out = h11.zip_map(&h22, |a, b| a * a + b * b);
            for (o, c) in out.values.iter_mut().zip(&h12.values) {
                *o = (*o + 2.0 * c * c).sqrt();
            }
            out
        }
    }
}

/// Evaluates `C⁻¹σ^k‖z‖_q ≤ ‖∇^k z‖_q ≤ Cσ^{k+2/p−2/q}‖z‖_p` for `z` with
/// spectrum in the annulus `σ·{3/4 ≤ |ξ| ≤ 8/3}`.
pub fn bernstein_check(
    spectral: &Spectral,
    z: &RealField2D,
    sigma: f64,
    k: u32,
    p: Lp,
    q: Lp,
) -> Result<BernsteinReport> {
    if k > 2 {
        return Err(Error::Precondition(format!("k = {k} not in {{0, 1, 2}}")));
    }
    if p.rank() > q.rank() {
        return Err(Error::Precondition("Bernstein check needs p <= q".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::Precondition(format!("sigma must be positive, got {sigma}")));
    }
    let s = spectral.forward(z)?;
    let peak = s.max_abs();
    let (lo, hi) = (ANNULUS_INNER * sigma, ANNULUS_OUTER * sigma);
    let slack = 1e-12;
    for (idx, c) in s.coeffs.iter().enumerate() {
        if c.norm() <= 1e-12 * peak {
            continue;
        }
        let r = spectral.wavenumber_sq(idx).sqrt();
        if r < lo * (1.0 - slack) || r > hi * (1.0 + slack) {
            return Err(Error::Precondition(format!(
                "spectrum has |ξ| = {r} outside annulus [{lo}, {hi}]"
            )));
        }
    }
    let grad = gradient_power_magnitude(spectral, &s, k);
    let grad_norm_q = q.norm(&grad);
    let norm_q = q.norm(z);
    let norm_p = p.norm(z);
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let lower_ratio = ratio(grad_norm_q, sigma.powi(k as i32) * norm_q);
    let upper_ratio = ratio(
        grad_norm_q,
        sigma.powf(k as f64 + 2.0 * p.inv() - 2.0 * q.inv()) * norm_p,
    );
    let lower_const = if lower_ratio > 0.0 { 1.0 / lower_ratio } else { 0.0 };
    Ok(BernsteinReport {
        sigma,
        k,
        p,
        q,
        grad_norm_q,
        norm_q,
        norm_p,
        lower_ratio,
        upper_ratio,
        implied_constant: lower_const.max(upper_ratio),
    })
}
