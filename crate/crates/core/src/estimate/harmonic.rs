//! Ensembles for the product law, the dyadic commutator estimate, the
//! composition estimate and Bernstein's inequality.
//!
//! Random inputs come from [`random_band_spectrum`], whose draw order is a
//! fixed loop over integer modes. The same seed therefore yields the same
//! continuum function at every resolution that can represent it, and the
//! coarse/fine comparison measures discretization error only.

use rand::{Rng, SeedableRng};
use rustfft::num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EstimateReport, Sample};
use crate::cns_model::{Model, PressureLaw};
use crate::error::{Error, Result};
use crate::littlewood_paley::{bernstein_check, DyadicPartition, Lp};
use crate::spectral::{ComplexSpectrum2D, GridSpec, RealField2D, Spectral, VectorField2D};

/// Random real spectrum supported on integer modes `k_lo ≤ |k| ≤ k_hi`, with
/// amplitudes `(1+|k|²)^{−decay/2}`.
pub fn random_band_spectrum(
    grid: GridSpec,
    k_lo: f64,
    k_hi: f64,
    decay: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ComplexSpectrum2D> {
    let kmax = k_hi.floor() as i64;
    if !(k_lo >= 0.0 && k_hi >= k_lo) {
        return Err(Error::Precondition(format!("bad band [{k_lo}, {k_hi}]")));
    }
    if kmax >= (grid.n / 2) as i64 {
        return Err(Error::Precondition(format!(
            "band edge {k_hi} not representable on n = {}",
            grid.n
        )));
    }
    let mut s = ComplexSpectrum2D::zeros(grid);
    for k2 in 0..=kmax {
        for k1 in -kmax..=kmax {
            if k2 == 0 && k1 <= 0 {
                continue;
            }
            let re: f64 = rng.gen_range(-1.0..1.0);
            let im: f64 = rng.gen_range(-1.0..1.0);
            let r2 = (k1 * k1 + k2 * k2) as f64;
            let r = r2.sqrt();
            if r < k_lo || r > k_hi {
                continue;
            }
            let c = Complex64::new(re, im) * (1.0 + r2).powf(-0.5 * decay);
            s.set(k1, k2, c);
            s.set(-k1, -k2, c.conj());
        }
    }
    Ok(s)
}

/// Sum of coefficient magnitudes, an upper bound for the sup norm.
fn coeff_l1(s: &ComplexSpectrum2D) -> f64 {
    s.coeffs.iter().map(|c| c.norm()).sum()
}

/// Both sides of `‖fg‖_{Ḃ^{s₁+s₂−1}} ≤ C‖f‖_{Ḃ^{s₁}}‖g‖_{Ḃ^{s₂}}`.
pub fn product_law_sample(
    spectral: &Spectral,
    partition: &DyadicPartition,
    f: &RealField2D,
    g: &RealField2D,
    s1: f64,
    s2: f64,
) -> Result<Sample> {
    if s1 > 1.0 || s2 > 1.0 || s1 + s2 <= 0.0 {
        return Err(Error::Precondition(format!(
            "product law needs s1, s2 <= 1 and s1 + s2 > 0, got ({s1}, {s2})"
        )));
    }
    let fh = spectral.forward(f)?;
    let gh = spectral.forward(g)?;
    let fg = spectral.product_hat(f, g);
    let lhs = partition.besov_hat(&fg, s1 + s2 - 1.0);
    let rhs = partition.besov_hat(&fh, s1) * partition.besov_hat(&gh, s2);
    Ok(Sample::new(lhs, rhs, f.l2_norm() * g.l2_norm()))
}

/// Both sides of `Σ_j 2^{js}‖[u·∇, Δ̇_j]z‖_{L²} ≤ C‖∇u‖_{Ḃ¹}‖z‖_{Ḃ^s}`,
/// `s ∈ {0, 1}`; `‖∇u‖_{Ḃ¹}` uses the Frobenius norm of each block of `∇u`.
pub fn commutator_law_sample(model: &Model, u: &VectorField2D, z: &RealField2D, s: f64) -> Result<Sample> {
    if s != 0.0 && s != 1.0 {
        return Err(Error::Precondition(format!("commutator check needs s in {{0, 1}}, got {s}")));
    }
    let sp = &model.spectral;
    let part = &model.partition;
    let z_hat = sp.forward(z)?;
    let adv = sp.advect_hat(u, &z_hat);
    let mut lhs = 0.0;
    for j in part.j_range() {
        let c = model.dyadic_commutator_hat(u, &z_hat, &adv, j)?;
        lhs += 2f64.powf(j as f64 * s) * c.parseval_l2_norm();
    }
    let u_hat = sp.hat_vec(u);
    let grads = [
        sp.d1_hat(&u_hat.x),
        sp.d2_hat(&u_hat.x),
        sp.d1_hat(&u_hat.y),
        sp.d2_hat(&u_hat.y),
    ];
    let per: Vec<Vec<f64>> = grads.iter().map(|g| part.block_norms(g)).collect();
    let frob: Vec<f64> = (0..part.len())
        .map(|i| per.iter().map(|b| b[i] * b[i]).sum::<f64>().sqrt())
        .collect();
    let grad_u_b1 = part.besov_from_blocks(&frob, 1.0);
    let z_bs = part.besov_hat(&z_hat, s);
    let rhs = grad_u_b1 * z_bs;
    let scale = (u.l2_norm() + grad_u_b1) * (z_bs + part.besov_hat(&z_hat, s + 1.0));
    Ok(Sample::new(lhs, rhs, scale))
}

/// Nonlinearities covered by the composition estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Composite {
    /// `a/(1+a)`.
    Rational,
    /// `−P'(1+a)/(1+a) + P'(1)`.
    PressureCoefficient(PressureLaw),
}

impl Composite {
    pub fn eval(&self, a: f64) -> f64 {
        match self {
            Composite::Rational => a / (1.0 + a),
            Composite::PressureCoefficient(law) => -law.dp(1.0 + a) / (1.0 + a) + law.dp(1.0),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Composite::Rational => "rational".into(),
            Composite::PressureCoefficient(law) => format!("pressure_gamma_{}", law.exponent()),
        }
    }
}

/// Both sides of `‖F(a)‖_{Ḃ^s} ≤ C‖a‖_{Ḃ^s}`. `F(a)` is sampled pointwise
/// on the grid, without truncation.
pub fn composition_sample(
    spectral: &Spectral,
    partition: &DyadicPartition,
    a: &RealField2D,
    s: f64,
    f: Composite,
) -> Result<Sample> {
    if !(s > 0.0) {
        return Err(Error::Precondition(format!("composition check needs s > 0, got {s}")));
    }
    let sup = a.sup_abs();
    if sup > 0.5 {
        return Err(Error::Precondition(format!("sup|a| = {sup} exceeds 1/2")));
    }
    let fa = a.map(|x| f.eval(x));
    let lhs = partition.besov_norm(spectral, &fa, s)?;
    let rhs = partition.besov_norm(spectral, a, s)?;
    Ok(Sample::new(lhs, rhs, a.l2_norm()))
}

/// Ensemble parameters shared by the harmonic checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub size: usize,
    pub seed: u64,
    pub n_coarse: usize,
    pub n_fine: usize,
    pub product_ceiling: f64,
    pub commutator_ceiling: f64,
    pub composition_ceiling: f64,
    pub bernstein_ceiling: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            size: 100,
            seed: 20240601,
            n_coarse: 64,
            n_fine: 128,
            product_ceiling: 50.0,
            commutator_ceiling: 50.0,
            composition_ceiling: 50.0,
            bernstein_ceiling: 10.0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::Config("ensemble size must be positive".into()));
        }
        GridSpec::new(self.n_coarse, 1.0)?;
        GridSpec::new(self.n_fine, 1.0)?;
        if self.n_coarse < 32 {
            return Err(Error::Config("coarse resolution must be at least 32".into()));
        }
        Ok(())
    }

    /// Largest band edge keeping pairwise products alias-free on the
    /// coarse grid.
    pub fn band_cap(&self) -> f64 {
        (self.n_coarse / 6) as f64
    }
}

/// Per-sample randomness: band edges and spectral decay.
struct Draw {
    rng: ChaCha8Rng,
    k_hi: f64,
    decay: f64,
}

fn draw(cfg: &EnsembleConfig, stream: u64, i: usize) -> Draw {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(i as u64);
    let cap = cfg.band_cap();
    let k_hi = rng.gen_range(2.0..=cap);
    let decay = rng.gen_range(0.0..3.0);
    Draw { rng, k_hi, decay }
}

fn field(grid: GridSpec, d: &mut Draw) -> Result<RealField2D> {
    let sp = random_band_spectrum(grid, 1.0, d.k_hi, d.decay, &mut d.rng)?;
    Ok(Spectral::new(grid).unhat(&sp))
}

fn unit_grid(n: usize) -> Result<GridSpec> {
    GridSpec::new(n, 1.0)
}

fn run_both<F>(cfg: &EnsembleConfig, id: &str, ceiling: f64, sample: F) -> Result<EstimateReport>
where
    F: Fn(&Model, usize) -> Result<Sample> + Sync,
{
    let mut reports = Vec::new();
    for n in [cfg.n_coarse, cfg.n_fine] {
        let model = Model::with_defaults(unit_grid(n)?);
        let samples: Result<Vec<Sample>> = (0..cfg.size).into_par_iter().map(|i| sample(&model, i)).collect();
        reports.push(EstimateReport::from_samples(id, &samples?, ceiling));
    }
    let fine = reports.pop().expect("two reports");
    let coarse = reports.pop().expect("two reports");
    Ok(EstimateReport::across_resolutions(coarse, fine))
}

pub fn product_ensemble(cfg: &EnsembleConfig, s1: f64, s2: f64) -> Result<EstimateReport> {
    let id = format!("product_law_s{s1}_s{s2}");
    run_both(cfg, &id, cfg.product_ceiling, |m, i| {
        let mut d = draw(cfg, 1, i);
        let f = field(m.grid(), &mut d)?;
        let g = field(m.grid(), &mut d)?;
        product_law_sample(&m.spectral, &m.partition, &f, &g, s1, s2)
    })
}

pub fn commutator_ensemble(cfg: &EnsembleConfig, s: f64) -> Result<EstimateReport> {
    let id = format!("commutator_s{s}");
    run_both(cfg, &id, cfg.commutator_ceiling, |m, i| {
        let mut d = draw(cfg, 2, i);
        let ux = field(m.grid(), &mut d)?;
        let uy = field(m.grid(), &mut d)?;
        let z = field(m.grid(), &mut d)?;
        commutator_law_sample(m, &VectorField2D::new(ux, uy), &z, s)
    })
}

pub fn composition_ensemble(cfg: &EnsembleConfig, f: Composite, s: f64) -> Result<EstimateReport> {
    let id = format!("composition_{}_s{s}", f.label());
    run_both(cfg, &id, cfg.composition_ceiling, |m, i| {
        let mut d = draw(cfg, 3, i);
        let amp = d.rng.gen_range(0.05..0.45);
        let spec = random_band_spectrum(m.grid(), 1.0, d.k_hi, d.decay, &mut d.rng)?;
        let bound = coeff_l1(&spec);
        let a = m.spectral.unhat(&spec.scaled(amp / bound));
        composition_sample(&m.spectral, &m.partition, &a, s, f)
    })
}

/// Bernstein constants of white-noise blocks `Δ̇_j z`, with `σ = 2^j`,
/// `p = q = 2`, over every `j ≥ 0` whose annulus lies inside the grid.
/// The report's stability flag requires the constants to agree within 2×
/// across all `j` and both resolutions.
pub fn bernstein_ensemble(cfg: &EnsembleConfig, k: u32) -> Result<EstimateReport> {
    let id = format!("bernstein_k{k}");
    let mut samples = Vec::new();
    let mut per_res = Vec::new();
    for n in [cfg.n_coarse, cfg.n_fine] {
        let grid = unit_grid(n)?;
        let sp = Spectral::new(grid);
        let part = DyadicPartition::covering(grid);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xb3);
        let noise = RealField2D::from_values(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let top = (n / 2 - 1) as f64;
        let mut res_samples = Vec::new();
        for j in 0..=part.j_max() {
            let sigma = 2f64.powi(j);
            if crate::littlewood_paley::ANNULUS_OUTER * sigma > top {
                break;
            }
            let block = part.block(&sp, &noise, j)?;
            let r = bernstein_check(&sp, &block, sigma, k, Lp::Two, Lp::Two)?;
            res_samples.push(Sample::new(r.implied_constant, 1.0, 1.0));
        }
        per_res.push(EstimateReport::from_samples(&id, &res_samples, cfg.bernstein_ceiling));
        samples.extend(res_samples);
    }
    let mut report = EstimateReport::from_samples(&id, &samples, cfg.bernstein_ceiling);
    let lo = report.ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let stable = report.max_ratio <= 2.0 * lo;
    report.coarse_max = Some(per_res[0].max_ratio);
    report.fine_max = Some(per_res[1].max_ratio);
    report.resolution_stable = Some(stable);
    report.passed = report.passed && stable;
    Ok(report)
}

/// Partition of unity, block reconstruction and Parseval on the fine grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoundationReport {
    pub partition_of_unity_error: f64,
    pub reconstruction_error: f64,
    pub parseval_relative_error: f64,
    pub passed: bool,
}

pub fn foundation_check(cfg: &EnsembleConfig) -> Result<FoundationReport> {
    let mut pou: f64 = 0.0;
    let mut rec: f64 = 0.0;
    let mut pars: f64 = 0.0;
    for n in [cfg.n_coarse, cfg.n_fine] {
        let grid = unit_grid(n)?;
        let sp = Spectral::new(grid);
        let part = DyadicPartition::covering(grid);
        pou = pou.max(part.partition_of_unity_error(&sp));
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xf0);
        let z = sp.unhat(&random_band_spectrum(grid, 0.0, (n / 3) as f64, 0.5, &mut rng)?);
        let dec = part.decompose(&sp, &z)?;
        let back = dec.reconstruct().expect("nonempty partition");
        let mean_free = z.sub_mean();
        rec = rec.max(back.max_abs_diff(&mean_free) / mean_free.sup_abs().max(f64::MIN_POSITIVE));
        let quad = z.l2_norm();
        let spec = sp.forward(&z)?.parseval_l2_norm();
        pars = pars.max((quad - spec).abs() / quad);
    }
    Ok(FoundationReport {
        partition_of_unity_error: pou,
        reconstruction_error: rec,
        parseval_relative_error: pars,
        passed: pou <= 1e-12 && rec <= 1e-10 && pars <= 1e-12,
    })
}

/// Every harmonic-analysis check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSuite {
    pub foundation: FoundationReport,
    pub product: Vec<EstimateReport>,
    pub commutator: Vec<EstimateReport>,
    pub composition: Vec<EstimateReport>,
    pub bernstein: Vec<EstimateReport>,
    pub passed: bool,
}

pub const PRODUCT_INDICES: [(f64, f64); 3] = [(1.0, 1.0), (1.0, 0.0), (0.5, 0.5)];

pub fn harmonic_suite(cfg: &EnsembleConfig) -> Result<HarmonicSuite> {
    cfg.validate()?;
    let foundation = foundation_check(cfg)?;
    let product = PRODUCT_INDICES
        .iter()
        .map(|&(a, b)| product_ensemble(cfg, a, b))
        .collect::<Result<Vec<_>>>()?;
    let commutator = [0.0, 1.0]
        .iter()
        .map(|&s| commutator_ensemble(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let law = PressureLaw::gamma(1.4)?;
    let mut composition = Vec::new();
    for f in [Composite::Rational, Composite::PressureCoefficient(law)] {
        for s in [0.5, 1.0] {
            composition.push(composition_ensemble(cfg, f, s)?);
        }
    }
    let bernstein = [1, 2]
        .iter()
        .map(|&k| bernstein_ensemble(cfg, k))
        .collect::<Result<Vec<_>>>()?;
    let passed = foundation.passed
        && product
            .iter()
            .chain(&commutator)
            .chain(&composition)
            .chain(&bernstein)
            .all(|r| r.passed);
    Ok(HarmonicSuite {
        foundation,
        product,
        commutator,
        composition,
        bernstein,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::littlewood_paley::phi_j;
    use std::f64::consts::PI;

    fn small_cfg() -> EnsembleConfig {
        EnsembleConfig {
            size: 12,
            ..EnsembleConfig::default()
        }
    }

    fn model(n: usize) -> Model {
        Model::with_defaults(GridSpec::new(n, 1.0).unwrap())
    }

    #[test]
    fn generator_is_resolution_independent() {
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let g1 = GridSpec::new(32, 1.0).unwrap();
        let g2 = GridSpec::new(64, 1.0).unwrap();
        let a = random_band_spectrum(g1, 1.0, 5.0, 1.0, &mut r1).unwrap();
        let b = random_band_spectrum(g2, 1.0, 5.0, 1.0, &mut r2).unwrap();
        for k1 in -6..=6 {
            for k2 in -6..=6 {
                assert_eq!(a.at(k1, k2), b.at(k1, k2));
            }
        }
        assert!(a.hermitian_defect() == 0.0);
        assert_eq!(a.at(0, 0), Complex64::new(0.0, 0.0));
        let mut r3 = ChaCha8Rng::seed_from_u64(5);
        assert!(random_band_spectrum(g1, 1.0, 16.0, 1.0, &mut r3).is_err());
    }

    #[test]
    fn zero_factor_gives_vacuous_sample() {
        let m = model(32);
        let f = RealField2D::zeros(m.grid());
        let g = RealField2D::from_fn(m.grid(), |x, y| (x + y).sin());
        let s = product_law_sample(&m.spectral, &m.partition, &f, &g, 1.0, 1.0).unwrap();
        assert_eq!(s.ratio(), 0.0);
        assert!(product_law_sample(&m.spectral, &m.partition, &g, &g, 1.5, 0.0).is_err());
        assert!(product_law_sample(&m.spectral, &m.partition, &g, &g, -0.5, 0.5).is_err());
    }

    #[test]
    fn single_mode_product_matches_direct_summation() {
        let m = model(64);
        let f = RealField2D::from_fn(m.grid(), |x, _| (2.0 * x).cos());
        let s = product_law_sample(&m.spectral, &m.partition, &f, &f, 1.0, 1.0).unwrap();
        // cos²(2x) = 1/2 + cos(4x)/2; ‖cos(kx)‖_{L²} = 2π/√2 on [0, 2π)².
        let l2 = 2.0 * PI / 2f64.sqrt();
        let weight = |r: f64| (-10..=10).map(|j| 2f64.powi(j) * phi_j(j, r)).sum::<f64>();
        let lhs = weight(4.0) * 0.5 * l2;
        let rhs = (weight(2.0) * l2).powi(2);
        assert!((s.lhs - lhs).abs() <= 1e-12 * lhs, "{} vs {lhs}", s.lhs);
        assert!((s.rhs - rhs).abs() <= 1e-12 * rhs);
        assert!((s.ratio() - lhs / rhs).abs() <= 1e-12 * lhs / rhs);
    }

    #[test]
    fn commutator_vanishes_for_constant_velocity_or_zero_scalar() {
        let m = model(32);
        let g = m.grid();
        let u = VectorField2D::new(RealField2D::constant(g, 0.7), RealField2D::constant(g, -1.3));
        let z = RealField2D::from_fn(g, |x, y| (3.0 * x - y).cos() + (x + 2.0 * y).sin());
        for s in [0.0, 1.0] {
            let smp = commutator_law_sample(&m, &u, &z, s).unwrap();
            assert!(smp.lhs <= 1e-12 * smp.scale, "{smp:?}");
            assert_eq!(smp.ratio(), 0.0);
        }
        let u = VectorField2D::new(z.clone(), z.map(|v| v * v));
        let smp = commutator_law_sample(&m, &u, &RealField2D::zeros(g), 1.0).unwrap();
        assert_eq!(smp.lhs, 0.0);
        assert!(commutator_law_sample(&m, &u, &z, 0.5).is_err());
    }

    #[test]
    fn composition_edge_cases() {
        let m = model(32);
        let g = m.grid();
        let zero = RealField2D::zeros(g);
        let s = composition_sample(&m.spectral, &m.partition, &zero, 1.0, Composite::Rational).unwrap();
        assert_eq!(s.ratio(), 0.0);
        let a = RealField2D::from_fn(g, |x, y| 0.3 * (x - y).sin());
        let law2 = PressureLaw::gamma(2.0).unwrap();
        let s = composition_sample(&m.spectral, &m.partition, &a, 1.0, Composite::PressureCoefficient(law2)).unwrap();
        assert_eq!(s.lhs, 0.0);
        assert_eq!(s.ratio(), 0.0);
        let big = a.scaled(2.0);
        assert!(composition_sample(&m.spectral, &m.partition, &big, 1.0, Composite::Rational).is_err());
        assert!(composition_sample(&m.spectral, &m.partition, &a, 0.0, Composite::Rational).is_err());
    }

    #[test]
    fn composition_taylor_limit() {
        let m = model(64);
        let a = RealField2D::from_fn(m.grid(), |x, y| (x + 2.0 * y).sin() + 0.5 * (3.0 * x).cos());
        let a = a.scaled(1.0 / a.sup_abs());
        let law = PressureLaw::gamma(1.4).unwrap();
        for f in [Composite::Rational, Composite::PressureCoefficient(law)] {
            // Linear part of F at 0: 1 for the rational map, 2−γ for k.
            let slope = match f {
                Composite::Rational => 1.0,
                Composite::PressureCoefficient(l) => 2.0 - l.exponent(),
            };
            let mut prev = f64::INFINITY;
            for eps in [1e-3, 1e-4] {
                let s = composition_sample(&m.spectral, &m.partition, &a.scaled(eps), 1.0, f).unwrap();
                let err = (s.ratio() - slope).abs();
                assert!(err <= 10.0 * eps, "{f:?} eps {eps}: {}", s.ratio());
                assert!(err < prev);
                prev = err;
            }
        }
    }

    #[test]
    fn bernstein_constants_are_stable() {
        for k in [1, 2] {
            let r = bernstein_ensemble(&small_cfg(), k).unwrap();
            assert!(r.passed, "{}", r.summary());
            assert!(r.max_ratio <= (8.0f64 / 3.0).powi(k as i32) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn foundation_tolerances() {
        let r = foundation_check(&small_cfg()).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn small_ensembles_pass_and_are_deterministic() {
        let cfg = small_cfg();
        let a = product_ensemble(&cfg, 0.5, 0.5).unwrap();
        let b = product_ensemble(&cfg, 0.5, 0.5).unwrap();
        assert_eq!(a, b);
        assert!(a.passed, "{}", a.summary());
        let c = commutator_ensemble(&cfg, 1.0).unwrap();
        assert!(c.passed, "{}", c.summary());
        let d = composition_ensemble(&cfg, Composite::Rational, 0.5).unwrap();
        assert!(d.passed, "{}", d.summary());
        assert!(d.ratios.iter().all(|r| r.is_finite() && *r > 0.0));
    }
}
