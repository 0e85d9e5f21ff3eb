//! Initial data, named scenarios and parameter sweeps.
//!
//! Large-`w` data come from a stream function `ψ = αψ₀ + βψ₁`, with
//! `Pu = (∂₂ψ, −∂₁ψ)`. `ψ₀` only has modes with `k₂ = 0`, so it contributes
//! nothing to `v = ∂₂ψ`; `ψ₁` has modes with `1 ≤ |k₂| ≤ coupling` and sets the
//! small `v`. `β` fixes `‖v₀‖_{Ḃ⁰}`, then `α` is found by bisection so that
//! `‖w₀‖_{Ḃ⁰}` hits its target. The field stays exactly divergence-free
//! because no component is rescaled on its own.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use rustfft::num_complex::Complex64;

use crate::cns_model::{FlowState, Model, ModelParams};
use crate::error::{Error, Result};
use crate::estimate::energy::{DampingObserver, DampingReport};
use crate::estimate::harmonic::random_band_spectrum;
use crate::estimate::qg_bound::QgBoundObserver;
use crate::estimate::theorem::{self, TheoremConfig, TheoremReport};
use crate::estimate::EstimateReport;
use crate::helmholtz::q_hat;
use crate::integrator::{run, IntegratorConfig, Observer, StopReason, TrajectoryRecord};
use crate::io::config::RunConfig;
use crate::littlewood_paley::DyadicPartition;
use crate::spectral::{ComplexSpectrum2D, GridSpec, Spectral, VectorField2D, VectorSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    TheoremRegime,
    LinearProbe,
    RandomBand,
    ControlViolation,
}

impl InitialKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "theorem_regime" => Self::TheoremRegime,
            "linear_probe" => Self::LinearProbe,
            "random_band" => Self::RandomBand,
            "control_violation" => Self::ControlViolation,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::TheoremRegime => "theorem_regime",
            Self::LinearProbe => "linear_probe",
            Self::RandomBand => "random_band",
            Self::ControlViolation => "control_violation",
        }
    }
}

/// Recipe for an initial state. Band edges are integer mode numbers; the
/// physical wavenumber of mode `k` is `k/L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub kind: InitialKind,
    /// Target `‖w₀‖_{Ḃ⁰}`.
    pub a_w: f64,
    /// Target `‖v₀‖_{Ḃ⁰}`.
    pub eps_v: f64,
    /// Target `‖Qu₀‖_{Ḃ⁰}`.
    pub eps_q: f64,
    /// Target `‖a₀‖_{Ḃ⁰} + ‖a₀‖_{Ḃ¹}`.
    pub eps_a: f64,
    pub seed: u64,
    pub band_lo: u32,
    pub band_hi: u32,
    /// Largest `|k₂|` in the part of the stream function that carries `v`.
    pub band_coupling: u32,
    /// `sup|a₀|` for the control case.
    pub sup_a: f64,
}

impl Default for InitialDataSpec {
    fn default() -> Self {
        Self {
            kind: InitialKind::TheoremRegime,
            a_w: 1.0,
            eps_v: 1e-3,
            eps_q: 1e-3,
            eps_a: 1e-3,
            seed: 7,
            band_lo: 1,
            band_hi: 8,
            band_coupling: 1,
            sup_a: 2.0,
        }
    }
}

/// Norms of a generated state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Amplitudes {
    pub w_b0: f64,
    pub v_b0: f64,
    pub qu_b0: f64,
    pub a_b0_plus_b1: f64,
    pub sup_a: f64,
    /// `sup|div Pu|`.
    pub div_pu: f64,
}

#[derive(Debug, Clone)]
pub struct InitialData {
    pub state: FlowState,
    pub measured: Amplitudes,
    /// `sup|a₀| > 1/2`.
    pub regime_violated: bool,
}

/// Norms of `state` on `grid`'s covering partition.
pub fn measure(state: &FlowState) -> Result<Amplitudes> {
    let g = state.grid();
    let sp = Spectral::new(g);
    let part = DyadicPartition::covering(g);
    let u_hat = sp.hat_vec(&state.u);
    let q = q_hat(&sp, &u_hat);
    let pu = VectorSpectrum {
        x: &u_hat.x - &q.x,
        y: &u_hat.y - &q.y,
    };
    let a_hat = sp.forward(&state.a)?;
    Ok(Amplitudes {
        w_b0: part.besov_hat(&pu.y, 0.0),
        v_b0: part.besov_hat(&pu.x, 0.0),
        qu_b0: part.besov_hat_vec(&q, 0.0),
        a_b0_plus_b1: part.besov_hat(&a_hat, 0.0) + part.besov_hat(&a_hat, 1.0),
        sup_a: state.a.sup_abs(),
        div_pu: sp.unhat(&sp.div_hat(&pu)).sup_abs(),
    })
}

fn check_spec(spec: &InitialDataSpec, grid: GridSpec) -> Result<()> {
    for (name, v) in [
        ("a_w", spec.a_w),
        ("eps_v", spec.eps_v),
        ("eps_q", spec.eps_q),
        ("eps_a", spec.eps_a),
        ("sup_a", spec.sup_a),
    ] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Precondition(format!("amplitude {name} must be finite and >= 0, got {v}")));
        }
    }
    if spec.band_lo < 1 || spec.band_hi < spec.band_lo {
        return Err(Error::Precondition(format!(
            "band [{}, {}] must satisfy 1 <= lo <= hi",
            spec.band_lo, spec.band_hi
        )));
    }
    let reach = ((spec.band_hi as f64).powi(2) + (spec.band_coupling as f64).powi(2)).sqrt();
    if reach > grid.dealias_cutoff() as f64 {
        return Err(Error::Precondition(format!(
            "band reaches mode {reach:.2}, beyond the retained cutoff {} for n = {}",
            grid.dealias_cutoff(),
            grid.n
        )));
    }
    Ok(())
}

/// Scalar spectrum with random coefficients on the listed integer modes,
/// drawn in list order.
fn spectrum_on(grid: GridSpec, modes: &[(i64, i64)], rng: &mut ChaCha8Rng) -> ComplexSpectrum2D {
    let mut s = ComplexSpectrum2D::zeros(grid);
    for &(k1, k2) in modes {
        let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        s.set(k1, k2, c);
        s.set(-k1, -k2, c.conj());
    }
    s
}

/// Smallest `α ≥ 0` with `norm_at(α) = target`, by bisection. `norm_at` is
/// convex in `α`, so past its value at zero it is increasing.
fn solve_amplitude(target: f64, norm_at: impl Fn(f64) -> f64) -> Result<f64> {
    let base = norm_at(0.0);
    if target < base * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "target norm {target} below the floor {base} set by the other components"
        )));
    }
    if target <= base {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while norm_at(hi) < target {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Precondition("amplitude search diverged".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn scale_to(s: &ComplexSpectrum2D, current: f64, target: f64) -> ComplexSpectrum2D {
    if current > 0.0 {
        s.scaled(target / current)
    } else {
        s.clone()
    }
}

/// Builds the state described by `spec` on `grid`.
pub fn make_initial_data(spec: &InitialDataSpec, grid: GridSpec) -> Result<InitialData> {
    check_spec(spec, grid)?;
    let sp = Spectral::new(grid);
    let part = DyadicPartition::covering(grid);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = (spec.band_lo as i64, spec.band_hi as i64);

    let (a_hat, u_hat) = match spec.kind {
        InitialKind::TheoremRegime | InitialKind::ControlViolation => {
            if spec.eps_v == 0.0 && spec.band_coupling > 0 && spec.a_w > 0.0 {
                return Err(Error::Precondition(
                    "eps_v = 0 cannot be realised with a nonzero band coupling".into(),
                ));
            }
            let m0: Vec<(i64, i64)> = (lo..=hi).map(|k1| (k1, 0)).collect();
            let mut m1 = Vec::new();
            for k2 in 1..=spec.band_coupling as i64 {
                for k1 in -hi..=hi {
                    m1.push((k1, k2));
                }
            }
            let psi0 = spectrum_on(grid, &m0, &mut rng);
            let psi1 = spectrum_on(grid, &m1, &mut rng);
            // v = ∂₂ψ, w = −∂₁ψ
            let v1 = sp.d2_hat(&psi1);
            let w0 = sp.d1_hat(&psi0).scaled(-1.0);
            let w1 = sp.d1_hat(&psi1).scaled(-1.0);
            let v1_norm = part.besov_hat(&v1, 0.0);
            let beta = if spec.band_coupling > 0 && v1_norm > 0.0 {
                spec.eps_v / v1_norm
            } else {
                0.0
            };
            let w_at = |alpha: f64| part.besov_hat(&(&w0.scaled(alpha) + &w1.scaled(beta)), 0.0);
            let alpha = solve_amplitude(spec.a_w, w_at)?;
            let pu = VectorSpectrum {
                x: v1.scaled(beta),
                y: &w0.scaled(alpha) + &w1.scaled(beta),
            };
            let qu = gradient_part(&sp, &part, grid, lo, hi, spec.eps_q, &mut rng);
            let a = density_part(&part, grid, lo, hi, spec.eps_a, &mut rng);
            (
                a,
                VectorSpectrum {
                    x: &pu.x + &qu.x,
                    y: &pu.y + &qu.y,
                },
            )
        }
        InitialKind::LinearProbe => {
            let mut a = ComplexSpectrum2D::zeros(grid);
            a.set(lo, 0, Complex64::new(0.5, 0.0));
            a.set(-lo, 0, Complex64::new(0.5, 0.0));
            let a_norm = part.besov_hat(&a, 0.0) + part.besov_hat(&a, 1.0);
            let a = scale_to(&a, a_norm, spec.eps_a);
            let mut ux = ComplexSpectrum2D::zeros(grid);
            ux.set(lo, 0, Complex64::new(0.0, -0.5));
            ux.set(-lo, 0, Complex64::new(0.0, 0.5));
            let n = part.besov_hat(&ux, 0.0);
            (
                a,
                VectorSpectrum {
                    x: scale_to(&ux, n, spec.eps_q),
                    y: ComplexSpectrum2D::zeros(grid),
                },
            )
        }
        InitialKind::RandomBand => {
            let a = density_part(&part, grid, lo, hi, spec.eps_a, &mut rng);
            let raw = VectorSpectrum {
                x: random_band_spectrum(grid, lo as f64, hi as f64, 1.0, &mut rng)?,
                y: random_band_spectrum(grid, lo as f64, hi as f64, 1.0, &mut rng)?,
            };
            let q = q_hat(&sp, &raw);
            let p = VectorSpectrum {
                x: &raw.x - &q.x,
                y: &raw.y - &q.y,
            };
            let (qn, pn) = (part.besov_hat_vec(&q, 0.0), part.besov_hat_vec(&p, 0.0));
            let q = VectorSpectrum {
                x: scale_to(&q.x, qn, spec.eps_q),
                y: scale_to(&q.y, qn, spec.eps_q),
            };
            let p = VectorSpectrum {
                x: scale_to(&p.x, pn, spec.a_w),
                y: scale_to(&p.y, pn, spec.a_w),
            };
            (
                a,
                VectorSpectrum {
                    x: &p.x + &q.x,
                    y: &p.y + &q.y,
                },
            )
        }
    };

    let mut state = FlowState {
        a: sp.unhat(&a_hat),
        u: sp.unhat_vec(&u_hat),
        t: 0.0,
    };
    if spec.kind == InitialKind::ControlViolation {
        let sup = state.a.sup_abs();
        if sup == 0.0 {
            return Err(Error::Precondition("control case needs a nonzero density".into()));
        }
        state.a = state.a.scaled(spec.sup_a / sup);
    }
    let measured = measure(&state)?;
    Ok(InitialData {
        regime_violated: !state.in_small_regime(),
        state,
        measured,
    })
}

fn band_modes(lo: i64, hi: i64) -> Vec<(i64, i64)> {
    let mut m = Vec::new();
    for k2 in 0..=hi {
        for k1 in -hi..=hi {
            if k2 == 0 && k1 <= 0 {
                continue;
            }
            let r = ((k1 * k1 + k2 * k2) as f64).sqrt();
            if r >= lo as f64 && r <= hi as f64 {
                m.push((k1, k2));
            }
        }
    }
    m
}

fn gradient_part(
    sp: &Spectral,
    part: &DyadicPartition,
    grid: GridSpec,
    lo: i64,
    hi: i64,
    target: f64,
    rng: &mut ChaCha8Rng,
) -> VectorSpectrum {
    let phi = spectrum_on(grid, &band_modes(lo, hi), rng);
    let g = sp.grad_hat(&phi);
    let n = part.besov_hat_vec(&g, 0.0);
    VectorSpectrum {
        x: scale_to(&g.x, n, target),
        y: scale_to(&g.y, n, target),
    }
}

fn density_part(
    part: &DyadicPartition,
    grid: GridSpec,
    lo: i64,
    hi: i64,
    target: f64,
    rng: &mut ChaCha8Rng,
) -> ComplexSpectrum2D {
    let a = spectrum_on(grid, &band_modes(lo, hi), rng);
    let n = part.besov_hat(&a, 0.0) + part.besov_hat(&a, 1.0);
    scale_to(&a, n, target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    TheoremLargeW,
    LinearDispersion,
    Gamma2Cancellation,
    SmallnessViolation,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 4] = [
        ScenarioName::TheoremLargeW,
        ScenarioName::LinearDispersion,
        ScenarioName::Gamma2Cancellation,
        ScenarioName::SmallnessViolation,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scenario `{s}` (expected one of theorem_large_w, linear_dispersion, gamma2_cancellation, smallness_violation)"
                ))
            })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioName::TheoremLargeW => "theorem_large_w",
            ScenarioName::LinearDispersion => "linear_dispersion",
            ScenarioName::Gamma2Cancellation => "gamma2_cancellation",
            ScenarioName::SmallnessViolation => "smallness_violation",
        }
    }
}

/// Decay rates of one Fourier mode of the linearised `(a, Qu)` system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionMode {
    pub k: f64,
    /// `−|k|² ± √(|k|⁴ − |k|²)`, slow rate first.
    pub oracle: [f64; 2],
    pub coarse: [f64; 2],
    pub fine: [f64; 2],
    pub extrapolated: [f64; 2],
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    pub modes: Vec<DispersionMode>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Rates for the symbol `[[0, −k], [k, −2k²]]` (viscosity 1, no bulk term)
/// acting on `(A, U)` in `a = A cos(kx)`, `u₁ = U sin(kx)`.
pub fn dispersion_oracle(k: f64) -> [f64; 2] {
    let k2 = k * k;
    let disc = (k2 * k2 - k2).max(0.0).sqrt();
    [-k2 + disc, -k2 - disc]
}

/// Rates from the trace and determinant of a 2×2 propagator over `t`.
fn rates_from_propagator(e: [[f64; 2]; 2], t: f64) -> [f64; 2] {
    let tr = e[0][0] + e[1][1];
    let det = e[0][0] * e[1][1] - e[0][1] * e[1][0];
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        let (m1, m2) = (0.5 * tr + r, 0.5 * tr - r);
        [m1.ln() / t, m2.ln() / t]
    } else {
        let re = 0.5 * det.ln() / t;
        [re, re]
    }
}

fn mode_amplitudes(sp: &Spectral, state: &FlowState, k: i64) -> Result<(f64, f64)> {
    let a = sp.forward(&state.a)?.at(k, 0);
    let u = sp.forward(&state.u.x)?.at(k, 0);
    // A cos(kx) has coefficient A/2; U sin(kx) has −iU/2
    Ok((2.0 * a.re, -2.0 * u.im))
}

fn propagator(model: &Model, k: i64, amp: f64, horizon: f64, dt: f64) -> Result<[[f64; 2]; 2]> {
    let sp = &model.spectral;
    let g = model.grid();
    let l = g.half_width;
    let cfg = IntegratorConfig {
        t_end: horizon,
        dt_init: dt,
        adaptive: false,
        ..IntegratorConfig::default()
    };
    let mut e = [[0.0; 2]; 2];
    for col in 0..2 {
        let a = crate::spectral::RealField2D::from_fn(g, |x, _| if col == 0 { amp * (k as f64 * x / l).cos() } else { 0.0 });
        let ux = crate::spectral::RealField2D::from_fn(g, |x, _| if col == 1 { amp * (k as f64 * x / l).sin() } else { 0.0 });
        let init = FlowState {
            a,
            u: VectorField2D::new(ux, crate::spectral::RealField2D::zeros(g)),
            t: 0.0,
        };
        let rec = run(model, &init, &cfg, &mut [])?;
        if rec.stop_reason != StopReason::ReachedTEnd {
            return Err(Error::Precondition(format!(
                "dispersion run stopped early: {}",
                rec.stop_reason.as_str()
            )));
        }
        let (aa, uu) = mode_amplitudes(sp, &rec.final_state, k)?;
        e[0][col] = aa / amp;
        e[1][col] = uu / amp;
    }
    Ok(e)
}

/// Extracts the two rates of each mode `k ∈ {1, 2, 4}` from integrator runs
/// at `dt` and `dt/2` and one Richardson step.
pub fn dispersion_check(cfg: &RunConfig) -> Result<DispersionReport> {
    let grid = GridSpec::new(cfg.grid.n, cfg.grid.half_width)?;
    let params = ModelParams {
        mu: 1.0,
        lambda: 0.0,
        law: Default::default(),
    };
    let model = Model::new(Spectral::new(grid), DyadicPartition::covering(grid), params, cfg.grid.n0)?;
    let horizon = 0.1;
    let dt = cfg.integrator.dt_init.min(horizon / 4.0);
    let order = match cfg.integrator.scheme {
        crate::integrator::Scheme::ImexEuler => 1,
        crate::integrator::Scheme::ImexRk2 => 2,
    };
    let amp = 1e-9;
    let tolerance = 1e-4;
    let mut modes = Vec::new();
    for k in [1i64, 2, 4] {
        if k as usize >= grid.n / 3 {
            return Err(Error::Config(format!("mode {k} not resolved on n = {}", grid.n)));
        }
        let kk = k as f64 / grid.half_width;
        let coarse = rates_from_propagator(propagator(&model, k, amp, horizon, dt)?, horizon);
        let fine = rates_from_propagator(propagator(&model, k, amp, horizon, 0.5 * dt)?, horizon);
        let w = 2f64.powi(order);
        let extrapolated = [
            (w * fine[0] - coarse[0]) / (w - 1.0),
            (w * fine[1] - coarse[1]) / (w - 1.0),
        ];
        let oracle = dispersion_oracle(kk);
        let relative_error = (0..2)
            .map(|i| (extrapolated[i] - oracle[i]).abs() / oracle[i].abs())
            .fold(0.0, f64::max);
        modes.push(DispersionMode {
            k: kk,
            oracle,
            coarse,
            fine,
            extrapolated,
            relative_error,
        });
    }
    let passed = modes.iter().all(|m| m.relative_error <= tolerance);
    Ok(DispersionReport {
        modes,
        tolerance,
        passed,
    })
}

/// Result of the half-resolution run that sets the bootstrap ceiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub n: usize,
    pub bootstrap_max: f64,
    pub factor: f64,
    pub c1: f64,
    pub stop_reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: String,
    pub initial: Option<Amplitudes>,
    pub regime_violated: bool,
    pub stop_reason: Option<String>,
    pub stop_time: Option<f64>,
    pub stop_detail: Option<String>,
    pub steps: usize,
    pub calibration: Option<Calibration>,
    pub theorem: Option<TheoremReport>,
    pub damping: Option<DampingReport>,
    pub qg_bound: Option<EstimateReport>,
    pub dispersion: Option<DispersionReport>,
    /// Largest `‖k(a)‖_{Ḃ⁰}` in the ledger.
    pub pressure_coefficient_max: Option<f64>,
    /// Named verdicts, all of which must hold.
    pub verdicts: BTreeMap<String, bool>,
    pub passed: bool,
}

impl ScenarioOutcome {
    fn new(name: ScenarioName) -> Self {
        Self {
            scenario: name.as_str().into(),
            initial: None,
            regime_violated: false,
            stop_reason: None,
            stop_time: None,
            stop_detail: None,
            steps: 0,
            calibration: None,
            theorem: None,
            damping: None,
            qg_bound: None,
            dispersion: None,
            pressure_coefficient_max: None,
            verdicts: BTreeMap::new(),
            passed: false,
        }
    }

    fn finalize(&mut self) {
        self.passed = !self.verdicts.is_empty() && self.verdicts.values().all(|&v| v);
    }

    fn absorb(&mut self, rec: &TrajectoryRecord) {
        self.stop_reason = Some(rec.stop_reason.as_str().into());
        self.stop_time = Some(rec.stop_time);
        self.stop_detail = rec.stop_detail.clone();
        self.steps = rec.steps;
    }
}

/// A scenario's report together with its trajectory, when one was run.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub outcome: ScenarioOutcome,
    pub record: Option<TrajectoryRecord>,
}

pub fn build_model(cfg: &RunConfig) -> Result<Model> {
    let grid = GridSpec::new(cfg.grid.n, cfg.grid.half_width)?;
    let partition = match (cfg.grid.j_min, cfg.grid.j_max) {
        (Some(lo), Some(hi)) => DyadicPartition::new(grid, lo, hi)?,
        (None, None) => DyadicPartition::covering(grid),
        _ => {
            let (lo, hi) = DyadicPartition::covering_range(grid);
            DyadicPartition::new(grid, cfg.grid.j_min.unwrap_or(lo), cfg.grid.j_max.unwrap_or(hi))?
        }
    };
    Model::new(Spectral::new(grid), partition, cfg.model, cfg.grid.n0)
}

fn calibrate(cfg: &RunConfig) -> Result<Calibration> {
    let mut coarse = cfg.clone();
    coarse.grid.n = (cfg.grid.n / 2).max(16);
    coarse.grid.j_min = None;
    coarse.grid.j_max = None;
    let model = build_model(&coarse)?;
    let init = make_initial_data(&coarse.scenario.initial, model.grid())?;
    let rec = run(&model, &init.state, &coarse.integrator, &mut [])?;
    let bootstrap_max = rec.ledger.rows.iter().map(|r| r.lhs_main).fold(0.0, f64::max);
    let factor = cfg.estimates.c1_factor;
    Ok(Calibration {
        n: coarse.grid.n,
        bootstrap_max,
        factor,
        c1: factor * bootstrap_max,
        stop_reason: rec.stop_reason.as_str().into(),
    })
}

fn trajectory_scenario(cfg: &RunConfig, name: ScenarioName) -> Result<ScenarioRun> {
    let mut out = ScenarioOutcome::new(name);
    let model = build_model(cfg)?;
    let init = make_initial_data(&cfg.scenario.initial, model.grid())?;
    out.initial = Some(init.measured);
    out.regime_violated = init.regime_violated;

    let est = &cfg.estimates;
    let full = name == ScenarioName::TheoremLargeW;
    let mut c1 = est.theorem.c1;
    if full && c1.is_none() && est.calibrate_c1 {
        let cal = calibrate(cfg)?;
        c1 = Some(cal.c1);
        out.calibration = Some(cal);
    }

    let mut damping = DampingObserver::new(est.damping_stride)?;
    let mut bound = QgBoundObserver::new(est.qg_bound_stride)?;
    let rec = {
        let mut observers: Vec<&mut dyn Observer> = Vec::new();
        if full {
            observers.push(&mut damping);
            observers.push(&mut bound);
        }
        run(&model, &init.state, &cfg.integrator, &mut observers)?
    };
    out.absorb(&rec);
    let reached = rec.stop_reason == StopReason::ReachedTEnd;

    match name {
        ScenarioName::TheoremLargeW => {
            out.verdicts.insert("reached_t_end".into(), reached);
            let th = theorem::evaluate(
                &rec.ledger,
                &TheoremConfig {
                    c1,
                    ..est.theorem.clone()
                },
            )?;
            out.verdicts.insert("smallness_condition".into(), th.smallness_holds);
            out.verdicts.insert("main_bound".into(), th.main_constant <= th.ceiling);
            out.verdicts.insert("w_bound".into(), th.w_constant <= th.ceiling);
            out.verdicts
                .insert("bootstrap".into(), th.bootstrap_holds.unwrap_or(true));
            out.verdicts
                .insert("interpolation".into(), th.interpolation_violations == 0);
            out.theorem = Some(th);
            let d = damping.report(est.damping_source_constant, est.damping_coverage)?;
            out.verdicts.insert("damping".into(), d.passed);
            out.damping = Some(d);
            let l = bound.report(est.qg_bound_ceiling)?;
            out.verdicts.insert("qg_bound".into(), l.passed);
            out.qg_bound = Some(l);
        }
        ScenarioName::Gamma2Cancellation => {
            let kmax = rec.ledger.rows.iter().map(|r| r.k_a_b0).fold(0.0, f64::max);
            out.pressure_coefficient_max = Some(kmax);
            out.verdicts.insert("reached_t_end".into(), reached);
            out.verdicts.insert(
                "pressure_coefficient_zero".into(),
                kmax == 0.0 && rec.ledger.rows.iter().all(|r| r.k_a_b0 == 0.0),
            );
        }
        ScenarioName::SmallnessViolation => {
            out.verdicts.insert("reached_t_end".into(), reached);
        }
        ScenarioName::LinearDispersion => unreachable!("handled separately"),
    }
    out.finalize();
    Ok(ScenarioRun {
        outcome: out,
        record: Some(rec),
    })
}

/// Runs the scenario named in `cfg`.
pub fn run_scenario(cfg: &RunConfig) -> Result<ScenarioRun> {
    let name = ScenarioName::parse(&cfg.scenario.name)?;
    match name {
        ScenarioName::LinearDispersion => {
            let mut out = ScenarioOutcome::new(name);
            let d = dispersion_check(cfg)?;
            out.verdicts.insert("dispersion".into(), d.passed);
            out.dispersion = Some(d);
            out.finalize();
            Ok(ScenarioRun {
                outcome: out,
                record: None,
            })
        }
        _ => trajectory_scenario(cfg, name),
    }
}

/// Cartesian sweep over `A_w`, a common small amplitude `ε` for
/// `(a₀, v₀, Qu₀)`, and `N₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub a_w: Vec<f64>,
    pub eps: Vec<f64>,
    pub n0: Vec<u32>,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self {
            a_w: vec![0.5, 1.0],
            eps: vec![1e-3, 1e-2],
            n0: vec![1],
        }
    }
}

impl SweepPlan {
    pub fn cells(&self) -> Vec<(f64, f64, u32)> {
        let mut out = Vec::new();
        for &n0 in &self.n0 {
            for &eps in &self.eps {
                for &a_w in &self.a_w {
                    out.push((a_w, eps, n0));
                }
            }
        }
        out
    }

    /// The configuration of one cell.
    pub fn cell_config(base: &RunConfig, a_w: f64, eps: f64, n0: u32) -> RunConfig {
        let mut c = base.clone();
        c.scenario.initial.a_w = a_w;
        c.scenario.initial.eps_a = eps;
        c.scenario.initial.eps_v = eps;
        c.scenario.initial.eps_q = eps;
        c.grid.n0 = n0;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub a_w: f64,
    pub eps: f64,
    pub n0: u32,
    pub outcome: Option<ScenarioOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityRow {
    pub eps: f64,
    pub n0: u32,
    /// Fitted main-bound constants in increasing `A_w`.
    pub constants: Vec<f64>,
    pub nondecreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub monotonicity: Vec<MonotonicityRow>,
    /// Largest `A_w` whose run reached `t_end` in every cell.
    pub largest_bounded_a_w: Option<f64>,
    pub pass_rate: f64,
}

impl SweepResult {
    /// One line per cell.
    pub fn table(&self) -> String {
        let mut s = String::from("a_w\teps\tn0\tstop\tmain_C\tw_C\tpassed\n");
        for c in &self.cells {
            match &c.outcome {
                Some(o) => {
                    let th = o.theorem.as_ref();
                    s.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                        c.a_w,
                        c.eps,
                        c.n0,
                        o.stop_reason.as_deref().unwrap_or("-"),
                        th.map(|t| format!("{:.4}", t.main_constant)).unwrap_or("-".into()),
                        th.map(|t| format!("{:.4}", t.w_constant)).unwrap_or("-".into()),
                        o.passed
                    ));
                }
                None => s.push_str(&format!(
                    "{}\t{}\t{}\terror\t-\t-\tfalse\t{}\n",
                    c.a_w,
                    c.eps,
                    c.n0,
                    c.error.as_deref().unwrap_or("")
                )),
            }
        }
        s
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("BCNS_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("BCNS_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(Error::Config("BCNS_THREADS must be positive".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs every cell of `plan` on top of `base`; cell failures are recorded,
/// never propagated.
pub fn sweep(base: &RunConfig, plan: &SweepPlan) -> Result<SweepResult> {
    let cells = plan.cells();
    if cells.is_empty() {
        return Err(Error::Config("sweep plan has no cells".into()));
    }
    let pool = thread_pool()?;
    let results: Vec<SweepCell> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(a_w, eps, n0)| {
                let cfg = SweepPlan::cell_config(base, a_w, eps, n0);
                match run_scenario(&cfg) {
                    Ok(r) => SweepCell {
                        a_w,
                        eps,
                        n0,
                        outcome: Some(r.outcome),
                        error: None,
                    },
                    Err(e) => SweepCell {
                        a_w,
                        eps,
                        n0,
                        outcome: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });

    let mut monotonicity = Vec::new();
    for &n0 in &plan.n0 {
        for &eps in &plan.eps {
            let mut row: Vec<(f64, f64)> = results
                .iter()
                .filter(|c| c.n0 == n0 && c.eps == eps)
                .map(|c| {
                    let k = c
                        .outcome
                        .as_ref()
                        .and_then(|o| o.theorem.as_ref())
                        .map(|t| t.main_constant)
                        .unwrap_or(f64::NAN);
                    (c.a_w, k)
                })
                .collect();
            row.sort_by(|a, b| a.0.total_cmp(&b.0));
            let constants: Vec<f64> = row.iter().map(|r| r.1).collect();
            let nondecreasing = constants.windows(2).all(|w| w[1] >= w[0]);
            monotonicity.push(MonotonicityRow {
                eps,
                n0,
                constants,
                nondecreasing,
            });
        }
    }
    let bounded = |c: &SweepCell| {
        c.outcome
            .as_ref()
            .map(|o| o.stop_reason.as_deref() == Some(StopReason::ReachedTEnd.as_str()))
            .unwrap_or(false)
    };
    let mut largest = None;
    let mut a_ws = plan.a_w.clone();
    a_ws.sort_by(|a, b| a.total_cmp(b));
    for a in a_ws {
        if results.iter().filter(|c| c.a_w == a).all(bounded) {
            largest = Some(a);
        }
    }
    let passed = results
        .iter()
        .filter(|c| c.outcome.as_ref().map(|o| o.passed).unwrap_or(false))
        .count();
    Ok(SweepResult {
        pass_rate: passed as f64 / results.len() as f64,
        cells: results,
        monotonicity,
        largest_bounded_a_w: largest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, l: f64) -> GridSpec {
        GridSpec::new(n, l).unwrap()
    }

    #[test]
    fn zero_amplitudes_give_zero_state() {
        for kind in [InitialKind::TheoremRegime, InitialKind::LinearProbe, InitialKind::RandomBand] {
            let spec = InitialDataSpec {
                kind,
                a_w: 0.0,
                eps_v: 0.0,
                eps_q: 0.0,
                eps_a: 0.0,
                band_coupling: 0,
                ..InitialDataSpec::default()
            };
            let d = make_initial_data(&spec, grid(32, 8.0)).unwrap();
            assert_eq!(d.state.a.sup_abs(), 0.0, "{kind:?}");
            assert_eq!(d.state.u.sup_abs(), 0.0, "{kind:?}");
        }
    }

    #[test]
    fn theorem_regime_hits_targets() {
        let spec = InitialDataSpec::default();
        let d = make_initial_data(&spec, grid(64, 8.0)).unwrap();
        let m = d.measured;
        let close = |x: f64, t: f64| (x - t).abs() <= 0.1 * t;
        assert!(close(m.w_b0, 1.0), "{m:?}");
        assert!(close(m.v_b0, 1e-3), "{m:?}");
        assert!(close(m.qu_b0, 1e-3), "{m:?}");
        assert!(close(m.a_b0_plus_b1, 1e-3), "{m:?}");
        assert!(m.div_pu <= 1e-11, "{m:?}");
        assert!(m.w_b0 / m.v_b0.max(1e-300) >= spec.a_w / (2.0 * spec.eps_v));
        assert!(!d.regime_violated);
    }

    #[test]
    fn generation_is_deterministic_and_resolution_independent() {
        let spec = InitialDataSpec::default();
        let a = make_initial_data(&spec, grid(64, 8.0)).unwrap();
        let b = make_initial_data(&spec, grid(64, 8.0)).unwrap();
        assert_eq!(a.state.a.values, b.state.a.values);
        let c = make_initial_data(&spec, grid(128, 8.0)).unwrap();
        for (x, y) in [(a.measured.w_b0, c.measured.w_b0), (a.measured.qu_b0, c.measured.qu_b0)] {
            assert!((x - y).abs() <= 1e-12 * x.max(1e-300), "{x} vs {y}");
        }
    }

    #[test]
    fn unattainable_specs_are_rejected() {
        let spec = InitialDataSpec {
            eps_v: 0.0,
            ..InitialDataSpec::default()
        };
        assert!(make_initial_data(&spec, grid(32, 8.0)).is_err());
        let spec = InitialDataSpec {
            band_hi: 20,
            ..InitialDataSpec::default()
        };
        assert!(make_initial_data(&spec, grid(32, 8.0)).is_err());
        let spec = InitialDataSpec {
            eps_q: -1.0,
            ..InitialDataSpec::default()
        };
        assert!(make_initial_data(&spec, grid(32, 8.0)).is_err());
        // w target below what the v-carrying modes already contribute
        let spec = InitialDataSpec {
            a_w: 1e-6,
            eps_v: 1e-2,
            ..InitialDataSpec::default()
        };
        assert!(make_initial_data(&spec, grid(32, 8.0)).is_err());
    }

    #[test]
    fn control_case_is_flagged() {
        let spec = InitialDataSpec {
            kind: InitialKind::ControlViolation,
            ..InitialDataSpec::default()
        };
        let d = make_initial_data(&spec, grid(32, 8.0)).unwrap();
        assert!(d.regime_violated);
        assert!((d.measured.sup_a - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn dispersion_oracle_values() {
        assert_eq!(dispersion_oracle(1.0), [-1.0, -1.0]);
        let r = dispersion_oracle(2.0);
        assert!((r[0] + r[1] + 8.0).abs() < 1e-12);
        assert!((r[0] * r[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn propagator_rates_invert_exponential() {
        let t = 0.3;
        let (l1, l2) = (-0.5f64, -7.0f64);
        let e = [[(l1 * t).exp(), 0.0], [0.0, (l2 * t).exp()]];
        let r = rates_from_propagator(e, t);
        assert!((r[0] - l1).abs() < 1e-12 && (r[1] - l2).abs() < 1e-12);
    }

    #[test]
    fn unknown_scenario_is_config_error() {
        assert!(matches!(ScenarioName::parse("nope"), Err(Error::Config(_))));
        for n in ScenarioName::ALL {
            assert_eq!(ScenarioName::parse(n.as_str()).unwrap(), n);
        }
    }
}
