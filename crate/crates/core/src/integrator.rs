//! Integrating-factor time stepping.
//!
//! The linear part is propagated exactly mode by mode. On incompressible
//! modes it is the heat semigroup `e^{−μ|ξ|²t}`. On the compressible
//! component `q = d̂·û` (with `d` the derivative wavevector) the pair
//! `(â, −iq)` obeys the real system
//!
//! ```text
//! d/dt (â, r) = [[0, κ], [−κ, −ν]] (â, r),   κ = |d|,  ν = μ|ξ|² + (λ+μ)κ²
//! ```
//!
//! whose exponential is evaluated in closed form. Nonlinear terms are
//! explicit: `Euler` is `y₁ = E(y + dt·N(y))`, `Rk2` is the Heun variant
//! `y₁ = E(y + dt/2·N(y)) + dt/2·N(E(y + dt·N(y)))`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cns_model::{FlowState, Model};
use crate::error::{Error, Result};
use crate::ledger::{LedgerTracker, NormLedger};
use crate::spectral::{ComplexSpectrum2D, VectorSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImexEuler,
    ImexRk2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Steps follow [`cfl_dt`] when set, otherwise every step uses `dt_init`.
    pub adaptive: bool,
    /// Cap on `‖u‖_∞`; exceeding it is reported as blow-up.
    pub u_max: f64,
    /// Cap on `sup|a|`; exceeding it is reported as an invariant violation.
    pub a_max: f64,
    /// Drop the nonlinear terms.
    pub linear_only: bool,
    pub max_steps: usize,
    /// Ledger rows are written every `ledger_stride` steps.
    pub ledger_stride: usize,
    /// States are stored every `sample_stride` steps (0 keeps none).
    pub sample_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt_init: 0.01,
            dt_min: 1e-6,
            dt_max: 0.05,
            cfl_safety: 0.5,
            t_end: 10.0,
            scheme: Scheme::ImexRk2,
            adaptive: true,
            u_max: 1e3,
            a_max: 0.5,
            linear_only: false,
            max_steps: 1_000_000,
            ledger_stride: 10,
            sample_stride: 0,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(Error::Config(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Config(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("t_end must be finite and >= 0, got {}", self.t_end)));
        }
        if !(self.u_max > 0.0 && self.a_max > 0.0) {
            return Err(Error::Config("blow-up thresholds must be positive".into()));
        }
        if self.ledger_stride == 0 {
            return Err(Error::Config("ledger_stride must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ReachedTEnd,
    BlowupDetected,
    InvariantViolated,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::ReachedTEnd => "reached_t_end",
            StopReason::BlowupDetected => "blowup_detected",
            StopReason::InvariantViolated => "invariant_violated",
        }
    }
}

/// Read-only hook invoked before every step with the state and the step
/// size about to be taken, and once more with the final state.
pub trait Observer {
    fn observe(&mut self, model: &Model, step: usize, state: &FlowState, dt: f64);
    fn finish(&mut self, _model: &Model, _state: &FlowState) {}
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    /// Time at the start of every accepted step, then the final time.
    pub times: Vec<f64>,
    /// Decimated states, starting with the initial state.
    pub samples: Vec<FlowState>,
    pub ledger: NormLedger,
    pub stop_reason: StopReason,
    pub stop_time: f64,
    pub stop_detail: Option<String>,
    pub steps: usize,
    /// Last state that passed every check.
    pub final_state: FlowState,
}

/// `E = [[e00, e01], [e10, e11]] = exp(t·[[0, κ], [−κ, −ν]])`.
pub fn acoustic_propagator(kappa: f64, nu: f64, t: f64) -> [f64; 4] {
    let alpha = -0.5 * nu;
    let disc = 0.25 * nu * nu - kappa * kappa;
    let small = 1e-3;
    if disc > 0.0 {
        let delta = disc.sqrt();
        let x = delta * t;
        if x < small {
            let ea = (alpha * t).exp();
            let c = ea * x.cosh();
            let s = ea * t * (1.0 + x * x / 6.0 + x.powi(4) / 120.0);
            return [c + 0.5 * nu * s, kappa * s, -kappa * s, c - 0.5 * nu * s];
        }
        // eigenvalues written without cancellation
        let slow = -kappa * kappa / (0.5 * nu + delta);
        let fast = -0.5 * nu - delta;
        let es = (slow * t).exp();
        let ef = (fast * t).exp();
        let big = 0.5 + nu / (4.0 * delta);
        let tiny = kappa * kappa / (delta * (nu + 2.0 * delta));
        let s = (es - ef) / (2.0 * delta);
        [es * big - ef * tiny, kappa * s, -kappa * s, ef * big - es * tiny]
    } else {
        let omega = (-disc).sqrt();
        let x = omega * t;
        let ea = (alpha * t).exp();
        let c = ea * x.cos();
        let s = if x < small {
            ea * t * (1.0 - x * x / 6.0 + x.powi(4) / 120.0)
        } else {
            ea * x.sin() / omega
        };
        [c + 0.5 * nu * s, kappa * s, -kappa * s, c - 0.5 * nu * s]
    }
}

/// Exact linear propagator for one step size.
#[derive(Debug, Clone)]
struct Propagator {
    dt: f64,
    /// Heat factor on incompressible modes.
    heat: Vec<f64>,
    acoustic: Vec<[f64; 4]>,
}

impl Propagator {
    fn new(model: &Model, dt: f64) -> Self {
        let sp = &model.spectral;
        let mu = model.params.mu;
        let lm = model.params.lambda + mu;
        let len = sp.grid().len();
        let mut heat = Vec::with_capacity(len);
        let mut acoustic = Vec::with_capacity(len);
        for idx in 0..len {
            let k2 = sp.wavenumber_sq(idx);
            let (d1, d2) = sp.derivative_wavevector(idx);
            let kappa2 = d1 * d1 + d2 * d2;
            heat.push((-mu * k2 * dt).exp());
            if kappa2 > 0.0 {
                acoustic.push(acoustic_propagator(kappa2.sqrt(), mu * k2 + lm * kappa2, dt));
            } else {
                acoustic.push([1.0, 0.0, 0.0, 1.0]);
            }
        }
        Self { dt, heat, acoustic }
    }

    fn apply(&self, model: &Model, a: &ComplexSpectrum2D, u: &VectorSpectrum) -> (ComplexSpectrum2D, VectorSpectrum) {
        let sp = &model.spectral;
        let mut a_out = ComplexSpectrum2D::zeros(a.grid);
        let mut u_out = VectorSpectrum::zeros(a.grid);
        let i = Complex64::new(0.0, 1.0);
        for idx in 0..a.coeffs.len() {
            let (d1, d2) = sp.derivative_wavevector(idx);
            let kappa = (d1 * d1 + d2 * d2).sqrt();
            let h = self.heat[idx];
            let (ah, ux, uy) = (a.coeffs[idx], u.x.coeffs[idx], u.y.coeffs[idx]);
            if kappa == 0.0 {
                a_out.coeffs[idx] = ah;
                u_out.x.coeffs[idx] = ux * h;
                u_out.y.coeffs[idx] = uy * h;
                continue;
            }
            let (n1, n2) = (d1 / kappa, d2 / kappa);
            let q = ux * n1 + uy * n2;
            let (px, py) = (ux - q * n1, uy - q * n2);
            let [e00, e01, e10, e11] = self.acoustic[idx];
            let a_new = ah * e00 - i * q * e01;
            let q_new = i * ah * e10 + q * e11;
            a_out.coeffs[idx] = a_new;
            u_out.x.coeffs[idx] = px * h + q_new * n1;
            u_out.y.coeffs[idx] = py * h + q_new * n2;
        }
        (a_out, u_out)
    }
}

/// Stateful stepper caching the propagators of the most recent step sizes.
pub struct Stepper<'m> {
    model: &'m Model,
    scheme: Scheme,
    linear_only: bool,
    cache: Vec<Propagator>,
}

impl<'m> Stepper<'m> {
    pub fn new(model: &'m Model, config: &IntegratorConfig) -> Self {
        Self {
            model,
            scheme: config.scheme,
            linear_only: config.linear_only,
            cache: Vec::new(),
        }
    }

    fn propagator(&mut self, dt: f64) -> usize {
        if let Some(pos) = self.cache.iter().position(|p| p.dt == dt) {
            return pos;
        }
        if self.cache.len() >= 2 {
            self.cache.remove(0);
        }
        self.cache.push(Propagator::new(self.model, dt));
        self.cache.len() - 1
    }

    fn nonlinear(&self, a: &ComplexSpectrum2D, u: &VectorSpectrum) -> Result<(ComplexSpectrum2D, VectorSpectrum)> {
        if self.linear_only {
            return Ok((ComplexSpectrum2D::zeros(a.grid), VectorSpectrum::zeros(a.grid)));
        }
        self.model.nonlinear_hat(a, u)
    }

    /// Advances `state` by `dt`.
    pub fn step(&mut self, state: &FlowState, dt: f64) -> Result<FlowState> {
        let model = self.model;
        let sp = &model.spectral;
        let fail = |reason: String| Error::Integration {
            t: state.t,
            reason,
            snapshot: Box::new(state.clone()),
        };
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(fail(format!("invalid step size {dt}")));
        }
        if !state.is_finite() {
            return Err(fail("non-finite state".into()));
        }
        sp.grid().check_same(&state.grid())?;
        let mut a = sp.hat(&state.a);
        let mut u = sp.hat_vec(&state.u);
        sp.dealias_in_place(&mut a);
        sp.dealias_in_place(&mut u.x);
        sp.dealias_in_place(&mut u.y);
        let slot = self.propagator(dt);

        let (na, nu) = self.nonlinear(&a, &u).map_err(|e| fail(e.to_string()))?;
        let euler_a = &a + &na.scaled(dt);
        let euler_u = VectorSpectrum {
            x: &u.x + &nu.x.scaled(dt),
            y: &u.y + &nu.y.scaled(dt),
        };
        let (mut a1, mut u1) = match self.scheme {
            Scheme::ImexEuler => self.cache[slot].apply(model, &euler_a, &euler_u),
            Scheme::ImexRk2 => {
                let (sa, su) = self.cache[slot].apply(model, &euler_a, &euler_u);
                let half_a = &a + &na.scaled(0.5 * dt);
                let half_u = VectorSpectrum {
                    x: &u.x + &nu.x.scaled(0.5 * dt),
                    y: &u.y + &nu.y.scaled(0.5 * dt),
                };
                let (ba, bu) = self.cache[slot].apply(model, &half_a, &half_u);
                let (na2, nu2) = self.nonlinear(&sa, &su).map_err(|e| fail(e.to_string()))?;
                (
                    &ba + &na2.scaled(0.5 * dt),
                    VectorSpectrum {
                        x: &bu.x + &nu2.x.scaled(0.5 * dt),
                        y: &bu.y + &nu2.y.scaled(0.5 * dt),
                    },
                )
            }
        };
        sp.dealias_in_place(&mut a1);
        sp.dealias_in_place(&mut u1.x);
        sp.dealias_in_place(&mut u1.y);
        let next = FlowState {
            a: sp.unhat(&a1),
            u: sp.unhat_vec(&u1),
            t: state.t + dt,
        };
        if !next.is_finite() {
            return Err(fail("step produced non-finite values".into()));
        }
        Ok(next)
    }
}

/// One step of the scheme selected in `config`.
pub fn step(model: &Model, state: &FlowState, dt: f64, config: &IntegratorConfig) -> Result<FlowState> {
    Stepper::new(model, config).step(state, dt)
}

/// `clamp(cfl·h / (‖u‖_∞ + sqrt(max P'(1+a))), dt_min, dt_max)`.
pub fn cfl_dt(model: &Model, state: &FlowState, config: &IntegratorConfig) -> f64 {
    let raw = unclamped_cfl_dt(model, state, config);
    raw.clamp(config.dt_min, config.dt_max)
}

pub fn unclamped_cfl_dt(model: &Model, state: &FlowState, config: &IntegratorConfig) -> f64 {
    let law = model.params.law;
    let sound = state
        .a
        .values
        .iter()
        .map(|&x| law.dp(1.0 + x))
        .fold(0.0, f64::max)
        .sqrt();
    config.cfl_safety * model.grid().spacing() / (state.u.sup_abs() + sound)
}

fn classify(state: &FlowState, config: &IntegratorConfig) -> Option<(StopReason, String)> {
    if !state.is_finite() {
        return Some((StopReason::BlowupDetected, "non-finite values".into()));
    }
    let umax = state.u.sup_abs();
    if umax > config.u_max {
        return Some((StopReason::BlowupDetected, format!("sup|u| = {umax:e} exceeds {}", config.u_max)));
    }
    let amin = 1.0 + state.a.min();
    if !(amin > 0.0) {
        return Some((StopReason::InvariantViolated, format!("vacuum: min(1 + a) = {amin:e}")));
    }
    let amax = state.a.sup_abs();
    if amax > config.a_max {
        return Some((
            StopReason::InvariantViolated,
            format!("sup|a| = {amax} exceeds {}", config.a_max),
        ));
    }
    None
}

/// Integrates from `initial` to `config.t_end` or the first stop event.
pub fn run(
    model: &Model,
    initial: &FlowState,
    config: &IntegratorConfig,
    observers: &mut [&mut dyn Observer],
) -> Result<TrajectoryRecord> {
    config.validate()?;
    model.grid().check_same(&initial.grid())?;
    let mut tracker = LedgerTracker::new(model, config.ledger_stride);
    let mut record = TrajectoryRecord {
        times: vec![initial.t],
        samples: vec![initial.clone()],
        ledger: NormLedger::default(),
        stop_reason: StopReason::ReachedTEnd,
        stop_time: initial.t,
        stop_detail: None,
        steps: 0,
        final_state: initial.clone(),
    };
    if let Some((reason, detail)) = classify(initial, config) {
        record.stop_reason = reason;
        record.stop_detail = Some(format!("initial state rejected: {detail}"));
        return Ok(record);
    }

    let mut stepper = Stepper::new(model, config);
    let mut state = initial.clone();
    let t_end = config.t_end;
    let tiny = 1e-12 * t_end.max(1.0);
    let mut steps = 0usize;
    let outcome = loop {
        let remaining = t_end - state.t;
        if remaining <= tiny {
            break None;
        }
        if steps >= config.max_steps {
            break Some((StopReason::BlowupDetected, format!("step budget {} exhausted", config.max_steps)));
        }
        let dt = if config.adaptive {
            cfl_dt(model, &state, config)
        } else {
            config.dt_init
        };
        let dt = if remaining - dt <= tiny { remaining } else { dt };
        tracker.observe(model, steps, &state, dt);
        for obs in observers.iter_mut() {
            obs.observe(model, steps, &state, dt);
        }
        let next = match stepper.step(&state, dt) {
            Ok(next) => next,
            Err(Error::Integration { reason, .. }) => {
                let kind = if reason.contains("vacuum") {
                    StopReason::InvariantViolated
                } else {
                    StopReason::BlowupDetected
                };
                break Some((kind, reason));
            }
            Err(e) => return Err(e),
        };
        steps += 1;
        if let Some(stop) = classify(&next, config) {
            record.stop_time = next.t;
            break Some(stop);
        }
        state = next;
        if remaining - dt <= tiny {
            // land exactly on the horizon
            state.t = t_end;
        }
        record.times.push(state.t);
        if config.sample_stride > 0 && steps % config.sample_stride == 0 {
            record.samples.push(state.clone());
        }
    };

    tracker.finish(model, &state);
    for obs in observers.iter_mut() {
        obs.finish(model, &state);
    }
    record.steps = steps;
    match outcome {
        None => {
            record.stop_reason = StopReason::ReachedTEnd;
            record.stop_time = state.t;
        }
        Some((reason, detail)) => {
            record.stop_reason = reason;
            record.stop_detail = Some(detail);
            if record.stop_time < state.t {
                record.stop_time = state.t;
            }
        }
    }
    record.ledger = tracker.into_ledger();
    record.final_state = state;
    Ok(record)
}
